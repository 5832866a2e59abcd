# Independent SSIM oracle: explicit per-window loops, direct formula.
import numpy as np

def gaussian_window():
    r = 5
    x = np.arange(-r, r + 1, dtype=np.float64)
    w = np.exp(-(x ** 2) / (2 * 1.5 ** 2))
    w = w / w.sum()
    return np.outer(w, w)

def ssim_oracle(lx, ly):
    W = gaussian_window()
    K1, K2 = 0.01, 0.03
    c1, c2 = K1 * K1, K2 * K2
    H, Wd = lx.shape
    vals = []
    for i in range(H - 10):
        for j in range(Wd - 10):
            px = lx[i:i+11, j:j+11]
            py = ly[i:i+11, j:j+11]
            mx = (W * px).sum(); my = (W * py).sum()
            vx = (W * px * px).sum() - mx * mx
            vy = (W * py * py).sum() - my * my
            cxy = (W * px * py).sum() - mx * my
            vals.append(((2*mx*my + c1) * (2*cxy + c2)) / ((mx*mx + my*my + c1) * (vx + vy + c2)))
    return float(np.mean(vals))

# 16x16 binary checkerboard, luma of an rgb checkerboard image
cb = np.indices((16, 16)).sum(axis=0) % 2
lx = cb.astype(np.float64)          # luma of (c,c,c) image = c
ly = 1.0 - lx
v = ssim_oracle(lx, ly)
print("ssim(checker, inverted) oracle:", repr(v))
print("ssim(checker, checker) oracle:", repr(ssim_oracle(lx, lx)))
