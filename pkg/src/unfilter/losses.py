"""Objective terms: feature-space consistency, patch-matching texture loss,
and critic objectives with gradient penalty and auxiliary classification.

The total objective is
``total = w_tex * tex + w_sem * sem + w_adv * adv`` with
``adv = glo + loc + w_gp * gp + w_cls * cls``.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import ShapeError, TrainingDivergenceError, ValidationError

IDMRF_BANDWIDTH = 0.5
IDMRF_EPS = 1e-5


@dataclass
class LossWeights:
    tex: float = 1e-3
    sem: float = 1e-4
    adv: float = 1e-3
    gp: float = 10.0
    cls: float = 0.5

    def __post_init__(self) -> None:
        for name in ("tex", "sem", "adv", "gp", "cls"):
            if getattr(self, name) < 0:
                raise ValidationError(f"loss weight {name} must be >= 0")


@dataclass
class LossBreakdown:
    """Scalar loss components of one step, plus their weighted total."""

    tex: float
    sem: float
    glo: float
    loc: float
    gp: float
    cls: float
    adv: float
    total: float

    @classmethod
    def compute(
        cls, tex: float, sem: float, glo: float, loc: float, gp: float,
        cls_term: float, weights: LossWeights,
    ) -> "LossBreakdown":
        parts = {"tex": tex, "sem": sem, "glo": glo, "loc": loc, "gp": gp, "cls": cls_term}
        for name, value in parts.items():
            if not torch.isfinite(torch.as_tensor(value)):
                raise TrainingDivergenceError(f"loss component {name!r} is non-finite: {value}")
        adv = glo + loc + weights.gp * gp + weights.cls * cls_term
        total = weights.tex * tex + weights.sem * sem + weights.adv * adv
        return cls(tex=tex, sem=sem, glo=glo, loc=loc, gp=gp, cls=cls_term, adv=adv, total=total)

    def to_dict(self) -> dict:
        return {
            "tex": self.tex, "sem": self.sem, "glo": self.glo, "loc": self.loc,
            "gp": self.gp, "cls": self.cls, "adv": self.adv, "total": self.total,
        }


def semantic_consistency(feats_out, feats_gt) -> torch.Tensor:
    """Mean-normalized squared feature distance, summed over layers.

    Accepts single feature tensors or dicts of tag → tensor; each layer
    contributes ||a - b||^2 / (C*H*W), averaged over the batch.
    """
    if isinstance(feats_out, torch.Tensor):
        feats_out, feats_gt = {"_": feats_out}, {"_": feats_gt}
    if feats_out.keys() != feats_gt.keys():
        raise ShapeError(f"feature layers differ: {set(feats_out)} vs {set(feats_gt)}")
    total = None
    for tag in feats_out:
        a, b = feats_out[tag], feats_gt[tag]
        if a.shape != b.shape:
            raise ShapeError(f"feature shapes at {tag} differ: {a.shape} vs {b.shape}")
        term = (a - b).pow(2).flatten(1).sum(dim=1) / a[0].numel()
        total = term if total is None else total + term
    return total.mean()


def texture_idmrf(
    feat_out: torch.Tensor,
    feat_gt: torch.Tensor,
    bandwidth: float = IDMRF_BANDWIDTH,
    eps: float = IDMRF_EPS,
) -> torch.Tensor:
    """Patch-matching texture loss over feature maps.

    Treats every feature-map position as a 1×1 patch. Cosine distances
    between generated (source) and target patches are turned into relative
    distances d~ = d / (min_row d + eps), then affinities
    exp((1 - d~) / bandwidth), row-normalized over target patches. The loss
    is -log of the mean, over target patches, of the best source affinity;
    it is 0 when every target patch is matched exactly.
    """
    if feat_out.shape != feat_gt.shape:
        raise ShapeError(f"feature shapes differ: {feat_out.shape} vs {feat_gt.shape}")
    if feat_out.ndim != 4:
        raise ShapeError(f"expected NCHW features, got {tuple(feat_out.shape)}")
    n = feat_out.shape[0]
    losses = []
    for i in range(n):
        src = feat_out[i].flatten(1)  # (C, P_src)
        tgt = feat_gt[i].flatten(1)  # (C, P_tgt)
        src_n = src / src.norm(dim=0, keepdim=True).clamp_min(1e-8)
        tgt_n = tgt / tgt.norm(dim=0, keepdim=True).clamp_min(1e-8)
        dist = 1.0 - src_n.t() @ tgt_n  # (P_src, P_tgt)
        rel = dist / (dist.min(dim=1, keepdim=True).values + eps)
        aff = torch.exp((1.0 - rel) / bandwidth)
        aff = aff / aff.sum(dim=1, keepdim=True)
        best_per_target = aff.max(dim=0).values
        losses.append(-torch.log(best_per_target.mean().clamp_min(1e-12)))
    return torch.stack(losses).mean()


def critic_wasserstein_loss(real_scores: torch.Tensor, fake_scores: torch.Tensor) -> torch.Tensor:
    """Critic objective (to minimize): E[D(fake)] - E[D(real)]."""
    return fake_scores.mean() - real_scores.mean()


def critic_hinge_loss(real_scores: torch.Tensor, fake_scores: torch.Tensor) -> torch.Tensor:
    return F.relu(1.0 - real_scores).mean() + F.relu(1.0 + fake_scores).mean()


def generator_adversarial_loss(fake_scores: torch.Tensor) -> torch.Tensor:
    """Generator objective (to minimize): -E[D(fake)]; same for both modes."""
    return -fake_scores.mean()


def gradient_penalty(
    disc, real: torch.Tensor, fake: torch.Tensor, mix: torch.Tensor
) -> torch.Tensor:
    """(||grad|| - 1)^2 on per-sample interpolates between real and fake.

    ``mix`` holds the per-sample interpolation coefficients in [0, 1]
    (shape (N,) or broadcastable); supplying them keeps training runs
    reproducible from a single RNG stream.
    """
    if real.shape != fake.shape:
        raise ShapeError(f"real/fake shapes differ: {real.shape} vs {fake.shape}")
    u = mix.view(-1, 1, 1, 1).to(real.dtype)
    x_hat = (u * real + (1.0 - u) * fake).detach().requires_grad_(True)
    scores = disc(x_hat)
    grads = torch.autograd.grad(
        outputs=scores.sum(), inputs=x_hat, create_graph=True, retain_graph=True
    )[0]
    norms = grads.flatten(1).norm(dim=1)
    return ((norms - 1.0) ** 2).mean()


def classification_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Cross-entropy between predicted filter logits and true class indices."""
    if logits.shape[0] != labels.shape[0]:
        raise ShapeError(
            f"batch mismatch: {logits.shape[0]} logits vs {labels.shape[0]} labels"
        )
    return F.cross_entropy(logits, labels)
