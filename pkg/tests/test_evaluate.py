import numpy as np
import pytest

from unfilter.dataset import DatasetManifest, synthesize_dataset
from unfilter.evaluate import (
    MetricsReport,
    baseline_delta_e,
    evaluate_dir,
    format_confusion,
)
from unfilter.filters import CLASS_NAMES
from unfilter.image import save_png
from unfilter.model import GeneratorConfig
from unfilter.training import TrainConfig, train

from conftest import make_photo


@pytest.fixture(scope="module")
def setup(tmp_path_factory):
    root = tmp_path_factory.mktemp("eval")
    src = root / "src"
    src.mkdir()
    for i in range(2):
        save_png(make_photo(32, 32, seed=i), src / f"img{i}.png")
    ds = root / "ds"
    synthesize_dataset(src, ds, size=(32, 32), seed=0, filters=("Lo-Fi", "Willow"))
    cfg = TrainConfig(
        dataset_dir=str(ds),
        out_dir=str(root / "run"),
        steps=1,
        batch_size=2,
        seed=1,
        model=GeneratorConfig(
            image_size=32,
            level_channels=(4, 6, 8, 8, 8, 8),
            style_trunk_width=16,
            disc_base_channels=4,
        ),
    )
    ckpt = train(cfg)
    return ds, ckpt


def test_report_covers_every_filtered_image(setup):
    ds, ckpt = setup
    report = evaluate_dir(ckpt, ds)
    assert len(report.per_image) == 4  # 2 images x 2 filters
    for row in report.per_image:
        assert set(row) == {
            "image_id", "filter_name", "predicted", "ssim", "psnr", "delta_e", "feat_dist",
        }
    # originals included: 2 filters x 2 images + 2 originals
    assert int(report.confusion.sum()) == 6


def test_confusion_row_sums_match_manifest(setup):
    ds, ckpt = setup
    report = evaluate_dir(ckpt, ds)
    row_sums = report.confusion.sum(axis=1)
    assert row_sums[CLASS_NAMES.index("Lo-Fi")] == 2
    assert row_sums[CLASS_NAMES.index("Willow")] == 2
    assert row_sums[CLASS_NAMES.index("original")] == 2
    assert row_sums.sum() == 6


def test_accuracy_is_trace_over_total(setup):
    ds, ckpt = setup
    report = evaluate_dir(ckpt, ds)
    assert report.accuracy == pytest.approx(
        np.trace(report.confusion) / report.confusion.sum()
    )


def test_exclude_originals(setup):
    ds, ckpt = setup
    report = evaluate_dir(ckpt, ds, include_originals=False)
    assert int(report.confusion.sum()) == 4
    assert len(report.per_image) == 4


def test_aggregates_are_means(setup):
    ds, ckpt = setup
    report = evaluate_dir(ckpt, ds)
    agg = report.aggregates()
    assert agg["count"] == 4
    assert agg["ssim"] == pytest.approx(np.mean([r["ssim"] for r in report.per_image]))
    assert agg["psnr"] == pytest.approx(np.mean([r["psnr"] for r in report.per_image]))


def test_empty_dataset_gives_null_aggregates(setup, tmp_path):
    _, ckpt = setup
    empty = tmp_path / "empty"
    empty.mkdir()
    DatasetManifest(seed=0, image_size=(32, 32)).save(empty / "manifest.json")
    report = evaluate_dir(ckpt, empty)
    assert report.per_image == []
    assert report.aggregates() is None
    assert report.accuracy is None
    assert int(report.confusion.sum()) == 0


def test_missing_original_recorded_as_skip(setup, tmp_path):
    import shutil

    ds, ckpt = setup
    clone = tmp_path / "clone"
    shutil.copytree(ds, clone)
    (clone / "original" / "img0.png").unlink()
    report = evaluate_dir(ckpt, clone)
    assert any("img0" in s for s in report.skipped)
    assert len(report.per_image) == 2  # img1 only


def test_report_roundtrip(setup, tmp_path):
    ds, ckpt = setup
    path = tmp_path / "report.json"
    report = evaluate_dir(ckpt, ds, report_path=path)
    loaded = MetricsReport.load(path)
    assert loaded.per_image == report.per_image
    assert np.array_equal(loaded.confusion, report.confusion)
    raw = path.read_text()
    assert '"per_image"' in raw and '"confusion"' in raw and '"config_echo"' in raw


def test_baseline_delta_e_positive(setup):
    ds, _ = setup
    base = baseline_delta_e(ds, image_size=32)
    assert base is not None and base > 1.0


def test_format_confusion_mentions_accuracy(setup):
    ds, ckpt = setup
    text = format_confusion(evaluate_dir(ckpt, ds))
    assert "accuracy:" in text
    assert "original" in text
