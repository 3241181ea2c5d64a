"""Acceptance criteria, one test per criterion.

Run with `pytest tests/test_acceptance.py -v -rA` to get one line per
criterion; each test also prints an explicit PASS line on success.
The two optimization-based criteria run a few hundred codec round trips
each and dominate the suite's runtime.
"""

import math
import time

import numpy as np
import pytest

from conftest import synthetic_photo, synthetic_screenshot, write_corpus
from xstw.cli import main as cli_main
from xstw.cma import CmaConfig, default_population, optimize
from xstw.codec import coded_samples, decode, encode, truncation_position
from xstw.harness import (
    FitnessSpec,
    evaluate_weights,
    initial_vector,
    interpolate_bitrates,
    run_optimization,
)
from xstw.metrics import iou, ms_ssim, psnr
from xstw.pixel_io import (
    LabelMap,
    RasterImage,
    rgb_to_ycbcr_reversible,
    ycbcr_to_rgb_reversible,
)
from xstw.weights import default_table, vector_to_table


def _pass(number, text):
    print(f"criterion {number:02d} PASS - {text}")


@pytest.fixture(scope="module")
def desk_corpus(tmp_path_factory):
    """8 color images, half synthetic desktop content and half photo-like."""
    rng = np.random.default_rng(42)
    images = [synthetic_photo(rng, 192, 192) for _ in range(4)]
    images += [synthetic_screenshot(rng, 192, 192) for _ in range(4)]
    return write_corpus(tmp_path_factory.mktemp("desk"), images)


@pytest.fixture(scope="module")
def msssim_record(desk_corpus):
    spec = FitnessSpec(metric="ms_ssim", corpus=tuple(desk_corpus), target_bpp=1.0)
    return run_optimization(spec, seed=2024, budget_evals=300, threads=2)


@pytest.fixture(scope="module")
def psnr_record(desk_corpus):
    spec = FitnessSpec(metric="psnr", corpus=tuple(desk_corpus), target_bpp=1.0)
    return run_optimization(spec, seed=2024, budget_evals=300, threads=2)


def test_criterion_01_lossless_pipeline():
    rng = np.random.default_rng(1)
    table = default_table()
    sizes = [(64, 32), (512, 512)]
    while len(sizes) < 44:
        sizes.append((int(rng.integers(64, 224)), int(rng.integers(32, 224))))
    while len(sizes) < 50:
        sizes.append((int(rng.integers(224, 400)), int(rng.integers(128, 320))))
    start = time.perf_counter()
    for i, (w, h) in enumerate(sizes):
        color = i % 2 == 0
        shape = (h, w, 3) if color else (h, w)
        if i % 3 == 0:
            img = RasterImage(rng.integers(0, 256, shape, dtype=np.uint8))
        else:
            img = synthetic_photo(rng, w, h, color=color)
        assert decode(encode(img, table, 16.0)) == img, f"size {w}x{h} color={color}"
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, f"lossless sweep took {elapsed:.1f}s"
    _pass(1, f"50 lossless roundtrips (gray+color, 64x32..512x512) in {elapsed:.1f}s")


def test_criterion_02_rate_control():
    rng = np.random.default_rng(2)
    table = default_table()
    images = [synthetic_photo(rng, 256, 256) for _ in range(10)]
    for bpp in (1.0, 3.0, 5.0):
        for img in images:
            bs = encode(img, table, bpp)
            budget = bpp * coded_samples(img.width, img.height, 3)
            assert bs.payload_bits <= budget
            assert bs.payload_bits >= 0.90 * budget, (
                f"spent only {bs.payload_bits / budget:.3f} of budget at {bpp} bpp"
            )
    _pass(2, "payload within [0.90, 1.00] x budget at 1/3/5 bpp on 10 images")


def test_criterion_03_truncation_law():
    start = time.perf_counter()
    checked = 0
    for q in range(16):
        for g in range(16):
            for p in range(30):
                for r in range(31):
                    want = min(max(q - g - (1 if p < r else 0), 0), 15)
                    assert truncation_position(q, g, p, r) == want
                    checked += 1
    elapsed = time.perf_counter() - start
    assert checked == 16 * 16 * 30 * 31
    assert elapsed < 1.0, f"exhaustive truncation sweep took {elapsed:.2f}s"
    _pass(3, f"clamp(Q-G-r, 0, 15) verified on all {checked} cases in {elapsed:.2f}s")


def test_criterion_04_population_rule():
    assert default_population(30) == 14
    assert default_population(10) == 10
    assert default_population(1) == 4
    _pass(4, "population 14 at n=30, 10 at n=10, 4 at n=1")


def test_criterion_05_cma_sanity():
    start = time.perf_counter()
    sphere = lambda x: float(np.sum(x * x))
    config = CmaConfig(x0=np.ones(10), sigma0=0.5, seed=7, max_evals=5000)
    _, sphere_best, _ = optimize(config, sphere)
    assert sphere_best < 1e-10

    def rosenbrock(x):
        return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))

    config = CmaConfig(x0=np.zeros(5), sigma0=0.3, seed=8, max_evals=30_000)
    _, rosen_best, _ = optimize(config, rosenbrock)
    assert rosen_best < 1e-8
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0, f"CMA sanity runs took {elapsed:.1f}s"
    _pass(5, f"sphere<1e-10 in 5000 evals, Rosenbrock<1e-8 in 3e4 evals, {elapsed:.1f}s")


def test_criterion_06_weight_mapping_oracle():
    def rank_oracle(fractions):
        pairs = sorted(enumerate(fractions), key=lambda ip: (-ip[1], ip[0]))
        ranks = [0] * len(fractions)
        for rank, (pos, _) in enumerate(pairs):
            ranks[pos] = rank
        return ranks

    rng = np.random.default_rng(6)
    for _ in range(10_000):
        v = rng.uniform(-2.0, 18.0, 30)
        table = vector_to_table(v)
        fracs = (v - np.floor(v)).tolist()
        assert table.priorities.tolist() == rank_oracle(fracs)

    # shift invariance pre-clamp; 1/1024 grid keeps v+k exact in floats
    for _ in range(2_000):
        v = rng.integers(0, 12 * 1024, 30) / 1024.0
        k = int(rng.integers(-3, 4))
        assert np.array_equal(
            vector_to_table(v).priorities, vector_to_table(v + k).priorities
        )
    _pass(6, "priorities match the sort oracle on 1e4 vectors; shift-invariant")


def test_criterion_07_desk_scale_optimization(desk_corpus, msssim_record):
    spec = FitnessSpec(metric="ms_ssim", corpus=tuple(desk_corpus), target_bpp=1.0)
    default_loss = evaluate_weights(initial_vector(), spec, threads=2)
    default_score = 1.0 - default_loss
    optimized_score = 1.0 - msssim_record.best_loss
    assert msssim_record.history[0].best_f == pytest.approx(default_loss, abs=1e-12)
    assert optimized_score > default_score
    assert optimized_score - default_score >= 0.0005, (
        f"improvement {optimized_score - default_score:.6f} below 0.0005"
        f" (default {default_score:.5f}, optimized {optimized_score:.5f})"
    )
    assert msssim_record.wall_clock < 1200.0
    _pass(
        7,
        f"MS-SSIM {default_score:.5f} -> {optimized_score:.5f} "
        f"(+{optimized_score - default_score:.5f}) in {msssim_record.wall_clock:.0f}s",
    )


def test_criterion_08_metric_specificity(desk_corpus, msssim_record, psnr_record):
    spec = FitnessSpec(metric="ms_ssim", corpus=tuple(desk_corpus), target_bpp=1.0)
    msssim_score = 1.0 - evaluate_weights(msssim_record.best_vector, spec, threads=2)
    psnr_weights_score = 1.0 - evaluate_weights(psnr_record.best_vector, spec, threads=2)
    assert psnr_weights_score <= msssim_score + 1e-5, (
        f"PSNR-optimized weights scored {psnr_weights_score:.6f} MS-SSIM,"
        f" above MS-SSIM-optimized {msssim_score:.6f}"
    )
    _pass(
        8,
        f"PSNR weights {psnr_weights_score:.5f} <= MS-SSIM weights {msssim_score:.5f}"
        " on MS-SSIM at 1.0 bpp",
    )


def test_criterion_09_interpolation_contract(tmp_path):
    rng = np.random.default_rng(9)
    corpus = write_corpus(
        tmp_path / "interp",
        [synthetic_photo(rng, 64, 32, color=False) for _ in range(3)],
    )
    anchors = [
        run_optimization(
            FitnessSpec(metric="psnr", corpus=tuple(corpus), target_bpp=bpp),
            seed=99,
            budget_evals=43,
        )
        for bpp in (1.0, 3.0)
    ]
    results = interpolate_bitrates(anchors, [2.0], seed=5)
    loss, _ = results[2.0]
    spec2 = FitnessSpec(metric="psnr", corpus=tuple(corpus), target_bpp=2.0)
    reevaluated = [evaluate_weights(v, spec2) for _, v in anchors[0].top10]
    assert loss <= min(reevaluated)
    _pass(9, f"interpolated loss {loss:.4f} <= best re-evaluated anchor {min(reevaluated):.4f}")


def test_criterion_10_determinism(tmp_path):
    rng = np.random.default_rng(10)
    write_corpus(
        tmp_path / "corpus",
        [synthetic_photo(rng, 64, 32, color=False) for _ in range(2)],
    )
    spec = tmp_path / "run.spec"
    spec.write_text(
        f"metric = psnr\nbpp = 1.5\ncorpus = {tmp_path / 'corpus'}\nseed = 3\nevals = 29\n"
    )
    histories = {}
    for name, threads in (("a", 1), ("b", 1), ("t8", 8)):
        out = tmp_path / name
        code = cli_main(
            ["optimize", "--spec", str(spec), "--out", str(out), "--threads", str(threads)]
        )
        assert code == 0
        histories[name] = (out / "history.csv").read_bytes()
    assert histories["a"] == histories["b"]
    assert histories["a"] == histories["t8"]
    _pass(10, "history.csv byte-identical across reruns and --threads 1 vs 8")


def test_criterion_11_metric_unit_values():
    rng = np.random.default_rng(11)
    img = RasterImage(rng.integers(0, 256, (200, 200), dtype=np.uint8))
    assert ms_ssim(img, img).value == 1.0

    a = RasterImage(np.full((16, 16), 40, dtype=np.uint8))
    b = RasterImage(np.full((16, 16), 42, dtype=np.uint8))
    assert psnr(a, b).value == pytest.approx(42.1103, abs=1e-3)
    assert math.isinf(psnr(a, a).value)

    labels = rng.integers(0, 5, (8, 8))
    lm = LabelMap(labels=labels, num_classes=5)
    assert iou(lm, lm, 5).value == 1.0
    truth = np.zeros((4, 4), dtype=np.int64)
    truth[0:2, :] = 1
    pred = np.zeros((4, 4), dtype=np.int64)
    pred[0, :] = 1
    want = (0.5 + 8 / 12) / 2
    assert iou(LabelMap(pred, 2), LabelMap(truth, 2), 2).value == pytest.approx(want)
    assert (
        iou(LabelMap(np.zeros((4, 4), dtype=np.int64), 2), LabelMap(np.ones((4, 4), dtype=np.int64), 2), 2).value
        == 0.0
    )

    # exhaustive color-transform roundtrip on a 32^3 RGB grid
    vals = np.arange(0, 256, 8)
    assert len(vals) == 32
    r, g, b = np.meshgrid(vals, vals, vals, indexing="ij")
    rgb = np.stack([r, g, b], axis=-1).reshape(128, 256, 3).astype(np.uint8)
    grid_img = RasterImage(rgb)
    assert ycbcr_to_rgb_reversible(rgb_to_ycbcr_reversible(grid_img)) == grid_img
    corners = RasterImage(
        np.array([[[255, 255, 255], [255, 0, 255], [0, 255, 0], [255, 255, 0]]], dtype=np.uint8)
    )
    assert ycbcr_to_rgb_reversible(rgb_to_ycbcr_reversible(corners)) == corners
    _pass(11, "metric unit values and exhaustive 32^3 color-transform roundtrip")
