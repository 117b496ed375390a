"""Acceptance suite: ten criteria, one test each, run with pytest -v.

Criteria 1-4 are fast formula/property checks against inline arithmetic
oracles. Criteria 5-9 share one bank of desk-scale experiments (5 seeds,
200 training scenes of size 48) built lazily by a module fixture; criterion
10 exercises the command line on a small run twice. Budgets from the
experiment design are asserted alongside the statistical claims.
"""

import math
import time

import numpy as np
import pytest

from curriseg.cli import main as cli_main
from curriseg.curriculum import (
    DifficultyTable,
    ScheduleVariant,
    capped_subset,
    selection_fraction,
)
from curriseg.grid import Grid2D, SeededRng
from curriseg.losses import batch_weighted_bce, batch_weighted_iou, sigmoid
from curriseg.metrics import report_from_arrays
from curriseg.model import backward_cached, forward_cached, forward_values, init_params
from curriseg.spectral import (
    ablation_filter,
    circular_lowpass_mask,
    dft2,
    idft2,
    sbft,
    square_lowpass_mask,
)
from curriseg.synthdata import (
    TEST_STREAM_BASE,
    DegradationSpec,
    SceneSpec,
    corrupt_labels,
    degrade_dataset,
    generate_dataset,
)
from curriseg.trainer import TrainConfig, run_experiment
from curriseg.weighting import (
    entropy_values,
    pixel_entropy,
    pixel_weight_matrix,
    pixel_weight_values,
    PixelWeightConfig,
    sample_weights,
)

# experiment design shared by criteria 5-9
N_TRAIN, N_TEST, SIZE = 200, 50, 48
SEEDS = (0, 1, 2, 3, 4)
LR, BATCH = 5e-3, 25


def exp_config(mode: str, seed: int) -> TrainConfig:
    return TrainConfig(mode=mode, seed=seed, lr=LR, batch_size=BATCH)


def eval_probs(params, samples):
    images = np.stack([s.image.values for s in samples])
    targets = np.stack([s.mask.bits for s in samples]).astype(np.float64)
    return report_from_arrays(sigmoid(forward_values(params, images)), targets)


@pytest.fixture(scope="module")
def bank():
    """Every heavy run for criteria 5-9, grouped per seed."""
    spec = SceneSpec(size=SIZE)
    rows = {}
    t_outlier = 0.0
    t_paired = 0.0
    for seed in SEEDS:
        train = generate_dataset(N_TRAIN, spec, seed=seed)
        test = generate_dataset(N_TEST, spec, seed=seed,
                                stream_base=TEST_STREAM_BASE)
        blurred = degrade_dataset(test, DegradationSpec("blur", 1.0), seed=seed)
        noisy = degrade_dataset(test, DegradationSpec("noise", 0.15), seed=seed)

        started = time.perf_counter()
        base = run_experiment(exp_config("baseline", seed), train, test)
        cur = run_experiment(exp_config("curriseg", seed), train, test)
        t_paired += time.perf_counter() - started

        rev = run_experiment(exp_config("reversed", seed), train, test)

        started = time.perf_counter()
        corrupted = corrupt_labels(train, 0.2, 0.0, seed)
        outlier_run = run_experiment(exp_config("curriseg", seed), corrupted)
        t_outlier += time.perf_counter() - started

        flags = {s.id: s.is_corrupted for s in corrupted}
        table = outlier_run.weight_tables[outlier_run.config.t_c]
        rows[seed] = {
            "base_iou": base.final_report.iou,
            "base_fbeta": base.final_report.f_beta,
            "cur_iou": cur.final_report.iou,
            "cur_fbeta": cur.final_report.f_beta,
            "rev_fbeta": rev.final_report.f_beta,
            "base_evals": base.grad_evals,
            "cur_evals": cur.grad_evals,
            "base_blur_iou": eval_probs(base.params, blurred).iou,
            "base_noise_iou": eval_probs(base.params, noisy).iou,
            "cur_blur_iou": eval_probs(cur.params, blurred).iou,
            "cur_noise_iou": eval_probs(cur.params, noisy).iou,
            "w_outlier": float(np.mean([st.w for sid, st in table.items()
                                        if flags[sid]])),
            "w_clean": float(np.mean([st.w for sid, st in table.items()
                                      if not flags[sid]])),
        }
    return {"rows": rows, "t_outlier": t_outlier, "t_paired": t_paired}


def test_criterion_01_formula_oracles():
    started = time.perf_counter()
    gen = SeededRng(1001, 0).generator()

    # worked values first
    assert selection_fraction(30, ScheduleVariant("linear", 0.6, 60)) == \
        pytest.approx(0.6 + 0.4 * 29 / 59, abs=1e-9)
    cohort = {0: (0.0, 0.0), 1: (0.5, 0.7), 2: (1.0, 1.0)}
    w = sample_weights(cohort)[1].w
    assert w == pytest.approx(0.1 + 0.9 * 0.5 * math.exp(-0.5) * 0.85, abs=1e-9)
    h = pixel_entropy(0.25)
    assert h == pytest.approx(
        -(0.25 * math.log2(0.25) + 0.75 * math.log2(0.75)), abs=1e-9)
    w_mat = pixel_weight_matrix(Grid2D(np.full((1, 1), 0.5)), t=25,
                                config=PixelWeightConfig(w_min=0.1, t_c=50))
    assert w_mat.values[0, 0] == pytest.approx(0.55, abs=1e-9)

    # schedule fractions
    for _ in range(60):
        t_c = int(gen.integers(2, 80))
        t = int(gen.integers(1, t_c + 1))
        p_min = float(gen.uniform(0.05, 0.95))
        frac = (t - 1) / (t_c - 1)
        for kind, f in (("linear", frac), ("quadratic", frac ** 2),
                        ("sqrt", math.sqrt(frac))):
            got = selection_fraction(t, ScheduleVariant(kind, p_min, t_c))
            assert abs(got - (p_min + (1 - p_min) * f)) <= 1e-9

    # temporal sample weights
    for _ in range(60):
        n = int(gen.integers(3, 12))
        mus = gen.uniform(0, 1, n)
        vars_ = gen.uniform(0, 0.3, n)
        cohort = {i: (float(mus[i]), float(vars_[i])) for i in range(n)}
        stats = sample_weights(cohort, sigma_star=0.5, gamma=0.2, w_min_s=0.1)
        mu_lo, mu_hi = mus.min(), mus.max()
        v_lo, v_hi = vars_.min(), vars_.max()
        for i in range(n):
            mu_n = 0.0 if mu_hi == mu_lo else (mus[i] - mu_lo) / (mu_hi - mu_lo)
            v_n = 0.5 if v_hi == v_lo else (vars_[i] - v_lo) / (v_hi - v_lo)
            expect = 0.1 + 0.9 * ((1 - mu_n)
                                  * math.exp(-((v_n - 0.5) ** 2) / 0.08)
                                  * (1 - mu_n * (1 - v_n)))
            assert abs(stats[i].w - expect) <= 1e-9

    # pixel entropy and pixel weights
    for _ in range(60):
        probs = gen.uniform(0, 1, (5, 5))
        with np.errstate(divide="ignore", invalid="ignore"):
            h = -(np.where(probs > 0, probs * np.log2(probs), 0.0)
                  + np.where(probs < 1, (1 - probs) * np.log2(1 - probs), 0.0))
        got = entropy_values(probs)
        assert np.abs(got - h).max() <= 1e-9
        assert abs(pixel_entropy(float(probs[0, 0])) - h[0, 0]) <= 1e-9
        t_c = int(gen.integers(2, 60))
        t = int(gen.integers(0, t_c + 1))
        for variant, beta in (("linear", 1 - t / t_c),
                              ("exponential", math.exp(-t / t_c))):
            cfg = PixelWeightConfig(w_min=0.1, t_c=t_c, beta_variant=variant)
            got_w = pixel_weight_values(probs, t, cfg)
            assert np.abs(got_w - (0.1 + 0.9 * (1 - beta * h))).max() <= 1e-9

    # weighted losses
    for _ in range(60):
        logits = gen.normal(0, 2, (2, 4, 4))
        targets = (gen.uniform(0, 1, (2, 4, 4)) < 0.5).astype(np.float64)
        weights = gen.uniform(0.1, 1, (2, 4, 4))
        probs = np.clip(1 / (1 + np.exp(-logits)), 1e-7, 1 - 1e-7)
        bce = -(weights * (targets * np.log(probs)
                           + (1 - targets) * np.log(1 - probs))).sum(
            axis=(1, 2)) / weights.sum(axis=(1, 2))
        inter = (weights * probs * targets).sum(axis=(1, 2))
        union = (weights * (probs + targets - probs * targets)).sum(axis=(1, 2))
        iou = 1 - (inter + 1) / (union + 1)
        got_bce, _ = batch_weighted_bce(logits, targets, weights)
        got_iou, _ = batch_weighted_iou(logits, targets, weights)
        assert np.abs(got_bce - bce).max() <= 1e-9
        assert np.abs(got_iou - iou).max() <= 1e-9

    assert time.perf_counter() - started < 5.0


def test_criterion_02_spectral_suite():
    started = time.perf_counter()
    gen = SeededRng(1002, 0).generator()

    for h, w in ((8, 8), (12, 10), (9, 7)):
        grid = Grid2D(gen.uniform(0, 1, (h, w)))
        spec = dft2(grid)
        back = idft2(spec)
        assert np.abs(back.values - grid.values).max() <= 1e-9
        space = float((grid.values ** 2).sum())
        freq = float((np.abs(spec.coefficients) ** 2).sum()) / (h * w)
        assert abs(space - freq) / space <= 1e-9

    # repeated low-pass application is a projection
    grid = Grid2D(gen.uniform(0, 1, (16, 16)))
    for kind in ("circular", "square"):
        once = ablation_filter(grid, kind, 0.5)
        twice = ablation_filter(once, kind, 0.5)
        assert np.abs(twice.values - once.values).max() <= 1e-6
    once = sbft(grid, 0.5)
    twice = sbft(once, 0.5)
    assert np.abs(twice.values - once.values).max() <= 1e-6

    # monotone nesting in the radius
    prev = None
    for r in (0.2, 0.4, 0.6, 0.8, 1.0):
        band = circular_lowpass_mask(16, 16, r).bits.astype(bool)
        if prev is not None:
            assert np.all(prev <= band)
        prev = band

    assert int(circular_lowpass_mask(8, 8, 0.5).bits.sum()) == 13
    assert int(square_lowpass_mask(8, 8, 0.5).bits.sum()) == 25
    assert time.perf_counter() - started < 5.0


def test_criterion_03_gradient_suite():
    started = time.perf_counter()
    gen = SeededRng(1003, 0).generator()

    def batch_loss(logits, targets, weights):
        bce, _ = batch_weighted_bce(logits, targets, weights)
        iou, _ = batch_weighted_iou(logits, targets, weights)
        return float(bce.sum() + iou.sum())

    # loss gradients with respect to logits (smooth everywhere)
    step = 1e-5
    for trial in range(20):
        targets = (gen.uniform(0, 1, (2, 8, 8)) < 0.5).astype(np.float64)
        weights = gen.uniform(0.2, 1.0, (2, 8, 8))
        logits = gen.normal(0, 1.5, (2, 8, 8))
        _, g_bce = batch_weighted_bce(logits, targets, weights)
        _, g_iou = batch_weighted_iou(logits, targets, weights)
        analytic = g_bce + g_iou
        flat = logits.ravel()
        fd = np.empty_like(flat)
        for j in range(flat.size):
            keep = flat[j]
            flat[j] = keep + step
            hi = batch_loss(logits, targets, weights)
            flat[j] = keep - step
            lo = batch_loss(logits, targets, weights)
            flat[j] = keep
            fd[j] = (hi - lo) / (2 * step)
        rel = np.linalg.norm(fd - analytic.ravel()) / max(
            np.linalg.norm(fd), 1e-12)
        assert rel <= 1e-4

    # model gradients with respect to every parameter; central differences
    # are meaningless within a step of a rectifier kink, so instances whose
    # pre-activations sit closer than 1e-4 to zero are redrawn
    step = 1e-6
    accepted = 0
    attempt = 0
    while accepted < 20:
        attempt += 1
        assert attempt <= 200, "could not find enough kink-free instances"
        params = init_params(SeededRng(1003, attempt))
        draw = SeededRng(1003, 1000 + attempt).generator()
        images = draw.uniform(0, 1, (1, 8, 8))
        targets = (draw.uniform(0, 1, (1, 8, 8)) < 0.5).astype(np.float64)
        weights = draw.uniform(0.2, 1.0, (1, 8, 8))
        logits_m, cache = forward_cached(params, images)
        _, a1, _, a2, _ = cache
        if min(np.abs(a1).min(), np.abs(a2).min()) < 1e-4:
            continue
        accepted += 1
        _, g_bce = batch_weighted_bce(logits_m, targets, weights)
        _, g_iou = batch_weighted_iou(logits_m, targets, weights)
        grads = backward_cached(params, cache, g_bce + g_iou)
        analytic_vec = grads.to_flat()
        theta = params.to_flat()
        fd_vec = np.empty(theta.size)
        for j in range(theta.size):
            bumped = theta.copy()
            bumped[j] = theta[j] + step
            hi = batch_loss(forward_values(params.from_flat(bumped), images),
                            targets, weights)
            bumped[j] = theta[j] - step
            lo = batch_loss(forward_values(params.from_flat(bumped), images),
                            targets, weights)
            fd_vec[j] = (hi - lo) / (2 * step)
        rel = np.linalg.norm(fd_vec - analytic_vec) / max(
            np.linalg.norm(fd_vec), 1e-12)
        assert rel <= 1e-4

    assert time.perf_counter() - started < 30.0


def test_criterion_04_curriculum_invariants():
    gen = SeededRng(1004, 0).generator()

    # admission grows to the full set under frozen difficulty ranks
    n = 40
    scores = {i: float(s) for i, s in enumerate(gen.uniform(0, 1, n))}
    table = DifficultyTable(epoch=1, checkpoint_epoch=0, scores=scores)
    t_c = 50
    sched = ScheduleVariant("linear", 0.6, t_c)
    previous = set()
    last_size = 0
    for t in range(1, t_c + 1):
        active = set(capped_subset(table, selection_fraction(t, sched)))
        assert len(active) >= last_size
        assert previous <= active
        previous, last_size = active, len(active)
    assert previous == set(range(n))

    # variant ordering on the open interval
    strict = False
    for t in range(2, t_c):
        sq = selection_fraction(t, ScheduleVariant("sqrt", 0.6, t_c))
        ln = selection_fraction(t, ScheduleVariant("linear", 0.6, t_c))
        qd = selection_fraction(t, ScheduleVariant("quadratic", 0.6, t_c))
        assert sq >= ln >= qd
        strict = strict or (sq > ln > qd)
    assert strict

    # weight floors under fuzzing
    for _ in range(200):
        n = int(gen.integers(2, 10))
        cohort = {i: (float(gen.uniform(0, 1)), float(gen.uniform(0, 1)))
                  for i in range(n)}
        variant = ("gaussian", "triangular", "quadratic")[int(gen.integers(3))]
        for st in sample_weights(cohort, sigma_variant=variant).values():
            assert 0.1 - 1e-12 <= st.w <= 1.0 + 1e-12
    for _ in range(200):
        probs = gen.uniform(0, 1, (4, 4))
        t_c = int(gen.integers(2, 60))
        t = int(gen.integers(0, t_c + 1))
        variant = ("linear", "exponential")[int(gen.integers(2))]
        cfg = PixelWeightConfig(w_min=0.1, t_c=t_c, beta_variant=variant)
        w = pixel_weight_values(probs, t, cfg)
        assert w.min() >= 0.1 - 1e-12
        assert w.max() <= 1.0 + 1e-12


def test_criterion_05_outlier_suppression(bank):
    ratios = {}
    for seed, row in bank["rows"].items():
        ratios[seed] = row["w_outlier"] / row["w_clean"]
        assert ratios[seed] < 0.7, (
            f"seed {seed}: outlier/clean weight ratio {ratios[seed]:.4f}")
    assert bank["t_outlier"] < 600.0
    print(f"outlier/clean weight ratios: "
          f"{ {s: round(v, 4) for s, v in ratios.items()} }")


def test_criterion_06_directional_gain(bank):
    rows = bank["rows"].values()
    d_iou = [r["cur_iou"] - r["base_iou"] for r in rows]
    d_fb = [r["cur_fbeta"] - r["base_fbeta"] for r in rows]
    wins = sum(1 for a, b in zip(d_iou, d_fb) if a > 0 and b > 0)
    assert np.mean(d_iou) > 0, f"mean IoU delta {np.mean(d_iou):+.4f}"
    assert np.mean(d_fb) > 0, f"mean F-beta delta {np.mean(d_fb):+.4f}"
    assert wins >= 4, f"curriseg won only {wins}/5 paired seeds"
    assert bank["t_paired"] < 1200.0
    print(f"paired deltas iou={[round(d, 4) for d in d_iou]} "
          f"fbeta={[round(d, 4) for d in d_fb]} wins={wins}/5")


def test_criterion_07_robustness_under_degradation(bank):
    drops_b, drops_c = [], []
    for seed, row in bank["rows"].items():
        drop_b = np.mean([row["base_iou"] - row["base_blur_iou"],
                          row["base_iou"] - row["base_noise_iou"]])
        drop_c = np.mean([row["cur_iou"] - row["cur_blur_iou"],
                          row["cur_iou"] - row["cur_noise_iou"]])
        drops_b.append(drop_b)
        drops_c.append(drop_c)
        deg_b = row["base_iou"] - drop_b
        deg_c = row["cur_iou"] - drop_c
        print(f"seed {seed}: drop curriseg {drop_c:.4f} baseline {drop_b:.4f}"
              f" | degraded-iou curriseg {deg_c:.4f} baseline {deg_b:.4f}")
    mean_b, mean_c = float(np.mean(drops_b)), float(np.mean(drops_c))
    assert mean_c < mean_b, (
        f"curriseg mean drop {mean_c:.4f} vs baseline {mean_b:.4f}")
    print(f"mean clean-to-degraded IoU drop: curriseg {mean_c:.4f} "
          f"< baseline {mean_b:.4f}")


def test_criterion_08_reversed_phase_ablation(bank):
    gaps = {}
    for seed, row in bank["rows"].items():
        gaps[seed] = row["cur_fbeta"] - row["rev_fbeta"]
        print(f"seed {seed}: curriseg F {row['cur_fbeta']:.4f} "
              f"reversed F {row['rev_fbeta']:.4f} gap {gaps[seed]:+.4f}")
    losing = sorted(s for s, g in gaps.items() if g <= 0)
    assert not losing, (
        f"reversed matched or beat curriseg on seeds {losing} "
        f"(gaps { {s: round(gaps[s], 4) for s in losing} })")


def test_criterion_09_gradient_evaluation_budget(bank):
    for seed, row in bank["rows"].items():
        ratio = row["cur_evals"] / row["base_evals"]
        assert ratio <= 0.9, f"seed {seed}: eval ratio {ratio:.4f}"
    print("per-sample gradient evaluation ratio <= 0.9 on all seeds")


def test_criterion_10_cli_determinism(tmp_path):
    data = tmp_path / "data"
    assert cli_main(["generate", "--n", "12", "--n-test", "4", "--size", "12",
                     "--seed", "3", "--out", str(data)]) == 0
    runs = []
    for name in ("first", "second"):
        out = tmp_path / name
        assert cli_main(["train", "--data", str(data), "--out", str(out),
                         "--seed", "3", "--K", "2", "--t-c", "6", "--t", "8",
                         "--warmup", "2", "--lr", "0.01"]) == 0
        runs.append(out)
    first = (runs[0] / "epochs.csv").read_bytes()
    second = (runs[1] / "epochs.csv").read_bytes()
    assert first == second
    assert (runs[0] / "summary.json").read_bytes() == \
        (runs[1] / "summary.json").read_bytes()
