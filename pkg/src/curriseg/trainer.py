"""Two-phase training orchestration: warm-up, curriculum, anti-curriculum.

curriseg mode runs warm-up (all samples, unit weights), then the curriculum
window (checkpoint-scored difficulty, admission schedule, temporal sample
weights, entropy pixel weights), then the anti phase (spectrally filtered
inputs, uniform loss). baseline is plain training for the same total epoch
count; reversed runs the anti block first, then warm-up and curriculum, each
phase keeping its original length. Everything is driven by one master seed
and named RNG streams, so identical configs reproduce identical logs bit for
bit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import curriculum as curr
from . import metrics as met
from . import model
from . import weighting as wt
from .grid import SeededRng
from .losses import batch_weighted_bce, batch_weighted_iou, sigmoid
from .spectral import FILTER_KINDS, filter_values

__all__ = [
    "MODES",
    "SBFT_SUBSETS",
    "ConfigError",
    "TrainConfig",
    "EpochLog",
    "ExperimentResult",
    "run_warmup",
    "run_phase1",
    "run_phase2",
    "run_experiment",
    "epoch_csv_rows",
    "EPOCH_CSV_HEADER",
]

MODES = ("baseline", "curriseg", "reversed")
SBFT_SUBSETS = ("all", "hard", "random")
DROPPABLE = ("mu", "sigma", "out")

_STREAM_INIT = 101
_STREAM_SHUFFLE = 1 << 20
_STREAM_SBFT = 1 << 21


class ConfigError(ValueError):
    """Contradictory or out-of-range training configuration."""


@dataclass(frozen=True)
class TrainConfig:
    """All hyperparameters and ablation switches for one run."""

    k: int = 10
    p_min: float = 0.6
    sigma_star: float = 0.5
    gamma: float = 0.2
    w_min_s: float = 0.1
    w_min: float = 0.1
    r: float = 0.95
    t_c: int = 60
    t: int = 70
    warmup_epochs: int = 10
    lr: float = 1e-3
    batch_size: int = 0
    mode: str = "curriseg"
    schedule: str = "linear"
    sigma_variant: str = "gaussian"
    beta_variant: str = "linear"
    filter_kind: str = "circular"
    sbft_subset: str = "all"
    drop: frozenset = frozenset()
    seed: int = 0
    max_threads: int = 0

    def validate(self) -> None:
        if not (0 < self.warmup_epochs < self.t_c < self.t):
            raise ConfigError(
                f"need 0 < warmup_epochs < T_c < T, got "
                f"{self.warmup_epochs}, {self.t_c}, {self.t}"
            )
        if self.k < 1:
            raise ConfigError(f"K must be positive, got {self.k}")
        for name in ("p_min", "sigma_star", "gamma", "w_min_s", "w_min"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0 and not (name == "p_min" and v == 1.0):
                raise ConfigError(f"{name} must be in (0,1), got {v}")
        if self.r <= 0:
            raise ConfigError(f"r must be positive, got {self.r}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 0:
            raise ConfigError(f"batch size must be >= 0, got {self.batch_size}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.schedule not in curr.SCHEDULE_KINDS:
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.sigma_variant not in wt.SIGMA_VARIANTS:
            raise ConfigError(f"unknown sigma variant {self.sigma_variant!r}")
        if self.beta_variant not in wt.BETA_VARIANTS:
            raise ConfigError(f"unknown beta variant {self.beta_variant!r}")
        if self.filter_kind not in FILTER_KINDS:
            raise ConfigError(f"unknown filter kind {self.filter_kind!r}")
        if self.sbft_subset not in SBFT_SUBSETS:
            raise ConfigError(f"unknown sbft subset {self.sbft_subset!r}")
        if self.mode == "reversed" and self.sbft_subset == "hard":
            raise ConfigError(
                "reversed mode cannot use the hard sbft subset: no difficulty "
                "table exists before the anti block"
            )
        bad = set(self.drop) - set(DROPPABLE)
        if bad:
            raise ConfigError(f"unknown drop flags {sorted(bad)}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.max_threads < 0:
            raise ConfigError(f"max_threads must be >= 0, got {self.max_threads}")

    def as_dict(self) -> dict:
        return {
            "K": self.k, "p_min": self.p_min, "sigma_star": self.sigma_star,
            "gamma": self.gamma, "w_min_s": self.w_min_s, "w_min": self.w_min,
            "r": self.r, "T_c": self.t_c, "T": self.t,
            "warmup_epochs": self.warmup_epochs, "lr": self.lr,
            "batch_size": self.batch_size, "mode": self.mode,
            "schedule": self.schedule, "sigma_variant": self.sigma_variant,
            "beta_variant": self.beta_variant, "filter_kind": self.filter_kind,
            "sbft_subset": self.sbft_subset, "drop": sorted(self.drop),
            "seed": self.seed, "max_threads": self.max_threads,
        }


@dataclass(frozen=True)
class EpochLog:
    """One epoch of bookkeeping; test metrics are NaN when no test split."""

    epoch: int
    phase: str
    active_count: int
    mean_sample_weight: float
    mean_pixel_weight: float
    train_loss: float
    test_mae: float
    test_iou: float
    test_dice: float
    test_fbeta: float
    wall_seconds: float


EPOCH_CSV_HEADER = ("epoch", "phase", "active_count", "mean_sample_weight",
                    "mean_pixel_weight", "train_loss", "test_mae", "test_iou",
                    "test_dice", "test_fbeta")


def epoch_csv_rows(logs) -> list:
    """Deterministic CSV rows (wall-clock deliberately excluded)."""
    rows = []
    for lg in logs:
        rows.append((lg.epoch, lg.phase, lg.active_count,
                     repr(lg.mean_sample_weight), repr(lg.mean_pixel_weight),
                     repr(lg.train_loss), repr(lg.test_mae), repr(lg.test_iou),
                     repr(lg.test_dice), repr(lg.test_fbeta)))
    return rows


@dataclass
class ExperimentResult:
    """Everything a run produces, in memory."""

    config: TrainConfig
    logs: list
    params: model.ConvNetParams
    final_report: met.MetricReport | None
    checkpoints: dict = field(default_factory=dict)
    difficulty_tables: list = field(default_factory=list)
    weight_tables: dict = field(default_factory=dict)
    grad_evals: int = 0
    adam_steps: int = 0


def _stack(samples):
    ordered = sorted(samples, key=lambda s: s.id)
    ids = np.array([s.id for s in ordered], dtype=np.int64)
    images = np.stack([s.image.values for s in ordered])
    targets = np.stack([s.mask.bits for s in ordered]).astype(np.float64)
    return ids, images, targets, ordered


class _Runner:
    def __init__(self, config: TrainConfig, train_samples, test_samples=None,
                 params: model.ConvNetParams | None = None,
                 difficulty_evaluator=None, progress=None):
        config.validate()
        self.cfg = config
        self.ids, self.images, self.targets, self.samples = _stack(train_samples)
        if len(set(self.ids.tolist())) != len(self.ids):
            raise ConfigError("duplicate sample ids in the training set")
        if test_samples:
            _, self.test_images, test_targets, _ = _stack(test_samples)
            self.test_targets = test_targets
        else:
            self.test_images = None
            self.test_targets = None
        self.params = params if params is not None else model.init_params(
            SeededRng(config.seed, _STREAM_INIT))
        self.adam = model.adam_init(self.params, lr=config.lr)
        self.buffers = {int(i): wt.DifficultyBuffer(config.k) for i in self.ids}
        self.eval_params = None
        self.eval_epoch = 0
        self.evaluator = difficulty_evaluator
        self.progress = progress
        self.logs = []
        self.checkpoints = {}
        self.difficulty_tables = []
        self.weight_tables = {}
        self.grad_evals = 0
        self._filtered_cache = {}

    # -- low-level helpers ---------------------------------------------------

    def _batches(self, sel_idx: np.ndarray, epoch: int):
        if self.cfg.batch_size <= 0 or self.cfg.batch_size >= sel_idx.size:
            return [sel_idx]
        gen = SeededRng(self.cfg.seed, _STREAM_SHUFFLE + epoch).generator()
        order = sel_idx[gen.permutation(sel_idx.size)]
        b = self.cfg.batch_size
        return [order[i : i + b] for i in range(0, order.size, b)]

    def _update(self, epoch: int, sel_idx: np.ndarray, bank: np.ndarray,
                omegas: np.ndarray | None, t_prime: int | None):
        """One epoch of optimization over the selected rows of `bank`.

        Returns (mean train loss per sample, mean pixel weight).
        """
        pw_cfg = None
        if t_prime is not None:
            pw_cfg = wt.PixelWeightConfig(self.cfg.w_min,
                                          self.cfg.t_c - self.cfg.warmup_epochs,
                                          self.cfg.beta_variant)
        loss_sum = 0.0
        wpix_sum = 0.0
        n_seen = 0
        for batch in self._batches(sel_idx, epoch):
            x = bank[batch]
            y = self.targets[batch]
            logits, cache = model.forward_cached(self.params, x)
            if pw_cfg is None:
                weights = np.ones_like(logits)
            else:
                probs = sigmoid(logits)
                weights = wt.pixel_weight_values(probs, t_prime, pw_cfg)
            bce_v, bce_g = batch_weighted_bce(logits, y, weights)
            iou_v, iou_g = batch_weighted_iou(logits, y, weights)
            om = np.ones(batch.size) if omegas is None else omegas[batch]
            totals = om * (bce_v + iou_v)
            grad = om[:, None, None] * (bce_g + iou_g) / batch.size
            grads = model.backward_cached(self.params, cache, grad)
            self.params, self.adam = model.adam_step(self.params, grads, self.adam)
            self.grad_evals += int(batch.size)
            loss_sum += float(totals.sum())
            wpix_sum += float(weights.mean()) * batch.size
            n_seen += int(batch.size)
        return loss_sum / n_seen, wpix_sum / n_seen

    def _test_metrics(self):
        if self.test_images is None:
            nan = float("nan")
            return nan, nan, nan, nan
        probs = sigmoid(model.forward_values(self.params, self.test_images))
        rep = met.report_from_arrays(probs, self.test_targets)
        return rep.mae, rep.iou, rep.dice, rep.f_beta

    def _log(self, epoch: int, phase: str, active: int, mean_w: float,
             mean_pix: float, loss: float, started: float):
        mae_v, iou_v, dice_v, fb_v = self._test_metrics()
        entry = EpochLog(epoch=epoch, phase=phase, active_count=active,
                         mean_sample_weight=mean_w, mean_pixel_weight=mean_pix,
                         train_loss=loss, test_mae=mae_v, test_iou=iou_v,
                         test_dice=dice_v, test_fbeta=fb_v,
                         wall_seconds=time.perf_counter() - started)
        self.logs.append(entry)
        if epoch % self.cfg.k == 0 or epoch == self.cfg.t:
            self.checkpoints[epoch] = self.params
        if self.progress is not None:
            self.progress(entry)

    # -- phases ----------------------------------------------------------------

    def plain_epochs(self, first: int, last: int, phase: str):
        all_idx = np.arange(self.ids.size)
        for epoch in range(first, last + 1):
            started = time.perf_counter()
            loss, _ = self._update(epoch, all_idx, self.images, None, None)
            self._log(epoch, phase, self.ids.size, 1.0, 1.0, loss, started)

    def curriculum_epochs(self, first: int, last: int, warm_end: int):
        t_c_eff = self.cfg.t_c - self.cfg.warmup_epochs
        sched = curr.ScheduleVariant(self.cfg.schedule, self.cfg.p_min, t_c_eff)
        ablate = frozenset(f"drop_{name}" for name in self.cfg.drop)
        if self.eval_params is None:
            self.eval_params = self.params
            self.eval_epoch = warm_end
        for epoch in range(first, last + 1):
            started = time.perf_counter()
            if (epoch - 1 - warm_end) % self.cfg.k == 0:
                self.eval_params = self.params
                self.eval_epoch = epoch - 1
            if self.evaluator is not None:
                table = self.evaluator(self.eval_params, self.samples, epoch,
                                       self.eval_epoch)
            else:
                table = curr.evaluate_difficulties(
                    self.eval_params, self.samples, epoch=epoch,
                    checkpoint_epoch=self.eval_epoch,
                    max_threads=self.cfg.max_threads)
            self.difficulty_tables.append(table)
            for sid, d in table.scores.items():
                self.buffers[sid].push(d)
            t_prime = epoch - warm_end
            p = curr.selection_fraction(t_prime, sched)
            active_ids = curr.capped_subset(table, p)
            cohort = {sid: wt.temporal_stats(self.buffers[sid])
                      for sid in active_ids if self.buffers[sid].count > 0}
            stats = {}
            if cohort:
                stats = wt.sample_weights(
                    cohort, self.cfg.sigma_star, self.cfg.gamma,
                    self.cfg.w_min_s, self.cfg.sigma_variant, ablate)
            self.weight_tables[epoch] = stats
            id_to_idx = {int(i): j for j, i in enumerate(self.ids)}
            sel_idx = np.array([id_to_idx[sid] for sid in active_ids],
                               dtype=np.int64)
            omegas = np.ones(self.ids.size)
            for sid, st in stats.items():
                omegas[id_to_idx[sid]] = st.w
            loss, mean_pix = self._update(epoch, sel_idx, self.images, omegas,
                                          t_prime)
            mean_w = float(omegas[sel_idx].mean())
            self._log(epoch, "curriculum", sel_idx.size, mean_w, mean_pix,
                      loss, started)

    def _anti_bank(self, epoch: int, frac: float) -> np.ndarray:
        cfg = self.cfg
        if cfg.filter_kind == "progressive":
            filtered = filter_values(self.images, cfg.r, "progressive", frac)
        else:
            key = (cfg.filter_kind, cfg.r)
            if key not in self._filtered_cache:
                self._filtered_cache[key] = filter_values(
                    self.images, cfg.r, cfg.filter_kind)
            filtered = self._filtered_cache[key]
        if cfg.sbft_subset == "all":
            return filtered
        half = (self.ids.size + 1) // 2
        if cfg.sbft_subset == "hard":
            table = self.difficulty_tables[-1]
            order = sorted(table.scores, key=lambda sid: (-table.scores[sid], sid))
            chosen = set(order[:half])
        else:
            gen = SeededRng(cfg.seed, _STREAM_SBFT + epoch).generator()
            chosen = {int(self.ids[j]) for j in gen.permutation(self.ids.size)[:half]}
        pick = np.array([int(i) in chosen for i in self.ids])
        return np.where(pick[:, None, None], filtered, self.images)

    def anti_epochs(self, first: int, last: int):
        all_idx = np.arange(self.ids.size)
        span = last - first
        for epoch in range(first, last + 1):
            started = time.perf_counter()
            frac = 1.0 if span == 0 else (epoch - first) / span
            bank = self._anti_bank(epoch, frac)
            loss, _ = self._update(epoch, all_idx, bank, None, None)
            self._log(epoch, "anti", self.ids.size, 1.0, 1.0, loss, started)

    # -- modes -----------------------------------------------------------------

    def run(self) -> ExperimentResult:
        cfg = self.cfg
        if cfg.mode == "baseline":
            self.plain_epochs(1, cfg.t, "plain")
        elif cfg.mode == "curriseg":
            self.plain_epochs(1, cfg.warmup_epochs, "warmup")
            self.eval_params = self.params
            self.eval_epoch = cfg.warmup_epochs
            self.curriculum_epochs(cfg.warmup_epochs + 1, cfg.t_c,
                                   cfg.warmup_epochs)
            self.anti_epochs(cfg.t_c + 1, cfg.t)
        else:  # reversed: anti block first, then warm-up, then curriculum
            anti_len = cfg.t - cfg.t_c
            self.anti_epochs(1, anti_len)
            warm_end = anti_len + cfg.warmup_epochs
            self.plain_epochs(anti_len + 1, warm_end, "warmup")
            self.eval_params = self.params
            self.eval_epoch = warm_end
            self.curriculum_epochs(warm_end + 1, cfg.t, warm_end)
        report = None
        if self.test_images is not None:
            probs = sigmoid(model.forward_values(self.params, self.test_images))
            report = met.report_from_arrays(probs, self.test_targets)
        return ExperimentResult(
            config=cfg, logs=self.logs, params=self.params,
            final_report=report, checkpoints=self.checkpoints,
            difficulty_tables=self.difficulty_tables,
            weight_tables=self.weight_tables, grad_evals=self.grad_evals,
            adam_steps=self.adam.step,
        )


def run_warmup(config: TrainConfig, dataset, params=None) -> model.ConvNetParams:
    """Warm-up epochs only: all samples, unit weights; returns the params."""
    config.validate()
    runner = _Runner(config, dataset, params=params)
    if config.warmup_epochs > 0:
        runner.plain_epochs(1, config.warmup_epochs, "warmup")
    return runner.params


def run_phase1(config: TrainConfig, dataset, params,
               difficulty_evaluator=None) -> model.ConvNetParams:
    """Curriculum window starting from warm params (also the first evaluator)."""
    config.validate()
    runner = _Runner(config, dataset, params=params,
                     difficulty_evaluator=difficulty_evaluator)
    runner.eval_params = runner.params
    runner.eval_epoch = config.warmup_epochs
    runner.curriculum_epochs(config.warmup_epochs + 1, config.t_c,
                             config.warmup_epochs)
    return runner.params


def run_phase2(config: TrainConfig, dataset, params) -> model.ConvNetParams:
    """Anti-curriculum fine-tune on filtered inputs, uniform loss."""
    config.validate()
    if config.sbft_subset == "hard":
        raise ConfigError("standalone run_phase2 has no difficulty table; "
                          "use sbft_subset 'all' or 'random'")
    runner = _Runner(config, dataset, params=params)
    runner.anti_epochs(config.t_c + 1, config.t)
    return runner.params


def run_experiment(config: TrainConfig, train_samples, test_samples=None,
                   difficulty_evaluator=None, progress=None) -> ExperimentResult:
    """Full run in the configured mode; fully reproducible from the seed."""
    runner = _Runner(config, train_samples, test_samples,
                     difficulty_evaluator=difficulty_evaluator,
                     progress=progress)
    return runner.run()
