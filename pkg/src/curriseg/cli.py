"""Command-line front end: generate, train, filter, report.

One binary, four subcommands. All outputs are deterministic functions of the
flags: rerunning a command with the same inputs and --out target overwrites
the files with identical bytes. Progress and timing go to stderr only, so
they never perturb the artifacts. Errors print a machine-parsable code line
to stderr; exit status is 0 only on success.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np

from . import model, spectral, synthdata, trainer, weighting
from .curriculum import SCHEDULE_KINDS, difficulty_csv_rows
from .grid import Grid2D, read_pgm, write_mask_pgm, write_pgm
from .trainer import ConfigError, TrainConfig

__all__ = ["main", "build_parser", "AggregationError"]

MANIFEST_NAME = "manifest.json"
EPOCH_CSV_NAME = "epochs.csv"
SUMMARY_NAME = "summary.json"

_EXIT_UNEXPECTED = 1
_EXIT_CONFIG = 2
_EXIT_IO = 3
_EXIT_AGGREGATE = 4


class AggregationError(Exception):
    """Run directories that cannot be aggregated into one report."""


class _CliError(Exception):
    def __init__(self, code: str, exit_code: int, message: str):
        super().__init__(message)
        self.code = code
        self.exit_code = exit_code


def _fail(code: str, exit_code: int, message: str) -> int:
    print(f"curriseg: error[{code}]: {message}", file=sys.stderr)
    return exit_code


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# generate


def cmd_generate(args) -> int:
    spec = synthdata.SceneSpec(size=args.size, alpha=args.alpha)
    n_test = args.n_test if args.n_test is not None else max(1, args.n // 4)
    train = synthdata.generate_dataset(args.n, spec, args.seed)
    test = synthdata.generate_dataset(n_test, spec, args.seed,
                                      stream_base=synthdata.TEST_STREAM_BASE)
    train = synthdata.corrupt_labels(train, args.outlier_frac,
                                     args.ambiguous_frac, args.seed)
    os.makedirs(args.out, exist_ok=True)
    corruption = {"outlier_fraction": args.outlier_frac,
                  "ambiguous_fraction": args.ambiguous_frac}
    manifest = synthdata.save_dataset(args.out, train, test, spec, args.seed,
                                      corruption)
    echo = {k: manifest[k] for k in
            ("format", "seed", "spec", "corruption", "n_train", "n_test",
             "n_corrupted")}
    json.dump(echo, sys.stdout, sort_keys=True, indent=1)
    sys.stdout.write("\n")
    return 0


# ---------------------------------------------------------------------------
# train


def _dataset_hash(data_dir: str) -> str:
    path = os.path.join(data_dir, synthdata.MANIFEST_NAME)
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _config_from_args(args) -> TrainConfig:
    drop = frozenset(p for p in (args.drop or "").split(",") if p)
    threads = int(os.environ.get("CURRISEG_THREADS", "0"))
    return TrainConfig(
        k=args.K, p_min=args.p_min, sigma_star=args.sigma_star,
        gamma=args.gamma, w_min_s=args.w_min_s, w_min=args.w_min, r=args.r,
        t_c=args.t_c, t=args.t, warmup_epochs=args.warmup, lr=args.lr,
        batch_size=args.batch_size, mode=args.mode, schedule=args.schedule,
        sigma_variant=args.sigma_variant, beta_variant=args.beta_variant,
        filter_kind=args.filter, sbft_subset=args.sbft_subset, drop=drop,
        seed=args.seed, max_threads=threads,
    )


def _progress_printer(cfg: TrainConfig):
    def show(log: trainer.EpochLog) -> None:
        print(f"[{cfg.mode}] epoch {log.epoch}/{cfg.t} phase={log.phase} "
              f"active={log.active_count} loss={log.train_loss:.5f} "
              f"iou={log.test_iou:.4f} ({log.wall_seconds:.2f}s)",
              file=sys.stderr)
    return show


def _weights_csv_rows(weight_tables: dict) -> list:
    rows = []
    for epoch in sorted(weight_tables):
        stats = weight_tables[epoch]
        for sid in sorted(stats):
            st = stats[sid]
            rows.append((epoch, sid, repr(st.mu), repr(st.var),
                         repr(st.mu_norm), repr(st.var_norm), repr(st.w)))
    return rows


def cmd_train(args) -> int:
    config = _config_from_args(args)
    config.validate()
    try:
        train_set, test_set, _ = synthdata.load_dataset(args.data)
        data_hash = _dataset_hash(args.data)
    except (OSError, ValueError, KeyError) as exc:
        raise _CliError("IO", _EXIT_IO, f"cannot load dataset: {exc}") from exc
    if not train_set:
        raise _CliError("IO", _EXIT_IO, f"dataset at {args.data} has no "
                        "training samples")
    result = trainer.run_experiment(config, train_set, test_set,
                                    progress=_progress_printer(config))
    os.makedirs(args.out, exist_ok=True)
    manifest = {
        "format": "curriseg-run-v1",
        "config": config.as_dict(),
        "dataset": args.data,
        "dataset_hash": data_hash,
        "out": args.out,
    }
    _write_json(os.path.join(args.out, MANIFEST_NAME), manifest)
    _write_csv(os.path.join(args.out, EPOCH_CSV_NAME),
               trainer.EPOCH_CSV_HEADER, trainer.epoch_csv_rows(result.logs))
    rep = result.final_report
    summary = {
        "format": "curriseg-summary-v1",
        "config": config.as_dict(),
        "dataset_hash": data_hash,
        "final": {
            "mae": rep.mae, "iou": rep.iou, "dice": rep.dice,
            "f_beta": rep.f_beta, "n_samples": rep.n_samples,
        } if rep is not None else None,
        "grad_evals": result.grad_evals,
        "adam_steps": result.adam_steps,
        "epochs": config.t,
    }
    _write_json(os.path.join(args.out, SUMMARY_NAME), summary)
    ckpt_dir = os.path.join(args.out, "checkpoints")
    os.makedirs(ckpt_dir, exist_ok=True)
    for epoch in sorted(result.checkpoints):
        model.save_checkpoint(
            os.path.join(ckpt_dir, f"epoch_{epoch:03d}.json"),
            result.checkpoints[epoch], step=epoch)
    if args.diagnostics:
        _write_csv(os.path.join(args.out, "difficulties.csv"),
                   ("epoch", "sample_id", "difficulty"),
                   [(e, s, repr(d)) for e, s, d in
                    difficulty_csv_rows(result.difficulty_tables)])
        _write_csv(os.path.join(args.out, "weights.csv"),
                   ("epoch", "sample_id", "mu", "var", "mu_norm", "var_norm",
                    "w"),
                   _weights_csv_rows(result.weight_tables))
    json.dump(summary, sys.stdout, sort_keys=True, indent=1)
    sys.stdout.write("\n")
    return 0


# ---------------------------------------------------------------------------
# filter


def cmd_filter(args) -> int:
    try:
        image = read_pgm(args.infile)
    except (OSError, ValueError) as exc:
        raise _CliError("IO", _EXIT_IO, f"cannot read {args.infile}: {exc}") \
            from exc
    filtered = spectral.ablation_filter(image, args.filter, args.r,
                                        args.fraction)
    residual = image.values - filtered.values
    if float(np.sqrt(np.mean(residual * residual))) <= 1.0 / 255.0:
        # The stopband holds nothing beyond 8-bit rounding noise, so the
        # filter is a no-op at file precision; keeping the input values makes
        # repeated application byte-stable.
        out = image
    else:
        out = Grid2D(np.clip(filtered.values, 0.0, 1.0))
    write_pgm(out, args.out)
    if args.dump_mask:
        h, w = image.values.shape
        if args.filter == "square":
            mask = spectral.square_lowpass_mask(h, w, args.r)
        else:
            r_eff = args.r
            if args.filter == "progressive":
                full = spectral.allpass_ratio(h, w)
                r_eff = full + (args.r - full) * args.fraction
            mask = spectral.circular_lowpass_mask(h, w, r_eff)
        write_mask_pgm(mask, args.dump_mask)
        print(f"passband bins: {int(mask.bits.sum())}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# report


_METRIC_KEYS = ("mae", "iou", "dice", "f_beta")


def _load_run(run_dir: str) -> dict:
    path = os.path.join(run_dir, SUMMARY_NAME)
    try:
        with open(path, encoding="ascii") as fh:
            summary = json.load(fh)
    except (OSError, ValueError) as exc:
        raise _CliError("IO", _EXIT_IO, f"cannot read {path}: {exc}") from exc
    if summary.get("format") != "curriseg-summary-v1" or not summary.get("final"):
        raise _CliError("IO", _EXIT_IO, f"{path} is not a finished run summary")
    return summary


def cmd_report(args) -> int:
    summaries = [_load_run(d) for d in args.run_dirs]
    base_cfg = None
    runs = []
    for summary in summaries:
        cfg = dict(summary["config"])
        mode, seed = cfg.pop("mode"), cfg.pop("seed")
        if base_cfg is None:
            base_cfg = cfg
        elif cfg != base_cfg:
            raise AggregationError(
                "run configs differ beyond mode/seed; refusing to aggregate")
        runs.append({"mode": mode, "seed": seed,
                     **{k: summary["final"][k] for k in _METRIC_KEYS}})
    runs.sort(key=lambda row: (row["mode"], row["seed"]))
    seen = set()
    for row in runs:
        key = (row["mode"], row["seed"])
        if key in seen:
            raise AggregationError(f"duplicate run for mode={key[0]} "
                                   f"seed={key[1]}")
        seen.add(key)
    modes = {}
    for mode in sorted({row["mode"] for row in runs}):
        rows = [row for row in runs if row["mode"] == mode]
        stats = {}
        for key in _METRIC_KEYS:
            vals = np.array([row[key] for row in rows], dtype=np.float64)
            stats[key] = {"mean": float(vals.mean()),
                          "std": float(vals.std(ddof=0))}
        modes[mode] = {"n": len(rows), **stats}
    by_pair = {(row["mode"], row["seed"]): row for row in runs}
    deltas = []
    for mode, seed in sorted(by_pair):
        if mode != "curriseg" or ("baseline", seed) not in by_pair:
            continue
        cur, base = by_pair[("curriseg", seed)], by_pair[("baseline", seed)]
        deltas.append({"seed": seed,
                       **{k: cur[k] - base[k] for k in _METRIC_KEYS}})
    report = {"format": "curriseg-report-v1", "runs": runs, "modes": modes,
              "paired_deltas": deltas}
    if args.out:
        _write_json(args.out, report)
    if args.csv:
        _write_csv(args.csv, ("mode", "seed") + _METRIC_KEYS,
                   [(row["mode"], row["seed"]) +
                    tuple(repr(row[k]) for k in _METRIC_KEYS) for row in runs])
    json.dump(report, sys.stdout, sort_keys=True, indent=1)
    sys.stdout.write("\n")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="curriseg",
        description="Curriculum plus anti-curriculum training for desk-scale "
                    "camouflage segmentation.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic dataset directory")
    gen.add_argument("--n", type=int, required=True, help="training samples")
    gen.add_argument("--n-test", type=int, default=None,
                     help="test samples (default n//4)")
    gen.add_argument("--size", type=int, default=48)
    gen.add_argument("--alpha", type=float, default=0.8,
                     help="camouflage level in [0,1]; 1 = no intensity gap")
    gen.add_argument("--outlier-frac", type=float, default=0.0)
    gen.add_argument("--ambiguous-frac", type=float, default=0.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_generate)

    tr = sub.add_parser("train", help="run one training experiment")
    tr.add_argument("--data", required=True, help="dataset directory")
    tr.add_argument("--out", required=True, help="run directory")
    tr.add_argument("--mode", choices=trainer.MODES, default="curriseg")
    tr.add_argument("--schedule", choices=SCHEDULE_KINDS, default="linear")
    tr.add_argument("--sigma-variant", choices=weighting.SIGMA_VARIANTS,
                    default="gaussian")
    tr.add_argument("--beta-variant", choices=weighting.BETA_VARIANTS,
                    default="linear")
    tr.add_argument("--filter", choices=spectral.FILTER_KINDS,
                    default="circular")
    tr.add_argument("--sbft-subset", choices=trainer.SBFT_SUBSETS,
                    default="all")
    tr.add_argument("--drop", default="",
                    help="comma-separated weight factors to ablate: mu,sigma,out")
    tr.add_argument("--K", type=int, default=10)
    tr.add_argument("--p-min", type=float, default=0.6)
    tr.add_argument("--sigma-star", type=float, default=0.5)
    tr.add_argument("--gamma", type=float, default=0.2)
    tr.add_argument("--w-min-s", type=float, default=0.1)
    tr.add_argument("--w-min", type=float, default=0.1)
    tr.add_argument("--r", type=float, default=0.95)
    tr.add_argument("--t-c", type=int, default=60)
    tr.add_argument("--t", type=int, default=70)
    tr.add_argument("--warmup", type=int, default=10)
    tr.add_argument("--lr", type=float, default=1e-3)
    tr.add_argument("--batch-size", type=int, default=0,
                    help="0 trains full batch")
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--diagnostics", action="store_true",
                    help="also dump difficulties.csv and weights.csv")
    tr.set_defaults(func=cmd_train)

    fl = sub.add_parser("filter", help="low-pass filter one PGM image")
    fl.add_argument("--in", dest="infile", required=True)
    fl.add_argument("--out", required=True)
    fl.add_argument("--r", type=float, default=0.95)
    fl.add_argument("--filter", choices=spectral.FILTER_KINDS,
                    default="circular")
    fl.add_argument("--fraction", type=float, default=1.0,
                    help="progressive filter position in [0,1]")
    fl.add_argument("--dump-mask", default=None,
                    help="also write the passband mask as a PGM")
    fl.set_defaults(func=cmd_filter)

    rp = sub.add_parser("report", help="aggregate finished run directories")
    rp.add_argument("run_dirs", nargs="+")
    rp.add_argument("--out", default=None, help="write the report JSON here")
    rp.add_argument("--csv", default=None, help="write per-run rows here")
    rp.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CliError as exc:
        return _fail(exc.code, exc.exit_code, str(exc))
    except ConfigError as exc:
        return _fail("CONFIG", _EXIT_CONFIG, str(exc))
    except AggregationError as exc:
        return _fail("AGGREGATE", _EXIT_AGGREGATE, str(exc))
    except ValueError as exc:
        return _fail("CONFIG", _EXIT_CONFIG, str(exc))
    except OSError as exc:
        return _fail("IO", _EXIT_IO, str(exc))
    except Exception as exc:  # pragma: no cover - last-resort guard
        return _fail("UNEXPECTED", _EXIT_UNEXPECTED,
                     f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
