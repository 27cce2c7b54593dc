"""Command-line interface.

Subcommands: generate-data, train, reconstruct, compare, tune-step.  Flags
override the corresponding config-file fields.  Exit codes: 0 success,
2 configuration/parameter errors, 3 data or I/O errors, 4 training
failures, 1 anything unexpected.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import (
    InvalidConfigurationError,
    InvalidParameterError,
    MalformedDatasetError,
    McreconError,
    TrainingFailureError,
)


def _add_reconstruct_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--mode", choices=["zf", "marginal", "joint", "conditional", "synthesis"])
    p.add_argument("--dataset")
    p.add_argument("--checkpoint")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--limit", type=int)
    p.add_argument("--R", dest="mask_R", type=float)
    p.add_argument("--acs-lines", dest="mask_acs_lines", type=int)
    p.add_argument("--orientation", dest="mask_orientation", choices=["vertical", "horizontal"])


def _collect_overrides(args: argparse.Namespace) -> dict:
    keys = [
        "mode",
        "dataset",
        "checkpoint",
        "output_dir",
        "seed",
        "samples",
        "limit",
        "mask_R",
        "mask_acs_lines",
        "mask_orientation",
    ]
    return {k: getattr(args, k, None) for k in keys}


def _load_config(args: argparse.Namespace):
    from .harness import config_from_dict, config_from_yaml

    overrides = _collect_overrides(args)
    if args.config:
        return config_from_yaml(args.config, **overrides)
    required = {k: v for k, v in overrides.items() if v is not None}
    return config_from_dict(required)


def cmd_generate_data(args: argparse.Namespace) -> int:
    from .phantoms import PhantomSpec, generate_dataset, save_dataset

    spec = PhantomSpec(
        grid=(args.size, args.size), contrast_ratio=args.contrast_ratio
    )
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    train = generate_dataset(args.seed, spec, args.train_count)
    test = generate_dataset(args.seed + 1, spec, args.test_count)
    save_dataset(train, out / "train.mcpr")
    save_dataset(test, out / "test.mcpr")
    print(f"wrote {len(train)} training and {len(test)} test pairs to {out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    from .harness import TrainSpec, train_command

    spec = TrainSpec(
        dataset=args.dataset,
        output_dir=args.output_dir,
        seed=args.seed,
        steps=args.steps,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        beta_max=args.beta_max,
        beta_min=args.beta_min,
        levels=args.levels,
        steps_per_level=args.steps_per_level,
    )
    written = train_command(spec)
    for name, path in written.items():
        print(f"{name} checkpoint: {path}")
    return 0


def cmd_reconstruct(args: argparse.Namespace) -> int:
    from .harness import run_experiment

    config = _load_config(args)
    rows = run_experiment(config)
    mean_nrmse = sum(r.nrmse for r in rows) / len(rows)
    mean_ssim = sum(r.ssim for r in rows) / len(rows)
    print(
        f"mode={config.mode} slices={len(rows)} "
        f"mean_nrmse={mean_nrmse:.4f} mean_ssim={mean_ssim:.4f}"
    )
    print(f"results: {Path(config.output_dir) / 'results.csv'}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    from .harness import config_from_yaml, run_comparison_suite

    configs = [config_from_yaml(path) for path in args.configs]
    summary = run_comparison_suite(configs, args.output_dir)
    for entry in summary.table:
        print(
            f"{entry['mode']:<12} R={entry['R']:<6} {entry['orientation']:<10} "
            f"nrmse={entry['mean_nrmse']:.4f} ssim={entry['mean_ssim']:.4f}"
        )
    for chk in summary.orderings:
        status = "ok" if chk.ordered else "VIOLATED"
        print(
            f"ordering {chk.better_mode} < {chk.worse_mode} at R={chk.R}: "
            f"gap={chk.mean_gap:+.4f} (z={chk.zscore:.2f}) {status}"
        )
    return 0


def cmd_tune_step(args: argparse.Namespace) -> int:
    from .harness import tune_step

    config = _load_config(args)
    best, report = tune_step(config, args.candidates, args.output_dir or "tune_out")
    for entry in report:
        print(f"step_scale={entry['step_scale']:g} mean_nrmse={entry['mean_nrmse']:.4f}")
    print(f"chosen step_scale: {best:g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcrecon",
        description="Score-guided reconstruction of paired-contrast images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="synthesize a phantom dataset")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--train-count", type=int, default=200)
    p.add_argument("--test-count", type=int, default=20)
    p.add_argument("--contrast-ratio", type=float, default=0.7)
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("train", help="train marginal and joint score models")
    p.add_argument("--dataset", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--learning-rate", type=float, default=5e-2)
    p.add_argument("--beta-max", type=float, default=1.0)
    p.add_argument("--beta-min", type=float, default=0.01)
    p.add_argument("--levels", type=int, default=12)
    p.add_argument("--steps-per-level", type=int, default=12)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("reconstruct", help="run one reconstruction experiment")
    _add_reconstruct_args(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("compare", help="run several arms and aggregate")
    p.add_argument("configs", nargs="+", help="YAML configs, one per arm")
    p.add_argument("--output-dir", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("tune-step", help="grid-search the Langevin step scale")
    _add_reconstruct_args(p)
    p.add_argument(
        "--candidates",
        type=float,
        nargs="+",
        default=[5e-6, 1e-5, 2e-5, 5e-5, 1e-4],
    )
    p.set_defaults(func=cmd_tune_step)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidConfigurationError, InvalidParameterError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (MalformedDatasetError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except TrainingFailureError as exc:
        print(f"training failure: {exc}", file=sys.stderr)
        return 4
    except McreconError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
