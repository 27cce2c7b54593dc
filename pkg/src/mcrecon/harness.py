"""Experiment harness: configuration, reconstruction runs, and reports.

Reproduces the three experiment families at desk scale: reconstruction
across acceleration levels, reconstruction under a mask-orientation shift,
and side-information-guided reconstruction.  Every run is a pure function
of its configuration and seed; per-slice work items draw from derived
random streams keyed by (seed, slice, role) so results never depend on
execution order.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .errors import InvalidConfigurationError, McreconError
from .forward_model import (
    MeasurementModel,
    apply_forward,
    empty_mask,
    make_mask,
    mask_to_json,
    zero_filled,
)
from .metrics import nrmse, ssim
from .numerics import derive_rng, save_image
from .phantoms import ContrastPair, load_dataset
from .priors import ScoreModel, load_model, make_schedule
from .sampler import (
    SamplerConfig,
    SideInfo,
    average_samples,
    conditional_batch,
    joint_batch,
    marginal_batch,
)

MODES = ("zf", "marginal", "joint", "conditional", "synthesis")
MODE_CHANNELS = {"marginal": 2, "joint": 4, "conditional": 4, "synthesis": 4}
CSV_COLUMNS = ["slice_id", "mode", "R", "orientation", "nrmse", "ssim", "seconds", "seed"]

# Stream roles for derived RNGs; fixed numbers keep runs reproducible even
# if new roles are added later.
_ROLE_MASK1, _ROLE_MASK2, _ROLE_NOISE1, _ROLE_NOISE2, _ROLE_SAMPLER = 1, 2, 3, 4, 5


@dataclass(frozen=True)
class MaskSpec:
    R: float = 4.0
    acs_lines: int = 12
    orientation: str = "vertical"


@dataclass(frozen=True)
class SamplerSpec:
    beta_max: float = 1.0
    beta_min: float = 0.01
    levels: int = 12
    steps_per_level: int = 12
    step_scale: float | None = None
    gamma_rule: str = "beta"
    noise_scale: str = "textbook"

    def build(self, sigma: float, samples: int) -> SamplerConfig:
        return SamplerConfig(
            schedule=make_schedule(self.beta_max, self.beta_min, self.levels, self.steps_per_level),
            step_scale=self.step_scale,
            gamma_rule=self.gamma_rule,
            sigma=sigma,
            samples_to_average=samples,
            noise_scale=self.noise_scale,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    """One reconstruction arm: mode, data, masks, sampler, outputs."""

    mode: str
    dataset: str
    output_dir: str
    checkpoint: str | None = None
    seed: int = 0
    samples: int = 10
    limit: int | None = None
    sigma_rel: float = 0.01
    save_images: bool = True
    pgm_window: float = 1.3
    mask: MaskSpec = field(default_factory=MaskSpec)
    sampler: SamplerSpec = field(default_factory=SamplerSpec)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise InvalidConfigurationError(f"unknown mode {self.mode!r}; pick from {MODES}")
        if not Path(self.dataset).is_file():
            raise InvalidConfigurationError(f"dataset not found: {self.dataset}")
        if self.mode != "zf":
            if self.checkpoint is None:
                raise InvalidConfigurationError(f"mode={self.mode} requires a checkpoint")
            if not Path(self.checkpoint).is_file():
                raise InvalidConfigurationError(f"checkpoint not found: {self.checkpoint}")
        if self.samples < 1:
            raise InvalidConfigurationError("samples must be >= 1")
        if self.limit is not None and self.limit < 1:
            raise InvalidConfigurationError("limit must be >= 1 when given")
        if self.sigma_rel < 0:
            raise InvalidConfigurationError("sigma_rel must be nonnegative")
        if self.mask.orientation not in ("vertical", "horizontal"):
            raise InvalidConfigurationError(f"bad orientation {self.mask.orientation!r}")
        if self.mask.R < 1:
            raise InvalidConfigurationError("mask R must be >= 1")
        try:
            self.sampler.build(sigma=max(self.sigma_rel, 1e-6), samples=self.samples)
        except McreconError as exc:
            raise InvalidConfigurationError(f"bad sampler settings: {exc}") from exc


def config_from_dict(obj: dict, **overrides) -> ExperimentConfig:
    """Build a config from nested mapping (YAML layout) plus flat overrides."""
    data = dict(obj or {})
    mask = MaskSpec(**data.pop("mask", {}))
    samp = SamplerSpec(**data.pop("sampler", {}))
    noise = data.pop("noise", {})
    if "sigma_rel" in noise:
        data["sigma_rel"] = noise["sigma_rel"]
    data.update({k: v for k, v in overrides.items() if v is not None})
    mask_over = {k[5:]: v for k, v in data.items() if k.startswith("mask_")}
    if mask_over:
        for k in list(data):
            if k.startswith("mask_"):
                data.pop(k)
        mask = replace(mask, **mask_over)
    try:
        return ExperimentConfig(mask=mask, sampler=samp, **data)
    except TypeError as exc:
        raise InvalidConfigurationError(f"bad configuration field: {exc}") from exc


def config_from_yaml(path, **overrides) -> ExperimentConfig:
    try:
        with open(path) as fh:
            obj = yaml.safe_load(fh)
    except OSError as exc:
        raise InvalidConfigurationError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise InvalidConfigurationError(f"cannot parse config {path}: {exc}") from exc
    return config_from_dict(obj, **overrides)


@dataclass(frozen=True)
class ResultRow:
    slice_id: int
    mode: str
    R: float
    orientation: str
    nrmse: float
    ssim: float
    seconds: float
    seed: int

    def as_csv(self) -> list[str]:
        return [
            str(self.slice_id),
            self.mode,
            repr(float(self.R)),
            self.orientation,
            repr(float(self.nrmse)),
            repr(float(self.ssim)),
            f"{self.seconds:.3f}",
            str(self.seed),
        ]


def write_rows_csv(rows: list[ResultRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(row.as_csv())


def save_pgm(img_mag: np.ndarray, path, window: float) -> None:
    """8-bit portable greymap of a magnitude image with a fixed window."""
    scaled = np.clip(np.asarray(img_mag, dtype=np.float64) / window, 0.0, 1.0)
    data = (scaled * 255.0 + 0.5).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(data.tobytes())


def _mask_width(pair_shape: tuple[int, int], orientation: str) -> int:
    return pair_shape[1] if orientation == "vertical" else pair_shape[0]


def _reconstruct_slice(
    config: ExperimentConfig,
    model: ScoreModel | None,
    slice_id: int,
    pair: ContrastPair,
) -> tuple[np.ndarray, np.ndarray | None, dict[str, str]]:
    """Run one slice; returns (x2 reconstruction, optional x1 recon, mask JSONs)."""
    gt1, gt2 = pair.x1, pair.x2
    shape = gt2.shape
    sigma = config.sigma_rel * float(np.max(np.abs(gt1)))
    width = _mask_width(shape, config.mask.orientation)
    seed = config.seed
    masks_json: dict[str, str] = {}

    def undersampled_mask(role: int):
        return make_mask(
            derive_rng(seed, slice_id, role),
            width,
            config.mask.R,
            config.mask.acs_lines,
            config.mask.orientation,
        )

    mask2 = (
        empty_mask(width, config.mask.orientation)
        if config.mode == "synthesis"
        else undersampled_mask(_ROLE_MASK2)
    )
    meas2 = MeasurementModel(mask=mask2, noise_std=sigma)
    y2 = apply_forward(meas2, gt2, derive_rng(seed, slice_id, _ROLE_NOISE2))
    masks_json["mask2"] = mask_to_json(mask2)

    sampler_cfg = config.sampler.build(sigma=sigma, samples=config.samples)
    rng = derive_rng(seed, slice_id, _ROLE_SAMPLER)
    rec1 = None

    if config.mode == "zf":
        rec2 = zero_filled(meas2, y2)
    elif config.mode == "marginal":
        samples = marginal_batch(rng, model, meas2, y2, sampler_cfg, config.samples)
        rec2 = average_samples(samples)
    elif config.mode == "joint":
        mask1 = undersampled_mask(_ROLE_MASK1)
        masks_json["mask1"] = mask_to_json(mask1)
        meas1 = MeasurementModel(mask=mask1, noise_std=sigma)
        y1 = apply_forward(meas1, gt1, derive_rng(seed, slice_id, _ROLE_NOISE1))
        pairs = joint_batch(rng, model, meas1, meas2, y1, y2, sampler_cfg, config.samples)
        rec1 = average_samples([p[0] for p in pairs])
        rec2 = average_samples([p[1] for p in pairs])
    else:  # conditional or synthesis: fully sampled reference scan
        full_mask = make_mask(
            derive_rng(seed, slice_id, _ROLE_MASK1), width, 1.0, 0, config.mask.orientation
        )
        masks_json["mask1"] = mask_to_json(full_mask)
        meas1 = MeasurementModel(mask=full_mask, noise_std=sigma)
        y1 = apply_forward(meas1, gt1, derive_rng(seed, slice_id, _ROLE_NOISE1))
        side = SideInfo(x1_star=zero_filled(meas1, y1))
        samples = conditional_batch(rng, model, side, meas2, y2, sampler_cfg, config.samples)
        rec2 = average_samples(samples)

    return rec2, rec1, masks_json


def run_experiment(config: ExperimentConfig) -> list[ResultRow]:
    """Reconstruct every test slice under one configuration.

    Writes per-slice reconstructions (binary + greymap), difference images
    scaled by 10, pinned mask JSONs, and a results CSV into
    ``config.output_dir``.
    """
    config.validate()
    pairs = load_dataset(config.dataset)
    if config.limit is not None:
        pairs = pairs[: config.limit]
    model = None
    if config.mode != "zf":
        model = load_model(config.checkpoint, expect_channels=MODE_CHANNELS[config.mode])
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    rows: list[ResultRow] = []
    for slice_id, pair in enumerate(pairs):
        start = time.perf_counter()
        rec2, rec1, masks_json = _reconstruct_slice(config, model, slice_id, pair)
        seconds = time.perf_counter() - start
        rows.append(
            ResultRow(
                slice_id=slice_id,
                mode=config.mode,
                R=math.inf if config.mode == "synthesis" else config.mask.R,
                orientation=config.mask.orientation,
                nrmse=nrmse(pair.x2, rec2),
                ssim=ssim(pair.x2, rec2),
                seconds=seconds,
                seed=config.seed,
            )
        )
        if config.save_images:
            tag = f"slice_{slice_id:03d}"
            save_image(rec2, out / f"{tag}_rec.cimg")
            save_pgm(np.abs(rec2), out / f"{tag}_rec.pgm", config.pgm_window)
            save_pgm(
                10.0 * np.abs(rec2 - pair.x2), out / f"{tag}_diff_x10.pgm", config.pgm_window
            )
            if rec1 is not None:
                save_image(rec1, out / f"{tag}_rec1.cimg")
            for name, text in masks_json.items():
                (out / f"{tag}_{name}.json").write_text(text)
    write_rows_csv(rows, out / "results.csv")
    return rows


@dataclass(frozen=True)
class OrderingCheck:
    """Paired comparison that a better-informed mode achieves lower NRMSE."""

    R: float
    orientation: str
    worse_mode: str
    better_mode: str
    mean_gap: float
    se_gap: float

    @property
    def zscore(self) -> float:
        return self.mean_gap / self.se_gap if self.se_gap > 0 else math.inf

    @property
    def ordered(self) -> bool:
        return self.mean_gap > 0


@dataclass
class ComparisonSummary:
    rows: list[ResultRow]
    table: list[dict]
    orderings: list[OrderingCheck]


_ORDER_CHAIN = [("marginal", "joint"), ("joint", "conditional")]


def run_comparison_suite(configs: list[ExperimentConfig], output_dir) -> ComparisonSummary:
    """Run several arms on one test set and aggregate mode-level means.

    All configs must share the dataset (and thereby the test split).  Emits
    ``summary.csv`` with per-(mode, R, orientation) means and
    ``ordering.csv`` with the paired information-ordering checks.
    """
    if not configs:
        raise InvalidConfigurationError("comparison suite needs at least one config")
    datasets = {c.dataset for c in configs}
    limits = {c.limit for c in configs}
    if len(datasets) > 1 or len(limits) > 1:
        raise InvalidConfigurationError(
            f"configs must share one test split, got datasets={datasets}, limits={limits}"
        )
    for c in configs:
        c.validate()

    all_rows: list[ResultRow] = []
    for c in configs:
        all_rows.extend(run_experiment(c))

    groups: dict[tuple[str, float, str], list[ResultRow]] = {}
    for row in all_rows:
        groups.setdefault((row.mode, row.R, row.orientation), []).append(row)

    table = []
    for (mode, r, orientation), rows in sorted(groups.items(), key=lambda kv: (kv[0][2], kv[0][1], kv[0][0])):
        table.append(
            {
                "mode": mode,
                "R": r,
                "orientation": orientation,
                "mean_nrmse": float(np.mean([x.nrmse for x in rows])),
                "mean_ssim": float(np.mean([x.ssim for x in rows])),
                "slices": len(rows),
            }
        )

    orderings: list[OrderingCheck] = []
    keys = {(r, o) for (_, r, o) in groups}
    for r, orientation in sorted(keys):
        for worse, better in _ORDER_CHAIN:
            a = groups.get((worse, r, orientation))
            b = groups.get((better, r, orientation))
            if not a or not b or len(a) != len(b):
                continue
            diffs = np.array(
                [
                    ra.nrmse - rb.nrmse
                    for ra, rb in zip(sorted(a, key=lambda x: x.slice_id), sorted(b, key=lambda x: x.slice_id))
                ]
            )
            se = float(np.std(diffs, ddof=1) / np.sqrt(len(diffs))) if len(diffs) > 1 else 0.0
            orderings.append(
                OrderingCheck(
                    R=r,
                    orientation=orientation,
                    worse_mode=worse,
                    better_mode=better,
                    mean_gap=float(np.mean(diffs)),
                    se_gap=se,
                )
            )

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode", "R", "orientation", "mean_nrmse", "mean_ssim", "slices"])
        for entry in table:
            writer.writerow(
                [
                    entry["mode"],
                    repr(float(entry["R"])),
                    entry["orientation"],
                    repr(entry["mean_nrmse"]),
                    repr(entry["mean_ssim"]),
                    str(entry["slices"]),
                ]
            )
    with open(out / "ordering.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["R", "orientation", "worse_mode", "better_mode", "mean_gap", "se_gap", "zscore", "ordered"])
        for chk in orderings:
            writer.writerow(
                [
                    repr(float(chk.R)),
                    chk.orientation,
                    chk.worse_mode,
                    chk.better_mode,
                    repr(chk.mean_gap),
                    repr(chk.se_gap),
                    repr(chk.zscore),
                    str(chk.ordered),
                ]
            )
    return ComparisonSummary(rows=all_rows, table=table, orderings=orderings)


@dataclass(frozen=True)
class TrainSpec:
    """Configuration of the train subcommand (both score models).

    ``joint_steps`` lets the richer 4-channel model train longer than the
    marginal one; it defaults to ``steps``.
    """

    dataset: str
    output_dir: str
    seed: int = 0
    steps: int = 2000
    joint_steps: int | None = None
    batch_size: int = 8
    learning_rate: float = 5e-2
    momentum: float = 0.9
    ema_decay: float = 0.995
    base_width: int = 16
    beta_max: float = 1.0
    beta_min: float = 0.01
    levels: int = 12
    steps_per_level: int = 10


def train_command(spec: TrainSpec) -> dict[str, Path]:
    """Train marginal (2ch) and joint (4ch) checkpoints on a phantom dataset."""
    from .numerics import complex_to_channels
    from .priors import save_model
    from .scorenet import TrainingConfig, dsm_train

    if not Path(spec.dataset).is_file():
        raise InvalidConfigurationError(f"dataset not found: {spec.dataset}")
    pairs = load_dataset(spec.dataset)
    schedule = make_schedule(spec.beta_max, spec.beta_min, spec.levels, spec.steps_per_level)
    out = Path(spec.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}
    for role, (name, steps, stacks) in enumerate(
        (
            ("marginal", spec.steps, np.stack([complex_to_channels(p.x2) for p in pairs])),
            (
                "joint",
                spec.steps if spec.joint_steps is None else spec.joint_steps,
                np.stack([complex_to_channels(p.x1, p.x2) for p in pairs]),
            ),
        )
    ):
        tcfg = TrainingConfig(
            steps=steps,
            batch_size=spec.batch_size,
            learning_rate=spec.learning_rate,
            momentum=spec.momentum,
            ema_decay=spec.ema_decay,
            base_width=spec.base_width,
        )
        model = dsm_train(derive_rng(spec.seed, 100 + role), stacks, schedule, tcfg)
        ckpt = out / f"{name}.ckpt"
        save_model(model, ckpt)
        curve = out / f"training_curve_{name}.csv"
        with open(curve, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "train_loss", "holdout_loss"])
            for step, train_loss, val_loss in model.training_history:
                writer.writerow([step, repr(float(train_loss)), repr(float(val_loss))])
        written[name] = ckpt
    return written


def tune_step(
    base: ExperimentConfig, candidates: list[float], output_dir
) -> tuple[float, list[dict]]:
    """Grid-search the Langevin step scale on a validation split.

    Runs the base experiment once per candidate step_scale and reports the
    one with the lowest mean NRMSE; the per-candidate means are written to
    ``tune_report.csv``.
    """
    if not candidates:
        raise InvalidConfigurationError("tune_step needs at least one candidate")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = []
    for eps in candidates:
        cfg = replace(
            base,
            sampler=replace(base.sampler, step_scale=float(eps)),
            output_dir=str(out / f"eps_{eps:g}"),
            save_images=False,
        )
        rows = run_experiment(cfg)
        report.append(
            {"step_scale": float(eps), "mean_nrmse": float(np.mean([r.nrmse for r in rows]))}
        )
    best = min(report, key=lambda e: e["mean_nrmse"])["step_scale"]
    with open(out / "tune_report.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step_scale", "mean_nrmse", "chosen"])
        for entry in report:
            writer.writerow(
                [repr(entry["step_scale"]), repr(entry["mean_nrmse"]), str(entry["step_scale"] == best)]
            )
    return best, report
