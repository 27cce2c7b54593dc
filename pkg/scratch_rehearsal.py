"""Full acceptance rehearsal: criteria 4, 5, 6 preview at final settings."""
import time
import numpy as np

from mcrecon.forward_model import MeasurementModel, apply_forward, make_mask, zero_filled
from mcrecon.metrics import nrmse
from mcrecon.numerics import complex_to_channels, derive_rng
from mcrecon.phantoms import PhantomSpec, generate_dataset
from mcrecon.priors import make_schedule
from mcrecon.sampler import (
    SamplerConfig, SideInfo, average_samples,
    conditional_batch, joint_batch, marginal_batch,
)
from mcrecon.scorenet import TrainingConfig, dsm_train

t_all = time.time()
spec = PhantomSpec(ellipses=(5, 11), amplitude_jitter=0.05)
pairs = generate_dataset(1000, spec, 200)
test = generate_dataset(2000, spec, 20)

sched_train = make_schedule(1.0, 0.01, 12, 1)


def train(stacks, steps, key):
    cfg = TrainingConfig(steps=steps, batch_size=8, learning_rate=5e-2,
                         base_width=16, log_every=1000, ema_decay=0.995)
    t0 = time.time()
    model = dsm_train(derive_rng(1, key), stacks, sched_train, cfg)
    print(f"trained key={key} steps={steps} [{time.time()-t0:.0f}s] "
          f"init={model.initial_holdout_loss:.3f} final={model.final_holdout_loss:.3f}", flush=True)
    return model


marg = train(np.stack([complex_to_channels(p.x2) for p in pairs]), 4000, 100)
joint = train(np.stack([complex_to_channels(p.x1, p.x2) for p in pairs]), 7000, 101)

sched = make_schedule(1.0, 0.01, 12, 10)
ACS, K, EPS = 12, 10, 2e-5


def run_mode(mode, R, orientation="vertical"):
    errs = []
    for i, pair in enumerate(test):
        sigma = 0.01 * float(np.max(np.abs(pair.x1)))
        cfg = SamplerConfig(schedule=sched, step_scale=EPS, gamma_rule="beta", sigma=sigma)
        width = 64
        mask2 = make_mask(derive_rng(7, i, 2, (0 if orientation == "vertical" else 1)), width, R, ACS, orientation)
        meas2 = MeasurementModel(mask2, sigma)
        y2 = apply_forward(meas2, pair.x2, derive_rng(7, i, 4))
        if mode == "zf":
            errs.append(nrmse(pair.x2, zero_filled(meas2, y2)))
            continue
        if mode == "marginal":
            out = average_samples(marginal_batch(derive_rng(7, i, 10), marg, meas2, y2, cfg, K))
        elif mode == "joint":
            mask1 = make_mask(derive_rng(7, i, 1, (0 if orientation == "vertical" else 1)), width, R, ACS, orientation)
            meas1 = MeasurementModel(mask1, sigma)
            y1 = apply_forward(meas1, pair.x1, derive_rng(7, i, 3))
            outs = joint_batch(derive_rng(7, i, 11), joint, meas1, meas2, y1, y2, cfg, K)
            out = average_samples([p[1] for p in outs])
        else:
            full = MeasurementModel(make_mask(derive_rng(7, i, 5), width, 1.0, 0, orientation), sigma)
            side = SideInfo(x1_star=zero_filled(full, apply_forward(full, pair.x1, derive_rng(7, i, 6))))
            out = average_samples(conditional_batch(derive_rng(7, i, 12), joint, side, meas2, y2, cfg, K))
        errs.append(nrmse(pair.x2, out))
    return np.array(errs)


results = {}
for R in (3.0, 4.0, 5.0):
    for mode in ("marginal", "joint"):
        t0 = time.time()
        results[(mode, R, "v")] = run_mode(mode, R)
        print(f"{mode} R={R}: mean={results[(mode, R, 'v')].mean():.4f} [{time.time()-t0:.0f}s]", flush=True)
results[("conditional", 4.0, "v")] = run_mode("conditional", 4.0)
print(f"conditional R=4: mean={results[('conditional', 4.0, 'v')].mean():.4f}", flush=True)
results[("zf", 4.0, "v")] = run_mode("zf", 4.0)
print(f"zf R=4: mean={results[('zf', 4.0, 'v')].mean():.4f}", flush=True)
results[("joint", 3.0, "h")] = run_mode("joint", 3.0, "horizontal")
print(f"joint R=3 horizontal: mean={results[('joint', 3.0, 'h')].mean():.4f}", flush=True)

print("\n== criterion 4 (ordering at R=4):")
for worse, better in [("marginal", "joint"), ("joint", "conditional")]:
    d = results[(worse, 4.0, "v")] - results[(better, 4.0, "v")]
    z = d.mean() / (d.std(ddof=1) / np.sqrt(len(d)))
    print(f"  {better} < {worse}: gap={d.mean():+.4f} z={z:.2f}")
print("== criterion 5 (monotone in R):")
for mode in ("marginal", "joint"):
    means = [results[(mode, R, "v")].mean() for R in (3.0, 4.0, 5.0)]
    print(f"  {mode}: {means[0]:.4f} < {means[1]:.4f} < {means[2]:.4f} -> {means[0] < means[1] < means[2]}")
print("== criterion 6 (orientation robustness):")
v, h = results[("joint", 3.0, "v")].mean(), results[("joint", 3.0, "h")].mean()
print(f"  vertical={v:.4f} horizontal={h:.4f} rel diff={(abs(h - v) / v):.3f} (need <= 0.20)")
print(f"total {time.time()-t_all:.0f}s")
