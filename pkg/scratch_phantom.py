"""End-to-end phantom validation: train small models, reconstruct, check ordering."""
import sys, time
import numpy as np

from mcrecon.forward_model import MeasurementModel, apply_forward, make_mask
from mcrecon.metrics import nrmse
from mcrecon.numerics import complex_to_channels, derive_rng, make_rng
from mcrecon.phantoms import PhantomSpec, generate_dataset
from mcrecon.priors import make_schedule
from mcrecon.sampler import (
    SamplerConfig, SideInfo, average_samples,
    conditional_batch, joint_batch, marginal_batch,
)
from mcrecon.forward_model import zero_filled
from mcrecon.scorenet import TrainingConfig, dsm_train

t_all = time.time()
spec = PhantomSpec()  # 64x64 defaults
n_train, n_test = int(sys.argv[1]) if len(sys.argv) > 1 else 60, 8
train_steps = int(sys.argv[2]) if len(sys.argv) > 2 else 1200
pairs = generate_dataset(1000, spec, n_train)
test = generate_dataset(2000, spec, n_test)
print(f"datasets: {time.time()-t_all:.0f}s")

sched = make_schedule(1.0, 0.01, 10, 10)
tcfg = TrainingConfig(steps=train_steps, batch_size=8, learning_rate=5e-2,
                      base_width=16, log_every=train_steps // 6, ema_decay=0.999)
t0 = time.time()
marg = dsm_train(derive_rng(1, 100), np.stack([complex_to_channels(p.x2) for p in pairs]), sched, tcfg)
print(f"marginal trained {time.time()-t0:.0f}s  init={marg.initial_holdout_loss:.3f} final={marg.final_holdout_loss:.3f}")
t0 = time.time()
joint = dsm_train(derive_rng(1, 101), np.stack([complex_to_channels(p.x1, p.x2) for p in pairs]), sched, tcfg)
print(f"joint trained {time.time()-t0:.0f}s  init={joint.initial_holdout_loss:.3f} final={joint.final_holdout_loss:.3f}")

R, ACS, K = 4.0, 12, 5
err = {"zf": [], "marginal": [], "joint": [], "conditional": []}
t0 = time.time()
for i, pair in enumerate(test):
    sigma = 0.01 * float(np.max(np.abs(pair.x1)))
    scfg = SamplerConfig(schedule=sched, step_scale=None, gamma_rule="beta", sigma=sigma)
    mask1 = make_mask(derive_rng(7, i, 1), 64, R, ACS)
    mask2 = make_mask(derive_rng(7, i, 2), 64, R, ACS)
    meas1, meas2 = MeasurementModel(mask1, sigma), MeasurementModel(mask2, sigma)
    y1 = apply_forward(meas1, pair.x1, derive_rng(7, i, 3))
    y2 = apply_forward(meas2, pair.x2, derive_rng(7, i, 4))
    full = MeasurementModel(make_mask(derive_rng(7, i, 5), 64, 1.0, 0), sigma)
    y1full = apply_forward(full, pair.x1, derive_rng(7, i, 6))
    side = SideInfo(x1_star=zero_filled(full, y1full))

    err["zf"].append(nrmse(pair.x2, zero_filled(meas2, y2)))
    out = average_samples(marginal_batch(derive_rng(7, i, 10), marg, meas2, y2, scfg, K))
    err["marginal"].append(nrmse(pair.x2, out))
    outs = joint_batch(derive_rng(7, i, 11), joint, meas1, meas2, y1, y2, scfg, K)
    err["joint"].append(nrmse(pair.x2, average_samples([p[1] for p in outs])))
    out = average_samples(conditional_batch(derive_rng(7, i, 12), joint, side, meas2, y2, scfg, K))
    err["conditional"].append(nrmse(pair.x2, out))
    print(f"slice {i}: zf={err['zf'][-1]:.3f} m={err['marginal'][-1]:.3f} "
          f"j={err['joint'][-1]:.3f} c={err['conditional'][-1]:.3f}", flush=True)

print(f"recon {time.time()-t0:.0f}s")
for mode, vals in err.items():
    print(f"{mode:>12}: mean={np.mean(vals):.4f}")
for worse, better in [("marginal", "joint"), ("joint", "conditional")]:
    d = np.array(err[worse]) - np.array(err[better])
    z = d.mean() / (d.std(ddof=1) / np.sqrt(len(d))) if d.std() > 0 else float("inf")
    print(f"{better} < {worse}: gap={d.mean():+.4f} z={z:.2f}")
print(f"total {time.time()-t_all:.0f}s")
