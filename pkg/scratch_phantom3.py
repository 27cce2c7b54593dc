"""Round 3: textured phantoms, longer joint training, K=10, per-mode eps."""
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
spec = PhantomSpec(ellipses=(5, 11))
pairs = generate_dataset(1000, spec, 150)
test = generate_dataset(2000, spec, 8)

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
joint = train(np.stack([complex_to_channels(p.x1, p.x2) for p in pairs]), 6000, 101)

sched = make_schedule(1.0, 0.01, 12, 10)
R, ACS, K = 4.0, 12, 10
for eps_m, eps_j, eps_c in [(2e-5, 1.5e-5, 2e-5), (2e-5, 2e-5, 2e-5)]:
    err = {"zf": [], "marginal": [], "joint": [], "conditional": [], "joint_x1": []}
    t0 = time.time()
    for i, pair in enumerate(test):
        sigma = 0.01 * float(np.max(np.abs(pair.x1)))
        mask1 = make_mask(derive_rng(7, i, 1), 64, R, ACS)
        mask2 = make_mask(derive_rng(7, i, 2), 64, R, ACS)
        meas1, meas2 = MeasurementModel(mask1, sigma), MeasurementModel(mask2, sigma)
        y1 = apply_forward(meas1, pair.x1, derive_rng(7, i, 3))
        y2 = apply_forward(meas2, pair.x2, derive_rng(7, i, 4))
        full = MeasurementModel(make_mask(derive_rng(7, i, 5), 64, 1.0, 0), sigma)
        side = SideInfo(x1_star=zero_filled(full, apply_forward(full, pair.x1, derive_rng(7, i, 6))))
        err["zf"].append(nrmse(pair.x2, zero_filled(meas2, y2)))
        cm = SamplerConfig(schedule=sched, step_scale=eps_m, gamma_rule="beta", sigma=sigma)
        cj = SamplerConfig(schedule=sched, step_scale=eps_j, gamma_rule="beta", sigma=sigma)
        cc = SamplerConfig(schedule=sched, step_scale=eps_c, gamma_rule="beta", sigma=sigma)
        out = average_samples(marginal_batch(derive_rng(7, i, 10), marg, meas2, y2, cm, K))
        err["marginal"].append(nrmse(pair.x2, out))
        outs = joint_batch(derive_rng(7, i, 11), joint, meas1, meas2, y1, y2, cj, K)
        err["joint"].append(nrmse(pair.x2, average_samples([p[1] for p in outs])))
        err["joint_x1"].append(nrmse(pair.x1, average_samples([p[0] for p in outs])))
        out = average_samples(conditional_batch(derive_rng(7, i, 12), joint, side, meas2, y2, cc, K))
        err["conditional"].append(nrmse(pair.x2, out))
    line = "  ".join(f"{m}={np.mean(v):.4f}" for m, v in err.items())
    print(f"eps=({eps_m},{eps_j},{eps_c}) [{time.time()-t0:.0f}s]: {line}", flush=True)
    for worse, better in [("marginal", "joint"), ("joint", "conditional")]:
        d = np.array(err[worse]) - np.array(err[better])
        z = d.mean() / (d.std(ddof=1) / np.sqrt(len(d))) if d.std() > 0 else float("inf")
        print(f"  {better} < {worse}: gap={d.mean():+.4f} z={z:.2f}", flush=True)
print(f"total {time.time()-t_all:.0f}s")
