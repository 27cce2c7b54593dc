"""Deeper phantom diagnosis: longer training, traces, prior-sample stats."""
import sys, time
import numpy as np

from mcrecon.forward_model import MeasurementModel, apply_forward, make_mask, zero_filled
from mcrecon.metrics import nrmse
from mcrecon.numerics import complex_to_channels, derive_rng, fft2
from mcrecon.phantoms import PhantomSpec, generate_dataset
from mcrecon.priors import make_schedule
from mcrecon.sampler import (
    SamplerConfig, SideInfo, average_samples,
    conditional_batch, joint_batch, marginal_batch, prior_batch,
)
from mcrecon.scorenet import TrainingConfig, dsm_train

t_all = time.time()
spec = PhantomSpec()
pairs = generate_dataset(1000, spec, 120)
test = generate_dataset(2000, spec, 6)

sched_train = make_schedule(1.0, 0.01, 12, 1)
tcfg = TrainingConfig(steps=3000, batch_size=8, learning_rate=5e-2,
                      base_width=16, log_every=500, ema_decay=0.999)
t0 = time.time()
marg = dsm_train(derive_rng(1, 100), np.stack([complex_to_channels(p.x2) for p in pairs]), sched_train, tcfg)
print(f"marginal {time.time()-t0:.0f}s init={marg.initial_holdout_loss:.3f} final={marg.final_holdout_loss:.3f}")
print("curve:", [(s, round(v, 3)) for s, t, v in marg.training_history])
t0 = time.time()
joint = dsm_train(derive_rng(1, 101), np.stack([complex_to_channels(p.x1, p.x2) for p in pairs]), sched_train, tcfg)
print(f"joint {time.time()-t0:.0f}s init={joint.initial_holdout_loss:.3f} final={joint.final_holdout_loss:.3f}")

# prior sample statistics vs data statistics
sched = make_schedule(1.0, 0.01, 12, 10)
scfg_prior = SamplerConfig(schedule=sched, step_scale=None, gamma_rule="beta", sigma=0.012)
samp = prior_batch(derive_rng(9, 1), marg, scfg_prior, (64, 64), 4)
mags = np.abs(samp[:, 0] + 1j * samp[:, 1])
data_mags = np.abs(np.stack([p.x2 for p in pairs[:20]]))
print(f"prior-sample |x|: mean={mags.mean():.3f} p99={np.percentile(mags, 99):.3f}; "
      f"data |x2|: mean={data_mags.mean():.3f} p99={np.percentile(data_mags, 99):.3f}")

R, ACS, K = 4.0, 12, 5
for eps in (1e-5, 2e-5, 5e-5):
    err = {"zf": [], "marginal": [], "joint": [], "conditional": []}
    for i, pair in enumerate(test):
        sigma = 0.01 * float(np.max(np.abs(pair.x1)))
        scfg = SamplerConfig(schedule=sched, step_scale=eps, gamma_rule="beta", sigma=sigma)
        mask1 = make_mask(derive_rng(7, i, 1), 64, R, ACS)
        mask2 = make_mask(derive_rng(7, i, 2), 64, R, ACS)
        meas1, meas2 = MeasurementModel(mask1, sigma), MeasurementModel(mask2, sigma)
        y1 = apply_forward(meas1, pair.x1, derive_rng(7, i, 3))
        y2 = apply_forward(meas2, pair.x2, derive_rng(7, i, 4))
        full = MeasurementModel(make_mask(derive_rng(7, i, 5), 64, 1.0, 0), sigma)
        side = SideInfo(x1_star=zero_filled(full, apply_forward(full, pair.x1, derive_rng(7, i, 6))))
        err["zf"].append(nrmse(pair.x2, zero_filled(meas2, y2)))
        trace = []
        out = average_samples(marginal_batch(derive_rng(7, i, 10), marg, meas2, y2, scfg, K, trace=trace))
        err["marginal"].append(nrmse(pair.x2, out))
        if i == 0:
            rows = [f"{r['level']}:{r['dc_residual']:.2f}/{r['score_norm']:.0f}" for r in trace]
            print(f"eps={eps} marginal trace (lvl:resid/score):", " ".join(rows))
            print(f"  y2 norm={np.linalg.norm(y2):.2f}")
        outs = joint_batch(derive_rng(7, i, 11), joint, meas1, meas2, y1, y2, scfg, K)
        err["joint"].append(nrmse(pair.x2, average_samples([p[1] for p in outs])))
        out = average_samples(conditional_batch(derive_rng(7, i, 12), joint, side, meas2, y2, scfg, K))
        err["conditional"].append(nrmse(pair.x2, out))
    print(f"eps={eps}: " + "  ".join(f"{m}={np.mean(v):.4f}" for m, v in err.items()), flush=True)
print(f"total {time.time()-t_all:.0f}s")
