"""Exploratory calibration of sampler presets against the Gaussian oracle."""
import sys
import time

import numpy as np

sys.path.insert(0, "tests")
from conftest import coupled_joint_cov, forward_matrix, gaussian_posterior, smooth_spd

from mcrecon.forward_model import MeasurementModel, apply_forward, make_mask
from mcrecon.numerics import make_rng
from mcrecon.priors import KIND_ANALYTIC, GaussianJointPrior, ScoreModel, make_schedule
from mcrecon.sampler import SamplerConfig, marginal_batch

H = W = 2          # 2x2 complex image -> 8 real dims
D = 2 * H * W
SIGMA = 0.5

rng = make_rng(99)
mean = rng.standard_normal(D) * 0.5
cov = smooth_spd(D, 2.5, nugget=0.1)
prior = GaussianJointPrior(mean, cov)

mask = make_mask(make_rng(5), W, 2.0, 0, "vertical")
meas = MeasurementModel(mask, SIGMA)
x_true_v = mean + np.linalg.cholesky(cov) @ rng.standard_normal(D)
x_true = x_true_v[:4].reshape(H, W) + 1j * x_true_v[4:].reshape(H, W)
y = apply_forward(meas, x_true, make_rng(7))

# closed-form posterior
A = forward_matrix(mask.selected, "vertical", H, W)
b = np.concatenate([y.real.ravel(), y.imag.ravel()])
mu_post, cov_post = gaussian_posterior(mean, cov, A, b, SIGMA**2 / 2)

print("prior eigs:", np.linalg.eigvalsh(cov).round(3))
print("post eigs:", np.linalg.eigvalsh(cov_post).round(3))
print("(tr C)^2/||C||_F^2:", (np.trace(cov_post) ** 2 / np.linalg.norm(cov_post, "fro") ** 2).round(2))

for levels, spl, eps, bmin in [
    (16, 20, 1e-4, 0.02),
    (24, 30, 1e-4, 0.02),
    (24, 30, 2e-4, 0.02),
    (32, 40, 2e-4, 0.02),
    (24, 30, None, 0.02),
    (24, 60, 2e-4, 0.02),
]:
    sched = make_schedule(1.0, bmin, levels, spl)
    model = ScoreModel(KIND_ANALYTIC, 2, sched, prior=prior, image_shape=(H, W))
    config = SamplerConfig(schedule=sched, step_scale=eps, gamma_rule="beta", sigma=SIGMA)
    t0 = time.time()
    samples = marginal_batch(make_rng(2024), model, meas, y, config, batch=500)
    dt = time.time() - t0
    vecs = np.array([np.concatenate([s.real.ravel(), s.imag.ravel()]) for s in samples])
    emp_mean = vecs.mean(axis=0)
    emp_cov = np.cov(vecs.T)
    se = np.sqrt(np.diag(cov_post) / len(vecs))
    zmax = np.max(np.abs(emp_mean - mu_post) / se)
    frob = np.linalg.norm(emp_cov - cov_post, "fro") / np.linalg.norm(cov_post, "fro")
    print(
        f"L={levels:3d} S={spl:3d} eps={eps} bmin={bmin}: "
        f"max|z|={zmax:5.2f} (need<3)  cov_frob={frob:6.3f} (need<0.15)  [{dt:5.2f}s]"
    )
