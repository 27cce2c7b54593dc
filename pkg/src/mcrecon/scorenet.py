"""Small convolutional score network trained by denoising score matching.

The network predicts the (negated) noise direction; dividing its output by
the conditioning level beta yields the score estimate.  With the standard
beta^2 weighting this makes the training loss uniformly scaled across
levels.  Conditioning is a constant beta-valued input channel.

Inputs smaller than the full three-scale receptive field skip the deeper
levels, so the same weights serve 64x64 phantoms and few-pixel oracle
grids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn.functional import silu

from .errors import InvalidInputError, TrainingFailureError
from .numerics import RngHandle
from .priors import KIND_TRAINED, NoiseSchedule, ScoreModel


class ScoreNet(nn.Module):
    """Three-scale convolutional encoder-decoder with additive skips."""

    def __init__(self, channels: int, base_width: int = 24):
        super().__init__()
        w0, w1, w2 = base_width, base_width + 8, base_width + 24
        self.channels = channels
        self.base_width = base_width
        self.head = nn.Conv2d(channels + 1, w0, 3, padding=1)
        self.enc0 = nn.Conv2d(w0, w0, 3, padding=1)
        self.down1 = nn.Conv2d(w0, w1, 3, stride=2, padding=1)
        self.enc1 = nn.Conv2d(w1, w1, 3, padding=1)
        self.down2 = nn.Conv2d(w1, w2, 3, stride=2, padding=1)
        self.enc2 = nn.Conv2d(w2, w2, 3, padding=1)
        self.mid = nn.Conv2d(w2, w2, 3, padding=1)
        self.up2 = nn.ConvTranspose2d(w2, w1, 4, stride=2, padding=1)
        self.dec1 = nn.Conv2d(w1, w1, 3, padding=1)
        self.up1 = nn.ConvTranspose2d(w1, w0, 4, stride=2, padding=1)
        self.dec0 = nn.Conv2d(w0, w0, 3, padding=1)
        self.tail = nn.Conv2d(w0, channels, 3, padding=1)

    def forward(self, x: torch.Tensor, beta: torch.Tensor) -> torch.Tensor:
        b, _, h, w = x.shape
        cond = beta.view(-1, 1, 1, 1).expand(b, 1, h, w)
        h0 = silu(self.head(torch.cat([x, cond], dim=1)))
        h0 = h0 + silu(self.enc0(h0))
        if min(h, w) >= 2:
            d1 = silu(self.down1(h0))
            d1 = d1 + silu(self.enc1(d1))
            if min(h, w) >= 4:
                d2 = silu(self.down2(d1))
                d2 = d2 + silu(self.enc2(d2))
                d2 = d2 + silu(self.mid(d2))
                d1 = d1 + silu(self.up2(d2))
                d1 = d1 + silu(self.dec1(d1))
            h0 = h0 + silu(self.up1(d1))
        h0 = h0 + silu(self.dec0(h0))
        return self.tail(h0)


def net_score(net: ScoreNet, stack: np.ndarray, beta: float) -> np.ndarray:
    """Score estimate for a (batch, channels, h, w) float64 stack."""
    x = torch.from_numpy(np.ascontiguousarray(stack, dtype=np.float32))
    b = torch.full((x.shape[0],), float(beta), dtype=torch.float32)
    with torch.no_grad():
        out = net(x, b) / float(beta)
    return out.double().numpy()


def net_flatten(net: ScoreNet) -> np.ndarray:
    """Parameters in registration order as one flat float64 vector."""
    with torch.no_grad():
        return np.concatenate(
            [p.detach().double().numpy().ravel() for p in net.parameters()]
        )


def net_unflatten(channels: int, base_width: int, params: np.ndarray) -> ScoreNet:
    """Rebuild a network from a flat parameter vector."""
    net = ScoreNet(channels, base_width)
    offset = 0
    with torch.no_grad():
        for p in net.parameters():
            n = p.numel()
            if offset + n > params.size:
                raise InvalidInputError("parameter block too short for architecture")
            p.copy_(torch.from_numpy(params[offset : offset + n].reshape(p.shape)))
            offset += n
    if offset != params.size:
        raise InvalidInputError(
            f"parameter block has {params.size} values, architecture needs {offset}"
        )
    net.eval()
    return net


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters for denoising score matching.

    ``ema_decay`` averages the SGD iterates (Polyak style); the averaged
    weights become the returned model.  Set to 0 to keep the raw final
    iterate.
    """

    steps: int = 2000
    batch_size: int = 8
    learning_rate: float = 5e-2
    momentum: float = 0.9
    grad_clip: float = 1.0
    val_fraction: float = 0.1
    base_width: int = 24
    log_every: int = 50
    ema_decay: float = 0.999


def _as_stack_array(dataset) -> np.ndarray:
    arr = np.asarray(dataset, dtype=np.float64)
    if arr.size == 0:
        raise InvalidInputError("training dataset is empty")
    if arr.ndim != 4 or arr.shape[1] not in (2, 4):
        raise InvalidInputError(
            f"dataset must be (n, channels in {{2,4}}, h, w), got {arr.shape}"
        )
    return arr


def _dsm_loss(net: ScoreNet, x: torch.Tensor, beta: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
    perturbed = x + beta.view(-1, 1, 1, 1) * z
    out = net(perturbed, beta)
    return ((out + z) ** 2).mean()


def dsm_train(
    rng: RngHandle,
    dataset,
    schedule: NoiseSchedule,
    config: TrainingConfig = TrainingConfig(),
) -> ScoreModel:
    """Fit a score network on channel stacks; deterministic under the rng seed.

    Returns a trained-network ScoreModel.  The per-step loss history is
    attached as ``model.training_history`` (list of (step, train, holdout)
    rows); row 0 records the held-out loss at initialization.
    """
    data = _as_stack_array(dataset)
    n, channels, h, w = data.shape
    n_val = max(1, int(round(config.val_fraction * n))) if n > 1 else 0
    perm = rng.permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    if train_idx.size == 0:
        train_idx = perm
    train = torch.from_numpy(data[train_idx].astype(np.float32))
    val = torch.from_numpy(data[val_idx].astype(np.float32)) if n_val else train

    torch.manual_seed(int(rng.integers(2**63)))
    net = ScoreNet(channels, config.base_width)
    opt = torch.optim.SGD(net.parameters(), lr=config.learning_rate, momentum=config.momentum)
    betas = np.asarray(schedule.beta, dtype=np.float64)
    ema = [p.detach().clone() for p in net.parameters()] if config.ema_decay > 0 else None

    # Fixed held-out perturbation so successive evaluations are comparable.
    val_levels = rng.integers(0, betas.size, size=val.shape[0])
    val_beta = torch.from_numpy(betas[val_levels].astype(np.float32))
    val_z = torch.from_numpy(
        rng.standard_normal(val.shape).astype(np.float32)
    )

    def holdout_loss() -> float:
        net.eval()
        with torch.no_grad():
            loss = _dsm_loss(net, val, val_beta, val_z).item()
        net.train()
        return loss

    history: list[tuple[int, float, float]] = []
    initial_val = holdout_loss()
    history.append((0, float("nan"), initial_val))

    for step in range(1, config.steps + 1):
        idx = rng.integers(0, train.shape[0], size=config.batch_size)
        levels = rng.integers(0, betas.size, size=config.batch_size)
        z = rng.standard_normal((config.batch_size, channels, h, w))
        xb = train[torch.from_numpy(idx)]
        bb = torch.from_numpy(betas[levels].astype(np.float32))
        zb = torch.from_numpy(z.astype(np.float32))
        opt.zero_grad()
        loss = _dsm_loss(net, xb, bb, zb)
        loss.backward()
        if config.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(net.parameters(), config.grad_clip)
        opt.step()
        if ema is not None:
            with torch.no_grad():
                for shadow, p in zip(ema, net.parameters()):
                    shadow.mul_(config.ema_decay).add_(p, alpha=1.0 - config.ema_decay)
        train_loss = loss.item()
        if not np.isfinite(train_loss):
            raise TrainingFailureError(
                f"training loss diverged at step {step}: {train_loss}"
            )
        if step % config.log_every == 0 or step == config.steps:
            history.append((step, train_loss, holdout_loss()))

    if ema is not None:
        with torch.no_grad():
            for shadow, p in zip(ema, net.parameters()):
                p.copy_(shadow)
        history.append((config.steps, history[-1][1], holdout_loss()))
    net.eval()
    model = ScoreModel(KIND_TRAINED, channels, schedule, net=net)
    model.training_history = history
    model.initial_holdout_loss = initial_val
    model.final_holdout_loss = history[-1][2]
    return model
