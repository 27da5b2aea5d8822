"""Small neural-network toolkit on top of torch: MLPs, a GRU layer, Adam, and the
tanh-squashed Gaussian used by the policy.

Gradients come from torch autograd; ``backward`` adds the non-finite checks
the training loops rely on.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence

import torch
from torch import nn
from torch.nn import functional as F

ACTIVATIONS = {
    "relu": nn.ReLU,
    "elu": nn.ELU,
    "silu": nn.SiLU,
    "tanh": nn.Tanh,
    "sigmoid": nn.Sigmoid,
    "identity": nn.Identity,
}


class NonFiniteError(FloatingPointError):
    """A loss or gradient became NaN or infinite."""


class Mlp(nn.Module):
    """Dense layers with one activation between them and an optional output activation."""

    def __init__(self, sizes: Sequence[int], activation: str = "relu", out_activation: str = "identity"):
        super().__init__()
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        layers: list[nn.Module] = []
        for i, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            linear = nn.Linear(n_in, n_out)
            nn.init.kaiming_uniform_(linear.weight, nonlinearity="relu")
            nn.init.zeros_(linear.bias)
            layers.append(linear)
            last = i == len(self.sizes) - 2
            layers.append(ACTIVATIONS[out_activation if last else activation]())
        self.net = nn.Sequential(*layers)

    @property
    def in_features(self) -> int:
        return self.sizes[0]

    @property
    def out_features(self) -> int:
        return self.sizes[-1]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.in_features:
            raise ValueError(f"expected input width {self.in_features}, got {tuple(x.shape)}")
        return self.net(x)


def mlp_forward(net: Mlp, x: torch.Tensor) -> torch.Tensor:
    return net(x)


class GruCell(nn.Module):
    """Single GRU layer (gates ordered reset, update, candidate).

    ``h' = (1 - z) * n + z * h`` with ``r, z = sigmoid(...)`` and
    ``n = tanh(W_in x + b_in + r * (W_hn h + b_hn))``. Recurrent blocks are
    initialized orthogonal, input weights Xavier-uniform, biases zero.
    """

    def __init__(self, input_size: int, hidden_size: int):
        super().__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.rnn = nn.GRU(input_size, hidden_size, batch_first=True)
        H = hidden_size
        with torch.no_grad():
            for g in range(3):
                nn.init.orthogonal_(self.rnn.weight_hh_l0[g * H : (g + 1) * H])
                nn.init.xavier_uniform_(self.rnn.weight_ih_l0[g * H : (g + 1) * H])
            nn.init.zeros_(self.rnn.bias_ih_l0)
            nn.init.zeros_(self.rnn.bias_hh_l0)

    def initial_state(self, batch: int = 1, dtype=None) -> torch.Tensor:
        dtype = dtype or self.rnn.weight_hh_l0.dtype
        return torch.zeros(batch, self.hidden_size, dtype=dtype)

    def forward(self, seq: torch.Tensor, h0: torch.Tensor | None = None) -> torch.Tensor:
        return gru_forward(self, seq, h0)

    def step(self, x: torch.Tensor, h: torch.Tensor) -> torch.Tensor:
        """One recurrence step: x (B, I), h (B, H) -> h' (B, H)."""
        return gru_forward(self, x[:, None, :], h)[:, 0]


def gru_forward(cell: GruCell, seq: torch.Tensor, h0: torch.Tensor | None = None) -> torch.Tensor:
    """All hidden states ``h_1..h_T`` for ``seq`` of shape (B, T, I) or (T, I)."""
    squeeze = seq.dim() == 2
    if squeeze:
        seq = seq[None]
    if seq.dim() != 3 or seq.shape[-1] != cell.input_size:
        raise ValueError(f"expected (B, T, {cell.input_size}) input, got {tuple(seq.shape)}")
    if seq.shape[1] < 1:
        raise ValueError("sequence must contain at least one step")
    B = seq.shape[0]
    if h0 is None:
        h0 = cell.initial_state(B, seq.dtype)
    if h0.dim() == 1:
        h0 = h0.expand(B, -1)
    if h0.shape != (B, cell.hidden_size):
        raise ValueError(f"h0 must have shape ({B}, {cell.hidden_size}), got {tuple(h0.shape)}")
    out, _ = cell.rnn(seq, h0[None].contiguous())
    return out[0] if squeeze else out


def backward(loss: torch.Tensor, named_params: Iterable[tuple[str, torch.Tensor]] = ()) -> None:
    """Backpropagate a scalar loss and verify every resulting gradient is finite."""
    if loss.dim() != 0:
        raise ValueError("backward needs a scalar loss")
    if not torch.isfinite(loss):
        raise NonFiniteError(f"loss is not finite: {loss.item()}")
    loss.backward()
    bad = [name for name, p in named_params if p.grad is not None and not torch.isfinite(p.grad).all()]
    if bad:
        raise NonFiniteError(f"non-finite gradients in: {', '.join(bad)}")


def adam_step(params, grads, state: dict, lr: float, betas=(0.9, 0.999), eps: float = 1e-8) -> dict:
    """Bias-corrected Adam update applied in place to ``params``.

    ``state`` holds ``step`` and per-parameter first/second moments and is
    returned updated. Parameters with a ``None`` gradient are left alone.
    """
    b1, b2 = betas
    if not state:
        state.update(step=0, m=[torch.zeros_like(p) for p in params], v=[torch.zeros_like(p) for p in params])
    state["step"] += 1
    t = state["step"]
    c1 = 1 - b1**t
    c2 = 1 - b2**t
    with torch.no_grad():
        for p, g, m, v in zip(params, grads, state["m"], state["v"]):
            if g is None:
                continue
            m.mul_(b1).add_(g, alpha=1 - b1)
            v.mul_(b2).addcmul_(g, g, value=1 - b2)
            denom = (v / c2).sqrt_().add_(eps)
            p.addcdiv_(m, denom, value=-lr / c1)
    return state


class Adam:
    """Minimal optimizer object around ``adam_step``."""

    def __init__(self, params, lr: float = 3e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = [p for p in params]
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state: dict = {}

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state, self.lr, self.betas, self.eps)


LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


def squashed_gaussian_log_prob(pre_tanh: torch.Tensor, mean: torch.Tensor, log_std: torch.Tensor) -> torch.Tensor:
    """Log density of ``tanh(u)`` with ``u ~ N(mean, exp(log_std)^2)``, summed over the last axis."""
    z = (pre_tanh - mean) * torch.exp(-log_std)
    normal = -0.5 * z * z - log_std - _LOG_SQRT_2PI
    # log(1 - tanh(u)^2) written to stay finite for large |u|
    log_det = 2.0 * (math.log(2.0) - pre_tanh - F.softplus(-2.0 * pre_tanh))
    return (normal - log_det).sum(-1)


def squashed_gaussian_sample(
    mean: torch.Tensor,
    log_std: torch.Tensor,
    deterministic: bool = False,
    generator: torch.Generator | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Reparameterized sample in (-1, 1) and its log-probability."""
    log_std = log_std.clamp(LOG_STD_MIN, LOG_STD_MAX)
    if deterministic:
        u = mean
    else:
        noise = torch.randn(mean.shape, generator=generator, dtype=mean.dtype)
        u = mean + noise * log_std.exp()
    return torch.tanh(u), squashed_gaussian_log_prob(u, mean, log_std)


def binary_cross_entropy(logits: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean BCE between ``sigmoid(logits)`` and ``target``."""
    return F.binary_cross_entropy_with_logits(logits, target)


def polyak_update(target: nn.Module, source: nn.Module, tau: float) -> None:
    with torch.no_grad():
        for t, s in zip(target.parameters(), source.parameters()):
            t.mul_(1 - tau).add_(s, alpha=tau)


def tensor_dict(module: nn.Module, prefix: str) -> dict:
    return {f"{prefix}.{k}": v.detach().cpu().numpy() for k, v in module.state_dict().items()}


def load_tensor_dict(module: nn.Module, tensors: dict, prefix: str) -> None:
    own = module.state_dict()
    missing = [k for k in own if f"{prefix}.{k}" not in tensors]
    if missing:
        raise KeyError(f"checkpoint lacks tensors for {prefix}: {missing[:3]}")
    state = {}
    for k, v in own.items():
        src = torch.as_tensor(tensors[f"{prefix}.{k}"])
        if tuple(src.shape) != tuple(v.shape):
            raise ValueError(f"shape mismatch for {prefix}.{k}: {tuple(src.shape)} vs {tuple(v.shape)}")
        state[k] = src.to(v.dtype)
    module.load_state_dict(state)
