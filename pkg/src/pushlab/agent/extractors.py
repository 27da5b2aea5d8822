"""Feature extractors that turn an observation history into the input of an MLP head.

Every extractor offers two equivalent paths: ``sequence`` maps a whole
(B, T, obs_dim) history to per-step features (B, T, F) and is used in
training, ``step`` consumes one observation at a time with carried state and
is used during rollouts.
"""

from __future__ import annotations

import torch
from torch import nn

from ..env import OBS_DIM
from ..nets import GruCell, gru_forward


class VpmExtractor(nn.Module):
    """Memoryless: the feature is the current observation."""

    stateful = False

    def __init__(self, obs_dim: int = OBS_DIM):
        super().__init__()
        self.obs_dim = obs_dim
        self.out_dim = obs_dim

    def sequence(self, obs: torch.Tensor) -> torch.Tensor:
        return obs

    def initial_state(self, batch: int = 1):
        return None

    def step(self, obs: torch.Tensor, state):
        return obs, state


class StackedExtractor(nn.Module):
    """Concatenation of the last ``k`` observations, oldest first, zero-padded at episode start."""

    stateful = True

    def __init__(self, obs_dim: int = OBS_DIM, k: int = 5):
        super().__init__()
        self.obs_dim = obs_dim
        self.k = k
        self.out_dim = obs_dim * k

    def sequence(self, obs: torch.Tensor) -> torch.Tensor:
        B, T, D = obs.shape
        padded = torch.cat([obs.new_zeros(B, self.k - 1, D), obs], dim=1)
        windows = padded.unfold(1, self.k, 1)  # (B, T, D, k)
        return windows.transpose(2, 3).reshape(B, T, self.k * D)

    def initial_state(self, batch: int = 1) -> torch.Tensor:
        return torch.zeros(batch, self.k, self.obs_dim)

    def step(self, obs: torch.Tensor, state: torch.Tensor):
        state = torch.cat([state[:, 1:], obs[:, None].to(state.dtype)], dim=1)
        return state.flatten(1), state


class GruExtractor(nn.Module):
    """Last hidden state of a GRU run over the full history from a zero initial state."""

    stateful = True

    def __init__(self, obs_dim: int = OBS_DIM, hidden: int = 128):
        super().__init__()
        self.obs_dim = obs_dim
        self.out_dim = hidden
        self.cell = GruCell(obs_dim, hidden)

    def sequence(self, obs: torch.Tensor) -> torch.Tensor:
        return gru_forward(self.cell, obs)

    def initial_state(self, batch: int = 1) -> torch.Tensor:
        return self.cell.initial_state(batch)

    def step(self, obs: torch.Tensor, state: torch.Tensor):
        h = self.cell.step(obs, state)
        return h, h


EXTRACTORS = ("vpm", "stacked", "gru")


def make_extractor(kind: str, obs_dim: int = OBS_DIM, gru_hidden: int = 128, stack: int = 5) -> nn.Module:
    if kind == "vpm":
        return VpmExtractor(obs_dim)
    if kind == "stacked":
        return StackedExtractor(obs_dim, stack)
    if kind == "gru":
        return GruExtractor(obs_dim, gru_hidden)
    raise ValueError(f"unknown extractor {kind!r}; choose from {EXTRACTORS}")


def extract_features(extractor: nn.Module, history) -> torch.Tensor:
    """Feature vector for the last step of ``history`` (T, obs_dim)."""
    history = torch.as_tensor(history, dtype=torch.float32)
    if history.dim() != 2 or history.shape[0] < 1:
        raise ValueError("history must be a non-empty (T, obs_dim) array")
    with torch.no_grad():
        return extractor.sequence(history[None])[0, -1]
