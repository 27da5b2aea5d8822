"""Soft actor-critic with pluggable history feature extractors.

Actor and critic each own a separate extractor; the twin Q heads share the
critic's extractor. Policy outputs live in [-1, 1]^3 and are rescaled to
environment actions by ``pushlab.env.rescale_action``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from ..env import ACTION_DIM, OBS_DIM
from ..nets import Adam, Mlp, NonFiniteError, backward, polyak_update, squashed_gaussian_sample, tensor_dict
from ..nets import load_tensor_dict
from .extractors import make_extractor

CONTEXT = {"vpm": 1, "stacked": 5, "gru": None}


@dataclass(frozen=True)
class SacConfig:
    extractor: str = "vpm"
    gru_hidden: int = 128
    hidden: tuple[int, ...] = (256, 256)
    gamma: float = 0.95
    tau: float = 0.005
    lr: float = 3e-4
    batch_size: int = 256
    her_k: int = 4
    init_alpha: float = 1.0
    target_entropy: float = -float(ACTION_DIM)
    bootstrap_at_truncation: bool = False
    normalize_observations: bool = True


class ObsNormalizer:
    """Running per-component mean and variance of observations.

    Calling it standardizes and clips to ``[-clip, clip]``; the standard
    deviation is floored at ``eps`` so constant components map to 0.
    Statistics are merged batch-wise (parallel Welford) in float64.
    """

    def __init__(self, dim: int = OBS_DIM, clip: float = 5.0, eps: float = 1e-2):
        self.clip = clip
        self.eps = eps
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def update(self, x) -> None:
        x = np.asarray(x, dtype=np.float64).reshape(-1, len(self.mean))
        n = len(x)
        if n == 0:
            return
        mean = x.mean(0)
        m2 = ((x - mean) ** 2).sum(0)
        total = self.count + n
        delta = mean - self.mean
        self.mean = self.mean + delta * n / total
        self.m2 = self.m2 + m2 + delta**2 * self.count * n / total
        self.count = total

    @property
    def std(self) -> np.ndarray:
        if self.count == 0:
            return np.ones_like(self.mean)
        return np.maximum(np.sqrt(self.m2 / self.count), self.eps)

    def __call__(self, obs: torch.Tensor) -> torch.Tensor:
        mean = torch.as_tensor(self.mean, dtype=obs.dtype)
        std = torch.as_tensor(self.std, dtype=obs.dtype)
        return ((obs - mean) / std).clamp(-self.clip, self.clip)


class Actor(nn.Module):
    def __init__(self, cfg: SacConfig, obs_dim: int = OBS_DIM):
        super().__init__()
        self.extractor = make_extractor(cfg.extractor, obs_dim, cfg.gru_hidden)
        self.head = Mlp([self.extractor.out_dim, *cfg.hidden, 2 * ACTION_DIM])

    def distribution(self, features: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        mean, log_std = self.head(features).chunk(2, dim=-1)
        return mean, log_std

    def sample(self, features, deterministic=False, generator=None):
        mean, log_std = self.distribution(features)
        return squashed_gaussian_sample(mean, log_std, deterministic, generator)


class Critic(nn.Module):
    def __init__(self, cfg: SacConfig, obs_dim: int = OBS_DIM):
        super().__init__()
        self.extractor = make_extractor(cfg.extractor, obs_dim, cfg.gru_hidden)
        width = self.extractor.out_dim + ACTION_DIM
        self.q1 = Mlp([width, *cfg.hidden, 1])
        self.q2 = Mlp([width, *cfg.hidden, 1])

    def q_values(self, features: torch.Tensor, actions: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        x = torch.cat([features, actions], dim=-1)
        return self.q1(x).squeeze(-1), self.q2(x).squeeze(-1)


def critic_targets(rewards, dones, next_q, next_log_prob, alpha, gamma):
    """``r + gamma * (1 - done) * (min target-Q - alpha * log pi)``."""
    return rewards + gamma * (1.0 - dones) * (next_q - alpha * next_log_prob)


def _gather(features: torch.Tensor, index: torch.Tensor) -> torch.Tensor:
    return features[torch.arange(features.shape[0]), index]


class PolicyRunner:
    """Incremental action selection over one episode (carries extractor state)."""

    def __init__(self, agent: SacAgent, deterministic: bool):
        self.agent = agent
        self.deterministic = deterministic
        self.reset()

    def reset(self) -> None:
        self.state = self.agent.actor.extractor.initial_state(1)

    def act(self, obs) -> np.ndarray:
        with torch.no_grad():
            x = self.agent.prepare(torch.as_tensor(obs, dtype=torch.float32)[None])
            feat, self.state = self.agent.actor.extractor.step(x, self.state)
            action, _ = self.agent.actor.sample(feat, self.deterministic, self.agent.generator)
        return action[0].numpy().astype(np.float64)


class SacAgent:
    def __init__(self, cfg: SacConfig, seed: int = 0, obs_dim: int = OBS_DIM):
        self.cfg = cfg
        torch.manual_seed(seed)
        self.generator = torch.Generator().manual_seed(seed)
        self.actor = Actor(cfg, obs_dim)
        self.critic = Critic(cfg, obs_dim)
        self.critic_target = copy.deepcopy(self.critic)
        for p in self.critic_target.parameters():
            p.requires_grad_(False)
        self.normalizer = ObsNormalizer(obs_dim)
        self.log_alpha = torch.tensor(float(np.log(cfg.init_alpha)), requires_grad=True)
        self.actor_opt = Adam(self.actor.parameters(), lr=cfg.lr)
        self.critic_opt = Adam(self.critic.parameters(), lr=cfg.lr)
        self.alpha_opt = Adam([self.log_alpha], lr=cfg.lr)
        self.updates = 0

    @property
    def alpha(self) -> float:
        return float(self.log_alpha.detach().exp())

    @property
    def context(self) -> int | None:
        return CONTEXT[self.cfg.extractor]

    def prepare(self, obs: torch.Tensor, valid=None) -> torch.Tensor:
        """Network input: normalized observations, with zero-filled padding rows kept at zero."""
        if self.cfg.normalize_observations:
            obs = self.normalizer(obs)
            if valid is not None:
                obs = obs * torch.as_tensor(valid, dtype=obs.dtype)[..., None]
        return obs

    def runner(self, deterministic: bool) -> PolicyRunner:
        return PolicyRunner(self, deterministic)

    def select_action(self, history, deterministic: bool = False) -> np.ndarray:
        """Normalized action for the last step of ``history`` (T, obs_dim), recomputed from scratch."""
        with torch.no_grad():
            h = self.prepare(torch.as_tensor(np.asarray(history), dtype=torch.float32)[None])
            feat = self.actor.extractor.sequence(h)[:, -1]
            action, _ = self.actor.sample(feat, deterministic, self.generator)
        return action[0].numpy().astype(np.float64)

    def update(self, batch) -> dict[str, float]:
        """One gradient step on critics, actor and temperature, then a Polyak target update."""
        cfg = self.cfg
        obs = self.prepare(torch.from_numpy(batch.observations), batch.valid)
        idx = torch.from_numpy(np.asarray(batch.index, dtype=np.int64))
        actions = torch.from_numpy(np.asarray(batch.actions, dtype=np.float32))
        rewards = torch.from_numpy(np.asarray(batch.rewards, dtype=np.float32))
        dones = torch.from_numpy(np.asarray(batch.dones, dtype=np.float32))
        alpha = self.log_alpha.exp().detach()

        actor_feats = self.actor.extractor.sequence(obs)
        with torch.no_grad():
            next_action, next_logp = self.actor.sample(_gather(actor_feats.detach(), idx + 1), generator=self.generator)
            target_feats = _gather(self.critic_target.extractor.sequence(obs), idx + 1)
            tq1, tq2 = self.critic_target.q_values(target_feats, next_action)
            y = critic_targets(rewards, dones, torch.min(tq1, tq2), next_logp, alpha, cfg.gamma)

        critic_feats = _gather(self.critic.extractor.sequence(obs), idx)
        q1, q2 = self.critic.q_values(critic_feats, actions)
        critic_loss = 0.5 * (F.mse_loss(q1, y) + F.mse_loss(q2, y))
        self.critic_opt.zero_grad()
        backward(critic_loss, self.critic.named_parameters())
        self.critic_opt.step()

        pi_action, logp = self.actor.sample(_gather(actor_feats, idx), generator=self.generator)
        with torch.no_grad():
            critic_feats = _gather(self.critic.extractor.sequence(obs), idx)
        pq1, pq2 = self.critic.q_values(critic_feats, pi_action)
        actor_loss = (alpha * logp - torch.min(pq1, pq2)).mean()
        self.actor_opt.zero_grad()
        backward(actor_loss, self.actor.named_parameters())
        self.actor_opt.step()

        alpha_loss = -(self.log_alpha * (logp.detach() + cfg.target_entropy)).mean()
        self.alpha_opt.zero_grad()
        backward(alpha_loss, [("log_alpha", self.log_alpha)])
        self.alpha_opt.step()

        polyak_update(self.critic_target, self.critic, cfg.tau)
        self.updates += 1
        report = {
            "critic_loss": critic_loss.item(),
            "actor_loss": actor_loss.item(),
            "alpha_loss": alpha_loss.item(),
            "alpha": self.alpha,
        }
        if not all(np.isfinite(v) for v in report.values()):
            raise NonFiniteError(f"non-finite SAC losses after update {self.updates}: {report}")
        return report

    # -- persistence ----------------------------------------------------------
    def tensors(self) -> dict[str, np.ndarray]:
        out = {}
        out.update(tensor_dict(self.actor, "actor"))
        out.update(tensor_dict(self.critic, "critic"))
        out.update(tensor_dict(self.critic_target, "critic_target"))
        out["log_alpha"] = self.log_alpha.detach().numpy().reshape(1)
        out["obs_norm.mean"] = self.normalizer.mean.copy()
        out["obs_norm.m2"] = self.normalizer.m2.copy()
        out["obs_norm.count"] = np.array([self.normalizer.count])
        return out

    def load_tensors(self, tensors: dict) -> None:
        load_tensor_dict(self.actor, tensors, "actor")
        load_tensor_dict(self.critic, tensors, "critic")
        load_tensor_dict(self.critic_target, tensors, "critic_target")
        with torch.no_grad():
            self.log_alpha.copy_(torch.as_tensor(tensors["log_alpha"][0]))
        self.normalizer.mean = tensors["obs_norm.mean"].astype(np.float64)
        self.normalizer.m2 = tensors["obs_norm.m2"].astype(np.float64)
        self.normalizer.count = int(tensors["obs_norm.count"][0])
