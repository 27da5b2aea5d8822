"""Episode storage and hindsight goal relabeling.

An episode stores ``T + 1`` observations (index 0 is the reset observation)
and ``T`` actions; transition ``t`` goes from observation ``t`` to ``t + 1``
and its reward is computed from the object position at ``t + 1``.

Relabeling with the "future" strategy picks a later position index
``f in {t+1, ..., T}`` and makes the object state there the goal: the
ground-truth goal position becomes ``p_o[f]`` and the goal code in *every*
observation of the history becomes the object code at ``f``, so that
recurrent features are recomputed from the first step under the new goal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..env import GOAL_SLICE, MAX_STEPS, OBJECT_SLICE, OBS_DIM, POSITION_THRESHOLD, compute_rewards


@dataclass
class Episode:
    observations: np.ndarray  # (T+1, obs_dim) float32
    actions: np.ndarray  # (T, 3) normalized policy outputs
    object_positions: np.ndarray  # (T+1, 2) ground truth
    goal_position: np.ndarray  # (2,) ground truth

    def __post_init__(self):
        T = len(self.actions)
        if self.observations.shape[0] != T + 1 or self.object_positions.shape[0] != T + 1:
            raise ValueError("an episode needs T+1 observations and positions for T actions")

    @property
    def length(self) -> int:
        return len(self.actions)

    @property
    def goal_latent(self) -> np.ndarray:
        return self.observations[0, GOAL_SLICE]

    @property
    def achieved_latents(self) -> np.ndarray:
        return self.observations[:, OBJECT_SLICE]

    @property
    def distances(self) -> np.ndarray:
        """Object-goal distance after each step (length T)."""
        return np.linalg.norm(self.object_positions[1:] - self.goal_position, axis=-1)

    @property
    def rewards(self) -> np.ndarray:
        return compute_rewards(self.object_positions[1:], self.goal_position)


@dataclass
class Sample:
    """One (possibly relabeled) transition together with its rewritten history."""

    t: int
    observations: np.ndarray  # (T+1, obs_dim) with the goal slots rewritten
    action: np.ndarray
    reward: float
    goal_position: np.ndarray
    goal_step: int | None  # relabel source index f, None for the original goal
    done: bool


def rewrite_goal(observations: np.ndarray, goal_latent: np.ndarray) -> np.ndarray:
    out = observations.copy()
    out[..., GOAL_SLICE] = goal_latent[..., None, :] if goal_latent.ndim > 1 else goal_latent
    return out


def her_relabel(episode: Episode, k: int, rng: np.random.Generator, threshold: float = POSITION_THRESHOLD):
    """Original transitions plus ``k`` future-goal copies of each."""
    T = episode.length
    samples = []
    for t in range(T):
        samples.append(
            Sample(
                t,
                episode.observations,
                episode.actions[t],
                float(compute_rewards(episode.object_positions[t + 1], episode.goal_position, threshold)),
                episode.goal_position,
                None,
                t == T - 1,
            )
        )
        for _ in range(k):
            f = int(rng.integers(t + 1, T + 1))
            goal = episode.object_positions[f]
            samples.append(
                Sample(
                    t,
                    rewrite_goal(episode.observations, episode.observations[f, OBJECT_SLICE]),
                    episode.actions[t],
                    float(compute_rewards(episode.object_positions[t + 1], goal, threshold)),
                    goal,
                    f,
                    t == T - 1,
                )
            )
    return samples


@dataclass
class Batch:
    observations: np.ndarray  # (B, L, obs_dim) history window, goal slots rewritten
    index: np.ndarray  # (B,) position of observation t inside the window
    actions: np.ndarray  # (B, 3)
    rewards: np.ndarray  # (B,)
    dones: np.ndarray  # (B,) 1.0 where the bootstrap is cut
    relabeled: np.ndarray  # (B,) bool
    valid: np.ndarray  # (B, L) False for zero-filled rows before the episode start


class EpisodeReplay:
    """Ring buffer of complete episodes with relabeling at sample time.

    ``sample`` relabels each drawn transition with probability ``k / (k + 1)``,
    the same proportion of virtual to real samples ``her_relabel`` emits.
    """

    def __init__(self, capacity: int, horizon: int = MAX_STEPS, obs_dim: int = OBS_DIM, action_dim: int = 3):
        self.capacity = capacity
        self.horizon = horizon
        self.obs = np.zeros((capacity, horizon + 1, obs_dim), dtype=np.float32)
        self.actions = np.zeros((capacity, horizon, action_dim), dtype=np.float32)
        self.positions = np.zeros((capacity, horizon + 1, 2), dtype=np.float64)
        self.goals = np.zeros((capacity, 2), dtype=np.float64)
        self.size = 0
        self.cursor = 0

    def __len__(self) -> int:
        return self.size

    def add(self, episode: Episode) -> None:
        if episode.length != self.horizon:
            raise ValueError(f"episodes must have exactly {self.horizon} transitions, got {episode.length}")
        i = self.cursor
        self.obs[i] = episode.observations
        self.actions[i] = episode.actions
        self.positions[i] = episode.object_positions
        self.goals[i] = episode.goal_position
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def get(self, i: int) -> Episode:
        if not 0 <= i < self.size:
            raise IndexError(i)
        return Episode(self.obs[i].copy(), self.actions[i].copy(), self.positions[i].copy(), self.goals[i].copy())

    def sample(
        self,
        batch_size: int,
        rng: np.random.Generator,
        k: int = 4,
        context: int | None = None,
        bootstrap_at_truncation: bool = False,
        threshold: float = POSITION_THRESHOLD,
    ) -> Batch:
        """Draw transitions uniformly over stored episodes and steps.

        ``context`` is the number of observations the extractor needs up to
        step t (1 for memoryless, 5 for a 5-stack, None for the full prefix).
        Windows reaching before the episode start are zero-filled.
        """
        if self.size == 0:
            raise ValueError("replay buffer is empty")
        T = self.horizon
        ep = rng.integers(self.size, size=batch_size)
        t = rng.integers(T, size=batch_size)
        her = rng.random(batch_size) < k / (k + 1.0)
        f = t + 1 + (rng.random(batch_size) * (T - t)).astype(np.int64)
        f = np.minimum(f, T)

        goal_pos = np.where(her[:, None], self.positions[ep, f], self.goals[ep])
        goal_latent = np.where(her[:, None], self.obs[ep, f, OBJECT_SLICE], self.obs[ep, 0, GOAL_SLICE])
        rewards = compute_rewards(self.positions[ep, t + 1], goal_pos, threshold)

        if context is None:
            window = self.obs[ep]
            index = t
            valid = np.ones(window.shape[:2], dtype=bool)
        else:
            offsets = np.arange(-context + 1, 2)
            steps = t[:, None] + offsets[None, :]
            window = self.obs[ep[:, None], np.clip(steps, 0, T)]
            window[steps < 0] = 0.0
            index = np.full(batch_size, context - 1)
            valid = steps >= 0
        window = window.copy() if context is None else window
        window[..., GOAL_SLICE] = goal_latent[:, None, :]
        if context is not None:
            window[steps < 0] = 0.0
        dones = np.zeros(batch_size) if bootstrap_at_truncation else (t == T - 1).astype(np.float64)
        return Batch(window, index, self.actions[ep, t], rewards, dones, her, valid)
