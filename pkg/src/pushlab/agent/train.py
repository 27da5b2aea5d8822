"""Rollout collection, evaluation and the off-policy training loop."""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .. import checkpoint
from ..env import EnvConfig, EpisodeConfig, PushEnv, rescale_action
from ..metrics import EpisodeRecord, aggregate
from ..physics2d import SimulationInstabilityError
from ..vision import EncoderModel
from .extractors import EXTRACTORS
from .her import Episode, EpisodeReplay
from .sac import SacAgent, SacConfig
from .variants import get_variant

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 2
OBSERVATION_MODES = ("oracle", "encoder")
METRICS_COLUMNS = (
    "step", "episode", "success_rate", "mean_return", "overshoot_mean", "distcorr_mean",
    "alpha", "critic_loss", "actor_loss", "alpha_loss",
)


@dataclass(frozen=True)
class TrainConfig:
    variant: str = "vpm"
    observation: str = "oracle"
    encoder_path: str | None = None
    preset: str = "table1"
    table_bounds: tuple[float, float, float, float] = (-0.2, -0.2, 0.2, 0.2)
    seed: int = 0
    total_steps: int = 200_000
    learning_starts: int = 2_000
    gradient_steps: int = 1
    eval_every: int = 10_000
    eval_episodes: int = 100
    eval_preset: str | None = None
    eval_seed: int = 12345
    target_success: float | None = None
    buffer_episodes: int = 20_000
    gru_hidden: int = 128
    hidden: tuple[int, ...] = (256, 256)
    gamma: float = 0.95
    tau: float = 0.005
    lr: float = 3e-4
    batch_size: int = 256
    her_k: int = 4
    init_alpha: float = 1.0
    bootstrap_at_truncation: bool = False
    normalize_observations: bool = True
    threads: int | None = None

    def __post_init__(self):
        get_variant(self.variant)
        object.__setattr__(self, "table_bounds", tuple(self.table_bounds))
        object.__setattr__(self, "hidden", tuple(self.hidden))

    @property
    def sac(self) -> SacConfig:
        return SacConfig(
            extractor=get_variant(self.variant).extractor,
            gru_hidden=self.gru_hidden,
            hidden=self.hidden,
            gamma=self.gamma,
            tau=self.tau,
            lr=self.lr,
            batch_size=self.batch_size,
            her_k=self.her_k,
            init_alpha=self.init_alpha,
            bootstrap_at_truncation=self.bootstrap_at_truncation,
            normalize_observations=self.normalize_observations,
        )

    def env_config(self, preset: str | None = None) -> EnvConfig:
        return EnvConfig(
            table_bounds=self.table_bounds,
            sampler=get_variant(self.variant).sampler.value,
            preset=preset or self.preset,
            observation=self.observation,
            encoder_path=self.encoder_path,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["table_bounds"] = list(self.table_bounds)
        d["hidden"] = list(self.hidden)
        return d


def configure_threads(threads: int | None = None) -> int:
    """Torch intra-op threads: explicit value, else PUSHLAB_THREADS, else 1."""
    n = threads or int(os.environ.get("PUSHLAB_THREADS", "1"))
    torch.set_num_threads(max(1, n))
    return n


@dataclass
class Rollout:
    episode: Episode
    record: EpisodeRecord
    setup: EpisodeConfig
    rows: list[dict] = field(default_factory=list)
    returned: float = 0.0


def run_episode(env: PushEnv, policy=None, rng: np.random.Generator | None = None, keep_rows: bool = False) -> Rollout:
    """Play one full episode. ``policy`` is a PolicyRunner; ``None`` draws uniform random actions from ``rng``."""
    obs = env.reset()
    if policy is not None:
        policy.reset()
    T = env.config.max_steps
    observations = [obs]
    actions = np.zeros((T, 3), dtype=np.float32)
    positions = [np.array(env.object_state.pose[:2])]
    rows = []
    total = 0.0
    goal = np.array(env.episode.goal_pose[:2])
    for t in range(T):
        u = rng.uniform(-1.0, 1.0, size=3) if policy is None else policy.act(obs)
        action = rescale_action(u)
        obs, r, truncated, info = env.step(action)
        actions[t] = u
        observations.append(obs)
        positions.append(info["p_o"])
        total += r
        if keep_rows:
            pose = env.object_state.pose
            rows.append(
                dict(t=t + 1, ee_x=info["ee"][0], ee_y=info["ee"][1], obj_x=pose[0], obj_y=pose[1], obj_theta=pose[2],
                     goal_x=goal[0], goal_y=goal[1], distance=info["distance"], reward=r,
                     a_x=action.a_x, a_y=action.a_y, a_s=action.a_s)
            )
    episode = Episode(np.stack(observations), actions, np.stack(positions), goal)
    record = EpisodeRecord(episode.distances, env.episode.shape_class)
    return Rollout(episode, record, env.episode, rows, total)


def evaluate(agent: SacAgent, env: PushEnv, episodes: int, seed: int, keep_rows: bool = False) -> list[Rollout]:
    """Deterministic-policy episodes on a freshly seeded environment stream."""
    env.rng = np.random.default_rng(seed)
    runner = agent.runner(deterministic=True)
    out = []
    for _ in range(episodes):
        for _attempt in range(10):
            try:
                out.append(run_episode(env, runner, keep_rows=keep_rows))
                break
            except SimulationInstabilityError as exc:
                log.warning("evaluation episode discarded: %s", exc)
        else:
            raise SimulationInstabilityError("repeated simulation instability during evaluation")
    return out


def save_agent(path, agent: SacAgent, observation: str = "oracle") -> None:
    cfg = agent.cfg
    tensors = agent.tensors()
    tensors["meta.version"] = np.array([CHECKPOINT_VERSION])
    tensors["meta.observation"] = np.array([OBSERVATION_MODES.index(observation)])
    tensors["meta.extractor"] = np.array([EXTRACTORS.index(cfg.extractor)])
    tensors["meta.gru_hidden"] = np.array([cfg.gru_hidden])
    tensors["meta.hidden"] = np.array(cfg.hidden)
    tensors["meta.normalize"] = np.array([int(cfg.normalize_observations)])
    checkpoint.write_tensors(path, checkpoint.AGENT_MAGIC, tensors)


def load_agent(path, base: SacConfig | None = None) -> tuple[SacAgent, str]:
    """Rebuild an agent from a checkpoint; also returns the observation mode it was trained with."""
    tensors = checkpoint.read_tensors(path, checkpoint.AGENT_MAGIC)
    version = int(tensors.get("meta.version", [-1])[0])
    if version != CHECKPOINT_VERSION:
        raise checkpoint.CheckpointError(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    try:
        cfg = replace(
            base or SacConfig(),
            extractor=EXTRACTORS[int(tensors["meta.extractor"][0])],
            gru_hidden=int(tensors["meta.gru_hidden"][0]),
            hidden=tuple(int(h) for h in tensors["meta.hidden"]),
            normalize_observations=bool(tensors["meta.normalize"][0]),
        )
        agent = SacAgent(cfg)
        agent.load_tensors(tensors)
    except (KeyError, ValueError, IndexError) as exc:
        raise checkpoint.CheckpointError(f"{path}: {exc}") from exc
    return agent, OBSERVATION_MODES[int(tensors["meta.observation"][0])]


@dataclass
class TrainResult:
    agent: SacAgent
    metrics: list[dict]
    best_success: float
    steps: int
    discarded_episodes: int


def _metrics_row(step, episode, records, losses, agent) -> dict:
    report = aggregate(records)
    loss_mean = {k: float(np.mean([l[k] for l in losses])) if losses else float("nan")
                 for k in ("critic_loss", "actor_loss", "alpha_loss")}
    return dict(
        step=step,
        episode=episode,
        success_rate=report.success_rate,
        mean_return=report.overall.ret.mean,
        overshoot_mean=report.overall.overshoots.mean,
        distcorr_mean=report.overall.distance_corrections.mean,
        alpha=agent.alpha,
        **loss_mean,
    )


def train(config: TrainConfig, out_dir=None, encoder: EncoderModel | None = None) -> TrainResult:
    """Collect episodes with the stochastic policy and update after every step.

    Every ``eval_every`` environment steps the deterministic policy is
    evaluated; a row goes to ``metrics.csv`` and a checkpoint is written.
    Stops early once evaluation success reaches ``target_success``.
    """
    configure_threads(config.threads)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    if config.observation == "encoder" and encoder is None:
        if not config.encoder_path:
            raise ValueError("observation 'encoder' requires encoder_path")
        encoder = EncoderModel.load(config.encoder_path)

    rng = np.random.default_rng(config.seed)
    env = PushEnv(config.env_config(), encoder=encoder, seed=int(rng.integers(2**31)))
    eval_env = PushEnv(config.env_config(config.eval_preset), encoder=encoder)
    agent = SacAgent(config.sac, seed=config.seed)
    replay = EpisodeReplay(config.buffer_episodes, env.config.max_steps)
    runner = agent.runner(deterministic=False)

    metrics: list[dict] = []
    losses: list[dict] = []
    best = 0.0
    steps = episodes = discarded = 0
    next_eval = config.eval_every
    T = env.config.max_steps

    def write_metrics():
        if out is None:
            return
        with open(out / "metrics.csv", "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=METRICS_COLUMNS)
            w.writeheader()
            for row in metrics:
                w.writerow({k: (row[k] if isinstance(row[k], int) else f"{row[k]:.6g}") for k in METRICS_COLUMNS})

    write_metrics()
    if out is not None:
        save_agent(out / "agent.bin", agent, config.observation)

    while steps < config.total_steps:
        policy = runner if steps >= config.learning_starts else None
        try:
            rollout = run_episode(env, policy, rng)
        except SimulationInstabilityError as exc:
            discarded += 1
            log.warning("training episode discarded: %s", exc)
            continue
        replay.add(rollout.episode)
        agent.normalizer.update(rollout.episode.observations)
        episodes += 1
        steps += T
        if steps >= config.learning_starts:
            n_updates = T * config.gradient_steps
            for _ in range(n_updates):
                batch = replay.sample(config.batch_size, rng, config.her_k, agent.context, config.bootstrap_at_truncation)
                losses.append(agent.update(batch))
        if steps >= next_eval or steps >= config.total_steps:
            next_eval += config.eval_every
            records = [r.record for r in evaluate(agent, eval_env, config.eval_episodes, config.eval_seed)]
            row = _metrics_row(steps, episodes, records, losses, agent)
            losses = []
            metrics.append(row)
            log.info("step %d success %.2f return %.1f alpha %.3f", steps, row["success_rate"], row["mean_return"], row["alpha"])
            best = max(best, row["success_rate"])
            write_metrics()
            if out is not None:
                save_agent(out / "agent.bin", agent, config.observation)
                if row["success_rate"] >= best:
                    save_agent(out / "agent_best.bin", agent, config.observation)
            if config.target_success is not None and row["success_rate"] >= config.target_success:
                break
    return TrainResult(agent, metrics, best, steps, discarded)
