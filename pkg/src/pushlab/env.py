"""Goal-conditioned planar pushing environment.

One episode is exactly ``max_steps`` (50) transitions; it never terminates
early. Observations are 14 floats ``[ee_x, ee_y, z_object(6), z_goal(6)]``.
Rewards and success use ground-truth positions carried in ``info`` only.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import physics2d as phys
from .physics2d import BodyState, PhysParams, PusherState, ShapeSpec, WorldConfig
from .sampling import ParamRanges, SamplerMode, get_preset, sample_object, shape_class
from .vision import Camera, EncoderModel, encode, oracle_descriptor, render_mask

OBS_DIM = 14
EE_SLICE = slice(0, 2)
OBJECT_SLICE = slice(2, 8)
GOAL_SLICE = slice(8, 14)
ACTION_DIM = 3
POSITION_THRESHOLD = 0.01
MAX_STEPS = 50
MAX_RESET_TRIES = 100

# a_s = round(SUBSTEP_CENTER + SUBSTEP_HALF_RANGE * u), u in [-1, 1]
SUBSTEP_CENTER = 0.5 * (phys.MAX_SUBSTEPS + phys.MIN_SUBSTEPS)
SUBSTEP_HALF_RANGE = 0.5 * (phys.MAX_SUBSTEPS - phys.MIN_SUBSTEPS)


class EpisodeOverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Action:
    a_x: float
    a_y: float
    a_s: int

    def __post_init__(self):
        if not (-1.0 <= self.a_x <= 1.0 and -1.0 <= self.a_y <= 1.0):
            raise ValueError(f"position offsets must lie in [-1, 1] m, got ({self.a_x}, {self.a_y})")
        if int(self.a_s) != self.a_s or not (phys.MIN_SUBSTEPS <= self.a_s <= phys.MAX_SUBSTEPS):
            raise ValueError(f"a_s must be an integer in [{phys.MIN_SUBSTEPS}, {phys.MAX_SUBSTEPS}], got {self.a_s}")


def rescale_action(u) -> Action:
    """Map a normalized policy output in [-1, 1]^3 to an Action."""
    u = np.clip(np.asarray(u, dtype=np.float64), -1.0, 1.0)
    a_s = int(round(SUBSTEP_CENTER + SUBSTEP_HALF_RANGE * u[2]))
    return Action(float(u[0]), float(u[1]), min(max(a_s, phys.MIN_SUBSTEPS), phys.MAX_SUBSTEPS))


def normalize_action(action: Action) -> np.ndarray:
    return np.array([action.a_x, action.a_y, (action.a_s - SUBSTEP_CENTER) / SUBSTEP_HALF_RANGE])


def reward(p_o, p_g, threshold: float = POSITION_THRESHOLD) -> float:
    """0 when the object center is closer than ``threshold`` to the goal, else -1."""
    d = math.hypot(float(p_o[0]) - float(p_g[0]), float(p_o[1]) - float(p_g[1]))
    return -1.0 if d >= threshold else 0.0


def compute_rewards(p_o: np.ndarray, p_g: np.ndarray, threshold: float = POSITION_THRESHOLD) -> np.ndarray:
    """Vectorized ``reward`` over the last axis (positions of shape (..., 2))."""
    d = np.linalg.norm(np.asarray(p_o, dtype=np.float64) - np.asarray(p_g, dtype=np.float64), axis=-1)
    return np.where(d >= threshold, -1.0, 0.0)


def success(final_distance: float, threshold: float = POSITION_THRESHOLD) -> bool:
    return final_distance < threshold


@dataclass(frozen=True)
class EnvConfig:
    table_bounds: tuple[float, float, float, float] = (-0.2, -0.2, 0.2, 0.2)
    sampler: str = "uniform"
    preset: str = "table1"
    observation: str = "oracle"
    encoder_path: str | None = None
    spawn_margin: float = 0.06
    min_separation: float = 0.05
    threshold: float = POSITION_THRESHOLD
    max_steps: int = MAX_STEPS

    def __post_init__(self):
        SamplerMode(self.sampler)
        get_preset(self.preset)
        if self.observation not in ("oracle", "encoder"):
            raise ValueError(f"observation must be 'oracle' or 'encoder', got {self.observation!r}")
        if self.threshold != POSITION_THRESHOLD or self.max_steps != MAX_STEPS:
            raise ValueError("threshold (0.01 m) and episode length (50) are fixed")
        object.__setattr__(self, "table_bounds", tuple(float(v) for v in self.table_bounds))

    @property
    def ranges(self) -> ParamRanges:
        return get_preset(self.preset)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpisodeConfig:
    shape: ShapeSpec
    params: PhysParams
    start_pose: tuple[float, float, float]
    goal_pose: tuple[float, float, float]
    ee_start: tuple[float, float]
    threshold: float = POSITION_THRESHOLD
    max_steps: int = MAX_STEPS

    @property
    def shape_class(self) -> str:
        return shape_class(self.shape)


@dataclass
class _Episode:
    config: EpisodeConfig
    obj: BodyState
    pusher: PusherState
    goal_code: np.ndarray
    t: int = 0


class PushEnv:
    """Single-object pushing environment with reset/step semantics.

    ``encoder`` is required when ``config.observation == "encoder"``.
    """

    def __init__(self, config: EnvConfig | None = None, encoder: EncoderModel | None = None, seed: int | None = None,
                 world: WorldConfig | None = None, pusher: PusherState | None = None):
        self.config = config or EnvConfig()
        if self.config.observation == "encoder" and encoder is None:
            if self.config.encoder_path is None:
                raise ValueError("observation mode 'encoder' needs an encoder model (encoder_path)")
            encoder = EncoderModel.load(self.config.encoder_path)
        self.encoder = encoder
        self.world = world or WorldConfig(table_bounds=self.config.table_bounds)
        self.pusher_template = pusher or PusherState()
        self.camera = Camera.for_table(self.config.table_bounds)
        self.ranges = self.config.ranges
        self.sampler = SamplerMode(self.config.sampler)
        self.rng = np.random.default_rng(seed)
        self._ep: _Episode | None = None

    # -- observation helpers ------------------------------------------------
    def describe(self, shape: ShapeSpec, pose) -> np.ndarray:
        if self.config.observation == "oracle":
            return oracle_descriptor(shape, pose, self.config.table_bounds)
        return encode(self.encoder, render_mask(shape, pose, self.camera)).astype(np.float32)

    def _observation(self) -> np.ndarray:
        ep = self._ep
        obs = np.empty(OBS_DIM, dtype=np.float32)
        obs[EE_SLICE] = ep.pusher.pos
        obs[OBJECT_SLICE] = self.describe(ep.config.shape, ep.obj.pose)
        obs[GOAL_SLICE] = ep.goal_code
        return obs

    # -- episode sampling ----------------------------------------------------
    def _uniform_pose(self) -> tuple[float, float, float]:
        x0, y0, x1, y1 = self.config.table_bounds
        m = self.config.spawn_margin
        return (
            float(self.rng.uniform(x0 + m, x1 - m)),
            float(self.rng.uniform(y0 + m, y1 - m)),
            float(self.rng.uniform(-math.pi, math.pi)),
        )

    def sample_episode(self) -> EpisodeConfig:
        shape, params = sample_object(self.sampler, self.rng, self.ranges)
        x0, y0, x1, y1 = self.config.table_bounds
        for _ in range(MAX_RESET_TRIES):
            start, goal = self._uniform_pose(), self._uniform_pose()
            if math.dist(start[:2], goal[:2]) < max(self.config.min_separation, self.config.threshold):
                continue
            ee = (float(self.rng.uniform(x0, x1)), float(self.rng.uniform(y0, y1)))
            if phys.signed_distance(BodyState(start), shape, ee) <= self.pusher_template.radius:
                continue
            return EpisodeConfig(shape, params, start, goal, ee)
        raise RuntimeError(f"could not sample valid start/goal/EE poses in {MAX_RESET_TRIES} tries")

    def reset(self, seed: int | None = None, episode: EpisodeConfig | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        cfg = episode or self.sample_episode()
        pusher = PusherState(
            pos=cfg.ee_start,
            radius=self.pusher_template.radius,
            max_speed=self.pusher_template.max_speed,
            servo_gain=self.pusher_template.servo_gain,
        )
        goal_code = self.describe(cfg.shape, cfg.goal_pose)
        self._ep = _Episode(cfg, BodyState(cfg.start_pose), pusher, goal_code)
        return self._observation()

    # -- stepping -----------------------------------------------------------
    @property
    def episode(self) -> EpisodeConfig:
        if self._ep is None:
            raise RuntimeError("call reset() first")
        return self._ep.config

    @property
    def t(self) -> int:
        return self._ep.t if self._ep else 0

    @property
    def object_state(self) -> BodyState:
        return self._ep.obj

    @property
    def pusher_state(self) -> PusherState:
        return self._ep.pusher

    def step(self, action) -> tuple[np.ndarray, float, bool, dict]:
        ep = self._ep
        if ep is None:
            raise RuntimeError("call reset() first")
        if ep.t >= self.config.max_steps:
            raise EpisodeOverError("episode already truncated; call reset()")
        if not isinstance(action, Action):
            a = np.asarray(action, dtype=np.float64)
            action = Action(float(a[0]), float(a[1]), int(a[2]))
        x0, y0, x1, y1 = self.config.table_bounds
        ee = ep.pusher.pos
        target = (min(max(ee[0] + action.a_x, x0), x1), min(max(ee[1] + action.a_y, y0), y1))
        ep.obj, ep.pusher = phys.step_substeps(
            ep.obj, ep.config.shape, ep.config.params, ep.pusher, target, action.a_s, self.world
        )
        ep.t += 1
        p_o = np.array(ep.obj.pose[:2])
        p_g = np.array(ep.config.goal_pose[:2])
        r = reward(p_o, p_g, self.config.threshold)
        distance = float(np.linalg.norm(p_o - p_g))
        info = {
            "p_o": p_o,
            "p_g": p_g,
            "distance": distance,
            "success": success(distance, self.config.threshold),
            "ee": np.array(ep.pusher.pos),
            "theta": ep.obj.pose[2],
            "t": ep.t,
        }
        return self._observation(), r, ep.t == self.config.max_steps, info
