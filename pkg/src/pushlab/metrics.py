"""Per-episode trajectory metrics and their aggregation.

A distance series holds the object-goal distance after each of the 50 steps.

* overshoot corrections: steps where the distance crosses the threshold
  upward (``d[t] < thr <= d[t+1]``);
* distance corrections: maximal runs of strictly increasing distance that
  start outside the success region (``d[start] >= thr``) and are followed, at
  some later step, by a strict decrease. Runs starting inside the region are
  exits and are left to the overshoot counter. Plateaus break runs.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import POSITION_THRESHOLD
from .sampling import SHAPE_CLASSES

TRAJECTORY_COLUMNS = (
    "t", "ee_x", "ee_y", "obj_x", "obj_y", "obj_theta", "goal_x", "goal_y",
    "distance", "reward", "a_x", "a_y", "a_s",
)
MANIFEST_COLUMNS = ("episode", "file", "shape_class", "mass", "mu_k", "final_distance", "success")


def count_overshoot(series: Sequence[float], threshold: float = POSITION_THRESHOLD) -> int:
    d = np.asarray(series, dtype=np.float64)
    return int(np.count_nonzero((d[:-1] < threshold) & (d[1:] >= threshold)))


def count_distance_corrections(series: Sequence[float], threshold: float = POSITION_THRESHOLD) -> int:
    d = np.asarray(series, dtype=np.float64)
    rising = d[1:] > d[:-1]
    falling = d[1:] < d[:-1]
    # falling_later[i]: some strict decrease at step index >= i
    falling_later = np.flip(np.logical_or.accumulate(np.flip(falling)))
    count = 0
    i = 0
    n = len(rising)
    while i < n:
        if not rising[i]:
            i += 1
            continue
        start = i
        while i < n and rising[i]:
            i += 1
        if d[start] >= threshold and i < n and falling_later[i]:
            count += 1
    return count


def episode_return(series: Sequence[float], threshold: float = POSITION_THRESHOLD) -> int:
    return -int(np.count_nonzero(np.asarray(series) >= threshold))


@dataclass
class EpisodeRecord:
    distances: np.ndarray
    shape_class: str
    threshold: float = POSITION_THRESHOLD

    @property
    def success(self) -> bool:
        return bool(self.distances[-1] < self.threshold)

    @property
    def ret(self) -> int:
        return episode_return(self.distances, self.threshold)

    @property
    def overshoots(self) -> int:
        return count_overshoot(self.distances, self.threshold)

    @property
    def distance_corrections(self) -> int:
        return count_distance_corrections(self.distances, self.threshold)


@dataclass
class Stat:
    mean: float
    sem: float

    def __str__(self) -> str:
        return f"{self.mean:.3f} ± {self.sem:.3f}"


def mean_sem(values) -> Stat:
    """Mean and standard error (sample sd / sqrt(n)); SEM is 0 when n == 1."""
    v = np.asarray(values, dtype=np.float64)
    if len(v) == 0:
        return Stat(float("nan"), float("nan"))
    if len(v) == 1:
        return Stat(float(v[0]), 0.0)
    return Stat(float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v))))


@dataclass
class GroupReport:
    n: int
    success_rate: float
    ret: Stat
    overshoots: Stat
    distance_corrections: Stat

    @property
    def sem_defined(self) -> bool:
        return self.n > 1


@dataclass
class EvalReport:
    overall: GroupReport
    groups: dict[str, GroupReport] = field(default_factory=dict)

    @property
    def success_rate(self) -> float:
        return self.overall.success_rate

    def rows(self):
        yield "all", self.overall
        for name in SHAPE_CLASSES:
            if name in self.groups:
                yield name, self.groups[name]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["group", "n", "success_rate", "return_mean", "return_sem", "overshoot_mean", "overshoot_sem",
                        "distcorr_mean", "distcorr_sem", "sem_defined"])
            for name, g in self.rows():
                w.writerow([name, g.n, f"{g.success_rate:.6f}", f"{g.ret.mean:.6f}", f"{g.ret.sem:.6f}",
                            f"{g.overshoots.mean:.6f}", f"{g.overshoots.sem:.6f}",
                            f"{g.distance_corrections.mean:.6f}", f"{g.distance_corrections.sem:.6f}",
                            int(g.sem_defined)])

    def to_text(self) -> str:
        lines = [f"{'group':<10} {'n':>4} {'success':>8} {'return':>18} {'overshoot':>16} {'dist.corr':>16}"]
        for name, g in self.rows():
            note = "" if g.sem_defined else "  (n=1, SEM undefined)"
            lines.append(
                f"{name:<10} {g.n:>4} {g.success_rate:>8.2f} {str(g.ret):>18} {str(g.overshoots):>16} "
                f"{str(g.distance_corrections):>16}{note}"
            )
        return "\n".join(lines)


def _group(records: Sequence[EpisodeRecord]) -> GroupReport:
    return GroupReport(
        n=len(records),
        success_rate=float(np.mean([r.success for r in records])),
        ret=mean_sem([r.ret for r in records]),
        overshoots=mean_sem([r.overshoots for r in records]),
        distance_corrections=mean_sem([r.distance_corrections for r in records]),
    )


def aggregate(records: Sequence[EpisodeRecord]) -> EvalReport:
    if not records:
        raise ValueError("aggregate needs at least one episode")
    groups = {}
    for name in SHAPE_CLASSES:
        members = [r for r in records if r.shape_class == name]
        if members:
            groups[name] = _group(members)
    return EvalReport(_group(records), groups)


def write_trajectory(path, rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=TRAJECTORY_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: (row[k] if k in ("t", "a_s") else f"{row[k]:.9g}") for k in TRAJECTORY_COLUMNS})


def read_trajectory(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return {k: np.array([float(r[k]) for r in rows]) for k in TRAJECTORY_COLUMNS}


def load_records(directory) -> list[EpisodeRecord]:
    """Rebuild episode records from a trajectory export directory (manifest + per-episode CSVs)."""
    directory = Path(directory)
    with open(directory / "episodes.csv", newline="") as f:
        manifest = list(csv.DictReader(f))
    return [
        EpisodeRecord(read_trajectory(directory / row["file"])["distance"], row["shape_class"]) for row in manifest
    ]
