"""Space-time trajectory generation: the copula method and its benchmarks.

All generators work on the time grid. A path vector is zone-major: node
``z * G + g`` is grid node ``g`` of zone ``z``.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .copula import build_sampler, probit_inverse, sample
from .marginals import as_stack
from .time_grid import from_grid

MVN = "mvn_recursive"
EMPIRICAL = "gaussian_copula_empirical"
NAIVE = "naive"
INDEPENDENT = "independent"
GAUSSIAN_PREFIX = "independent_gaussian"

DEFAULT_METHODS = (MVN, EMPIRICAL, NAIVE, INDEPENDENT,
                   f"{GAUSSIAN_PREFIX}_5", f"{GAUSSIAN_PREFIX}_10")

_GAUSS_RE = re.compile(rf"^{GAUSSIAN_PREFIX}_(\d+(?:\.\d+)?)$")


def parse_method(name: str):
    """Return ``(family, beta)``; ``beta`` is None except for Gaussian methods."""
    if name in (MVN, EMPIRICAL, NAIVE, INDEPENDENT):
        return name, None
    m = _GAUSS_RE.match(name)
    if m:
        return GAUSSIAN_PREFIX, float(m.group(1))
    raise ValueError(f"unknown method {name!r}")


@dataclass
class TrajectorySet:
    day_index: int
    method: str
    S: int
    paths: np.ndarray
    grid_maps: tuple = ()
    seed: object = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.paths.shape[0] != self.S:
            raise ValueError("paths must have S rows")
        if np.any((self.paths < 0) | (self.paths > 1)):
            raise ValueError("trajectory values must lie in [0, 1]")

    @property
    def dim(self) -> int:
        return self.paths.shape[1]


def point_forecast(cdfs) -> np.ndarray:
    """Median of each node's predictive distribution."""
    stack = as_stack(cdfs)
    if stack is not None:
        return stack.inverse(np.full((1, len(stack)), 0.5))[0]
    return np.array([c.median() for c in cdfs])


def _invert_columns(cdfs, u):
    stack = as_stack(cdfs)
    if stack is not None:
        return stack.inverse(u)
    out = np.empty_like(u)
    for d, c in enumerate(cdfs):
        out[:, d] = c.inverse(u[:, d])
    return out


def _check_dim(cdfs, D):
    if len(cdfs) != D:
        raise ValueError(f"got {len(cdfs)} marginals for dimension {D}")


def generate_mvn(cdfs, R, S: int, seed=None, day_index: int = 0, grid_maps=(),
                 method: str = MVN) -> TrajectorySet:
    """Draw MVN(0, R), map through Phi, then through each node's inverse CDF."""
    R = np.asarray(R)
    _check_dim(cdfs, R.shape[0])
    x = sample(build_sampler(R, seed), S)
    paths = _invert_columns(cdfs, probit_inverse(x))
    return TrajectorySet(day_index, method, S, paths, tuple(grid_maps), seed)


def generate_independent(cdfs, S: int, seed=None, day_index: int = 0,
                         grid_maps=()) -> TrajectorySet:
    rng = np.random.default_rng(seed)
    u = rng.uniform(size=(S, len(cdfs)))
    paths = _invert_columns(cdfs, u)
    return TrajectorySet(day_index, INDEPENDENT, S, paths, tuple(grid_maps), seed)


def generate_naive(history, S: int, seed=None, day_index: int = 0,
                   grid_maps=()) -> TrajectorySet:
    """Resample whole past days (with replacement) as trajectories."""
    history = np.atleast_2d(np.asarray(history, dtype=float))
    if history.shape[0] == 0:
        raise ValueError("naive method needs at least one past day")
    rng = np.random.default_rng(seed)
    pick = rng.integers(0, history.shape[0], size=S)
    return TrajectorySet(day_index, NAIVE, S, history[pick].copy(), tuple(grid_maps),
                         seed, {"picked": pick.tolist()})


def generate_independent_gaussian(points, beta: float, S: int, seed=None,
                                  day_index: int = 0, grid_maps=()) -> TrajectorySet:
    """Normal noise with sd ``beta`` percent of the point forecast, clamped to [0, 1]."""
    if not beta > 0:
        raise ValueError("beta must be > 0")
    points = np.asarray(points, dtype=float)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((S, len(points)))
    paths = np.clip(points + (beta / 100.0) * points * z, 0.0, 1.0)
    name = f"{GAUSSIAN_PREFIX}_{beta:g}"
    return TrajectorySet(day_index, name, S, paths, tuple(grid_maps), seed,
                         {"beta": beta})


def to_hourly(tset: TrajectorySet) -> np.ndarray:
    """Per-zone hourly paths, shape ``(S, Z, H)``; zero outside daytime."""
    if not tset.grid_maps:
        raise ValueError("trajectory set carries no grid maps")
    G = tset.grid_maps[0].grid_size
    zones = [from_grid(tset.paths[:, z * G:(z + 1) * G], m)
             for z, m in enumerate(tset.grid_maps)]
    return np.stack(zones, axis=1)


def write_trajectories(tset: TrajectorySet, path) -> Path:
    """CSV of ``(s, zone, hour, value)`` rows plus a JSON metadata sidecar."""
    path = Path(path)
    hourly = to_hourly(tset)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "zone", "hour", "value"])
        for s in range(tset.S):
            for z, m in enumerate(tset.grid_maps):
                for h, v in zip(m.hours, hourly[s, z]):
                    w.writerow([s, m.zone_id, int(h), repr(float(v))])
    sidecar = path.with_suffix(".json")
    seed = tset.seed
    if isinstance(seed, np.random.SeedSequence):
        seed = {"entropy": seed.entropy, "spawn_key": list(seed.spawn_key)}
    sidecar.write_text(json.dumps({
        "day_index": tset.day_index, "method": tset.method, "S": tset.S,
        "seed": seed, "grid_maps": [m.to_dict() for m in tset.grid_maps],
    }, indent=1, sort_keys=True, default=int))
    return sidecar


def read_trajectories(path):
    """Load a trajectory CSV into ``(zones, hours, values[S, Z, H])``."""
    rows = np.genfromtxt(path, delimiter=",", names=True)
    zones = np.unique(rows["zone"]).astype(int)
    hours = np.unique(rows["hour"]).astype(int)
    S = int(rows["s"].max()) + 1
    out = np.zeros((S, len(zones), len(hours)))
    zi = np.searchsorted(zones, rows["zone"].astype(int))
    hi = np.searchsorted(hours, rows["hour"].astype(int))
    out[rows["s"].astype(int), zi, hi] = rows["value"]
    return zones, hours, out
