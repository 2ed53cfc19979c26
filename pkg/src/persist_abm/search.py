"""Behavior search over the four-factor grid by random-restart hill climbing."""

from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from .engine import ConfigError, SimConfig, run, stream
from .model import FactorVector

Point = tuple[int, int, int, int]  # grid indices in FactorVector order
TRAJECTORY_HEADER = ("search_id", "evaluation", "goal", "academic", "skill", "integration", "fitness", "best_so_far")


class Objective(str, Enum):
    MAXIMIZE_GRADUATES = "max-graduates"
    MINIMIZE_QUITTERS = "min-quitters"

    @property
    def maximize(self) -> bool:
        return self is Objective.MAXIMIZE_GRADUATES

    def better(self, a: float, b: float) -> bool:
        """True if ``a`` strictly beats ``b``."""
        return a > b if self.maximize else a < b


@dataclass(frozen=True)
class SearchSpec:
    objective: Objective = Objective.MAXIMIZE_GRADUATES
    grid_step: float = 0.1
    fitness_replicates: int = 10
    num_searches: int = 10
    max_evaluations: int = 200
    base_config: SimConfig = field(default_factory=SimConfig)
    master_seed: int = 0
    common_random_numbers: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "objective", Objective(self.objective))
        steps = 1.0 / self.grid_step if self.grid_step > 0 else 0.0
        if self.grid_step <= 0 or self.grid_step > 1 or abs(steps - round(steps)) > 1e-9:
            raise ConfigError(f"grid_step must divide [0, 1] evenly, got {self.grid_step!r}")
        if self.fitness_replicates < 1 or self.num_searches < 1 or self.max_evaluations < 1:
            raise ConfigError("replicates, searches and evaluation budget must all be positive")

    @property
    def levels_per_axis(self) -> int:
        return int(round(1.0 / self.grid_step)) + 1

    def value(self, index: int) -> float:
        return round(index * self.grid_step, 10)

    def to_vector(self, point: Point) -> FactorVector:
        return FactorVector(*(self.value(i) for i in point))

    def index_of(self, vector: FactorVector) -> Point:
        idx = tuple(int(round(v / self.grid_step)) for v in vector.as_tuple())
        if any(abs(self.value(i) - v) > 1e-9 for i, v in zip(idx, vector.as_tuple())):
            raise ConfigError(f"{vector} is not on the {self.grid_step} grid")
        return idx

    def to_dict(self) -> dict:
        return {
            "objective": self.objective.value,
            "grid_step": self.grid_step,
            "fitness_replicates": self.fitness_replicates,
            "num_searches": self.num_searches,
            "max_evaluations": self.max_evaluations,
            "base_config": self.base_config.to_dict(),
            "master_seed": int(self.master_seed),
            "common_random_numbers": self.common_random_numbers,
        }


@dataclass(frozen=True)
class Step:
    search_id: int
    evaluation: int
    point: FactorVector
    fitness: float
    best_so_far: float


@dataclass
class SearchOutcome:
    best_point: FactorVector
    best_fitness: float
    trajectory: list[Step]
    per_search_bests: list[tuple[FactorVector, float]]
    evaluations: list[int] = field(default_factory=list)


def _point_key(vector: FactorVector) -> int:
    # stable across processes, unlike hash()
    return int(sum(round(v * 1000) * 1001**k for k, v in enumerate(vector.as_tuple())))


def replicate_values(point: FactorVector, spec: SearchSpec) -> np.ndarray:
    """Objective metric for each fitness replicate at ``point``."""
    base = spec.base_config.with_factors(point.as_tuple())
    out = np.empty(spec.fitness_replicates)
    for rep in range(spec.fitness_replicates):
        if spec.common_random_numbers:
            seed = stream(spec.master_seed, 0, rep)
        else:
            seed = stream(spec.master_seed, 0, _point_key(point), rep)
        result = run(replace(base, seed=seed))
        out[rep] = result.graduates if spec.objective.maximize else result.quitters
    return out


def evaluate_fitness(point: FactorVector, spec: SearchSpec) -> float:
    """Mean graduates (or quitters) over the fitness replicates."""
    return float(replicate_values(point, spec).mean())


def noise_band(point: FactorVector, spec: SearchSpec, z: float = 2.0) -> float:
    """``z`` standard errors of the fitness estimate at ``point``."""
    values = replicate_values(point, spec)
    if len(values) < 2:
        return 0.0
    return float(z * values.std(ddof=1) / np.sqrt(len(values)))


def _neighbors(point: Point, n_levels: int) -> list[Point]:
    out = []
    for axis in range(4):
        for delta in (-1, 1):
            i = point[axis] + delta
            if 0 <= i < n_levels:
                out.append(point[:axis] + (i,) + point[axis + 1 :])
    return out


def hill_search(spec: SearchSpec, search_index: int, cache: Optional[dict] = None) -> SearchOutcome:
    """Steepest-ascent hill climbing with random restarts on the factor grid.

    Every distinct grid point evaluated counts against ``max_evaluations``.
    ``cache`` may hold fitness values shared across searches; it only saves
    work, since fitness for a point is deterministic.
    """
    cache = {} if cache is None else cache
    n = spec.levels_per_axis
    total_points = n**4
    rng = np.random.Generator(np.random.PCG64(stream(spec.master_seed, 1, search_index)))
    obj = spec.objective
    memo: dict[Point, float] = {}
    trajectory: list[Step] = []
    best: Optional[tuple[Point, float]] = None

    def fitness(p: Point) -> Optional[float]:
        nonlocal best
        if p in memo:
            return memo[p]
        if len(memo) >= spec.max_evaluations:
            return None
        if p not in cache:
            cache[p] = evaluate_fitness(spec.to_vector(p), spec)
        f = memo[p] = cache[p]
        if best is None or obj.better(f, best[1]):
            best = (p, f)
        trajectory.append(Step(search_index, len(memo), spec.to_vector(p), f, best[1]))
        return f

    while len(memo) < min(spec.max_evaluations, total_points):
        current = tuple(int(i) for i in rng.integers(0, n, size=4))
        current_fit = fitness(current)
        while current_fit is not None:
            move, move_fit = None, current_fit
            for nb in _neighbors(current, n):
                f = fitness(nb)
                if f is None:
                    break
                if obj.better(f, move_fit):
                    move, move_fit = nb, f
            if move is None:
                break
            current, current_fit = move, move_fit

    point, value = best
    return SearchOutcome(
        best_point=spec.to_vector(point),
        best_fitness=value,
        trajectory=trajectory,
        per_search_bests=[(spec.to_vector(point), value)],
        evaluations=[len(memo)],
    )


def _search_job(args):
    spec, index = args
    return hill_search(spec, index)


def run_searches(spec: SearchSpec, jobs: int = 1) -> SearchOutcome:
    """Run ``num_searches`` independent searches and keep the global best.

    Ties between searches go to the lowest search index.
    """
    indices = range(spec.num_searches)
    if jobs > 1 and spec.num_searches > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_search_job, [(spec, i) for i in indices]))
    else:
        cache: dict = {}
        outcomes = [hill_search(spec, i, cache) for i in indices]

    best = outcomes[0]
    for o in outcomes[1:]:
        if spec.objective.better(o.best_fitness, best.best_fitness):
            best = o
    return SearchOutcome(
        best_point=best.best_point,
        best_fitness=best.best_fitness,
        trajectory=[s for o in outcomes for s in o.trajectory],
        per_search_bests=[b for o in outcomes for b in o.per_search_bests],
        evaluations=[e for o in outcomes for e in o.evaluations],
    )


def exhaustive(spec: SearchSpec, step: Optional[float] = None) -> tuple[FactorVector, float, dict[FactorVector, float]]:
    """Evaluate every point of a (possibly coarser) grid; return best point, fitness, and all values."""
    coarse = replace(spec, grid_step=step) if step is not None else spec
    n = coarse.levels_per_axis
    values = {}
    for p in itertools.product(range(n), repeat=4):
        vec = coarse.to_vector(p)
        values[vec] = evaluate_fitness(vec, coarse)
    best_vec = None
    for vec, f in values.items():
        if best_vec is None or spec.objective.better(f, values[best_vec]):
            best_vec = vec
    return best_vec, values[best_vec], values
