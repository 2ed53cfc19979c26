"""Seeded single-run simulation: setup, enrollment, four yearly ticks.

Agent state is held column-wise in numpy arrays; ``SimState.agents`` builds
:class:`~persist_abm.model.Agent` views when per-agent objects are wanted.

Random draws follow a fixed schedule on one dynamics stream so that two
configs differing only in fixed factor levels see exactly the same variates:

* setup:  one ``(n_deaf, k)`` uniform block for the ``k`` Uniform01 factors
* enroll: one attendance uniform per deaf agent, then teacher-link and
  student-link counts for every deaf agent (kept only for enrollees)
* tick:   one departure uniform per deaf agent per year (used only by students)

Grid placement and link endpoints come from a second, layout-only stream, so
turning the grid on or off never changes outcomes.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .model import (
    DEFAULT_HAZARDS,
    FACTOR_NAMES,
    MAX_STUDENT_LINKS,
    MAX_TEACHER_LINKS,
    Agent,
    AgentStatus,
    FactorMode,
    FactorSpec,
    FactorVector,
    HazardVector,
    departure_probability,
    persistence_level,
)

ENGINE_VERSION = "1.0.0"
TRACE_HEADER = (
    "run_seed",
    "year",
    "agent_id",
    "role",
    "status",
    "teacher_links",
    "student_links",
    "cell_x",
    "cell_y",
)
_U64 = 2**64
_STUDENT = int(AgentStatus.STUDENT)


class ConfigError(ValueError):
    """Raised for an invalid simulation or experiment configuration."""


def stream(master_seed: int, *keys: int) -> int:
    """Derive an independent 64-bit run seed from a master seed and integer keys."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class GridSpec:
    width: int = 33
    height: int = 33
    # (x0, y0, width, height) of the college block
    college_rect: tuple[int, int, int, int] = (9, 9, 15, 15)

    def __post_init__(self) -> None:
        x0, y0, w, h = self.college_rect
        if self.width <= 0 or self.height <= 0:
            raise ConfigError("grid dimensions must be positive")
        if x0 < 0 or y0 < 0 or w <= 0 or h <= 0 or x0 + w > self.width or y0 + h > self.height:
            raise ConfigError(f"college_rect {self.college_rect} does not fit a {self.width}x{self.height} grid")

    @classmethod
    def centered(cls, width: int = 33, height: int = 33, college: int = 15) -> "GridSpec":
        return cls(width, height, ((width - college) // 2, (height - college) // 2, college, college))

    def college_mask(self) -> np.ndarray:
        mask = np.zeros((self.height, self.width), dtype=bool)
        x0, y0, w, h = self.college_rect
        mask[y0 : y0 + h, x0 : x0 + w] = True
        return mask

    def in_college(self, x: int, y: int) -> bool:
        x0, y0, w, h = self.college_rect
        return x0 <= x < x0 + w and y0 <= y < y0 + h


def _default_factor_specs() -> tuple[FactorSpec, ...]:
    return tuple(FactorSpec.fixed(0.5) for _ in FACTOR_NAMES)


@dataclass(frozen=True)
class SimConfig:
    """Parameters of one run.  Defaults are the baseline population (200 agents,
    87.2% attendance, every factor fixed at 0.5)."""

    num_agents: int = 200
    frac_teachers: float = 0.1
    college_attendance_pct: float = 87.2
    factor_specs: tuple[FactorSpec, ...] = field(default_factory=_default_factor_specs)
    hazards: HazardVector = DEFAULT_HAZARDS
    years: int = 4
    seed: int = 0
    grid: Optional[GridSpec] = None

    def __post_init__(self) -> None:
        if int(self.num_agents) != self.num_agents or self.num_agents <= 0:
            raise ConfigError(f"num_agents must be a positive integer, got {self.num_agents!r}")
        if not (0.0 <= self.frac_teachers < 1.0):
            raise ConfigError(f"frac_teachers must lie in [0, 1), got {self.frac_teachers!r}")
        if not (0.0 <= self.college_attendance_pct <= 100.0):
            raise ConfigError(f"college_attendance_pct must lie in [0, 100], got {self.college_attendance_pct!r}")
        if len(self.factor_specs) != len(FACTOR_NAMES):
            raise ConfigError(f"expected {len(FACTOR_NAMES)} factor specs, got {len(self.factor_specs)}")
        if self.years not in (1, 2, 3, 4):
            raise ConfigError(f"years must be 1-4, got {self.years!r}")
        if not (0 <= int(self.seed) < _U64):
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")

    @property
    def num_teachers(self) -> int:
        # small epsilon so e.g. 200 * 0.015 = 2.9999999999999996 still floors to 3
        return int(np.floor(self.num_agents * self.frac_teachers + 1e-9))

    @property
    def num_deaf_agents(self) -> int:
        return self.num_agents - self.num_teachers

    def factor(self, name: str) -> FactorSpec:
        return self.factor_specs[factor_index(name)]

    def with_factor(self, name: str, spec: FactorSpec) -> "SimConfig":
        specs = list(self.factor_specs)
        specs[factor_index(name)] = spec
        return replace(self, factor_specs=tuple(specs))

    def with_factors(self, values: Sequence[float]) -> "SimConfig":
        return replace(self, factor_specs=tuple(FactorSpec.fixed(v) for v in values))

    def to_dict(self) -> dict:
        return {
            "num_agents": self.num_agents,
            "frac_teachers": self.frac_teachers,
            "college_attendance_pct": self.college_attendance_pct,
            "factors": {n: str(s) for n, s in zip(FACTOR_NAMES, self.factor_specs)},
            "hazards": list(self.hazards.as_tuple()),
            "years": self.years,
            "seed": int(self.seed),
            "grid": None if self.grid is None else asdict(self.grid),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        grid = d.get("grid")
        if grid is not None:
            grid = GridSpec(grid["width"], grid["height"], tuple(grid["college_rect"]))
        return cls(
            num_agents=int(d["num_agents"]),
            frac_teachers=float(d["frac_teachers"]),
            college_attendance_pct=float(d["college_attendance_pct"]),
            factor_specs=tuple(FactorSpec.parse(d["factors"][n]) for n in FACTOR_NAMES),
            hazards=HazardVector(*d["hazards"]),
            years=int(d["years"]),
            seed=int(d["seed"]),
            grid=grid,
        )


def factor_index(name: str) -> int:
    aliases = {"academic": "academic_experience", "skill": "social_skill", "integration": "social_integration"}
    name = aliases.get(name, name)
    try:
        return FACTOR_NAMES.index(name)
    except ValueError:
        raise ConfigError(f"unknown factor {name!r}; valid factors: {', '.join(FACTOR_NAMES)}") from None


@dataclass(frozen=True)
class RunResult:
    attended: int
    persisted_by_year: tuple[int, ...]
    departed_by_year: tuple[int, ...]
    graduates: int
    quitters: int
    never_attended: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "attended": self.attended,
            "persisted_by_year": list(self.persisted_by_year),
            "departed_by_year": list(self.departed_by_year),
            "graduates": self.graduates,
            "quitters": self.quitters,
            "never_attended": self.never_attended,
            "seed": self.seed,
        }


@dataclass
class SimState:
    status: np.ndarray  # int8, AgentStatus codes
    factors: np.ndarray  # (num_agents, 4); zero rows for teachers
    teacher_links: np.ndarray
    student_links: np.ndarray
    departed_in_year: np.ndarray  # 0 = never departed
    num_teachers: int
    current_year: int
    rng: np.random.Generator
    layout_rng: np.random.Generator
    cells: Optional[np.ndarray] = None  # (num_agents, 2) as (x, y)
    occupied: Optional[np.ndarray] = None  # (height, width) bool
    peers: dict = field(default_factory=dict)  # agent id -> (teacher ids, student ids)
    level: Optional[np.ndarray] = None  # per deaf agent; links never change after enrollment

    @property
    def num_agents(self) -> int:
        return len(self.status)

    def counts(self) -> dict[AgentStatus, int]:
        tally = np.bincount(self.status, minlength=len(AgentStatus))
        return {s: int(tally[s]) for s in AgentStatus}

    def agent(self, i: int) -> Agent:
        status = AgentStatus(int(self.status[i]))
        factors = None
        if status is not AgentStatus.TEACHER:
            factors = FactorVector(*(float(v) for v in self.factors[i]))
        cell = None if self.cells is None else (int(self.cells[i, 0]), int(self.cells[i, 1]))
        year = int(self.departed_in_year[i])
        return Agent(
            id=i,
            status=status,
            factors=factors,
            teacher_links=int(self.teacher_links[i]),
            student_links=int(self.student_links[i]),
            cell=cell,
            departed_in_year=year or None,
        )

    @property
    def agents(self) -> list[Agent]:
        return [self.agent(i) for i in range(self.num_agents)]


def _free_cells(state: SimState, grid: GridSpec, college: bool) -> np.ndarray:
    mask = grid.college_mask()
    if not college:
        mask = ~mask
    return np.flatnonzero(mask & ~state.occupied)


def _relocate(state: SimState, grid: GridSpec, ids: np.ndarray, college: bool) -> None:
    if len(ids) == 0:
        return
    if state.cells[ids[0], 0] >= 0:
        state.occupied[state.cells[ids, 1], state.cells[ids, 0]] = False
    free = _free_cells(state, grid, college)
    if len(free) < len(ids):
        where = "college" if college else "residential"
        raise ConfigError(f"grid has {len(free)} free {where} cells for {len(ids)} agents")
    picked = state.layout_rng.choice(free, size=len(ids), replace=False)
    ys, xs = np.divmod(picked, grid.width)
    state.cells[ids, 0] = xs
    state.cells[ids, 1] = ys
    state.occupied[ys, xs] = True


def setup(config: SimConfig) -> SimState:
    n, n_teachers = config.num_agents, config.num_teachers
    n_deaf = n - n_teachers
    dyn, layout = np.random.SeedSequence(int(config.seed)).spawn(2)
    rng = np.random.Generator(np.random.PCG64(dyn))
    layout_rng = np.random.Generator(np.random.PCG64(layout))

    status = np.full(n, AgentStatus.RESIDENT, dtype=np.int8)
    status[:n_teachers] = AgentStatus.TEACHER

    factors = np.zeros((n, len(FACTOR_NAMES)))
    uniform_cols = [j for j, s in enumerate(config.factor_specs) if s.mode is FactorMode.UNIFORM01]
    for j, spec in enumerate(config.factor_specs):
        if spec.mode is FactorMode.FIXED:
            factors[n_teachers:, j] = spec.value
    if uniform_cols:
        factors[n_teachers:, uniform_cols] = rng.random((n_deaf, len(uniform_cols)))

    state = SimState(
        status=status,
        factors=factors,
        teacher_links=np.zeros(n, dtype=np.int64),
        student_links=np.zeros(n, dtype=np.int64),
        departed_in_year=np.zeros(n, dtype=np.int64),
        num_teachers=n_teachers,
        current_year=0,
        rng=rng,
        layout_rng=layout_rng,
    )

    grid = config.grid
    if grid is not None:
        college_cells = int(grid.college_mask().sum())
        residential_cells = grid.width * grid.height - college_cells
        # worst case: every deaf agent enrolls
        if college_cells < n:
            raise ConfigError(
                f"college needs {n} cells (teachers plus every possible student) "
                f"but has {college_cells}; deficit {n - college_cells}"
            )
        if residential_cells < n_deaf:
            raise ConfigError(
                f"residential area needs {n_deaf} cells but has {residential_cells}; "
                f"deficit {n_deaf - residential_cells}"
            )
        state.cells = np.full((n, 2), -1, dtype=np.int64)
        state.occupied = np.zeros((grid.height, grid.width), dtype=bool)
        _relocate(state, grid, np.arange(n_teachers), college=True)
        _relocate(state, grid, np.arange(n_teachers, n), college=False)
    return state


def form_links(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw teacher-link (0-3) and student-link (0-8) counts for ``n`` agents."""
    teacher = rng.integers(0, MAX_TEACHER_LINKS + 1, size=n)
    student = rng.integers(0, MAX_STUDENT_LINKS + 1, size=n)
    return teacher, student


def _draw_peers(state: SimState, enrolled: np.ndarray) -> None:
    teachers = np.arange(state.num_teachers)
    for i in enrolled:
        others = enrolled[enrolled != i]
        k_t = min(int(state.teacher_links[i]), len(teachers))
        k_s = min(int(state.student_links[i]), len(others))
        t = state.layout_rng.choice(teachers, size=k_t, replace=False) if k_t else teachers[:0]
        s = state.layout_rng.choice(others, size=k_s, replace=False) if k_s else others[:0]
        state.peers[int(i)] = (tuple(sorted(int(x) for x in t)), tuple(sorted(int(x) for x in s)))


def _levels(state: SimState) -> np.ndarray:
    t = state.num_teachers
    f = state.factors[t:]
    return persistence_level(f[:, 0], f[:, 1], f[:, 2], f[:, 3], state.teacher_links[t:], state.student_links[t:])


def enroll(state: SimState, config: SimConfig) -> SimState:
    if state.current_year != 0:
        raise RuntimeError(f"enrollment happens before year 1, state is at year {state.current_year}")
    deaf = slice(state.num_teachers, state.num_agents)
    n_deaf = state.num_agents - state.num_teachers
    attends = state.rng.random(n_deaf) < config.college_attendance_pct / 100.0
    teacher_links, student_links = form_links(state.rng, n_deaf)
    state.status[deaf][attends] = AgentStatus.STUDENT
    state.teacher_links[deaf] = np.where(attends, teacher_links, 0)
    state.student_links[deaf] = np.where(attends, student_links, 0)
    state.level = _levels(state)
    if config.grid is not None:
        enrolled = np.flatnonzero(state.status == AgentStatus.STUDENT)
        _relocate(state, config.grid, enrolled, college=True)
        _draw_peers(state, enrolled)
    return state


def tick(state: SimState, config: SimConfig) -> SimState:
    year = state.current_year + 1
    if year > config.years:
        raise RuntimeError(f"run already finished after year {config.years}")
    t = state.num_teachers
    u = state.rng.random(state.num_agents - t)
    students = state.status[t:] == _STUDENT
    level = state.level if state.level is not None else _levels(state)
    leaving = students & (u < departure_probability(level, year, config.hazards))
    quit_ids = np.flatnonzero(leaving) + t
    state.status[quit_ids] = AgentStatus.QUITTER
    state.departed_in_year[quit_ids] = year
    if config.grid is not None:
        _relocate(state, config.grid, quit_ids, college=False)
    if year == config.years:
        grad_ids = np.flatnonzero(state.status == AgentStatus.STUDENT)
        state.status[grad_ids] = AgentStatus.GRADUATE
        if config.grid is not None:
            _relocate(state, config.grid, grad_ids, college=False)
    state.current_year = year
    return state


def tally(state: SimState, config: SimConfig) -> RunResult:
    t = state.num_teachers
    status = state.status[t:]
    attended = int(np.count_nonzero(status != AgentStatus.RESIDENT))
    departed = np.bincount(state.departed_in_year[t:], minlength=config.years + 1)[1:]
    persisted = attended - np.cumsum(departed)
    return RunResult(
        attended=attended,
        persisted_by_year=tuple(int(x) for x in persisted),
        departed_by_year=tuple(int(x) for x in departed),
        graduates=int(np.count_nonzero(status == AgentStatus.GRADUATE)),
        quitters=int(np.count_nonzero(status == AgentStatus.QUITTER)),
        never_attended=int(np.count_nonzero(status == AgentStatus.RESIDENT)),
        seed=int(config.seed),
    )


def trace_rows(state: SimState, seed: int) -> list[tuple]:
    rows = []
    for i in range(state.num_agents):
        status = AgentStatus(int(state.status[i]))
        x = y = ""
        if state.cells is not None:
            x, y = int(state.cells[i, 0]), int(state.cells[i, 1])
        rows.append(
            (
                int(seed),
                state.current_year,
                i,
                "teacher" if status is AgentStatus.TEACHER else "deaf",
                status.name.lower(),
                int(state.teacher_links[i]),
                int(state.student_links[i]),
                x,
                y,
            )
        )
    return rows


def simulate(config: SimConfig, on_boundary=None) -> tuple[RunResult, SimState]:
    """Run all ticks; ``on_boundary(state)`` is called after setup and after every tick."""
    state = setup(config)
    if on_boundary is not None:
        on_boundary(state)
    enroll(state, config)
    for _ in range(config.years):
        tick(state, config)
        if on_boundary is not None:
            on_boundary(state)
    return tally(state, config), state


def run(config: SimConfig) -> RunResult:
    return simulate(config)[0]


def run_with_trace(config: SimConfig) -> tuple[RunResult, list[tuple]]:
    rows: list[tuple] = []
    result, _ = simulate(config, lambda s: rows.extend(trace_rows(s, config.seed)))
    return result, rows


def trace_csv(rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    writer.writerows(rows)
    return buf.getvalue()
