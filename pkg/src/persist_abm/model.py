"""Domain types and the pure factor / departure rules of the persistence model.

Four non-cognitive factors drive a student's yearly departure decision.  Goal
and social skill are exogenous.  Academic experience and social integration
start from a user-set initial level that is scaled by the number of links a
student forms with teachers and peers respectively.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Optional, Union

import numpy as np

FACTOR_NAMES = ("goal", "social_skill", "academic_experience", "social_integration")

MAX_TEACHER_LINKS = 3
MAX_STUDENT_LINKS = 8
LINK_BASE = 0.2
LINK_STEP = 0.1


def _check_fraction(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")


class FactorMode(str, Enum):
    FIXED = "fixed"
    UNIFORM01 = "uniform01"


@dataclass(frozen=True)
class FactorSpec:
    """How one factor is assigned to deaf agents at setup."""

    mode: FactorMode = FactorMode.FIXED
    value: float = 0.5

    def __post_init__(self) -> None:
        if self.mode is FactorMode.FIXED:
            _check_fraction("fixed factor value", self.value)

    @classmethod
    def fixed(cls, value: float) -> "FactorSpec":
        return cls(FactorMode.FIXED, float(value))

    @classmethod
    def uniform(cls) -> "FactorSpec":
        return cls(FactorMode.UNIFORM01, 0.0)

    @classmethod
    def parse(cls, text: Union[str, float]) -> "FactorSpec":
        """Accept ``"uniform"`` / ``"u(0,1)"`` or a number."""
        if isinstance(text, str) and text.strip().lower() in ("uniform", "uniform01", "u(0,1)"):
            return cls.uniform()
        return cls.fixed(float(text))

    def __str__(self) -> str:
        return "uniform" if self.mode is FactorMode.UNIFORM01 else repr(self.value)


@dataclass(frozen=True)
class FactorVector:
    goal: float
    social_skill: float
    academic_experience_init: float
    social_integration_init: float

    def __post_init__(self) -> None:
        for name, value in zip(FACTOR_NAMES, self.as_tuple()):
            _check_fraction(name, value)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (
            self.goal,
            self.social_skill,
            self.academic_experience_init,
            self.social_integration_init,
        )


@dataclass(frozen=True)
class HazardVector:
    """Per-year base departure hazards, non-increasing over the four years."""

    h1: float
    h2: float
    h3: float
    h4: float

    def __post_init__(self) -> None:
        values = self.as_tuple()
        for i, h in enumerate(values, start=1):
            _check_fraction(f"h{i}", h)
        if any(a < b for a, b in zip(values, values[1:])):
            raise ValueError(f"hazards must be non-increasing by year, got {values}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.h1, self.h2, self.h3, self.h4)

    def __getitem__(self, year: int) -> float:
        if year not in (1, 2, 3, 4):
            raise IndexError(f"year must be 1-4, got {year}")
        return self.as_tuple()[year - 1]


# Result of calibrate() under its default search; see experiments.calibrate.
DEFAULT_HAZARDS = HazardVector(0.95, 0.60, 0.35, 0.25)


class AgentStatus(IntEnum):
    TEACHER = 0
    RESIDENT = 1
    STUDENT = 2
    QUITTER = 3
    GRADUATE = 4


LEGAL_TRANSITIONS = frozenset(
    {
        (AgentStatus.TEACHER, AgentStatus.TEACHER),
        (AgentStatus.RESIDENT, AgentStatus.RESIDENT),
        (AgentStatus.RESIDENT, AgentStatus.STUDENT),
        (AgentStatus.STUDENT, AgentStatus.STUDENT),
        (AgentStatus.STUDENT, AgentStatus.QUITTER),
        (AgentStatus.STUDENT, AgentStatus.GRADUATE),
        (AgentStatus.QUITTER, AgentStatus.QUITTER),
        (AgentStatus.GRADUATE, AgentStatus.GRADUATE),
    }
)


@dataclass
class Agent:
    id: int
    status: AgentStatus
    factors: Optional[FactorVector] = None
    teacher_links: int = 0
    student_links: int = 0
    cell: Optional[tuple[int, int]] = None
    departed_in_year: Optional[int] = None

    @property
    def is_teacher(self) -> bool:
        return self.status is AgentStatus.TEACHER


def effective_factor(initial, links):
    """Scale an initial factor level by the link-derived multiplier.

    Each link adds 0.1 on top of a 0.2 floor; the result is clamped to [0, 1].
    Works elementwise on numpy arrays as well as on scalars.
    """
    value = np.clip(np.multiply(initial, LINK_BASE + LINK_STEP * np.asarray(links)), 0.0, 1.0)
    return float(value) if np.ndim(value) == 0 else value


def persistence_level(goal, social_skill, academic_init, integration_init, teacher_links, student_links):
    """Equal-weight mean of the four effective factors (vectorised)."""
    total = (
        np.asarray(goal, dtype=float)
        + social_skill
        + effective_factor(academic_init, teacher_links)
        + effective_factor(integration_init, student_links)
    )
    level = total / 4.0
    return float(level) if np.ndim(level) == 0 else level


def composite_persistence_level(agent: Agent) -> float:
    if agent.status is not AgentStatus.STUDENT:
        raise ValueError(f"agent {agent.id} is {agent.status.name}, not a student")
    f = agent.factors
    return persistence_level(
        f.goal,
        f.social_skill,
        f.academic_experience_init,
        f.social_integration_init,
        agent.teacher_links,
        agent.student_links,
    )


def departure_probability(level, year: int, hazards: HazardVector):
    """Chance that a student at ``level`` leaves during ``year``."""
    p = hazards[year] * (1.0 - np.asarray(level, dtype=float))
    p = np.clip(p, 0.0, 1.0)
    return float(p) if np.ndim(p) == 0 else p
