"""State-machine and bookkeeping checks, snapshotting after every engine operation."""

from __future__ import annotations

import numpy as np

from persist_abm.engine import SimConfig, enroll, setup, tally, tick
from persist_abm.model import LEGAL_TRANSITIONS, AgentStatus

LINKED = (AgentStatus.STUDENT, AgentStatus.QUITTER, AgentStatus.GRADUATE)


def _snapshot(state, stage):
    return {
        "year": state.current_year,
        "stage": stage,
        "status": state.status.copy(),
        "teacher_links": state.teacher_links.copy(),
        "student_links": state.student_links.copy(),
        "departed": state.departed_in_year.copy(),
        "cells": None if state.cells is None else state.cells.copy(),
    }


def check_run(config: SimConfig) -> list[str]:
    """Return a list of violated invariants (empty when the run is clean)."""
    state = setup(config)
    snaps = [_snapshot(state, "setup")]
    enroll(state, config)
    snaps.append(_snapshot(state, "enroll"))
    for _ in range(config.years):
        tick(state, config)
        snaps.append(_snapshot(state, "tick"))
    result = tally(state, config)
    bad: list[str] = []
    n, t = config.num_agents, config.num_teachers

    for snap in snaps:
        y, status = snap["year"], snap["status"]
        counts = np.bincount(status, minlength=5)
        if counts.sum() != n:
            bad.append(f"year {y}: {counts.sum()} agents, expected {n}")
        if counts[AgentStatus.TEACHER] != t or np.any(status[:t] != AgentStatus.TEACHER):
            bad.append(f"year {y}: teacher roster changed")
        if np.any(snap["teacher_links"] > 3) or np.any(snap["student_links"] > 8):
            bad.append(f"year {y}: link cap exceeded")
        if np.any(snap["teacher_links"] < 0) or np.any(snap["student_links"] < 0):
            bad.append(f"year {y}: negative link count")
        unlinked = ~np.isin(status, [int(s) for s in LINKED])
        if np.any(snap["teacher_links"][unlinked]) or np.any(snap["student_links"][unlinked]):
            bad.append(f"year {y}: links on an agent that never attended")
        quitter = status == AgentStatus.QUITTER
        if np.any((snap["departed"] > 0) != quitter):
            bad.append(f"year {y}: departed_in_year out of sync with quitter status")
        if np.any(snap["departed"] > y):
            bad.append(f"year {y}: departure recorded in the future")
        if snap["cells"] is not None:
            cells = snap["cells"]
            if len({(int(a), int(b)) for a, b in cells}) != n:
                bad.append(f"year {y}: two agents share a cell")
            grid = config.grid
            inside = np.array([grid.in_college(int(a), int(b)) for a, b in cells])
            should = (status == AgentStatus.TEACHER) | (status == AgentStatus.STUDENT)
            if np.any(inside != should):
                bad.append(f"year {y}: agent on the wrong side of the college boundary")

    for prev, cur in zip(snaps, snaps[1:]):
        year = cur["year"] if cur["stage"] == "tick" else 1
        for i in range(n):
            a, b = AgentStatus(int(prev["status"][i])), AgentStatus(int(cur["status"][i]))
            if (a, b) not in LEGAL_TRANSITIONS:
                bad.append(f"year {year}: agent {i} moved {a.name}->{b.name}")
            if a is AgentStatus.RESIDENT and b is AgentStatus.STUDENT and year != 1:
                bad.append(f"year {year}: agent {i} enrolled after year 1")
            if b is AgentStatus.GRADUATE and a is not AgentStatus.GRADUATE and year != config.years:
                bad.append(f"year {year}: agent {i} graduated early")
        if prev["stage"] != "setup":
            for key in ("teacher_links", "student_links"):
                if np.any(prev[key] != cur[key]):
                    bad.append(f"year {year}: {key} changed after enrollment")

    final = AgentStatus.STUDENT
    if np.any(snaps[-1]["status"] == final):
        bad.append("students remain after the final year")

    r = result
    if r.attended != r.graduates + r.quitters:
        bad.append("attended != graduates + quitters")
    if r.persisted_by_year[-1] != r.graduates:
        bad.append("final persisted count != graduates")
    if sum(r.departed_by_year) != r.quitters:
        bad.append("departures do not sum to quitters")
    if any(a < b for a, b in zip(r.persisted_by_year, r.persisted_by_year[1:])):
        bad.append("persisted_by_year increases")
    expected = list(r.attended - np.cumsum(r.departed_by_year))
    if list(r.persisted_by_year) != expected:
        bad.append("persisted_by_year != attended - cumulative departures")
    if r.attended + r.never_attended != config.num_deaf_agents:
        bad.append("attended + never_attended != deaf agents")
    return bad
