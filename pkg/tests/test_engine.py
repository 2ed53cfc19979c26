from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from persist_abm.engine import (
    TRACE_HEADER,
    ConfigError,
    GridSpec,
    SimConfig,
    enroll,
    form_links,
    run,
    run_with_trace,
    setup,
    simulate,
    stream,
    tick,
    trace_csv,
)
from persist_abm.model import AgentStatus, FactorSpec, HazardVector

from invariants import check_run

TABLE1 = SimConfig()


@pytest.mark.parametrize(
    "frac, teachers, residents",
    [(0.1, 20, 180), (0.0, 0, 200), (0.015, 3, 197)],
)
def test_setup_roster(frac, teachers, residents):
    state = setup(replace(TABLE1, frac_teachers=frac))
    roles = [a.status for a in state.agents]
    assert roles.count(AgentStatus.TEACHER) == teachers
    assert roles.count(AgentStatus.RESIDENT) == residents
    assert all(a.id == i for i, a in enumerate(state.agents))


def test_setup_uniform_factors_drawn_per_agent():
    cfg = TABLE1.with_factor("goal", FactorSpec.uniform())
    state = setup(cfg)
    goals = state.factors[cfg.num_teachers :, 0]
    assert len(set(goals)) == cfg.num_deaf_agents
    assert np.all((goals >= 0) & (goals < 1))
    assert np.all(state.factors[cfg.num_teachers :, 1] == 0.5)


def test_config_validation():
    with pytest.raises(ConfigError):
        SimConfig(num_agents=0)
    with pytest.raises(ConfigError):
        SimConfig(frac_teachers=1.0)
    with pytest.raises(ConfigError):
        SimConfig(college_attendance_pct=101)
    with pytest.raises(ConfigError):
        SimConfig(years=5)
    with pytest.raises(ConfigError):
        SimConfig(seed=-1)


def test_grid_deficit_is_named():
    small = GridSpec(10, 10, (3, 3, 4, 4))
    with pytest.raises(ConfigError, match="deficit 184"):
        setup(replace(TABLE1, grid=small))


def test_enroll_extremes():
    everyone = setup(replace(TABLE1, college_attendance_pct=100))
    enroll(everyone, replace(TABLE1, college_attendance_pct=100))
    assert everyone.counts()[AgentStatus.STUDENT] == 180
    nobody = setup(replace(TABLE1, college_attendance_pct=0))
    enroll(nobody, replace(TABLE1, college_attendance_pct=0))
    assert nobody.counts()[AgentStatus.STUDENT] == 0


def test_enroll_only_before_year_one():
    state = setup(TABLE1)
    enroll(state, TABLE1)
    tick(state, TABLE1)
    with pytest.raises(RuntimeError):
        enroll(state, TABLE1)


def test_mean_attendance_matches_binomial():
    attended = [run(replace(TABLE1, seed=stream(11, s))).attended for s in range(1000)]
    assert 180 * 0.872 == pytest.approx(156.96)
    assert np.mean(attended) == pytest.approx(156.96, abs=1.0)


def test_form_links_support_and_means():
    rng = np.random.default_rng(5)
    teacher, student = form_links(rng, 100_000)
    assert set(np.unique(teacher)) == {0, 1, 2, 3}
    assert set(np.unique(student)) == set(range(9))
    assert teacher.mean() == pytest.approx(1.5, abs=0.02)
    assert student.mean() == pytest.approx(4.0, abs=0.04)


def test_students_at_level_one_never_depart():
    cfg = replace(TABLE1.with_factors([1, 1, 1, 1]), seed=3)
    state = setup(cfg)
    enroll(state, cfg)
    enrolled = int(state.counts()[AgentStatus.STUDENT])
    state.level = np.ones(cfg.num_deaf_agents)
    for _ in range(4):
        tick(state, cfg)
    assert state.counts()[AgentStatus.QUITTER] == 0
    assert state.counts()[AgentStatus.GRADUATE] == enrolled


def test_maxed_links_still_leave_departure_risk():
    # teacher links cap the academic term at 0.5, so all-ones factors give level 0.875
    cfg = replace(TABLE1.with_factors([1, 1, 1, 1]), seed=3)
    state = setup(cfg)
    enroll(state, cfg)
    students = state.status[cfg.num_teachers :] == AgentStatus.STUDENT
    maxed = (state.teacher_links[cfg.num_teachers :] == 3) & (state.student_links[cfg.num_teachers :] == 8)
    assert np.allclose(state.level[students & maxed], 0.875)


def test_zero_hazards_everyone_graduates():
    r = run(replace(TABLE1, hazards=HazardVector(0, 0, 0, 0), seed=9))
    assert r.quitters == 0
    assert r.graduates == r.attended


def test_zero_attendance_run():
    r = run(replace(TABLE1, college_attendance_pct=0, seed=1))
    assert (r.attended, r.graduates, r.quitters) == (0, 0, 0)
    assert r.never_attended == 180


def test_run_is_deterministic():
    cfg = replace(TABLE1, seed=42)
    assert run(cfg) == run(cfg)
    assert run(cfg) != run(replace(cfg, seed=43))


def test_grid_does_not_change_outcomes():
    cfg = replace(TABLE1, seed=8)
    assert run(cfg) == run(replace(cfg, grid=GridSpec()))


def test_table1_reps_persistence_non_increasing():
    for rep in range(10):
        r = run(replace(TABLE1, seed=stream(1, rep)))
        assert all(a >= b for a, b in zip(r.persisted_by_year, r.persisted_by_year[1:]))


def test_year_one_departures_dominate():
    totals = np.zeros(4)
    for s in range(1000):
        totals += run(replace(TABLE1, seed=stream(3, s))).departed_by_year
    share = totals / totals.sum()
    assert share[0] > share[1:].max()


def test_trace_export():
    cfg = replace(TABLE1, seed=7, grid=GridSpec())
    result, rows = run_with_trace(cfg)
    text = trace_csv(rows)
    lines = text.split("\n")
    assert lines[0] == ",".join(TRACE_HEADER)
    assert len(rows) == 5 * cfg.num_agents
    assert text.endswith("\n") and "\r" not in text
    final = [r for r in rows if r[1] == 4]
    assert sum(1 for r in final if r[4] == "graduate") == result.graduates
    assert text == trace_csv(run_with_trace(cfg)[1])


def test_trace_without_grid_leaves_cells_blank():
    _, rows = run_with_trace(replace(TABLE1, num_agents=10, seed=2))
    assert all(r[7] == "" and r[8] == "" for r in rows)


def test_link_peers_drawn_with_grid():
    cfg = replace(TABLE1, seed=4, grid=GridSpec())
    _, state = simulate(cfg)
    assert state.peers
    for i, (teachers, students) in state.peers.items():
        assert len(teachers) <= state.teacher_links[i]
        assert all(t < cfg.num_teachers for t in teachers)
        assert i not in students


def test_agent_view_round_trip():
    cfg = replace(TABLE1, seed=6)
    _, state = simulate(cfg)
    quitters = [a for a in state.agents if a.status is AgentStatus.QUITTER]
    assert quitters and all(a.departed_in_year in (1, 2, 3, 4) for a in quitters)
    assert all(a.departed_in_year is None for a in state.agents if a.status is not AgentStatus.QUITTER)


def test_config_dict_round_trip():
    cfg = replace(TABLE1.with_factor("goal", FactorSpec.uniform()), seed=99, grid=GridSpec())
    assert SimConfig.from_dict(cfg.to_dict()) == cfg


@st.composite
def configs(draw):
    num_agents = draw(st.integers(1, 120))
    hz = sorted((draw(st.floats(0, 1)) for _ in range(4)), reverse=True)
    specs = tuple(
        draw(st.one_of(st.just(FactorSpec.uniform()), st.floats(0, 1).map(FactorSpec.fixed)))
        for _ in range(4)
    )
    grid = draw(st.one_of(st.none(), st.just(GridSpec.centered(33, 33, 15))))
    return SimConfig(
        num_agents=num_agents,
        frac_teachers=draw(st.floats(0, 0.9)),
        college_attendance_pct=draw(st.floats(0, 100)),
        factor_specs=specs,
        hazards=HazardVector(*hz),
        years=draw(st.integers(1, 4)),
        seed=draw(st.integers(0, 2**64 - 1)),
        grid=grid,
    )


@settings(max_examples=100, deadline=None)
@given(configs())
def test_invariants_hold_for_random_configs(cfg):
    assert check_run(cfg) == []
