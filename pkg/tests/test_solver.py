import math

import numpy as np
import pytest

from starris import fp_core as fp
from starris.fp_core import RisState
from starris.scenario import ScenarioSpec, build_channels, trial_rngs
from starris.solver import (
    PenaltySchedule,
    bcd_pass,
    initialize,
    is_feasible_ris,
    penalized_objective,
    repair_feasible,
    residual,
    solve,
)
from starris.star_mode import AuxState, Mode, StarConfig, project_p1

SMALL = ScenarioSpec(n_antennas=4, m_elements=8, k_reflect=1, k_transmit=2)


def channel(trial=0, spec=SMALL):
    ch_rng, init_rng = trial_rngs(11, trial)
    return build_channels(spec, ch_rng), init_rng


def test_schedule_validation():
    with pytest.raises(ValueError):
        PenaltySchedule(c=1.0)
    with pytest.raises(ValueError):
        PenaltySchedule(delta=0)
    with pytest.raises(ValueError):
        PenaltySchedule(gamma0=-1)


def test_penalized_objective_examples():
    ch, rng = channel()
    st = initialize(ch, StarConfig.from_case(5), rng)
    aux = AuxState(st.ris.v_t.copy(), st.ris.v_r.copy())
    base = -fp.f1(st.fp, st.ris, ch)
    assert penalized_objective(st.fp, st.ris, aux, ch, 7.0) == pytest.approx(base)
    shifted = AuxState(aux.phi_t + 1.0, aux.phi_r)
    M = ch.m_elements
    assert penalized_objective(st.fp, st.ris, shifted, ch, 2.0) == pytest.approx(base + M)
    assert penalized_objective(st.fp, st.ris, shifted, ch, 0.0) == pytest.approx(base)


@pytest.mark.parametrize("case", range(1, 9))
def test_initialize_is_feasible_and_grid_aligned(case):
    ch, rng = channel()
    cfg = StarConfig.from_case(case, 2, 4)
    st = initialize(ch, cfg, rng)
    if cfg.mode is not Mode.TS:
        assert np.allclose(np.abs(st.ris.v_t) ** 2 + np.abs(st.ris.v_r) ** 2, 1)
    else:
        assert st.ris.lambda_t + st.ris.lambda_r == pytest.approx(1)
    assert np.all(np.isfinite(st.fp.w))


def test_es_continuous_pass_has_zero_residual():
    ch, rng = channel()
    cfg = StarConfig.from_case(5)
    st = bcd_pass(initialize(ch, cfg, rng), ch, cfg, 1.0)
    assert residual(st.ris, st.aux) <= 1e-12


@pytest.mark.parametrize("case", [1, 2, 3, 4, 6, 8])
def test_each_block_descends(case):
    ch, rng = channel(1)
    cfg = StarConfig.from_case(case, 2, 4)
    s = initialize(ch, cfg, rng)
    gamma = 0.3
    for _ in range(3):
        s = bcd_pass(s, ch, cfg, gamma)
    ris, st, aux = s.ris.copy(), s.fp.copy(), s.aux.copy()

    def obj():
        return penalized_objective(st, ris, aux, ch, gamma)

    tol = 1e-10 * max(1.0, abs(obj()))
    prev = obj()
    steps = [
        lambda: setattr(st, "x", fp.update_x(st, ris, ch)),
        lambda: setattr(st, "rho", fp.update_rho(st, ris, ch)),
        lambda: setattr(st, "w", fp.update_w(st, ris, ch)),
    ]
    if cfg.mode is Mode.TS:
        def lam():
            ris.lambda_t, ris.lambda_r = fp.update_lambda(st, ris, ch)
        steps.append(lam)

    def ris_step():
        Q = fp.build_ris_quadratics(st, ris, ch, aux, gamma)
        if cfg.mode is Mode.TS:
            ris.v_t, ris.v_r = fp.update_ris_ts(Q)
        else:
            ris.v_t, ris.v_r = fp.sweep_ris_pairs(Q, ris.v_t, ris.v_r)

    def aux_step():
        new = project_p1(ris.v_t, ris.v_r, cfg)
        aux.phi_t, aux.phi_r = new.phi_t, new.phi_r

    for step in steps + [ris_step, aux_step]:
        step()
        cur = obj()
        assert cur <= prev + tol
        prev = cur


def test_bcd_pass_does_not_mutate_input():
    ch, rng = channel()
    cfg = StarConfig.from_case(4)
    s = initialize(ch, cfg, rng)
    snap = s.copy()
    bcd_pass(s, ch, cfg, 1.0)
    assert np.array_equal(s.ris.v_t, snap.ris.v_t) and np.array_equal(s.fp.w, snap.fp.w)


def test_solve_es_single_round():
    ch, rng = channel(2)
    rep = solve(ch, StarConfig.from_case(5), rng=rng)
    assert rep.i_pen == 1 and rep.converged
    assert rep.residual_trace[-1] <= PenaltySchedule().delta


@pytest.mark.parametrize("case", range(1, 9))
def test_solve_converges_feasibly(case):
    ch, rng = channel(3)
    cfg = StarConfig.from_case(case, 2, 4)
    rep = solve(ch, cfg, rng=rng)
    assert rep.converged
    assert rep.residual_trace[-1] <= rep.schedule.delta
    assert is_feasible_ris(rep.final_feasible, cfg)
    assert np.sum(np.abs(rep.final_w) ** 2) <= ch.p_bs * (1 + 1e-8)
    assert rep.final_sum_rate_feasible > 0
    # the reported rate is recomputed from the reported point
    r = fp.sum_rate(rep.final_w, rep.final_feasible, ch)
    assert fp.nats_to_bits(r) == pytest.approx(rep.final_sum_rate_feasible, rel=1e-12)


def test_gamma_trajectory_is_geometric():
    ch, rng = channel(4)
    sched = PenaltySchedule(gamma0=1e-6, c=10.0)
    rep = solve(ch, StarConfig.from_case(2), sched, rng)
    assert rep.i_pen >= 2
    assert np.allclose(rep.gamma_trace, [1e-6 * 10.0**k for k in range(rep.i_pen)], rtol=1e-14, atol=0)


def test_objective_monotone_within_rounds():
    ch, rng = channel(5)
    rep = solve(ch, StarConfig.from_case(4), rng=rng)
    before = dict(enumerate(rep.round_entry_objective))
    for row in rep.trace:
        assert row.penalized_objective_nats <= before[row.round] + 1e-8
        before[row.round] = row.penalized_objective_nats


def test_solve_is_deterministic():
    ch, _ = channel(6)
    a = solve(ch, StarConfig.from_case(6), rng=np.random.default_rng(3))
    b = solve(ch, StarConfig.from_case(6), rng=np.random.default_rng(3))
    assert a.final_sum_rate_feasible == b.final_sum_rate_feasible
    assert a.penalized_objective_trace == b.penalized_objective_trace


def test_not_converged_reported():
    ch, rng = channel(7)
    sched = PenaltySchedule(gamma0=1e-9, max_penalty_rounds=1, max_bcd_iters=2)
    rep = solve(ch, StarConfig.from_case(2), sched, rng)
    assert not rep.converged and rep.i_pen == 1
    assert is_feasible_ris(rep.final_feasible, StarConfig.from_case(2))


def test_repair_rescales_to_lossless():
    cfg = StarConfig.from_case(5)
    s = 1 / math.sqrt(2)
    ris = RisState(np.array([0.6 + 0j]), np.array([0.6 + 0j]))
    out = repair_feasible(ris, AuxState(ris.v_t, ris.v_r), cfg)
    assert np.allclose(out.v_t, [s]) and np.allclose(out.v_r, [s])
    assert is_feasible_ris(out, cfg)


def test_repair_keeps_feasible_point():
    rng = np.random.default_rng(0)
    ph = rng.uniform(0, 2 * math.pi, (2, 5))
    amp = rng.uniform(0, 1, 5)
    v_t = amp * np.exp(1j * ph[0])
    v_r = np.sqrt(1 - amp**2) * np.exp(1j * ph[1])
    cfg = StarConfig.from_case(5)
    out = repair_feasible(RisState(v_t, v_r), AuxState(v_t, v_r), cfg)
    assert np.allclose(out.v_t, v_t, atol=1e-15) and np.allclose(out.v_r, v_r, atol=1e-15)


@pytest.mark.parametrize("case", range(1, 9))
def test_repair_audit(case):
    rng = np.random.default_rng(case)
    cfg = StarConfig.from_case(case, 4, 4)
    for _ in range(20):
        v_t = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        v_r = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        aux = project_p1(v_t, v_r, cfg)
        lt = 0.3 if cfg.mode is Mode.TS else 1.0
        out = repair_feasible(RisState(v_t, v_r, lt, 1 - lt if cfg.mode is Mode.TS else 1.0), aux, cfg)
        assert is_feasible_ris(out, cfg)


def test_repair_zero_projection_element():
    cfg = StarConfig.from_case(3)
    ris = RisState(np.array([0.2 + 0j]), np.array([0.9 + 0j]))
    out = repair_feasible(ris, AuxState(np.zeros(1, complex), np.zeros(1, complex)), cfg)
    assert is_feasible_ris(out, cfg)
    assert out.v_t[0] == 0 and abs(out.v_r[0]) == pytest.approx(1)


def test_report_to_dict_round_trips_json():
    import json

    ch, rng = channel()
    rep = solve(ch, StarConfig.from_case(1), rng=rng)
    d = json.loads(json.dumps(rep.to_dict()))
    assert d["case"] == 1 and len(d["trace"]) == rep.i_bcd
    assert d["final_feasible"]["lambda_t"] == pytest.approx(rep.final_feasible.lambda_t)


def test_residual_mostly_non_increasing_over_rounds():
    ups = total = 0
    for t in range(8):
        ch, rng = channel(20 + t)
        rep = solve(ch, StarConfig.from_case(t % 8 + 1, 2, 4), rng=rng)
        r = rep.residual_trace
        ups += sum(b > a for a, b in zip(r, r[1:]))
        total += len(r) - 1
    assert total > 0 and ups <= 0.1 * total


def _block_changes(s, s2):
    rel = lambda a, b: np.linalg.norm(a - b) / max(np.linalg.norm(a), 1e-300)  # noqa: E731
    return {
        "w": np.linalg.norm(s.fp.w - s2.fp.w),
        "v_t": np.linalg.norm(s.ris.v_t - s2.ris.v_t),
        "v_r": np.linalg.norm(s.ris.v_r - s2.ris.v_r),
        "x": rel(s.fp.x, s2.fp.x),
        "rho": rel(s.fp.rho, s2.fp.rho),
    }


@pytest.mark.parametrize("case", [1, 4, 8])
def test_stationary_at_termination_with_tight_inner_loop(case):
    # x scales with 1/sigma, so it and rho are compared relatively
    spec = ScenarioSpec(n_antennas=2, m_elements=4, k_reflect=1, k_transmit=1)
    ch, rng = channel(30 + case, spec)
    cfg = StarConfig.from_case(case, 2, 4)
    rep = solve(ch, cfg, PenaltySchedule(bcd_tol=1e-12, max_bcd_iters=5000), rng)
    s = rep.final_raw
    again = bcd_pass(s, ch, cfg, rep.gamma_trace[-1])
    assert max(_block_changes(s, again).values()) <= 1e-5


def test_time_share_update_monotone_at_high_noise():
    # the noise term of the time-share cost matters only when sigma^2 is large
    spec = ScenarioSpec(n_antennas=4, m_elements=8, k_reflect=2, k_transmit=2, noise_dbm=-60, p_bs_dbm=10)
    for t in range(3):
        ch, rng = channel(t, spec)
        rep = solve(ch, StarConfig.from_case(1), rng=rng)
        before = dict(enumerate(rep.round_entry_objective))
        for row in rep.trace:
            assert row.penalized_objective_nats <= before[row.round] + 1e-8
            before[row.round] = row.penalized_objective_nats
