"""Self-checks against the independent oracles.

Each check returns a :class:`CheckResult`; sizes are parameters so the
command line can run a quick pass while the test suite runs full size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fp_core as fp
from .fp_core import FpState, RisState
from .oracle import fd_check, grid_search_phi, projected_gradient_w
from .scenario import ScenarioSpec, build_channels, trial_rngs
from .solver import PenaltySchedule, penalized_objective, solve
from .star_mode import StarConfig, is_feasible_aux, p1_brute_force, p1_objective, project_p1


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def _cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def check_p1(n_elements=1000, seed=0) -> CheckResult:
    """Closed-form projections against brute-force enumeration.

    Discrete rows are compared for equality of the objective; continuous
    rows must do at least as well as the best point of an 8-level grid.
    """
    rng = np.random.default_rng(seed)
    worst, worst_cont, runs = 0.0, 0.0, 0
    combos = [(c, L) for c in (2, 4, 6) for L in (2, 4, 8)] + [(8, 4), (8, 8)]
    for c, L in combos:
        cfg = StarConfig.from_case(c, L, L)
        v_t, v_r = _cplx(rng, n_elements), _cplx(rng, n_elements)
        aux = project_p1(v_t, v_r, cfg)
        _, ref = p1_brute_force(v_t, v_r, cfg)
        worst = max(worst, abs(p1_objective(v_t, v_r, aux) - ref))
        if not is_feasible_aux(aux, cfg):
            worst = math.inf
        runs += 1
        cont = StarConfig.from_case(c - 1)
        got = p1_objective(v_t, v_r, project_p1(v_t, v_r, cont))
        worst_cont = max(worst_cont, got - ref)
    ok = worst <= 1e-10 and worst_cont <= 1e-10
    return CheckResult(
        "p1-vs-brute-force", ok,
        f"{runs} discrete configs x {n_elements} elements, worst gap {worst:.2e}; "
        f"continuous excess {worst_cont:.2e}",
    )


def _random_instance(rng, spec=None):
    spec = spec or ScenarioSpec(
        n_antennas=int(rng.integers(1, 6)), m_elements=int(rng.integers(1, 8)),
        k_reflect=int(rng.integers(0, 3)), k_transmit=int(rng.integers(1, 3)),
        p_bs_dbm=float(rng.uniform(0, 40)),
    )
    ch = build_channels(spec, rng)
    M, K, N = ch.m_elements, ch.n_users, ch.n_antennas
    lt = float(rng.uniform(0.1, 0.9))
    ris = RisState(_cplx(rng, M), _cplx(rng, M), lt, 1 - lt)
    w = _cplx(rng, K, N) * math.sqrt(ch.p_bs / (2 * K * N))
    return ch, ris, w


def check_fp_equivalence(n=200, seed=1) -> CheckResult:
    """Surrogate at its closed-form maximisers equals the sum-rate."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        ch, ris, w = _random_instance(rng)
        st = FpState(w, np.zeros(ch.n_users), np.zeros(ch.n_users, complex))
        st.x = fp.update_x(st, ris, ch)
        st.rho = fp.update_rho(st, ris, ch)
        R = fp.sum_rate(st, ris, ch)
        worst = max(worst, abs(fp.f1(st, ris, ch) - R) / max(1.0, abs(R)))
    ident = 0.0
    for g in (0.1, 1.0, 10.0):
        rho = g
        val = math.log1p(rho) - rho + (1 + rho) * g / (1 + g)
        ident = max(ident, abs(val - math.log1p(g)))
        # and rho = g is the maximiser: neighbours are no better
        for r in (g * 0.999, g * 1.001):
            ident = max(ident, (math.log1p(r) - r + (1 + r) * g / (1 + g)) - val)
    ok = worst <= 1e-9 and ident <= 1e-10
    return CheckResult("fp-equivalence", ok, f"{n} instances, worst {worst:.2e}; log identity {ident:.2e}")


def check_beamforming(n=100, seed=2) -> CheckResult:
    """Eigen/bisection beamformer against projected-gradient descent."""
    rng = np.random.default_rng(seed)
    worst_gap, worst_slack = 0.0, 0.0
    for i in range(n):
        N = int(rng.integers(1, 17))
        K = int(rng.integers(1, 9))
        A = _cplx(rng, N, K)
        Xi = A @ A.conj().T
        q = _cplx(rng, K, N)
        if i % 2:
            q = q @ Xi.T
        P = float(10 ** rng.uniform(-2, 2))
        w, mu = fp.solve_w_qcqp(Xi, q, P, return_mu=True)
        _, ref = projected_gradient_w(Xi, q, P)
        got = fp.qcqp_objective(w, Xi, q)
        worst_gap = max(worst_gap, (got - ref) / max(1.0, abs(ref)))
        power = float(np.sum(np.abs(w) ** 2))
        if mu > 0:
            worst_slack = max(worst_slack, abs(power - P) / P)
        else:
            worst_slack = max(worst_slack, max(0.0, power - P) / P)
    ok = worst_gap <= 1e-6 and worst_slack <= 1e-6
    return CheckResult("beamforming-vs-fista", ok, f"{n} instances, gap {worst_gap:.2e}, slack {worst_slack:.2e}")


def check_ris_pair(n=100, seed=3) -> CheckResult:
    """Per-element bisection against a dense scan and a gradient audit."""
    rng = np.random.default_rng(seed)
    worst_obj = 0.0
    coeffs = []
    for _ in range(n):
        M = int(rng.integers(1, 7))
        B = _cplx(rng, M, M)
        A_t = B @ B.conj().T + 0.1 * np.eye(M)
        B = _cplx(rng, M, M)
        A_r = B @ B.conj().T + 0.1 * np.eye(M)
        Q = fp.RisQuadratics(A_t, A_r, _cplx(rng, M) * 3, _cplx(rng, M) * 3)
        v_t, v_r = _cplx(rng, M), _cplx(rng, M)
        m = int(rng.integers(M))
        a_t, a_r, c_t, c_r = fp.pair_coefficients(m, Q, v_t, v_r)
        _, f_bis = fp.solve_pair_angle(a_t, a_r, abs(c_t), abs(c_r))
        _, f_grid = grid_search_phi(Q, m, v_t, v_r, 1e-5)
        worst_obj = max(worst_obj, f_bis - f_grid)
        coeffs.append((a_t, a_r, abs(c_t), abs(c_r)))
    worst_fd = 0.0
    for a_t, a_r, ct, cr in coeffs:
        pts = rng.uniform(0.01, 0.5 * math.pi - 0.01, 1)
        worst_fd = max(worst_fd, fd_check(
            lambda p: fp.pair_objective(p, a_t, a_r, ct, cr),
            lambda p: fp.pair_gradient(p, a_t, a_r, ct, cr),
            pts,
        ))
    ok = worst_obj <= 1e-6 and worst_fd <= 1e-5
    return CheckResult("ris-pair-vs-grid", ok, f"{n} instances, excess {worst_obj:.2e}, fd {worst_fd:.2e}")


def check_convergence(n_solves=50, seed=4, spec=None) -> CheckResult:
    """Monotone penalised objective, final residual and single-round ES."""
    spec = spec or ScenarioSpec(n_antennas=8, m_elements=16, k_reflect=2, k_transmit=2)
    sched = PenaltySchedule()
    worst_rise, worst_res, es_rounds, unconverged = 0.0, 0.0, set(), 0
    for i in range(n_solves):
        case = i % 8 + 1
        ch_rng, init_rng = trial_rngs(seed, i)
        ch = build_channels(spec, ch_rng)
        rep = solve(ch, StarConfig.from_case(case, 2, 4), sched, init_rng)
        before = dict(enumerate(rep.round_entry_objective))
        for row in rep.trace:
            worst_rise = max(worst_rise, row.penalized_objective_nats - before[row.round])
            before[row.round] = row.penalized_objective_nats
        if rep.converged:
            worst_res = max(worst_res, rep.residual_trace[-1])
        else:
            unconverged += 1
        if case == 5:
            es_rounds.add(rep.i_pen)
    ok = worst_rise <= 1e-8 and worst_res <= sched.delta and es_rounds <= {1} and unconverged == 0
    return CheckResult(
        "bcd-convergence", ok,
        f"{n_solves} solves, max rise {worst_rise:.2e}, max residual {worst_res:.2e}, "
        f"ES rounds {sorted(es_rounds)}, not converged {unconverged}",
    )


def run_all(quick=True):
    if quick:
        return [
            check_p1(200),
            check_fp_equivalence(40),
            check_beamforming(20),
            check_ris_pair(30),
            check_convergence(8, spec=ScenarioSpec(n_antennas=4, m_elements=8, k_reflect=1, k_transmit=1)),
        ]
    return [check_p1(), check_fp_equivalence(), check_beamforming(), check_ris_pair(), check_convergence()]


__all__ = [
    "CheckResult", "check_p1", "check_fp_equivalence", "check_beamforming", "check_ris_pair",
    "check_convergence", "run_all", "penalized_objective",
]
