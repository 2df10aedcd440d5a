"""Penalty-based block coordinate descent for the STAR-RIS sum-rate problem.

Inner loop: closed-form block updates of the penalised surrogate followed
by the exact projection of the auxiliary variables. Outer loop: the
penalty weight grows geometrically until the RIS iterate and its
projection agree.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import fp_core as fp
from .fp_core import FpState, RisState, nats_to_bits
from .scenario import ChannelSet
from .star_mode import AuxState, Mode, StarConfig, is_feasible_aux, project_p1


@dataclass(frozen=True)
class PenaltySchedule:
    """Penalty escalation and stopping rules.

    ``gamma0=None`` means ``gamma0_scale * |F1|`` at the starting point.
    """

    gamma0: float | None = None
    gamma0_scale: float = 1e-2
    c: float = 10.0
    delta: float = 1e-4
    bcd_tol: float = 1e-5
    max_bcd_iters: int = 200
    max_penalty_rounds: int = 12
    polish_iters: int = 100
    polish_tol: float = 1e-6
    printed_psi: bool = False

    def __post_init__(self):
        if self.c <= 1:
            raise ValueError("penalty growth ratio c must exceed 1")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.gamma0 is not None and self.gamma0 <= 0:
            raise ValueError("gamma0 must be positive")
        if self.gamma0_scale <= 0:
            raise ValueError("gamma0_scale must be positive")
        if self.max_bcd_iters < 1 or self.max_penalty_rounds < 1:
            raise ValueError("iteration caps must be >= 1")


@dataclass
class SolverState:
    ris: RisState
    fp: FpState
    aux: AuxState

    def copy(self) -> "SolverState":
        return SolverState(self.ris.copy(), self.fp.copy(), self.aux.copy())


@dataclass
class TraceRow:
    round: int
    bcd_pass: int
    gamma: float
    penalized_objective_nats: float
    sum_rate_bits: float
    residual: float


@dataclass
class SolveReport:
    config: StarConfig
    schedule: PenaltySchedule
    trace: list = field(default_factory=list)
    residual_trace: list = field(default_factory=list)
    gamma_trace: list = field(default_factory=list)
    round_entry_objective: list = field(default_factory=list)
    i_pen: int = 0
    i_bcd: int = 0
    converged: bool = False
    wall_time: float = 0.0
    final_raw: SolverState | None = None
    final_feasible: RisState | None = None
    final_w: np.ndarray | None = None
    final_sum_rate_raw: float = float("nan")
    final_sum_rate_feasible: float = float("nan")
    gamma0: float = float("nan")

    @property
    def sum_rate_trace(self):
        return [r.sum_rate_bits for r in self.trace]

    @property
    def penalized_objective_trace(self):
        return [r.penalized_objective_nats for r in self.trace]

    def to_dict(self) -> dict:
        ris = self.final_feasible

        def cplx(v):
            return [[float(z.real), float(z.imag)] for z in np.asarray(v)]

        return {
            "case": self.config.case_index,
            "config": self.config.label(),
            "schedule": asdict(self.schedule),
            "gamma0": self.gamma0,
            "i_pen": self.i_pen,
            "i_bcd": self.i_bcd,
            "converged": self.converged,
            "wall_time": self.wall_time,
            "residual_trace": list(self.residual_trace),
            "gamma_trace": list(self.gamma_trace),
            "final_sum_rate_raw_bits": self.final_sum_rate_raw,
            "final_sum_rate_feasible_bits": self.final_sum_rate_feasible,
            "final_feasible": None if ris is None else {
                "v_t": cplx(ris.v_t),
                "v_r": cplx(ris.v_r),
                "lambda_t": ris.lambda_t,
                "lambda_r": ris.lambda_r,
            },
            "trace": [asdict(r) for r in self.trace],
        }


def residual(ris: RisState, aux: AuxState) -> float:
    return float(max(np.max(np.abs(ris.v_t - aux.phi_t)), np.max(np.abs(ris.v_r - aux.phi_r))))


def penalized_objective(fpst: FpState, ris: RisState, aux: AuxState, ch: ChannelSet, gamma) -> float:
    """``-F1 + gamma/2 (||v^t - phi^t||^2 + ||v^r - phi^r||^2)`` in nats."""
    pen = np.sum(np.abs(ris.v_t - aux.phi_t) ** 2) + np.sum(np.abs(ris.v_r - aux.phi_r) ** 2)
    return -fp.f1(fpst, ris, ch) + 0.5 * gamma * float(pen)


def initialize(ch: ChannelSet, config: StarConfig, rng) -> SolverState:
    """Random grid phases, equal amplitude split, matched-filter beams."""
    M = ch.m_elements
    if config.phase.continuous:
        ph = rng.uniform(0, 2 * math.pi, (2, M))
    else:
        ph = config.phase.points()[rng.integers(config.phase.levels, size=(2, M))]
    if config.mode is Mode.TS:
        amp, lam = 1.0, (0.5, 0.5)
    else:
        amp, lam = 1 / math.sqrt(2), (1.0, 1.0)
    ris = RisState(amp * np.exp(1j * ph[0]), amp * np.exp(1j * ph[1]), *lam)
    w = fp.matched_filter_init(ch)
    st = FpState(w, np.zeros(ch.n_users), np.zeros(ch.n_users, dtype=complex))
    st.x = fp.update_x(st, ris, ch)
    st.rho = fp.update_rho(st, ris, ch)
    aux = project_p1(ris.v_t, ris.v_r, config)
    return SolverState(ris, st, aux)


def bcd_pass(state: SolverState, ch: ChannelSet, config: StarConfig, gamma, printed_psi=False) -> SolverState:
    """One sweep: x, rho, w, time shares (TS), RIS coefficients, then P1."""
    s = state.copy()
    ris, st = s.ris, s.fp
    st.x = fp.update_x(st, ris, ch)
    st.rho = fp.update_rho(st, ris, ch)
    st.w = fp.update_w(st, ris, ch)
    if config.mode is Mode.TS:
        ris.lambda_t, ris.lambda_r = fp.update_lambda(st, ris, ch, printed_psi=printed_psi)
    Q = fp.build_ris_quadratics(st, ris, ch, s.aux, gamma)
    if config.mode is Mode.TS:
        ris.v_t, ris.v_r = fp.update_ris_ts(Q)
    else:
        ris.v_t, ris.v_r = fp.sweep_ris_pairs(Q, ris.v_t, ris.v_r)
    s.aux = project_p1(ris.v_t, ris.v_r, config)
    return s


def repair_feasible(ris: RisState, aux: AuxState, config: StarConfig) -> RisState:
    """Report ``phi`` as the final coefficients, rescaled onto the lossless
    constraint where needed."""
    pt = np.array(aux.phi_t, dtype=complex)
    pr = np.array(aux.phi_r, dtype=complex)
    if config.mode is Mode.TS:
        return RisState(pt, pr, ris.lambda_t, ris.lambda_r)
    nrm = np.sqrt(np.abs(pt) ** 2 + np.abs(pr) ** 2)
    zero = nrm == 0
    safe = np.where(zero, 1.0, nrm)
    pt, pr = pt / safe, pr / safe
    if np.any(zero):
        at, ar = np.abs(ris.v_t[zero]), np.abs(ris.v_r[zero])
        n = np.sqrt(at**2 + ar**2)
        at = np.where(n > 0, at / np.where(n > 0, n, 1.0), 1 / math.sqrt(2))
        ar = np.where(n > 0, ar / np.where(n > 0, n, 1.0), 1 / math.sqrt(2))
        # phases: zero phase for transmission, quadrature for reflection
        # when coupled; both on every grid that allows coupling
        th_r = 0.5 * math.pi if config.coupled else 0.0
        if config.mode is Mode.MS:
            pick_t = at >= ar
            at, ar = pick_t.astype(float), (~pick_t).astype(float)
        pt[zero] = at
        pr[zero] = ar * np.exp(1j * th_r)
    return RisState(pt, pr, 1.0, 1.0)


def is_feasible_ris(ris: RisState, config: StarConfig, tol=1e-8) -> bool:
    """Reporting-time check of the unified lossless constraint and the
    mode-specific selection rules."""
    lt, lr = ris.lambda_t, ris.lambda_r
    if config.mode is Mode.TS:
        if abs(lt + lr - 1) > tol or min(lt, lr) < -tol:
            return False
    elif abs(lt - 1) > tol or abs(lr - 1) > tol:
        return False
    unified = lt * np.abs(ris.v_t) ** 2 + lr * np.abs(ris.v_r) ** 2
    if config.mode is not Mode.TS and np.any(np.abs(unified - 1) > tol):
        return False
    return is_feasible_aux(AuxState(ris.v_t, ris.v_r), config, tol)


def polish_beams(ch: ChannelSet, ris: RisState, w0, iters=100, tol=1e-6):
    """FP beamforming iterations with the RIS held fixed; the rate never
    decreases."""
    rates, w = fp.fixed_ris_rates(
        ch, ris.v_t[None], ris.v_r[None], ris.lambda_t, ris.lambda_r, iters=iters, tol=tol, w0=w0
    )
    return float(rates[0]), w[0]


def solve(ch: ChannelSet, config: StarConfig, sched: PenaltySchedule | None = None, rng=None) -> SolveReport:
    """Run the penalty-BCD algorithm on one channel realization."""
    sched = sched or PenaltySchedule()
    rng = np.random.default_rng(0) if rng is None else rng
    t0 = time.perf_counter()
    state = initialize(ch, config, rng)
    if sched.gamma0 is not None:
        gamma = sched.gamma0
    else:
        f_init = abs(fp.f1(state.fp, state.ris, ch))
        gamma = sched.gamma0_scale * f_init if f_init > 0 else sched.gamma0_scale
    report = SolveReport(config=config, schedule=sched, gamma0=gamma)

    for rnd in range(sched.max_penalty_rounds):
        report.gamma_trace.append(gamma)
        prev = penalized_objective(state.fp, state.ris, state.aux, ch, gamma)
        report.round_entry_objective.append(prev)
        for it in range(sched.max_bcd_iters):
            state = bcd_pass(state, ch, config, gamma, sched.printed_psi)
            report.i_bcd += 1
            obj = penalized_objective(state.fp, state.ris, state.aux, ch, gamma)
            report.trace.append(TraceRow(
                rnd, it, gamma, obj,
                float(nats_to_bits(fp.sum_rate(state.fp, state.ris, ch))),
                residual(state.ris, state.aux),
            ))
            if abs(prev - obj) <= sched.bcd_tol * max(abs(prev), 1e-300):
                break
            prev = obj
        report.i_pen = rnd + 1
        res = residual(state.ris, state.aux)
        report.residual_trace.append(res)
        if res <= sched.delta:
            report.converged = True
            break
        gamma *= sched.c

    report.final_raw = state
    report.final_sum_rate_raw = float(nats_to_bits(fp.sum_rate(state.fp, state.ris, ch)))
    feas = repair_feasible(state.ris, state.aux, config)
    rate, w = polish_beams(ch, feas, state.fp.w, sched.polish_iters, sched.polish_tol)
    report.final_feasible = feas
    report.final_w = w
    report.final_sum_rate_feasible = float(nats_to_bits(rate))
    report.wall_time = time.perf_counter() - t0
    return report
