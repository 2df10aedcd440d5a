"""Independent ground truth: exhaustive MS search, dense scans of the
per-element RIS cost, finite-difference audits and a first-order
reference for the beamforming subproblem."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fp_core import (
    RisQuadratics,
    fixed_ris_rates,
    nats_to_bits,
    pair_coefficients,
    pair_objective,
)
from .numerics import PhaseGrid
from .scenario import ChannelSet
from .star_mode import AuxState, TooLarge


@dataclass(frozen=True)
class OracleBudget:
    max_candidates: int = 10**5
    inner_iters: int = 100
    chunk: int = 4096

    def __post_init__(self):
        if self.max_candidates < 1:
            raise ValueError("max_candidates must be >= 1")
        if self.inner_iters < 1:
            raise ValueError("inner_iters must be >= 1")


def ms_candidate_count(m_elements: int, levels: int) -> int:
    return (2 * levels) ** m_elements


def ms_candidates(m_elements: int, levels: int, start: int = 0, stop: int | None = None):
    """MS settings in lexicographic order.

    Candidate ``c`` written in base ``2L`` (element 0 most significant)
    gives per-element digits ``side * L + k``: side 0 transmits, side 1
    reflects, ``k`` indexes the phase grid.
    """
    base = 2 * levels
    total = base**m_elements
    stop = total if stop is None else min(stop, total)
    idx = np.arange(start, stop, dtype=np.int64)
    powers = base ** np.arange(m_elements - 1, -1, -1, dtype=np.int64)
    digits = (idx[:, None] // powers[None, :]) % base
    side_r = digits >= levels
    phase = np.exp(1j * PhaseGrid(levels).points())[digits % levels]
    v_t = np.where(side_r, 0.0, phase)
    v_r = np.where(side_r, phase, 0.0)
    return v_t, v_r


def evaluate_fixed_ris(ch: ChannelSet, v_t, v_r, budget: OracleBudget = OracleBudget(), tol=1e-6):
    """Sum-rate (nats) of each RIS setting after FP beamforming iterations."""
    rates, _ = fixed_ris_rates(ch, v_t, v_r, iters=budget.inner_iters, tol=tol)
    return rates


def exhaustive_ms(ch: ChannelSet, levels: int, budget: OracleBudget = OracleBudget()):
    """Best MS configuration over all ``(2L)^M`` choices.

    Returns
    -------
    best : AuxState
    best_rate : float, bits
    n_candidates : int
    """
    M = ch.m_elements
    total = ms_candidate_count(M, levels)
    if total > budget.max_candidates:
        raise TooLarge(f"(2L)^M = {total} exceeds budget {budget.max_candidates}")
    best_rate, best_idx = -np.inf, -1
    for start in range(0, total, budget.chunk):
        v_t, v_r = ms_candidates(M, levels, start, start + budget.chunk)
        rates = evaluate_fixed_ris(ch, v_t, v_r, budget)
        i = int(np.argmax(rates))
        # strict improvement keeps the first candidate on ties
        if rates[i] > best_rate:
            best_rate, best_idx = float(rates[i]), start + i
    v_t, v_r = ms_candidates(M, levels, best_idx, best_idx + 1)
    return AuxState(v_t[0], v_r[0]), float(nats_to_bits(best_rate)), total


def grid_search_phi(Q: RisQuadratics, m: int, v_t, v_r, step: float = 1e-5):
    """Dense scan of the element-``m`` cost over ``[0, pi/2]``."""
    a_t, a_r, c_t, c_r = pair_coefficients(m, Q, v_t, v_r)
    n = int(math.ceil(0.5 * math.pi / step))
    phis = np.linspace(0.0, 0.5 * math.pi, n + 1)
    vals = pair_objective(phis, a_t, a_r, abs(c_t), abs(c_r))
    i = int(np.argmin(vals))
    return float(phis[i]), float(vals[i])


def fd_check(f, grad, points, h: float = 1e-6) -> float:
    """Max over points of ``|grad - fd| / max(1, |fd|)`` with central
    differences."""
    worst = 0.0
    for p in points:
        fd = (f(p + h) - f(p - h)) / (2 * h)
        worst = max(worst, abs(grad(p) - fd) / max(1.0, abs(fd)))
    return worst


def projected_gradient_w(Xi, q, p_bs, iters=20000, tol=1e-12):
    """FISTA on ``sum_l w_l^H Xi w_l - 2 Re(q_l^H w_l)`` over the power ball.

    Returns the iterate and its objective value.
    """
    K, N = q.shape
    L = 2 * max(float(np.linalg.eigvalsh(Xi).max()), 1e-300)

    def obj(W):
        return float(np.real(np.einsum("kn,nm,km->", np.conj(W), Xi, W)) - 2 * np.real(np.vdot(q, W)))

    def project(W):
        nrm = np.linalg.norm(W)
        lim = math.sqrt(p_bs)
        return W if nrm <= lim else W * (lim / nrm)

    W = np.zeros((K, N), dtype=complex)
    Y = W.copy()
    t = 1.0
    for _ in range(iters):
        grad = 2 * (Y @ Xi.T) - 2 * q
        W_new = project(Y - grad / L)
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        step = np.linalg.norm(W_new - W)
        # restart momentum when the objective goes up
        if obj(W_new) > obj(W):
            t_new = 1.0
            Y = W_new
        else:
            Y = W_new + ((t - 1) / t_new) * (W_new - W)
        W, t = W_new, t_new
        if step <= tol * max(np.linalg.norm(W), 1e-300):
            break
    return W, obj(W)
