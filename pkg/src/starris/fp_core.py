"""Sum-rate model and fractional-programming block updates.

Array conventions: ``a`` and ``w`` are ``(..., K, N)``, ``x`` and ``rho``
are ``(..., K)`` and RIS vectors are ``(..., M)``. Leading batch axes are
supported by the array-level helpers so the exhaustive oracle can push
thousands of fixed RIS settings through the same code as the solver.
Everything runs in nats; convert with :func:`nats_to_bits` at the edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import bisect_decreasing_batch, bisect_root, hermitian_eig
from .scenario import ChannelSet
from .star_mode import AuxState

LN2 = math.log(2.0)
PHI_TOL = 1e-10
EIG_FLOOR = 1e-12


class Singular(ValueError):
    pass


def nats_to_bits(r):
    return r / LN2


@dataclass
class RisState:
    v_t: np.ndarray
    v_r: np.ndarray
    lambda_t: float = 1.0
    lambda_r: float = 1.0

    def copy(self) -> "RisState":
        return RisState(self.v_t.copy(), self.v_r.copy(), self.lambda_t, self.lambda_r)


@dataclass
class FpState:
    w: np.ndarray
    rho: np.ndarray
    x: np.ndarray

    def copy(self) -> "FpState":
        return FpState(self.w.copy(), self.rho.copy(), self.x.copy())


@dataclass
class RisQuadratics:
    """Per-side quadratic model ``v^H A v + Re(b^H v)``."""

    A_t: np.ndarray
    A_r: np.ndarray
    b_t: np.ndarray
    b_r: np.ndarray

    def value(self, v_t, v_r) -> float:
        out = 0.0
        for A, b, v in ((self.A_t, self.b_t, v_t), (self.A_r, self.b_r, v_r)):
            out += float(np.real(np.vdot(v, A @ v)) + np.real(np.vdot(b, v)))
        return out


# ---------------------------------------------------------------------------
# array-level helpers (batch aware)


def effective_channel_arrays(G, h, d, reflect, v_t, v_r):
    """``a_l = G^T diag(v^p) h_l + d_l`` with ``p`` the side of user ``l``."""
    v_t = np.asarray(v_t)
    v_r = np.asarray(v_r)
    V = np.where(reflect[:, None], v_r[..., None, :], v_t[..., None, :])
    return np.einsum("...km,km,mn->...kn", V, h, G) + d


def user_weights(reflect, lambda_t, lambda_r):
    lt = np.asarray(lambda_t, dtype=float)[..., None]
    lr = np.asarray(lambda_r, dtype=float)[..., None]
    return np.where(reflect, lr, lt)


def gram(a, w):
    """``T[..., l, i] = a_l^T w_i``."""
    return np.einsum("...ln,...in->...li", a, w)


def _signal_and_total(T):
    power = np.abs(T) ** 2
    signal = np.diagonal(power, axis1=-2, axis2=-1)
    return signal, power.sum(axis=-1)


def _safe_div(num, den):
    den_ok = den > 0
    return np.where(den_ok, num / np.where(den_ok, den, 1.0), 0.0)


def sinr_arrays(T, lam_u, sigma2):
    signal, total = _signal_and_total(T)
    # interference without cancellation error from total - signal
    K = T.shape[-1]
    off = ~np.eye(K, dtype=bool)
    interf = np.sum(np.abs(T) ** 2 * off, axis=-1)
    return _safe_div(signal, interf + lam_u * sigma2)


def rate_arrays(T, lam_u, sigma2):
    sinr = sinr_arrays(T, lam_u, sigma2)
    terms = np.where(lam_u > 0, lam_u * np.log1p(sinr), 0.0)
    return terms.sum(axis=-1)


def x_arrays(T, lam_u, sigma2):
    signal_amp = np.diagonal(T, axis1=-2, axis2=-1)
    _, total = _signal_and_total(T)
    return _safe_div(signal_amp, total + lam_u * sigma2)


def f1_arrays(T, x, rho, lam_u, sigma2):
    s = np.diagonal(T, axis1=-2, axis2=-1)
    _, total = _signal_and_total(T)
    inner = (
        np.log1p(rho)
        - rho
        + 2 * (1 + rho) * np.real(np.conj(x) * s)
        - (1 + rho) * np.abs(x) ** 2 * (total + lam_u * sigma2)
    )
    return np.sum(lam_u * inner, axis=-1)


def xi_q_arrays(a, x, rho, lam_u):
    """Quadratic data ``Xi = sum_l c_l conj(a_l) a_l^T`` and
    ``q_l = lam_l (1 + rho_l) x_l conj(a_l)`` of the beamforming subproblem."""
    coef = lam_u * (1 + rho) * np.abs(x) ** 2
    Xi = np.einsum("...k,...kn,...km->...nm", coef, np.conj(a), a)
    q = (lam_u * (1 + rho) * x)[..., None] * np.conj(a)
    return Xi, q


def solve_w_qcqp(Xi, q, p_bs, return_mu=False):
    """Minimise ``sum_l w_l^H Xi w_l - 2 Re(q_l^H w_l)`` subject to
    ``sum_l ||w_l||^2 <= p_bs``.

    Uses ``Xi = U Lam U^H`` and bisection on the multiplier ``mu`` of the
    power constraint. Eigenvalues below ``1e-12 * max`` that carry weight
    in ``B = sum_l U^H q_l q_l^H U`` make the unconstrained problem
    unbounded, so they force ``mu > 0``; weightless ones are skipped. If
    every ``q_l`` vanishes the result is ``w = 0``.

    Parameters
    ----------
    Xi : (..., N, N) Hermitian PSD.
    q : (..., K, N).
    p_bs : float
    return_mu : bool

    Returns
    -------
    w : (..., K, N), and ``mu`` of shape (...) when requested.
    """
    if Xi.ndim == 2:
        U, lam = hermitian_eig(Xi)
    else:
        lam, U = np.linalg.eigh(0.5 * (Xi + np.conj(np.swapaxes(Xi, -1, -2))))
        lam = np.clip(lam, 0.0, None)
    qt = np.einsum("...nm,...kn->...km", np.conj(U), q)
    Bd = np.sum(np.abs(qt) ** 2, axis=-2)
    trB = Bd.sum(axis=-1)
    lam_max = lam.max(axis=-1, keepdims=True)
    small = lam <= EIG_FLOOR * lam_max
    forced = np.any(small & (Bd > EIG_FLOOR * trB[..., None]), axis=-1)
    inv = np.where(small, 0.0, 1.0 / np.where(small, 1.0, lam))
    p_free = np.sum(Bd * inv**2, axis=-1)
    need = (forced | (p_free > p_bs)) & (trB > 0)

    mu = np.zeros_like(trB)
    if np.any(need):
        hi = np.where(need, np.sqrt(trB / p_bs), 0.0)

        def excess(m):
            with np.errstate(divide="ignore", invalid="ignore"):
                val = np.sum(Bd / (lam + m[..., None]) ** 2, axis=-1) - p_bs
            return np.where(need, np.nan_to_num(val, nan=np.inf, posinf=np.inf), -1.0)

        mu = bisect_decreasing_batch(excess, np.zeros_like(hi), hi, 1e-10 * hi)
    scale = np.where(need[..., None], 1.0 / np.where(need[..., None], lam + mu[..., None], 1.0), inv)
    w = np.einsum("...nm,...m,...km->...kn", U, scale, qt)
    w = np.where((trB > 0)[..., None, None], w, 0.0)
    if return_mu:
        return w, mu
    return w


def w_arrays(a, x, rho, lam_u, p_bs, return_mu=False):
    Xi, q = xi_q_arrays(a, x, rho, lam_u)
    return solve_w_qcqp(Xi, q, p_bs, return_mu=return_mu)


# ---------------------------------------------------------------------------
# state-level operations


def effective_channel(ch: ChannelSet, v_t, v_r):
    return effective_channel_arrays(ch.G, ch.h, ch.d, ch.reflect, v_t, v_r)


def _prep(fp_or_w, ris: RisState, ch: ChannelSet):
    w = fp_or_w.w if isinstance(fp_or_w, FpState) else np.asarray(fp_or_w)
    a = effective_channel(ch, ris.v_t, ris.v_r)
    lam_u = user_weights(ch.reflect, ris.lambda_t, ris.lambda_r)
    return a, w, gram(a, w), lam_u


def sum_rate(fp_or_w, ris: RisState, ch: ChannelSet) -> float:
    """Weighted sum-rate in nats."""
    _, _, T, lam_u = _prep(fp_or_w, ris, ch)
    return float(rate_arrays(T, lam_u, ch.sigma2))


def sinr(fp_or_w, ris: RisState, ch: ChannelSet) -> np.ndarray:
    _, _, T, lam_u = _prep(fp_or_w, ris, ch)
    return sinr_arrays(T, lam_u, ch.sigma2)


def f1(fp: FpState, ris: RisState, ch: ChannelSet) -> float:
    """Quadratic-transform surrogate of the sum-rate (nats)."""
    _, _, T, lam_u = _prep(fp, ris, ch)
    return float(f1_arrays(T, fp.x, fp.rho, lam_u, ch.sigma2))


def update_x(fp: FpState, ris: RisState, ch: ChannelSet) -> np.ndarray:
    _, _, T, lam_u = _prep(fp, ris, ch)
    return x_arrays(T, lam_u, ch.sigma2)


def update_rho(fp: FpState, ris: RisState, ch: ChannelSet) -> np.ndarray:
    _, _, T, lam_u = _prep(fp, ris, ch)
    return sinr_arrays(T, lam_u, ch.sigma2)


def update_w(fp: FpState, ris: RisState, ch: ChannelSet, p_bs=None, return_mu=False):
    a = effective_channel(ch, ris.v_t, ris.v_r)
    lam_u = user_weights(ch.reflect, ris.lambda_t, ris.lambda_r)
    p = ch.p_bs if p_bs is None else p_bs
    return w_arrays(a, fp.x, fp.rho, lam_u, p, return_mu=return_mu)


def w_objective(w, fp: FpState, ris: RisState, ch: ChannelSet) -> float:
    """Value of the beamforming subproblem at ``w`` (lower is better)."""
    a = effective_channel(ch, ris.v_t, ris.v_r)
    lam_u = user_weights(ch.reflect, ris.lambda_t, ris.lambda_r)
    Xi, q = xi_q_arrays(a, fp.x, fp.rho, lam_u)
    return qcqp_objective(w, Xi, q)


def qcqp_objective(w, Xi, q) -> float:
    quad = np.einsum("kn,nm,km->", np.conj(w), Xi, w)
    return float(np.real(quad) - 2 * np.real(np.sum(np.conj(q) * w)))


def lambda_terms(fp: FpState, ris: RisState, ch: ChannelSet, printed_psi=False):
    """Per-side ``(eta_t, eta_r, psi_t, psi_r)`` of the time-share subproblem
    ``lt^2 psi_t + lr^2 psi_r + lt eta_t + lr eta_r``.

    ``printed_psi=True`` uses the bare noise sums for ``psi``; the default
    keeps the ``(1 + rho)|x|^2`` weights that the surrogate actually carries.
    """
    _, _, T, _ = _prep(fp, ris, ch)
    s = np.diagonal(T)
    _, total = _signal_and_total(T)
    rho, x = fp.rho, fp.x
    eta = (1 + rho) * (np.abs(x) ** 2 * total - 2 * np.real(np.conj(x) * s)) - np.log1p(rho) + rho
    if printed_psi:
        psi = ch.sigma2.astype(float)
    else:
        psi = (1 + rho) * np.abs(x) ** 2 * ch.sigma2
    r = ch.reflect
    return eta[~r].sum(), eta[r].sum(), psi[~r].sum(), psi[r].sum()


def update_lambda(fp: FpState, ris: RisState, ch: ChannelSet, printed_psi=False):
    """Optimal time shares ``(lambda_t, lambda_r)`` for TS mode."""
    eta_t, eta_r, psi_t, psi_r = lambda_terms(fp, ris, ch, printed_psi)
    den = 2 * (psi_t + psi_r)
    if den > 0:
        lt = (2 * psi_r - eta_t + eta_r) / den
    elif eta_t != eta_r:
        # linear objective: all time to the cheaper side
        lt = 1.0 if eta_t < eta_r else 0.0
    else:
        lt = ris.lambda_t
    lt = float(min(max(lt, 0.0), 1.0))
    return lt, 1.0 - lt


def lambda_objective(lt, fp: FpState, ris: RisState, ch: ChannelSet, printed_psi=False):
    eta_t, eta_r, psi_t, psi_r = lambda_terms(fp, ris, ch, printed_psi)
    lr = 1 - lt
    return lt**2 * psi_t + lr**2 * psi_r + lt * eta_t + lr * eta_r


def build_ris_quadratics(fp: FpState, ris: RisState, ch: ChannelSet, aux: AuxState, gamma) -> RisQuadratics:
    """Quadratic model of ``-F1 + gamma/2 ||v - phi||^2`` in the RIS vectors,
    exact up to a constant."""
    lam_u = user_weights(ch.reflect, ris.lambda_t, ris.lambda_r)
    w, x, rho = fp.w, fp.x, fp.rho
    G, h, d = ch.G, ch.h, ch.d
    M = ch.m_elements
    Wsum = np.conj(w).T @ w
    Gc = np.conj(G)
    P = Gc @ Wsum @ G.T
    ax2 = np.abs(x) ** 2
    # (K, N) inner vectors |x|^2 Wsum d_l - x_l conj(w_l)
    inner = ax2[:, None] * (d @ Wsum.T) - x[:, None] * np.conj(w)
    b_users = 2 * (1 + rho)[:, None] * np.conj(h) * (inner @ Gc.T)
    coef = lam_u * (1 + rho) * ax2
    out = []
    for side, phi, lam in ((~ch.reflect, aux.phi_t, ris.lambda_t), (ch.reflect, aux.phi_r, ris.lambda_r)):
        hs = h[side]
        c = coef[side]
        # sum_l c_l diag(conj h_l) P diag(h_l) = P * (sum_l c_l conj(h_l) h_l^T)
        H = np.einsum("k,km,kn->mn", c, np.conj(hs), hs)
        A = 0.5 * gamma * np.eye(M) + P * H
        A = 0.5 * (A + np.conj(A.T))
        b = -gamma * phi + lam * b_users[side].sum(axis=0)
        out.append((A, b))
    (A_t, b_t), (A_r, b_r) = out
    return RisQuadratics(A_t, A_r, b_t, b_r)


def update_ris_ts(Q: RisQuadratics):
    """Unconstrained minimiser ``v = -A^{-1} b / 2`` on each side."""
    out = []
    for A, b in ((Q.A_t, Q.b_t), (Q.A_r, Q.b_r)):
        try:
            c = np.linalg.cond(A)
            if not np.isfinite(c) or c > 1e15:
                raise np.linalg.LinAlgError
            out.append(-0.5 * np.linalg.solve(A, b))
        except np.linalg.LinAlgError:
            raise Singular("RIS quadratic is singular; gamma must be positive") from None
    return out[0], out[1]


def pair_objective(phi, a_t, a_r, ct_abs, cr_abs):
    """Per-element cost with ``|v^t| = sin phi`` and ``|v^r| = cos phi``,
    dropping the constant ``a_t``."""
    c = np.cos(phi)
    return (a_r - a_t) * c**2 - cr_abs * c - ct_abs * np.sin(phi)


def pair_gradient(phi, a_t, a_r, ct_abs, cr_abs):
    s, c = np.sin(phi), np.cos(phi)
    return 2 * (a_r - a_t) * (-c * s) + cr_abs * s - ct_abs * c


def pair_coefficients(m, Q: RisQuadratics, v_t, v_r):
    """``(a_t, a_r, c_t, c_r)`` of element ``m`` with all other elements fixed."""
    out = []
    for A, b, v in ((Q.A_t, Q.b_t, v_t), (Q.A_r, Q.b_r, v_r)):
        c = b[m] + 2 * (A[m] @ v - A[m, m] * v[m])
        out.append((float(np.real(A[m, m])), c))
    (a_t, c_t), (a_r, c_r) = out
    return a_t, a_r, c_t, c_r


def solve_pair_angle(a_t, a_r, ct_abs, cr_abs, tol=PHI_TOL):
    """Minimise :func:`pair_objective` over ``phi`` in ``[0, pi/2]``."""
    cands = [0.0, 0.5 * math.pi]
    if ct_abs > 0 and cr_abs > 0:
        k = 2 * (a_r - a_t)
        # the gradient is sin*cos times this increasing bracket
        g = lambda p: cr_abs / math.cos(p) - ct_abs / math.sin(p) - k
        lo, hi = tol, 0.5 * math.pi - tol
        if g(lo) <= 0 <= g(hi):
            cands.append(bisect_root(g, lo, hi, tol))
    vals = [pair_objective(p, a_t, a_r, ct_abs, cr_abs) for p in cands]
    i = int(np.argmin(vals))
    return cands[i], vals[i]


def update_ris_pair(m, Q: RisQuadratics, v_t, v_r):
    """Exact update of element ``m`` under ``|v_m^t|^2 + |v_m^r|^2 = 1``."""
    a_t, a_r, c_t, c_r = pair_coefficients(m, Q, v_t, v_r)
    phi, _ = solve_pair_angle(a_t, a_r, abs(c_t), abs(c_r))
    ph_t = math.pi + np.angle(c_t)
    ph_r = math.pi + np.angle(c_r)
    return math.sin(phi) * np.exp(1j * ph_t), math.cos(phi) * np.exp(1j * ph_r)


def sweep_ris_pairs(Q: RisQuadratics, v_t, v_r):
    """One Gauss-Seidel sweep over elements in ascending order."""
    v_t = np.array(v_t, dtype=complex)
    v_r = np.array(v_r, dtype=complex)
    for m in range(v_t.size):
        v_t[m], v_r[m] = update_ris_pair(m, Q, v_t, v_r)
    return v_t, v_r


# ---------------------------------------------------------------------------
# fixed-RIS beamforming


def matched_filter_init(ch: ChannelSet, p_bs=None):
    """``w_l`` along ``conj(d_l)``, scaled to share the power budget equally."""
    p = ch.p_bs if p_bs is None else p_bs
    K, N = ch.d.shape
    nrm = np.linalg.norm(ch.d, axis=1, keepdims=True)
    dirs = np.where(nrm > 0, np.conj(ch.d) / np.where(nrm > 0, nrm, 1.0), 1.0 / math.sqrt(N))
    return math.sqrt(p / K) * dirs


def fixed_ris_rates(ch: ChannelSet, v_t, v_r, lambda_t=1.0, lambda_r=1.0, iters=100, tol=1e-6, w0=None):
    """Run FP beamforming iterations for a batch of fixed RIS settings.

    Parameters
    ----------
    v_t, v_r : (C, M) arrays of RIS coefficients.
    iters : iteration cap.
    tol : relative rate change that freezes a candidate.

    Returns
    -------
    rates : (C,) sum-rates in nats after the last accepted iteration.
    w : (C, K, N) beamformers.
    """
    v_t = np.atleast_2d(v_t)
    v_r = np.atleast_2d(v_r)
    C = v_t.shape[0]
    a = effective_channel(ch, v_t, v_r)
    lam_u = user_weights(ch.reflect, lambda_t, lambda_r)
    w = np.broadcast_to(matched_filter_init(ch) if w0 is None else w0, (C,) + ch.d.shape).copy()
    T = gram(a, w)
    rate = rate_arrays(T, lam_u, ch.sigma2)
    active = np.ones(C, dtype=bool)
    for _ in range(iters):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        a_i, T_i = a[idx], T[idx]
        lu = lam_u if lam_u.ndim == 1 else lam_u[idx]
        x = x_arrays(T_i, lu, ch.sigma2)
        rho = sinr_arrays(T_i, lu, ch.sigma2)
        w_new = w_arrays(a_i, x, rho, lu, ch.p_bs)
        T_new = gram(a_i, w_new)
        r_new = rate_arrays(T_new, lu, ch.sigma2)
        w[idx], T[idx] = w_new, T_new
        done = np.abs(r_new - rate[idx]) <= tol * np.maximum(np.abs(r_new), 1e-300)
        rate[idx] = r_new
        active[idx[done]] = False
    return rate, w
