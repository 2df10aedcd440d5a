"""STAR-RIS operating-mode taxonomy and exact projections onto the
selection constraint sets (the auxiliary-variable subproblem).

All projections work elementwise on length-``M`` complex vectors; no
element depends on any other.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import PhaseGrid, proj_discrete_phase, wrap_angle

HALF_PI = 0.5 * math.pi
MAX_BRUTE_FORCE_CANDIDATES = 10**6


class Mode(str, enum.Enum):
    ES = "ES"
    MS = "MS"
    TS = "TS"


class InvalidGrid(ValueError):
    pass


class TooLarge(ValueError):
    pass


@dataclass(frozen=True)
class StarConfig:
    """Which STAR-RIS model is solved: operating mode, coupled-phase flag and
    phase alphabet."""

    mode: Mode
    coupled: bool = False
    phase: PhaseGrid = field(default_factory=PhaseGrid)

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.coupled and self.mode is not Mode.ES:
            raise ValueError("coupled phase is only defined for ES mode")
        if self.coupled:
            _check_coupled_grid(self.phase)

    @property
    def discrete(self) -> bool:
        return not self.phase.continuous

    @property
    def case_index(self) -> int:
        """Row of the eight-model taxonomy (1..8)."""
        if self.mode is Mode.TS:
            return 2 if self.discrete else 1
        if self.mode is Mode.MS:
            return 4 if self.discrete else 3
        base = 7 if self.coupled else 5
        return base + (1 if self.discrete else 0)

    @classmethod
    def from_case(cls, index: int, levels: int = 2, coupled_levels: int = 4) -> "StarConfig":
        """Build the configuration for taxonomy row ``index``.

        ``levels`` is used for discrete rows 2, 4 and 6, ``coupled_levels``
        for row 8.
        """
        table = {
            1: (Mode.TS, False, 0),
            2: (Mode.TS, False, levels),
            3: (Mode.MS, False, 0),
            4: (Mode.MS, False, levels),
            5: (Mode.ES, False, 0),
            6: (Mode.ES, False, levels),
            7: (Mode.ES, True, 0),
            8: (Mode.ES, True, coupled_levels),
        }
        if index not in table:
            raise ValueError(f"case index must be in 1..8, got {index!r}")
        mode, coupled, L = table[index]
        if index in (2, 4, 6, 8) and L < 1:
            raise InvalidGrid(f"case {index} needs a discrete phase alphabet, got levels={L}")
        return cls(mode, coupled, PhaseGrid(L))

    def label(self) -> str:
        parts = [self.mode.value]
        if self.coupled:
            parts.append("coupled")
        parts.append(f"L={self.phase.levels}" if self.discrete else "continuous")
        return " ".join(parts)


def _check_coupled_grid(grid: PhaseGrid) -> None:
    # the quadrature partner of every grid point must itself be a grid point
    if not grid.continuous and (grid.levels <= 2 or grid.levels % 4 != 0):
        raise InvalidGrid(
            f"coupled phase needs levels divisible by 4 (or continuous), got {grid.levels}"
        )


@dataclass
class AuxState:
    phi_t: np.ndarray
    phi_r: np.ndarray

    def copy(self) -> "AuxState":
        return AuxState(self.phi_t.copy(), self.phi_r.copy())


def _angle(z):
    # angle of 0 is 0 by convention
    return wrap_angle(np.angle(z))


def _as_pair(v_t, v_r):
    v_t = np.atleast_1d(np.asarray(v_t, dtype=complex))
    v_r = np.atleast_1d(np.asarray(v_r, dtype=complex))
    if v_t.shape != v_r.shape:
        raise ValueError(f"v_t and v_r shapes differ: {v_t.shape} vs {v_r.shape}")
    return v_t, v_r


def p1_objective(v_t, v_r, aux: AuxState) -> float:
    return float(np.sum(np.abs(v_t - aux.phi_t) ** 2) + np.sum(np.abs(v_r - aux.phi_r) ** 2))


def project_ts(v_t, v_r, grid: PhaseGrid) -> AuxState:
    v_t, v_r = _as_pair(v_t, v_r)
    a_t = proj_discrete_phase(_angle(v_t), grid)
    a_r = proj_discrete_phase(_angle(v_r), grid)
    return AuxState(np.exp(1j * a_t), np.exp(1j * a_r))


def project_ms(v_t, v_r, grid: PhaseGrid) -> AuxState:
    """Each element goes fully to the side whose phase-projected component
    is larger; ties go to transmission."""
    v_t, v_r = _as_pair(v_t, v_r)
    p_t, p_r = _angle(v_t), _angle(v_r)
    a_t = proj_discrete_phase(p_t, grid)
    a_r = proj_discrete_phase(p_r, grid)
    beta_t = np.abs(v_t) * np.cos(a_t - p_t)
    beta_r = np.abs(v_r) * np.cos(a_r - p_r)
    pick_t = beta_t >= beta_r
    phi_t = np.where(pick_t, np.exp(1j * a_t), 0.0)
    phi_r = np.where(pick_t, 0.0, np.exp(1j * a_r))
    return AuxState(phi_t.astype(complex), phi_r.astype(complex))


def project_es(v_t, v_r, grid: PhaseGrid) -> AuxState:
    v_t, v_r = _as_pair(v_t, v_r)
    if grid.continuous:
        return AuxState(v_t.copy(), v_r.copy())
    out = []
    for v in (v_t, v_r):
        p = _angle(v)
        a = proj_discrete_phase(p, grid)
        # nonnegative for L >= 2; the clip only matters for the one-point grid
        beta = np.maximum(np.abs(v) * np.cos(a - p), 0.0)
        out.append(beta * np.exp(1j * a))
    return AuxState(*out)


def project_es_coupled(v_t, v_r, grid: PhaseGrid) -> AuxState:
    """Nearest pair whose phases differ by a quarter turn.

    The transmission phase minimises
    ``|v_r|^2 cos(2 theta - 2 angle v_r) - |v_t|^2 cos(2 theta - 2 angle v_t)``
    over the grid; amplitudes then follow in closed form.
    """
    _check_coupled_grid(grid)
    v_t, v_r = _as_pair(v_t, v_r)
    m_t, m_r = np.abs(v_t), np.abs(v_r)
    p_t, p_r = _angle(v_t), _angle(v_r)
    z = m_r**2 * np.exp(1j * (2 * p_t - 2 * p_r)) - m_t**2
    flat = np.abs(z) <= 1e-14 * np.maximum(m_t**2 + m_r**2, np.finfo(float).tiny)
    b = np.angle(z)
    theta = np.where(flat, p_t, p_t - 0.5 * b + HALF_PI)
    theta = proj_discrete_phase(theta, grid)
    phi_t = m_t * np.cos(theta - p_t) * np.exp(1j * theta)
    s = np.sin(theta - p_r)
    phi_r = m_r * np.abs(s) * np.exp(1j * (theta - HALF_PI * np.sign(s)))
    return AuxState(phi_t, phi_r)


def project_p1(v_t, v_r, config: StarConfig) -> AuxState:
    """Exact minimiser of ``||v_t - phi_t||^2 + ||v_r - phi_r||^2`` over the
    constraint set selected by ``config``."""
    if config.mode is Mode.TS:
        return project_ts(v_t, v_r, config.phase)
    if config.mode is Mode.MS:
        return project_ms(v_t, v_r, config.phase)
    if config.coupled:
        return project_es_coupled(v_t, v_r, config.phase)
    return project_es(v_t, v_r, config.phase)


def candidate_count(config: StarConfig) -> int:
    """Number of enumerated options per element in :func:`p1_brute_force`."""
    L = config.phase.levels
    if config.mode is Mode.TS:
        return L * L
    if config.mode is Mode.MS:
        return 2 * L
    if config.coupled:
        return L
    return L * L


def p1_brute_force(v_t, v_r, config: StarConfig):
    """Enumerate every discrete option per element and keep the closest.

    Amplitudes that are free (ES) take their per-phase optimum
    ``max(0, |v| cos(theta - angle v))``. For coupled ES each transmission
    phase on the grid is scored against both quadrature partners for the
    reflection phase.

    Returns
    -------
    aux : AuxState
    objective : float
    """
    if config.phase.continuous:
        raise ValueError("brute force needs a finite phase alphabet")
    v_t, v_r = _as_pair(v_t, v_r)
    M = v_t.size
    total = M * candidate_count(config)
    if total > MAX_BRUTE_FORCE_CANDIDATES:
        raise TooLarge(f"{total} candidates exceeds {MAX_BRUTE_FORCE_CANDIDATES}")
    thetas = config.phase.points()
    unit = np.exp(1j * thetas)
    L = thetas.size
    vt = v_t[:, None]
    vr = v_r[:, None]

    if config.mode is Mode.TS:
        ct = np.broadcast_to(unit[:, None], (L, L)).reshape(-1)
        cr = np.broadcast_to(unit[None, :], (L, L)).reshape(-1)
        cand_t = np.broadcast_to(ct, (M, L * L))
        cand_r = np.broadcast_to(cr, (M, L * L))
    elif config.mode is Mode.MS:
        zeros = np.zeros(L, dtype=complex)
        cand_t = np.broadcast_to(np.concatenate([unit, zeros]), (M, 2 * L))
        cand_r = np.broadcast_to(np.concatenate([zeros, unit]), (M, 2 * L))
    elif config.coupled:
        amp_t = np.maximum(np.abs(vt) * np.cos(thetas[None, :] - _angle(vt)), 0.0)
        best_t = amp_t * unit[None, :]
        options = []
        for sign in (1.0, -1.0):
            th_r = thetas + sign * HALF_PI
            amp_r = np.maximum(np.abs(vr) * np.cos(th_r[None, :] - _angle(vr)), 0.0)
            options.append(amp_r * np.exp(1j * th_r)[None, :])
        cost_opts = np.stack([np.abs(vr - o) ** 2 for o in options])
        choose = np.argmin(cost_opts, axis=0)
        cand_t = best_t
        cand_r = np.where(choose == 0, options[0], options[1])
    else:
        amp_t = np.maximum(np.abs(vt) * np.cos(thetas[None, :] - _angle(vt)), 0.0)
        amp_r = np.maximum(np.abs(vr) * np.cos(thetas[None, :] - _angle(vr)), 0.0)
        pt = amp_t * unit[None, :]
        pr = amp_r * unit[None, :]
        cand_t = np.repeat(pt, L, axis=1)
        cand_r = np.tile(pr, (1, L))

    cost = np.abs(vt - cand_t) ** 2 + np.abs(vr - cand_r) ** 2
    idx = np.argmin(cost, axis=1)
    rows = np.arange(M)
    aux = AuxState(np.array(cand_t[rows, idx]), np.array(cand_r[rows, idx]))
    return aux, float(np.sum(cost[rows, idx]))


def is_feasible_aux(aux: AuxState, config: StarConfig, tol: float = 1e-9) -> bool:
    """Check the selection constraints of ``config`` on ``aux``."""
    pt, pr = aux.phi_t, aux.phi_r
    mt, mr = np.abs(pt), np.abs(pr)
    if config.mode is Mode.TS:
        if np.any(np.abs(mt - 1) > tol) or np.any(np.abs(mr - 1) > tol):
            return False
    elif config.mode is Mode.MS:
        t_on = np.abs(mt - 1) <= tol
        r_on = np.abs(mr - 1) <= tol
        ok = (t_on & (mr <= tol)) | (r_on & (mt <= tol))
        if not np.all(ok):
            return False
    if config.coupled:
        both = (mt > tol) & (mr > tol)
        if np.any(np.abs(np.cos(np.angle(pt[both]) - np.angle(pr[both]))) > tol):
            return False
    if config.discrete:
        for p, m in ((pt, mt), (pr, mr)):
            on = m > tol
            ang = _angle(p[on])
            # a negative real amplitude shows up as a half-turn, which is on
            # every even grid
            snapped = proj_discrete_phase(ang, config.phase)
            diff = np.abs(np.angle(np.exp(1j * (ang - snapped))))
            if np.any(diff > tol * 10):
                return False
    return True
