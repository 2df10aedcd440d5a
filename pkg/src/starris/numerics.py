"""Shared numerical primitives: phase grids, Hermitian eigendecomposition
and monotone root bracketing."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

TWO_PI = 2.0 * math.pi


class NotHermitian(ValueError):
    pass


class NotPSD(ValueError):
    pass


class NoSignChange(ValueError):
    pass


@dataclass(frozen=True)
class PhaseGrid:
    """Uniform phase alphabet ``{2 pi k / L : k = 0..L-1}``.

    ``levels == 0`` means continuous phase; every projection onto the grid
    is then the identity (modulo ``2 pi``).
    """

    levels: int = 0

    def __post_init__(self):
        if int(self.levels) != self.levels or self.levels < 0:
            raise ValueError(f"phase levels must be a nonnegative integer, got {self.levels!r}")

    @property
    def continuous(self) -> bool:
        return self.levels == 0

    def points(self) -> np.ndarray:
        if self.continuous:
            raise ValueError("continuous grid has no finite point set")
        return TWO_PI * np.arange(self.levels) / self.levels


def wrap_angle(theta):
    """Reduce angles to ``[0, 2 pi)`` with a floored modulo."""
    out = np.mod(theta, TWO_PI)
    # np.mod can return exactly 2 pi for tiny negative inputs
    return np.where(out >= TWO_PI, 0.0, out)


def proj_discrete_phase(theta, grid: PhaseGrid):
    """Nearest grid point on the circle.

    Works elementwise on scalars or arrays. Ties between two equidistant
    grid points resolve to the smaller angle in ``[0, 2 pi)``.
    """
    scalar = np.ndim(theta) == 0
    t = wrap_angle(np.asarray(theta, dtype=float))
    if grid.continuous:
        return float(t) if scalar else t
    L = grid.levels
    step = TWO_PI / L
    pos = t / step
    lower = np.floor(pos)
    frac = pos - lower
    # frac == 0.5 is a tie; pick the lower index unless it wraps past zero,
    # in which case index 0 (angle 0) is the smaller angle
    k = np.where(frac > 0.5, lower + 1, lower)
    k = np.mod(k, L)
    tie_at_top = (frac == 0.5) & (lower == L - 1)
    k = np.where(tie_at_top, 0, k)
    out = k * step
    return float(out) if scalar else out


def hermitian_eig(H, tol: float = 1e-10):
    """Eigendecomposition of a Hermitian PSD matrix.

    Parameters
    ----------
    H : (n, n) complex array
    tol : float
        Relative tolerance for the Hermitian and PSD checks.

    Returns
    -------
    U : (n, n) unitary matrix, columns are eigenvectors.
    lam : (n,) real eigenvalues sorted descending, tiny negatives clamped to 0.
    """
    H = np.asarray(H)
    scale = float(np.linalg.norm(H)) or 1.0
    Hs = 0.5 * (H + H.conj().T)
    if np.linalg.norm(H - Hs) > tol * scale:
        raise NotHermitian("matrix is not Hermitian within tolerance")
    lam, U = np.linalg.eigh(Hs)
    lam = lam[::-1]
    U = U[:, ::-1]
    if lam.size and lam[-1] < -tol * scale:
        raise NotPSD(f"matrix has eigenvalue {lam[-1]:.3e} < 0")
    return U, np.clip(lam, 0.0, None)


def bisect_root(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-12) -> float:
    """Root of a monotone scalar function on ``[lo, hi]`` by bisection.

    Raises
    ------
    NoSignChange
        If ``f(lo)`` and ``f(hi)`` share a strict sign.
    """
    flo = f(lo)
    if flo == 0.0:
        return lo
    fhi = f(hi)
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise NoSignChange(f"f({lo})={flo:.3e} and f({hi})={fhi:.3e} share a sign")
    increasing = fhi > 0
    n_iter = max(0, math.ceil(math.log2((hi - lo) / tol))) + 2 if hi > lo else 0
    for _ in range(n_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == increasing:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def bisect_decreasing_batch(f, lo, hi, tol):
    """Vectorised bisection for elementwise decreasing functions.

    ``f`` maps an array of abscissae to an array of values of the same
    shape. Every entry must satisfy ``f(lo) >= 0 >= f(hi)``. Returns the
    upper end of the final bracket, so ``f(result) <= 0`` holds exactly
    whenever it held at ``hi``.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    tol = np.broadcast_to(np.asarray(tol, dtype=float), hi.shape)
    width = np.max((hi - lo) / np.maximum(tol, np.finfo(float).tiny), initial=1.0)
    n_iter = max(0, math.ceil(math.log2(max(width, 1.0)))) + 2
    for _ in range(n_iter):
        if np.all(hi - lo <= tol):
            break
        mid = 0.5 * (lo + hi)
        positive = f(mid) > 0
        lo = np.where(positive, mid, lo)
        hi = np.where(positive, hi, mid)
    return hi
