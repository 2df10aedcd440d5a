"""Reproducible downlink scenarios: 2-D geometry, distance path loss and
Rician fading for the BS -> STAR-RIS -> user links plus the direct link.

Seeding uses numpy's PCG64 behind ``SeedSequence`` so every trial gets an
independent, order-free stream.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

RNG_ALGORITHM = "numpy.random.PCG64 via SeedSequence(seed, spawn_key=(trial,))"


def dbm_to_watts(p_dbm):
    return 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)


@dataclass
class LinkParams:
    bs_ris: float
    ris_user: float
    bs_user: float


@dataclass
class ScenarioSpec:
    """Scenario parameters. Powers are given in dBm and converted on access.

    Users are dropped uniformly (by area) in half-disks of ``user_radius``
    around the RIS: reflection users on the BS side of the RIS plane
    ``x = ris_position[0]``, transmission users on the far side.
    """

    n_antennas: int = 8
    m_elements: int = 16
    k_reflect: int = 2
    k_transmit: int = 2
    p_bs_dbm: float = 30.0
    noise_dbm: float = -80.0
    bs_position: tuple = (0.0, 20.0)
    ris_position: tuple = (40.0, 0.0)
    user_radius: float = 8.0
    user_min_distance: float = 1.0
    pathloss_ref_db: float = -30.0
    d0: float = 1.0
    exponents: LinkParams = field(default_factory=lambda: LinkParams(2.2, 2.2, 3.6))
    rician: LinkParams = field(default_factory=lambda: LinkParams(5.0, 5.0, 0.0))
    antenna_spacing: float = 0.5

    def __post_init__(self):
        if isinstance(self.exponents, dict):
            self.exponents = LinkParams(**self.exponents)
        if isinstance(self.rician, dict):
            self.rician = LinkParams(**self.rician)
        self.bs_position = tuple(float(x) for x in self.bs_position)
        self.ris_position = tuple(float(x) for x in self.ris_position)
        self.validate()

    def validate(self):
        for name in ("n_antennas", "m_elements"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.k_reflect < 0 or self.k_transmit < 0 or self.k_reflect + self.k_transmit < 1:
            raise ValueError("need k_reflect, k_transmit >= 0 with at least one user")
        if not 0 < self.user_min_distance < self.user_radius:
            raise ValueError("need 0 < user_min_distance < user_radius")
        if self.d0 <= 0:
            raise ValueError("d0 must be positive")
        for name, val in asdict(self.exponents).items():
            if val <= 0:
                raise ValueError(f"path loss exponent {name} must be positive")
        for name, val in asdict(self.rician).items():
            if val < 0:
                raise ValueError(f"Rician factor {name} must be nonnegative")
        if len(self.bs_position) != 2 or len(self.ris_position) != 2:
            raise ValueError("positions are 2-D")

    @property
    def n_users(self) -> int:
        return self.k_reflect + self.k_transmit

    @property
    def p_bs(self) -> float:
        return float(dbm_to_watts(self.p_bs_dbm))

    @property
    def noise_variance(self) -> float:
        return float(dbm_to_watts(self.noise_dbm))

    @property
    def pathloss_ref(self) -> float:
        return 10.0 ** (self.pathloss_ref_db / 10.0)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["bs_position"] = list(self.bs_position)
        out["ris_position"] = list(self.ris_position)
        return out


@dataclass
class ChannelSet:
    """One channel realization plus the per-instance power budget.

    Attributes
    ----------
    G : (M, N) BS -> RIS channel.
    h : (K, M) RIS -> user channels, reflection users first.
    d : (K, N) BS -> user direct channels.
    sigma2 : (K,) noise variances in watts.
    k_reflect : number of reflection-side users (leading rows).
    p_bs : transmit power budget in watts.
    positions : (K, 2) user coordinates, kept for auditing.
    """

    G: np.ndarray
    h: np.ndarray
    d: np.ndarray
    sigma2: np.ndarray
    k_reflect: int
    p_bs: float
    positions: np.ndarray | None = None

    @property
    def n_users(self) -> int:
        return self.h.shape[0]

    @property
    def m_elements(self) -> int:
        return self.G.shape[0]

    @property
    def n_antennas(self) -> int:
        return self.G.shape[1]

    @property
    def reflect(self) -> np.ndarray:
        """Boolean mask of reflection-side users."""
        return np.arange(self.n_users) < self.k_reflect

    def with_power(self, p_bs: float) -> "ChannelSet":
        return ChannelSet(self.G, self.h, self.d, self.sigma2, self.k_reflect, p_bs, self.positions)


def path_loss(distance, spec: ScenarioSpec, exponent: float):
    """Linear gain ``L0 (d / d0)^-alpha``."""
    distance = np.asarray(distance, dtype=float)
    if np.any(distance <= 0):
        raise ValueError("distance must be positive")
    return spec.pathloss_ref * (distance / spec.d0) ** (-exponent)


def steering_vector(n: int, omega: float, spacing: float) -> np.ndarray:
    return np.exp(2j * math.pi * np.arange(n) * spacing * math.sin(omega))


def rician_channel(rows, cols, nu, kappa, aoa, spacing, rng, aod=None):
    """Rician matrix ``sqrt(nu / (kappa + 1)) (sqrt(kappa) LoS + NLoS)``.

    The LoS part is ``a_rows(aoa) a_cols(aod)^T``; with ``cols == 1`` and
    no ``aod`` it reduces to a steering column. NLoS entries are unit
    variance circular complex Gaussian.
    """
    if nu <= 0 or kappa < 0:
        raise ValueError("need nu > 0 and kappa >= 0")
    los = np.outer(
        steering_vector(rows, aoa, spacing),
        steering_vector(cols, 0.0 if aod is None else aod, spacing),
    )
    nlos = (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / math.sqrt(2)
    return math.sqrt(nu / (kappa + 1)) * (math.sqrt(kappa) * los + nlos)


def _drop_users(spec: ScenarioSpec, rng) -> np.ndarray:
    K = spec.n_users
    # area-uniform radius on the annulus [r_min, R]
    r2 = rng.uniform(spec.user_min_distance**2, spec.user_radius**2, K)
    r = np.sqrt(r2)
    u = rng.uniform(-0.5 * math.pi, 0.5 * math.pi, K)
    # reflection side faces the BS (x < RIS x), transmission side faces away
    ang = np.where(np.arange(K) < spec.k_reflect, u + math.pi, u)
    cx, cy = spec.ris_position
    return np.column_stack([cx + r * np.cos(ang), cy + r * np.sin(ang)])


def build_channels(spec: ScenarioSpec, rng) -> ChannelSet:
    """Draw user positions and all channels for one trial."""
    N, M, K = spec.n_antennas, spec.m_elements, spec.n_users
    sp = spec.antenna_spacing
    bs = np.array(spec.bs_position)
    ris = np.array(spec.ris_position)
    pos = _drop_users(spec, rng)

    nu_g = float(path_loss(np.linalg.norm(ris - bs), spec, spec.exponents.bs_ris))
    G = rician_channel(
        M, N, nu_g, spec.rician.bs_ris, rng.uniform(0, 2 * math.pi), sp, rng,
        aod=rng.uniform(0, 2 * math.pi),
    )
    h = np.empty((K, M), dtype=complex)
    d = np.empty((K, N), dtype=complex)
    for k in range(K):
        nu_h = float(path_loss(np.linalg.norm(pos[k] - ris), spec, spec.exponents.ris_user))
        nu_d = float(path_loss(np.linalg.norm(pos[k] - bs), spec, spec.exponents.bs_user))
        h[k] = rician_channel(M, 1, nu_h, spec.rician.ris_user, rng.uniform(0, 2 * math.pi), sp, rng)[:, 0]
        d[k] = rician_channel(N, 1, nu_d, spec.rician.bs_user, rng.uniform(0, 2 * math.pi), sp, rng)[:, 0]
    sigma2 = np.full(K, spec.noise_variance)
    return ChannelSet(G, h, d, sigma2, spec.k_reflect, spec.p_bs, pos)


def trial_rngs(seed: int, trial: int):
    """Independent (channel, init) generators for one trial.

    The child streams depend only on ``(seed, trial)``, so changing the
    trial count never reshuffles earlier trials.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(trial),))
    ch_ss, init_ss = ss.spawn(2)
    return np.random.Generator(np.random.PCG64(ch_ss)), np.random.Generator(np.random.PCG64(init_ss))
