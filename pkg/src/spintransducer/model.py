"""Physical parameters, spin-ensemble discretization and free-field mode grids.

Every frequency is an angular frequency expressed in units of the
qubit–cavity coupling ``G`` (so ``G = 1`` in all presets). Conversions from
laboratory values given as ω/2π in MHz go through :func:`mhz`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import ndtri

# reference coupling G/2π in MHz used by the presets
G_MHZ = 50.0

LINESHAPES = ("gaussian", "lorentzian-truncated", "delta")
LORENTZ_TRUNCATION = 5.0  # truncation at ±5 widths
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


def mhz(f_mhz: float, g_mhz: float = G_MHZ) -> float:
    """Angular frequency 2π×f_mhz MHz in units of G = 2π×g_mhz MHz."""
    return f_mhz / g_mhz


def ns_to_G(t_ns: float, g_mhz: float = G_MHZ) -> float:
    return t_ns * 1e-9 * 2.0 * math.pi * g_mhz * 1e6


def G_to_ns(t: float, g_mhz: float = G_MHZ) -> float:
    return t / (2.0 * math.pi * g_mhz * 1e6) * 1e9


@dataclass(frozen=True)
class PhysicalParams:
    G: float = 1.0
    kappa_coll: float = 1.0
    g_ab: float = 0.0
    n_spins_effective: float = 1.0
    gamma_a: float = 0.0
    gamma_s: float = 0.0
    gamma_e: float = 0.0
    gamma_co: float = 0.0
    gamma_cmu: float = 0.0
    delta_sb_static: float = 0.0
    delta_ab_static: float = 0.0
    delta_Q_static: float = 0.0
    Delta_c_static: float = 0.0
    # ring-cavity loss through channels other than the input mirror
    gamma_co_int: float = 0.0

    def __post_init__(self):
        for name in ("G", "kappa_coll", "g_ab", "n_spins_effective", "gamma_a", "gamma_s",
                     "gamma_e", "gamma_co", "gamma_cmu", "gamma_co_int"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {v}")
        for name in ("delta_sb_static", "delta_ab_static", "delta_Q_static", "Delta_c_static"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not self.G > 0:
            raise ValueError("G must be positive (it sets the unit of frequency)")

    @property
    def g_coll(self) -> float:
        """Collective optical coupling g_ab √N."""
        return self.g_ab * math.sqrt(self.n_spins_effective)


@dataclass(frozen=True)
class EnsembleSpec:
    n_classes: int = 1
    width_sb: float = 0.0
    width_ab: float = 0.0
    lineshape: str = "delta"
    disorder_xi: complex = 0j
    seed: Optional[int] = None

    def __post_init__(self):
        if int(self.n_classes) != self.n_classes or self.n_classes < 1:
            raise ValueError(f"n_classes must be a positive integer, got {self.n_classes}")
        if self.lineshape not in LINESHAPES:
            raise ValueError(f"lineshape must be one of {LINESHAPES}, got {self.lineshape!r}")
        if self.width_sb < 0 or self.width_ab < 0:
            raise ValueError("inhomogeneous widths must be non-negative")
        if abs(complex(self.disorder_xi)) > 1.0:
            raise ValueError("|disorder_xi| must not exceed 1")
        object.__setattr__(self, "disorder_xi", complex(self.disorder_xi))


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Frequency classes of the spin ensemble.

    ``class_g`` and ``class_kappa`` are the per-class collective couplings
    g_ab√(N w_j) and κ√(N w_j); ``class_xi`` the per-class backscattering
    factor coupling the anticlockwise ring mode.
    """

    class_weights: np.ndarray
    class_delta_ab: np.ndarray
    class_delta_sb: np.ndarray
    class_kappa: np.ndarray
    class_g: np.ndarray
    class_xi: np.ndarray

    def __post_init__(self):
        n = len(self.class_weights)
        for name in ("class_delta_ab", "class_delta_sb", "class_kappa", "class_g", "class_xi"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has length {len(getattr(self, name))}, expected {n}")
        if abs(float(np.sum(self.class_weights)) - 1.0) > 1e-12:
            raise ValueError("class weights must sum to 1")

    @property
    def n_classes(self) -> int:
        return len(self.class_weights)

    def with_kappa(self, class_kappa) -> "Ensemble":
        return Ensemble(self.class_weights, self.class_delta_ab, self.class_delta_sb,
                        np.asarray(class_kappa, dtype=float), self.class_g, self.class_xi)

    def dicke_state(self) -> np.ndarray:
        """Class amplitudes of the symmetric Dicke state, √w_j."""
        return np.sqrt(self.class_weights)


def _gaussian_bins(m: int) -> np.ndarray:
    """Conditional means of a unit normal over m equal-mass bins."""
    edges = ndtri(np.arange(m + 1) / m)
    pdf = np.exp(-0.5 * edges**2) / math.sqrt(2.0 * math.pi)
    pdf[0] = pdf[-1] = 0.0
    means = (pdf[:-1] - pdf[1:]) * m
    return 0.5 * (means - means[::-1])  # exact antisymmetry


def _lorentzian_bins(m: int) -> np.ndarray:
    """Conditional means of a unit-HWHM Lorentzian truncated at ±5 FWHM."""
    cut = 2.0 * LORENTZ_TRUNCATION
    a = math.atan(cut)
    edges = np.tan(-a + 2.0 * a * np.arange(m + 1) / m)
    edges[0], edges[-1] = -cut, cut
    means = np.log1p(edges[1:] ** 2) - np.log1p(edges[:-1] ** 2)
    means = means / (2.0 * (np.arctan(edges[1:]) - np.arctan(edges[:-1])))
    return 0.5 * (means - means[::-1])


def build_ensemble(spec: EnsembleSpec, params: PhysicalParams) -> Ensemble:
    """Equal-probability-mass frequency classes for the inhomogeneous ensemble.

    Each class sits at the conditional mean of its bin; s- and a-level
    offsets of a class share the same quantile (fully correlated
    broadening). Widths are FWHM.
    """
    m = int(spec.n_classes)
    weights = np.full(m, 1.0 / m)
    if spec.lineshape == "delta" or m == 1:
        z_sb = z_ab = np.zeros(m)
    elif spec.lineshape == "gaussian":
        z = _gaussian_bins(m)
        z_sb = z * spec.width_sb * FWHM_TO_SIGMA
        z_ab = z * spec.width_ab * FWHM_TO_SIGMA
    else:
        z = _lorentzian_bins(m)
        z_sb = z * spec.width_sb / 2.0
        z_ab = z * spec.width_ab / 2.0
    if spec.seed is None:
        phases = np.zeros(m)
    else:
        phases = np.random.default_rng(spec.seed).uniform(0.0, 2.0 * np.pi, m)
    return Ensemble(
        class_weights=weights,
        class_delta_ab=params.delta_ab_static + z_ab,
        class_delta_sb=params.delta_sb_static + z_sb,
        class_kappa=params.kappa_coll * np.sqrt(weights),
        class_g=params.g_coll * np.sqrt(weights),
        class_xi=spec.disorder_xi * np.exp(1j * phases),
    )


@dataclass(frozen=True, eq=False)
class FieldGrid:
    n_modes: int
    detunings: np.ndarray
    coupling: float

    @property
    def spacing(self) -> float:
        return float(self.detunings[1] - self.detunings[0])

    @property
    def bandwidth(self) -> float:
        return float(self.detunings[-1] - self.detunings[0])

    @property
    def recurrence_time(self) -> float:
        """Period after which the discrete mode sum revives, 2π/spacing."""
        return 2.0 * math.pi / self.spacing


def build_field_grid(gamma_co: float, bandwidth: float, n_modes: int) -> FieldGrid:
    """Symmetric grid of ``n_modes`` free-field modes on [-B/2, B/2] with the
    per-mode coupling that reproduces the mirror decay rate ``gamma_co``."""
    if n_modes < 3 or n_modes % 2 == 0:
        raise ValueError(f"n_modes must be odd and >= 3 so that Δ=0 is on the grid, got {n_modes}")
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    if gamma_co < 0:
        raise ValueError("gamma_co must be non-negative")
    half = bandwidth / 2.0
    k = np.arange(n_modes) - (n_modes - 1) // 2
    spacing = bandwidth / (n_modes - 1)
    detunings = k * spacing
    detunings[0], detunings[-1] = -half, half
    return FieldGrid(n_modes, detunings, math.sqrt(gamma_co * spacing / (2.0 * math.pi)))


def emission_rate_sum(grid: FieldGrid, gamma_co: float) -> float:
    """Golden-rule emission rate of the cavity mode into the discrete grid,
    Σ_l κ_opt² γ/(Δ_l² + γ²/4); tends to γ_co for a wide, dense grid."""
    if gamma_co == 0:
        return 0.0
    d = grid.detunings
    return float(np.sum(grid.coupling**2 * gamma_co / (d**2 + gamma_co**2 / 4.0)))


def cooperativity(params: PhysicalParams) -> float:
    """C = 4 g_ab² N / (γ_co γ_a)."""
    if params.gamma_co <= 0 or params.gamma_a <= 0:
        raise ValueError("cooperativity needs gamma_co > 0 and gamma_a > 0")
    return 4.0 * params.g_ab**2 * params.n_spins_effective / (params.gamma_co * params.gamma_a)
