"""Closed-form Marcenko-Pastur and spiked-model quantities.

Everything here is parameterized by :class:`MpParams`, the pair
``(sigma2, c)``: per-entry noise power and row/column aspect ratio of the
underlying rectangular noise matrix.  ``c`` may be the asymptotic ratio or
the finite-sample ratio of an actual matrix; callers decide which to plug in.

The spiked-model functions describe where an isolated population eigenvalue
``lam`` of a low-rank additive perturbation reappears in the sample spectrum
(``spike_forward``) and how much of the corresponding population eigenvector
survives in the sample eigenvector (``h_star``).
"""

from __future__ import annotations

import cmath
import functools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate

__all__ = [
    "BelowEdgeError",
    "DomainError",
    "MpParams",
    "SpikeMap",
    "SpikePrediction",
    "h_star",
    "mp_atom",
    "mp_cdf",
    "mp_density",
    "mp_stieltjes",
    "mp_stieltjes_tilde",
    "phi_inverse",
    "phi_star",
    "spike_forward",
    "w_star",
]


class DomainError(ValueError):
    """Argument lies outside the spectral domain of the requested quantity."""


class BelowEdgeError(DomainError):
    """A spike-dependent quantity was requested at or below the bulk edge."""


@dataclass(frozen=True)
class MpParams:
    """Noise power and aspect ratio selecting one Marcenko-Pastur law."""

    sigma2: float
    c: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.sigma2) and self.sigma2 > 0):
            raise ValueError(f"sigma2 must be positive and finite, got {self.sigma2!r}")
        if not (math.isfinite(self.c) and self.c > 0):
            raise ValueError(f"c must be positive and finite, got {self.c!r}")

    @property
    def edge_minus(self) -> float:
        """Lower edge of the bulk, sigma2 * (1 - sqrt(c))^2."""
        return self.sigma2 * (1.0 - math.sqrt(self.c)) ** 2

    @property
    def edge_plus(self) -> float:
        """Upper edge of the bulk, sigma2 * (1 + sqrt(c))^2."""
        return self.sigma2 * (1.0 + math.sqrt(self.c)) ** 2

    @property
    def spike_threshold(self) -> float:
        """Detachment threshold sigma2 * sqrt(c) for population spikes."""
        return self.sigma2 * math.sqrt(self.c)


class SpikePrediction(NamedTuple):
    """Predicted sample location of one population spike.

    ``detached`` is False when the spike does not separate, in which case
    ``value`` is the bulk upper edge (the spike sticks to the bulk).
    """

    value: float
    detached: bool


@dataclass(frozen=True)
class SpikeMap:
    """Spike-to-outlier map at a fixed noise law."""

    params: MpParams

    @property
    def threshold(self) -> float:
        return self.params.spike_threshold

    @property
    def edge_plus(self) -> float:
        return self.params.edge_plus

    @property
    def edge_minus(self) -> float:
        return self.params.edge_minus

    def forward(self, lam: float) -> SpikePrediction:
        return spike_forward(lam, self.params)


def mp_atom(p: MpParams) -> float:
    """Mass of the atom at zero, max(0, 1 - 1/c)."""
    return max(0.0, 1.0 - 1.0 / p.c)


def mp_density(x, p: MpParams):
    """Density of the absolutely continuous part of the MP law.

    Vanishes outside [edge_minus, edge_plus]; the atom at zero (present for
    c > 1) is reported separately by :func:`mp_atom`.
    """
    x_arr = np.asarray(x, dtype=float)
    lo, hi = p.edge_minus, p.edge_plus
    out = np.zeros_like(x_arr)
    inside = (x_arr > 0) & (x_arr >= lo) & (x_arr <= hi)
    xi = x_arr[inside]
    out[inside] = np.sqrt((xi - lo) * (hi - xi)) / (2.0 * math.pi * p.sigma2 * p.c * xi)
    if np.ndim(x) == 0:
        return float(out)
    return out


@functools.lru_cache(maxsize=64)
def _bulk_mass_table(sigma2: float, c: float):
    # Cumulative mass of the continuous part on a substitution grid
    # x(u) = lo + (hi - lo) sin^2(u): the integrand becomes smooth in u,
    # so a dense trapezoid rule resolves the sqrt edges to ~1e-9.
    p = MpParams(sigma2, c)
    lo, hi = p.edge_minus, p.edge_plus
    span = hi - lo
    u = np.linspace(0.0, math.pi / 2.0, 16385)
    x = lo + span * np.sin(u) ** 2
    # guard the x=0 endpoint when c = 1 (integrable 1/sqrt singularity)
    x = np.maximum(x, 1e-300)
    integrand = span**2 * np.sin(2.0 * u) ** 2 / (4.0 * math.pi * sigma2 * c * x)
    mass = integrate.cumulative_trapezoid(integrand, u, initial=0.0)
    # normalize the tiny quadrature defect so the full CDF reaches exactly 1
    target = 1.0 - mp_atom(p)
    if mass[-1] > 0:
        mass = mass * (target / mass[-1])
    return u, mass


def mp_cdf(x, p: MpParams):
    """CDF of the full MP law (atom at zero included)."""
    u_grid, mass = _bulk_mass_table(p.sigma2, p.c)
    lo, hi = p.edge_minus, p.edge_plus
    span = hi - lo
    atom = mp_atom(p)
    x_arr = np.asarray(x, dtype=float)
    frac = np.clip((x_arr - lo) / span, 0.0, 1.0)
    u = np.arcsin(np.sqrt(frac))
    bulk = np.interp(u, u_grid, mass)
    out = np.where(x_arr >= 0.0, atom, 0.0) + np.where(x_arr >= lo, bulk, 0.0)
    out = np.where(x_arr >= hi, 1.0, out)
    if np.ndim(x) == 0:
        return float(out)
    return out


def _check_off_support(z: complex, p: MpParams) -> complex:
    z = complex(z)
    if z == 0:
        raise DomainError("z = 0 is excluded (atom of the MP law)")
    if z.imag == 0.0 and p.edge_minus <= z.real <= p.edge_plus:
        raise DomainError(
            f"z = {z.real} lies inside the bulk support "
            f"[{p.edge_minus}, {p.edge_plus}]"
        )
    return z


def mp_stieltjes(z, p: MpParams) -> complex:
    """Stieltjes transform m(z) of the MP law, closed-form quadratic branch.

    The branch is fixed by m(z) ~ -1/z at infinity and Im m(z) > 0 for
    Im z > 0; it satisfies m = 1 / (-z + sigma2 / (1 + sigma2 c m)).
    """
    z = _check_off_support(z, p)
    s2, c = p.sigma2, p.c
    # discriminant factors through the bulk edges; the product of principal
    # square roots below is the branch with sqrt ~ z at infinity
    g = cmath.sqrt(z - p.edge_minus) * cmath.sqrt(z - p.edge_plus)
    return (-(z - s2 * (1.0 - c)) + g) / (2.0 * s2 * c * z)


def mp_stieltjes_tilde(z, p: MpParams) -> complex:
    """Stieltjes transform of the companion law c * mu + (1 - c) * delta_0."""
    z = _check_off_support(z, p)
    return p.c * mp_stieltjes(z, p) + (p.c - 1.0) / z


def w_star(z: float, p: MpParams) -> float:
    """w(z) = 1 / (z m(z) mtilde(z)) for real z above the bulk edge.

    Increasing on (edge_plus, inf) with w(edge_plus) = sigma2 sqrt(c).
    """
    if not (np.isreal(z) and float(np.real(z)) > p.edge_plus):
        raise DomainError(f"w_star requires real z > edge_plus = {p.edge_plus}, got {z!r}")
    z = float(np.real(z))
    w = 1.0 / (z * mp_stieltjes(z, p) * mp_stieltjes_tilde(z, p))
    return float(w.real)


def phi_star(w: float, p: MpParams) -> float:
    """phi(w) = (w + sigma2)(w + sigma2 c) / w."""
    if w == 0:
        raise DomainError("phi_star is undefined at w = 0")
    s2, c = p.sigma2, p.c
    return (w + s2) * (w + s2 * c) / w


def phi_inverse(rho: float, p: MpParams) -> float:
    """Unique w > sigma2 sqrt(c) with phi(w) = rho, for rho > edge_plus.

    Computed as the larger root of w^2 - (rho - sigma2 - sigma2 c) w
    + sigma2^2 c = 0.
    """
    if not rho > p.edge_plus:
        raise BelowEdgeError(
            f"phi_inverse requires rho > edge_plus = {p.edge_plus}, got {rho}"
        )
    s2, c = p.sigma2, p.c
    b = rho - s2 - s2 * c
    disc = b * b - 4.0 * s2 * s2 * c
    return 0.5 * (b + math.sqrt(max(disc, 0.0)))


def h_star(rho: float, p: MpParams) -> float:
    """Eigenvector attenuation h(rho) = (w^2 - sigma2^2 c) / (w (w + sigma2 c)).

    Here w = phi_inverse(rho).  Values lie in (0, 1): the squared overlap
    between a detached sample eigenvector and its population counterpart.
    """
    w = phi_inverse(rho, p)
    s2, c = p.sigma2, p.c
    return (w * w - s2 * s2 * c) / (w * (w + s2 * c))


def spike_forward(lam: float, p: MpParams) -> SpikePrediction:
    """Sample location of a population spike lam >= 0.

    Returns phi(lam) tagged detached for lam above the threshold
    sigma2 sqrt(c); otherwise the bulk upper edge tagged not detached.
    """
    if lam < 0:
        raise ValueError(f"population spike must be nonnegative, got {lam}")
    if lam > p.spike_threshold:
        return SpikePrediction(phi_star(lam, p), True)
    return SpikePrediction(p.edge_plus, False)
