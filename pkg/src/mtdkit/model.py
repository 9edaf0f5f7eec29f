"""Core domain types: signals, steerable coefficient tables, group actions,
group distributions, and the orbit-aligned error metric.

Conventions fixed here and relied on everywhere else:

* cyclic shift by s maps x to y with y[n] = x[(n - s) mod L];
* planar rotation by theta multiplies steerable coefficient a[k, q] by
  exp(-i * k * theta);
* only the group orbit of a signal is identifiable, so errors are always
  minimized over the group before being reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DomainError

# modulus below which a DFT coefficient counts as vanishing
DFT_FLOOR = 1e-8

TWO_PI = 2.0 * math.pi


def _frozen_array(values, dtype) -> np.ndarray:
    a = np.array(values, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# signals


@dataclass(frozen=True, eq=False)
class Signal:
    """Real vector of length L, the estimation target."""

    values: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.values, dtype=np.float64)
        if a.ndim != 1 or a.size < 1:
            raise DomainError("signal must be a 1-d vector with L >= 1")
        if not np.all(np.isfinite(a)):
            raise DomainError("signal entries must be finite")
        object.__setattr__(self, "values", _frozen_array(a, np.float64))

    @property
    def L(self) -> int:
        return self.values.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def dft_moduli(self) -> np.ndarray:
        return np.abs(np.fft.fft(self.values))

    def has_nonvanishing_dft(self, floor: float = DFT_FLOOR) -> bool:
        return bool(np.min(self.dft_moduli()) > floor)

    def has_nonvanishing_edges(self, floor: float = DFT_FLOOR) -> bool:
        return bool(abs(self.values[0]) > floor and abs(self.values[-1]) > floor)


def as_signal(x) -> Signal:
    return x if isinstance(x, Signal) else Signal(np.asarray(x, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class SteerableImage:
    """Band-limited image stored as steerable-basis coefficients.

    Ring k (angular frequency) holds a complex vector of length Q_k,
    k = 0 .. k_max.  Negative frequencies are implicit through conjugate
    symmetry a[-k, q] = conj(a[k, q]), which makes the underlying image
    real; ring 0 must therefore be real.  A ring may be empty (Q_k = 0).
    """

    rings: tuple

    def __post_init__(self):
        frozen = []
        for k, ring in enumerate(self.rings):
            a = np.asarray(ring, dtype=np.complex128)
            if a.ndim != 1:
                raise DomainError("each coefficient ring must be a 1-d vector")
            if k == 0 and a.size and np.max(np.abs(a.imag)) > 1e-12 * max(
                1.0, float(np.max(np.abs(a)))
            ):
                raise DomainError("ring 0 must be real for a real image")
            frozen.append(_frozen_array(a, np.complex128))
        object.__setattr__(self, "rings", tuple(frozen))

    @property
    def k_max(self) -> int:
        return len(self.rings) - 1

    def ring(self, k: int) -> np.ndarray:
        """Coefficient vector of ring k; negative k via conjugation."""
        if abs(k) > self.k_max:
            raise DomainError(f"ring {k} outside band limit {self.k_max}")
        return self.rings[k] if k >= 0 else np.conj(self.rings[-k])

    def coefficient(self, k: int, q: int) -> complex:
        return complex(self.ring(k)[q])

    def as_dict(self) -> dict:
        """Full (k, q) -> coefficient map including negative frequencies."""
        out = {}
        for k in range(-self.k_max, self.k_max + 1):
            for q, a in enumerate(self.ring(k)):
                out[(k, q)] = complex(a)
        return out

    def norm_sq(self) -> float:
        """Squared l2 norm of the full coefficient map (negative rings
        counted, i.e. rings k >= 1 weighted twice)."""
        total = float(np.sum(np.abs(self.rings[0]) ** 2)) if self.rings else 0.0
        for ring in self.rings[1:]:
            total += 2.0 * float(np.sum(np.abs(ring) ** 2))
        return total


# ---------------------------------------------------------------------------
# group elements and distributions


@dataclass(frozen=True)
class CyclicShift:
    shift: int


@dataclass(frozen=True)
class Identity:
    pass


@dataclass(frozen=True)
class PlanarRotation:
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)


GroupElement = Union[CyclicShift, Identity, PlanarRotation]


@dataclass(frozen=True)
class UniformCyclic:
    L: int

    def __post_init__(self):
        if self.L < 1:
            raise DomainError("cyclic group order must be >= 1")


@dataclass(frozen=True, eq=False)
class CategoricalCyclic:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 1:
            raise DomainError("categorical weights must be a 1-d vector")
        if np.any(w < 0):
            raise DomainError("categorical weights must be non-negative")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise DomainError("categorical weights must sum to 1 within 1e-12")
        object.__setattr__(self, "weights", _frozen_array(w, np.float64))

    @property
    def L(self) -> int:
        return self.weights.size


@dataclass(frozen=True)
class PointMassIdentity:
    pass


@dataclass(frozen=True)
class UniformSO2:
    pass


GroupDistribution = Union[UniformCyclic, CategoricalCyclic, PointMassIdentity, UniformSO2]


def shift_weights(rho: GroupDistribution, L: int) -> np.ndarray:
    """Probability of each shift s = 0..L-1 under a finite-support law.

    PointMassIdentity maps to a point mass at shift 0; UniformSO2 has no
    finite shift support and is rejected.
    """
    if isinstance(rho, UniformCyclic):
        if rho.L != L:
            raise DomainError(f"distribution over Z_{rho.L} does not act on length {L}")
        return np.full(L, 1.0 / L)
    if isinstance(rho, CategoricalCyclic):
        if rho.L != L:
            raise DomainError(f"distribution over Z_{rho.L} does not act on length {L}")
        return np.asarray(rho.weights, dtype=np.float64)
    if isinstance(rho, PointMassIdentity):
        w = np.zeros(L)
        w[0] = 1.0
        return w
    raise DomainError(f"no finite shift support for {type(rho).__name__}")


def distribution_key(rho: GroupDistribution) -> tuple:
    """Canonical hashable identifier, used for caching and stream keying."""
    if isinstance(rho, UniformCyclic):
        return ("uniform-cyclic", rho.L)
    if isinstance(rho, CategoricalCyclic):
        return ("categorical-cyclic", tuple(float(w) for w in rho.weights))
    if isinstance(rho, PointMassIdentity):
        return ("point-mass-identity",)
    if isinstance(rho, UniformSO2):
        return ("uniform-so2",)
    raise DomainError(f"unknown distribution {type(rho).__name__}")


# ---------------------------------------------------------------------------
# group action


def apply_group(g: GroupElement, x):
    """Act with g on a signal or coefficient table.

    Shifts act on Signal (y[n] = x[(n - s) mod L]), rotations on
    SteerableImage (a[k, q] -> a[k, q] * exp(-i k theta)), Identity on both.
    The action is a homomorphism: applying g1 then g2 equals applying
    their composition.
    """
    if isinstance(g, Identity):
        if isinstance(x, (Signal, SteerableImage)):
            return x
        raise DomainError(f"identity cannot act on {type(x).__name__}")
    if isinstance(g, CyclicShift):
        if not isinstance(x, Signal):
            raise DomainError("cyclic shifts act on Signal only")
        s = g.shift % x.L
        return Signal(np.roll(x.values, s))
    if isinstance(g, PlanarRotation):
        if not isinstance(x, SteerableImage):
            raise DomainError("planar rotations act on SteerableImage only")
        rings = [
            ring * np.exp(-1j * k * g.theta) if k else ring
            for k, ring in enumerate(x.rings)
        ]
        return SteerableImage(tuple(rings))
    raise DomainError(f"unknown group element {type(g).__name__}")


def sample_group(rho: GroupDistribution, rng: np.random.Generator) -> GroupElement:
    """One draw from rho; consecutive calls on the same stream are i.i.d."""
    if isinstance(rho, PointMassIdentity):
        return Identity()
    if isinstance(rho, UniformCyclic):
        return CyclicShift(int(rng.integers(rho.L)))
    if isinstance(rho, CategoricalCyclic):
        u = rng.random()
        return CyclicShift(int(np.searchsorted(np.cumsum(rho.weights), u, side="right")))
    if isinstance(rho, UniformSO2):
        return PlanarRotation(float(rng.random() * TWO_PI))
    raise DomainError(f"cannot sample from {type(rho).__name__}")


def sample_shifts(rho: GroupDistribution, rng: np.random.Generator, n: int) -> np.ndarray:
    """Vectorized draw of n shifts for finite cyclic laws."""
    if isinstance(rho, PointMassIdentity):
        return np.zeros(n, dtype=np.int64)
    if isinstance(rho, UniformCyclic):
        return rng.integers(rho.L, size=n).astype(np.int64)
    if isinstance(rho, CategoricalCyclic):
        edges = np.cumsum(rho.weights)
        return np.searchsorted(edges, rng.random(n), side="right").astype(np.int64)
    raise DomainError(f"no shift sampling for {type(rho).__name__}")


# ---------------------------------------------------------------------------
# orbit-aligned error


def orbit_mse(x_hat, x, group: str = "cyclic"):
    """Relative squared error minimized over the group action.

    Returns (mse, g_star) with
    mse = min_g ||g . x_hat - x||^2 / ||x||^2.  The minimum is taken by
    exhaustive enumeration over all L shifts for group="cyclic" and over
    the identity alone for group="identity".
    """
    x_hat = as_signal(x_hat)
    x = as_signal(x)
    if x_hat.L != x.L:
        raise DomainError("signals must have equal length")
    ref = float(np.dot(x.values, x.values))
    if ref == 0.0:
        raise DomainError("reference signal must have nonzero norm")
    if group == "identity":
        d = x_hat.values - x.values
        return float(np.dot(d, d)) / ref, Identity()
    if group != "cyclic":
        raise DomainError(f"unknown group kind {group!r}")
    best, best_s = math.inf, 0
    for s in range(x.L):
        d = np.roll(x_hat.values, s) - x.values
        r = float(np.dot(d, d))
        if r < best:
            best, best_s = r, s
    return best / ref, CyclicShift(best_s)


def _golden_section(f, lo: float, hi: float, iters: int = 60) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (a + b) / 2.0


def rotation_aligned_error(a_hat: SteerableImage, a: SteerableImage, grid: int = 4096):
    """Relative squared coefficient error minimized over planar rotations.

    The objective in theta is a trigonometric polynomial of degree k_max,
    so a dense grid scan followed by golden-section refinement around the
    best grid point finds the global minimum reliably.  Returns
    (relative mse, theta_star).
    """
    if a_hat.k_max != a.k_max:
        raise DomainError("coefficient tables must share k_max")
    ref = a.norm_sq()
    if ref == 0.0:
        raise DomainError("reference table must have nonzero norm")
    # err(theta) = const - 2 Re sum_k c_k exp(-i k theta), with ring k >= 1
    # weighted twice for the implicit negative ring
    const = a_hat.norm_sq() + ref
    corr = np.zeros(a.k_max + 1, dtype=np.complex128)
    for k in range(a.k_max + 1):
        if a.rings[k].size != a_hat.rings[k].size:
            raise DomainError(f"ring {k} sizes differ")
        w = 1.0 if k == 0 else 2.0
        corr[k] = w * np.vdot(a.rings[k], a_hat.rings[k])

    def err(theta):
        phases = np.exp(-1j * np.arange(a.k_max + 1) * theta)
        return const - 2.0 * float(np.real(np.sum(corr * phases)))

    thetas = np.linspace(0.0, TWO_PI, grid, endpoint=False)
    phases = np.exp(-1j * np.outer(np.arange(a.k_max + 1), thetas))
    coarse = const - 2.0 * np.real(corr @ phases)
    k0 = int(np.argmin(coarse))
    span = TWO_PI / grid
    theta = _golden_section(err, thetas[k0] - span, thetas[k0] + span) % TWO_PI
    return max(err(theta), 0.0) / ref, theta
