"""Autocorrelation analysis.

Empirical autocorrelations of one long observation z (orders 1..3):

    a_d[l_1, .., l_{d-1}] = (1/(L M)) sum_{j=0}^{LM-1} zp[j] zp[j+l_1] ... zp[j+l_{d-1}]

with zp the observation padded by L trailing zeros and lags in [0, L-1].

Ensemble autocorrelations average the same lag products over the window
random vector Y = [zeros_L, g . x, zeros_L] + noise over j = 0..2L-1,
expectation over g ~ rho and the Gaussian noise, both computed exactly:
the group average enumerates the finite support, the noise average uses
the Gaussian moment rules (odd moments vanish, pairs give sigma^2).

For a well-separated observation at occurrence density gamma = N/M the
empirical autocorrelation converges entrywise to

    2 gamma * ensemble + (1 - 2 gamma) * chi,

where chi is the pure-noise moment tensor E[eps_0 eps_{l_1} ...].
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError
from .generate import MraSampleSet, MtdObservation
from .model import GroupDistribution, as_signal, distribution_key, shift_weights

# fixed summation chunk: partial sums are always combined in index order,
# so results are identical no matter how chunks are scheduled
SUM_CHUNK = 1 << 18

# test-sensitivity canary toggled by `mtdkit verify --inject-fault chi-sign`;
# never set in normal operation
_FAULTS = {"chi-sign": False}


@dataclass(eq=False)
class AutocorrSet:
    """Autocorrelation tensors of orders 1..d_max for window length L."""

    L: int
    d_max: int
    order1: Optional[float] = None
    order2: Optional[np.ndarray] = None
    order3: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.d_max not in (1, 2, 3):
            raise DomainError("d_max must be 1, 2 or 3")
        if self.order2 is not None:
            self.order2 = np.asarray(self.order2, dtype=np.float64)
            if self.order2.shape != (self.L,):
                raise DomainError("order2 must have shape (L,)")
        if self.order3 is not None:
            self.order3 = np.asarray(self.order3, dtype=np.float64)
            if self.order3.shape != (self.L, self.L):
                raise DomainError("order3 must have shape (L, L)")

    def entries(self):
        """Iterate (d, l1, l2, value) rows over all present orders."""
        if self.order1 is not None:
            yield (1, None, None, float(self.order1))
        if self.order2 is not None:
            for l1 in range(self.L):
                yield (2, l1, None, float(self.order2[l1]))
        if self.order3 is not None:
            for l1 in range(self.L):
                for l2 in range(self.L):
                    yield (3, l1, l2, float(self.order3[l1, l2]))

    def stacked(self) -> np.ndarray:
        """All present entries as one flat vector (order 1, then 2, then 3)."""
        parts = []
        if self.order1 is not None:
            parts.append(np.array([self.order1]))
        if self.order2 is not None:
            parts.append(self.order2.ravel())
        if self.order3 is not None:
            parts.append(self.order3.ravel())
        return np.concatenate(parts)

    def to_json(self) -> str:
        doc = {"L": self.L, "d_max": self.d_max, "meta": self.meta}
        doc["order1"] = self.order1
        doc["order2"] = None if self.order2 is None else [float(v) for v in self.order2]
        doc["order3"] = (
            None if self.order3 is None else [[float(v) for v in row] for row in self.order3]
        )
        return json.dumps(doc, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "AutocorrSet":
        doc = json.loads(text)
        return cls(
            L=int(doc["L"]),
            d_max=int(doc["d_max"]),
            order1=None if doc["order1"] is None else float(doc["order1"]),
            order2=None if doc["order2"] is None else np.asarray(doc["order2"], dtype=float),
            order3=None if doc["order3"] is None else np.asarray(doc["order3"], dtype=float),
            meta=doc.get("meta", {}),
        )

    def to_csv(self) -> str:
        lines = ["d,l1,l2,value"]
        for d, l1, l2, v in self.entries():
            lines.append(
                f"{d},{'' if l1 is None else l1},{'' if l2 is None else l2},{v!r}"
            )
        return "\n".join(lines) + "\n"


@dataclass(eq=False)
class NoiseBias:
    """Pure-noise moment tensors chi: order 1 zero, order 2 equal to
    sigma^2 at lag 0, order 3 zero (odd Gaussian moments vanish)."""

    L: int
    sigma: float
    order1: float
    order2: np.ndarray
    order3: np.ndarray


def _lag_sums(zp: np.ndarray, lm: int, L: int, d_max: int):
    """Chunked lag-product sums over j = 0..lm-1.

    Chunk boundaries are fixed and partial sums are accumulated in index
    order, so the result is bit-identical however chunks are scheduled,
    and peak memory stays at the chunk size.
    """
    s1 = 0.0
    s2 = np.zeros(L)
    s3 = np.zeros((L, L))
    for c in range(0, lm, SUM_CHUNK):
        hi = min(c + SUM_CHUNK, lm)
        base = zp[c:hi]
        s1 += float(np.einsum("i->", base))
        if d_max < 2:
            continue
        for l1 in range(L):
            w = base * zp[c + l1 : hi + l1]
            s2[l1] += float(np.einsum("i->", w))
            if d_max < 3:
                continue
            for l2 in range(l1, L):
                s3[l1, l2] += float(np.einsum("i,i->", w, zp[c + l2 : hi + l2]))
    for l1 in range(L):  # lag products are symmetric in (l1, l2)
        for l2 in range(l1):
            s3[l1, l2] = s3[l2, l1]
    return s1, s2, s3


def empirical_autocorr(z, L: Optional[int] = None, d_max: int = 3) -> AutocorrSet:
    """Autocorrelations of one observation, orders 1..d_max.

    Accepts an MtdObservation or a raw vector plus L.  The observation is
    padded with exactly L trailing zeros; the outer sum runs over all L*M
    start positions and is averaged by 1/(L*M).
    """
    if d_max not in (1, 2, 3):
        raise DomainError("d_max must be in {1, 2, 3}")
    meta: dict = {}
    if isinstance(z, MtdObservation):
        meta = {"gamma": z.plan.gamma, "sigma": z.sigma, "M": z.plan.M}
        L = z.plan.L
        z = z.samples
    else:
        z = np.asarray(z, dtype=np.float64)
        if L is None:
            raise DomainError("window length L required for raw sample vectors")
        if z.size % L:
            raise DomainError("sample count must be a multiple of L")
        meta = {"M": z.size // L}
    lm = z.size
    zp = np.concatenate([z, np.zeros(L)])
    s1, s2, s3 = _lag_sums(zp, lm, L, d_max)
    acs = AutocorrSet(L=L, d_max=d_max, meta=meta)
    acs.order1 = s1 / lm
    if d_max >= 2:
        acs.order2 = s2 / lm
    if d_max >= 3:
        acs.order3 = s3 / lm
    return acs


# ---------------------------------------------------------------------------
# exact ensemble moments for finite shift laws


@dataclass(frozen=True, eq=False)
class MomentTensors:
    """Multilinear coefficient tensors of the window-averaged signal
    moments for a finite shift law.

    s1 = t1 . x;  s2[l] = x^T t2[l] x;  s3[l1,l2] = t3[l1,l2] : x ox x ox x.
    Storage grows as L^5, fine at the intended window lengths (L <= ~30).
    """

    L: int
    t1: np.ndarray  # (L,)
    t2: np.ndarray  # (L, L, L)
    t3: np.ndarray  # (L, L, L, L, L)


_TENSOR_CACHE: dict = {}


def signal_moment_tensors(rho: GroupDistribution, L: int) -> MomentTensors:
    key = (distribution_key(rho), L)
    hit = _TENSOR_CACHE.get(key)
    if hit is not None:
        return hit
    w = shift_weights(rho, L)
    support = np.flatnonzero(w > 0)
    t1 = np.full(L, 1.0 / (2 * L))
    t2 = np.zeros((L, L, L))
    t3 = np.zeros((L, L, L, L, L))
    for s in support:
        ws = w[s] / (2 * L)
        for l1 in range(L):
            n = np.arange(L - l1)
            np.add.at(t2[l1], ((n - s) % L, (n + l1 - s) % L), ws)
            for l2 in range(l1, L):
                n = np.arange(L - l2)  # l2 = max(l1, l2) here
                np.add.at(
                    t3[l1, l2],
                    ((n - s) % L, (n + l1 - s) % L, (n + l2 - s) % L),
                    ws,
                )
    for l1 in range(L):
        for l2 in range(l1):
            t3[l1, l2] = np.swapaxes(t3[l2, l1], 0, 1)
    for a in (t1, t2, t3):
        a.setflags(write=False)
    tensors = MomentTensors(L=L, t1=t1, t2=t2, t3=t3)
    _TENSOR_CACHE[key] = tensors
    return tensors


def _noise_cross_pattern(L: int) -> np.ndarray:
    """Order-3 indicator d[l1,l2] = 1{l1=l2} + 1{l2=0} + 1{l1=0}."""
    l1 = np.arange(L)[:, None]
    l2 = np.arange(L)[None, :]
    return (l1 == l2).astype(float) + (l2 == 0) + (l1 == 0)


def ensemble_autocorr(x, rho: GroupDistribution, sigma: float, d_max: int = 3) -> AutocorrSet:
    """Exact window-ensemble autocorrelations for a finite shift law.

    Signal parts enumerate the group support; Gaussian cross terms add
    sigma^2 at lag 0 for order 2 and sigma^2 * s1 * (1{l1=l2} + 1{l2=0}
    + 1{l1=0}) for order 3, with s1 the window-averaged mean.
    """
    x = as_signal(x)
    tensors = signal_moment_tensors(rho, x.L)  # rejects laws without finite support
    if sigma < 0:
        raise DomainError("sigma must be >= 0")
    v = x.values
    acs = AutocorrSet(L=x.L, d_max=d_max, meta={"sigma": float(sigma)})
    s1 = float(tensors.t1 @ v)
    acs.order1 = s1
    if d_max >= 2:
        order2 = np.einsum("lab,a,b->l", tensors.t2, v, v)
        order2[0] += sigma**2
        acs.order2 = order2
    if d_max >= 3:
        order3 = np.einsum("pqabc,a,b,c->pq", tensors.t3, v, v, v)
        order3 += sigma**2 * s1 * _noise_cross_pattern(x.L)
        acs.order3 = order3
    return acs


def noise_bias(sigma: float, L: int, d_max: int = 3) -> NoiseBias:
    """Pure-noise moments chi of orders 1..3."""
    if sigma < 0:
        raise DomainError("sigma must be >= 0")
    s2 = float(sigma) ** 2
    if _FAULTS["chi-sign"]:
        s2 = -s2
    order2 = np.zeros(L)
    order2[0] = s2
    return NoiseBias(L=L, sigma=float(sigma), order1=0.0, order2=order2, order3=np.zeros((L, L)))


def mtd_moment_prediction(
    x, rho: GroupDistribution, sigma: float, gamma: float, d_max: int = 3
) -> AutocorrSet:
    """Limit of the empirical autocorrelations of a well-separated
    observation: 2 gamma * ensemble + (1 - 2 gamma) * chi, entrywise.

    Only densities gamma < 1/2 are accepted; beyond that the complement
    weight would go negative and the limit formula no longer applies.
    """
    if not 0.0 < gamma < 0.5:
        raise DomainError(
            f"gamma = {gamma} outside the prediction regime (requires 0 < gamma < 1/2)"
        )
    x = as_signal(x)
    ens = ensemble_autocorr(x, rho, sigma, d_max=d_max)
    chi = noise_bias(sigma, x.L, d_max=d_max)
    g2, cg = 2.0 * gamma, 1.0 - 2.0 * gamma
    acs = AutocorrSet(L=x.L, d_max=d_max, meta={"gamma": float(gamma), "sigma": float(sigma)})
    acs.order1 = g2 * ens.order1 + cg * chi.order1
    if d_max >= 2:
        acs.order2 = g2 * ens.order2 + cg * chi.order2
    if d_max >= 3:
        acs.order3 = g2 * ens.order3 + cg * chi.order3
    return acs


def noise_moment_variances(sigma: float, L: int, M: int, d_max: int = 3) -> AutocorrSet:
    """Leading-order sampling variance of each empirical autocorrelation
    entry when the observation is noise dominated.

    Entry variances scale as sigma^(2d) / (L M) with small combinatorial
    factors from repeated lags: order 2 doubles at lag 0; order 3 carries
    15 at (0,0), 3 on the remaining diagonal/axes, 1 elsewhere.  Used for
    variance-normalized residual weighting; a plain approximation, not a
    claim of optimality.
    """
    lm = L * M
    var1 = sigma**2 / lm
    var2 = sigma**4 * (1.0 + (np.arange(L) == 0)) / lm
    l1 = np.arange(L)[:, None]
    l2 = np.arange(L)[None, :]
    factor = np.ones((L, L))
    factor[(l1 == l2) | (l1 == 0) | (l2 == 0)] = 3.0
    factor[0, 0] = 15.0
    var3 = sigma**6 * factor / lm
    return AutocorrSet(
        L=L,
        d_max=d_max,
        order1=var1,
        order2=var2 if d_max >= 2 else None,
        order3=var3 if d_max >= 3 else None,
        meta={"sigma": float(sigma), "M": int(M)},
    )


# ---------------------------------------------------------------------------
# Fourier-domain invariant features (shift-invariant) and their debiasing


@dataclass(frozen=True, eq=False)
class InvariantFeatures:
    """Shift-invariant Fourier features determining the orbit: signal mean,
    power spectrum |X|^2, bispectrum X[k1] X[k2] conj(X[k1+k2])."""

    L: int
    mean: float
    power: np.ndarray  # (L,) real
    bispectrum: np.ndarray  # (L, L) complex


def exact_invariant_features(x) -> InvariantFeatures:
    """Noise-free features of a known signal (test oracle and fixtures)."""
    x = as_signal(x)
    X = np.fft.fft(x.values)
    k = np.arange(x.L)
    bis = np.outer(X, X) * np.conj(X[(k[:, None] + k[None, :]) % x.L])
    return InvariantFeatures(
        L=x.L, mean=float(np.mean(x.values)), power=np.abs(X) ** 2, bispectrum=bis
    )


def mra_invariant_features(sample_set: MraSampleSet) -> InvariantFeatures:
    """Debiased features averaged over aligned noisy samples.

    With F_i the DFT of sample i and known noise level sigma:
      mean:        avg_i F_i[0] / L                       (unbiased);
      power:       avg_i |F_i|^2 - L sigma^2              (noise energy);
      bispectrum:  avg_i F_i[k1] F_i[k2] conj(F_i[k1+k2])
                   - L sigma^2 Xhat0 (1{k1=0} + 1{k2=0} + 1{k1+k2=0 mod L}),
    where Xhat0 = L * mean estimates X[0]; the pure-noise triple moment
    vanishes.  All three are shift invariant, so the group draws drop out.
    """
    if sample_set.N < 1:
        raise DomainError("empty sample set")
    L, sigma = sample_set.L, sample_set.sigma
    F = np.fft.fft(sample_set.samples, axis=1)
    mean = float(np.mean(F[:, 0]).real) / L
    power = np.mean(np.abs(F) ** 2, axis=0) - L * sigma**2
    k = np.arange(L)
    ksum = (k[:, None] + k[None, :]) % L
    bis = np.einsum("ia,ib,iab->ab", F, F, np.conj(F[:, ksum])) / sample_set.N
    x0 = L * mean
    bias = L * sigma**2 * x0 * (
        (k[:, None] == 0).astype(float) + (k[None, :] == 0) + (ksum == 0)
    )
    return InvariantFeatures(L=L, mean=mean, power=power, bispectrum=bis - bias)


def features_from_mtd_moments(acs: AutocorrSet, gamma: float, sigma: float) -> InvariantFeatures:
    """Convert observation autocorrelations into Fourier features, assuming
    shifts are uniform over the full cycle.

    Under a uniform shift law, the window-averaged signal moments are
    triangularly windowed circular correlations:
      order2 signal part = (L-l) / (2 L^2) * C2(l),
      order3 signal part = (L-max(l1,l2)) / (2 L^2) * C3(l1,l2),
    with C2, C3 the circular auto/triple correlations whose DFTs are the
    power spectrum and bispectrum.  Inverting removes the noise terms,
    divides the triangular window, and rescales by the density weight.
    """
    if acs.d_max < 3 or acs.order2 is None or acs.order3 is None:
        raise DomainError("features require autocorrelation orders up to 3")
    if not 0.0 < gamma < 0.5:
        raise DomainError(f"gamma = {gamma} outside the prediction regime")
    L = acs.L
    a1 = float(acs.order1)
    mean = a1 / gamma  # order1 limit is gamma * sum(x) / L
    c2 = np.array(acs.order2, dtype=float)
    c2[0] -= sigma**2
    c2 *= L**2 / (gamma * (L - np.arange(L)))
    d3 = np.array(acs.order3, dtype=float)
    d3 -= sigma**2 * a1 * _noise_cross_pattern(L)
    l1 = np.arange(L)[:, None]
    l2 = np.arange(L)[None, :]
    d3 *= L**2 / (gamma * (L - np.maximum(l1, l2)))
    power = np.real(np.fft.fft(c2))
    bis = np.fft.fft2(d3)
    return InvariantFeatures(L=L, mean=mean, power=power, bispectrum=bis)
