"""Orbit recovery from observed autocorrelations.

Three routes:

* moment_match_lsq: weighted least squares between observed autocorrelation
  tensors and their model prediction, minimized over the signal by
  projected quasi-Newton descent (L-BFGS-B) with analytic gradients and
  random restarts.  Works for any finite shift law.
* invert_bispectrum: closed-form route for uniform cyclic shifts; rebuilds
  DFT moduli from the power spectrum and marches DFT phases out of the
  bispectrum, then fixes the one free phase so the result is a real
  signal (an arbitrary orbit representative).
* recover_rotation_coeffs: steerable-coefficient recovery from rotation
  invariant products; per-ring Gram factors give moduli, triple products
  chain the ring phases together, a global rotation gauge is fixed at
  the largest ring-1 coefficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.optimize

from . import rng as rngmod
from .autocorr import (
    AutocorrSet,
    InvariantFeatures,
    MomentTensors,
    _noise_cross_pattern,
    noise_moment_variances,
    signal_moment_tensors,
)
from .errors import DomainError, HypothesisViolation
from .model import (
    DFT_FLOOR,
    GroupDistribution,
    PointMassIdentity,
    Signal,
    SteerableImage,
    as_signal,
)


@dataclass(frozen=True)
class RecoveryConfig:
    """Settings for least-squares moment matching.

    box_bound None derives the bound from the order-2 scale estimate
    (10x the estimated signal norm), honoring the compact-domain
    requirement while scaling with the data.
    """

    weights: tuple = (1.0, 1.0, 1.0)
    weight_mode: str = "unit"  # "unit" | "variance"
    restarts: int = 20
    box_bound: Optional[float] = None
    grad_tol: float = 1e-10
    step_tol: float = 1e-16
    max_iters: int = 600
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1:
            raise DomainError("restarts must be >= 1")
        if any(w < 0 for w in self.weights) or not any(w > 0 for w in self.weights):
            raise DomainError("weights must be non-negative with at least one positive")
        if self.box_bound is not None and self.box_bound <= 0:
            raise DomainError("box bound must be positive")
        if self.weight_mode not in ("unit", "variance"):
            raise DomainError(f"unknown weight mode {self.weight_mode!r}")


@dataclass(eq=False)
class RecoveryResult:
    x_hat: object  # Signal or SteerableImage
    residual: float
    converged: bool
    iterations: int = 0
    winner_restart: int = 0
    orbit_rmse: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        if isinstance(self.x_hat, Signal):
            x = [float(v) for v in self.x_hat.values]
        else:
            x = [[[c.real, c.imag] for c in map(complex, ring)] for ring in self.x_hat.rings]
        return {
            "x_hat": x,
            "residual": self.residual,
            "converged": self.converged,
            "iterations": self.iterations,
            "winner_restart": self.winner_restart,
            "orbit_rmse": self.orbit_rmse,
            "diagnostics": {
                k: v for k, v in self.diagnostics.items() if not k.startswith("_")
            },
        }


# ---------------------------------------------------------------------------
# weighted least-squares objective


class MomentObjective:
    """Weighted squared distance between observed autocorrelations and the
    model prediction as a function of the signal.

    The prediction is polynomial in x (degree 3), assembled from the
    cached moment tensors, so value and gradient are exact:

      pred1          = 2 g * t1.x
      pred2[l]       = 2 g * x't2[l]x + sigma^2 * 1{l=0}
      pred3[l1,l2]   = 2 g * (t3[l1,l2]:xxx + sigma^2 (t1.x) d[l1,l2])

    where d is the order-3 noise cross pattern.  Per-entry weights fold in
    both the per-order weights and (optionally) inverse noise variances.
    """

    def __init__(
        self,
        observed: AutocorrSet,
        rho: GroupDistribution,
        gamma: float,
        sigma: float,
        weights=(1.0, 1.0, 1.0),
        weight_mode: str = "unit",
    ):
        if not 0.0 < gamma < 0.5:
            raise DomainError(f"gamma = {gamma} outside the prediction regime")
        self.L = observed.L
        self.d_max = observed.d_max
        self.gamma = float(gamma)
        self.sigma = float(sigma)
        self.tensors: MomentTensors = signal_moment_tensors(rho, self.L)
        self.obs1 = observed.order1
        self.obs2 = observed.order2
        self.obs3 = observed.order3
        self.pattern = _noise_cross_pattern(self.L)
        w = list(weights) + [0.0] * (3 - len(weights))
        if weight_mode == "variance":
            m = observed.meta.get("M")
            if not m:
                raise DomainError("variance weighting needs meta M on the observed set")
            var = noise_moment_variances(max(self.sigma, 1e-9), self.L, int(m))
            self.w1 = w[0] / var.order1
            self.w2 = w[1] / var.order2
            self.w3 = w[2] / var.order3
        else:
            self.w1 = w[0]
            self.w2 = w[1] * np.ones(self.L)
            self.w3 = w[2] * np.ones((self.L, self.L))
        self.use2 = self.d_max >= 2 and self.obs2 is not None and np.any(self.w2 > 0)
        self.use3 = self.d_max >= 3 and self.obs3 is not None and np.any(self.w3 > 0)

    def prediction(self, x: np.ndarray) -> AutocorrSet:
        t, g2 = self.tensors, 2.0 * self.gamma
        s1 = float(t.t1 @ x)
        acs = AutocorrSet(L=self.L, d_max=self.d_max, meta={"gamma": self.gamma, "sigma": self.sigma})
        acs.order1 = g2 * s1
        if self.d_max >= 2:
            p2 = g2 * np.einsum("lab,a,b->l", t.t2, x, x)
            p2[0] += self.sigma**2
            acs.order2 = p2
        if self.d_max >= 3:
            acs.order3 = g2 * (
                np.einsum("pqabc,a,b,c->pq", t.t3, x, x, x)
                + self.sigma**2 * s1 * self.pattern
            )
        return acs

    def value_and_gradient(self, x: np.ndarray):
        t, g2 = self.tensors, 2.0 * self.gamma
        s1 = float(t.t1 @ x)
        r1 = g2 * s1 - self.obs1
        f = self.w1 * r1 * r1
        grad = (2.0 * self.w1 * r1 * g2) * t.t1.copy()
        if self.use2:
            p2 = g2 * np.einsum("lab,a,b->l", t.t2, x, x)
            p2[0] += self.sigma**2
            r2 = p2 - self.obs2
            f += float(self.w2 @ (r2 * r2))
            wr2 = (2.0 * self.w2 * r2) * g2
            grad += np.einsum("l,lab,b->a", wr2, t.t2, x)
            grad += np.einsum("l,lab,a->b", wr2, t.t2, x)
        if self.use3:
            p3 = g2 * (
                np.einsum("pqabc,a,b,c->pq", t.t3, x, x, x)
                + self.sigma**2 * s1 * self.pattern
            )
            r3 = p3 - self.obs3
            f += float(np.sum(self.w3 * r3 * r3))
            wr3 = (2.0 * self.w3 * r3) * g2
            grad += np.einsum("pq,pqabc,b,c->a", wr3, t.t3, x, x)
            grad += np.einsum("pq,pqabc,a,c->b", wr3, t.t3, x, x)
            grad += np.einsum("pq,pqabc,a,b->c", wr3, t.t3, x, x)
            grad += float(np.sum(wr3 * self.pattern)) * self.sigma**2 * t.t1
        return float(f), grad

    def scale_estimate(self) -> float:
        """Signal norm estimated from the debiased order-2 lag-0 entry."""
        if self.obs2 is not None:
            nsq = (float(self.obs2[0]) - self.sigma**2) * self.L / self.gamma
            if nsq > 0:
                return math.sqrt(nsq)
        return max(1.0, self.sigma)


def residual_and_gradient(x, observed: AutocorrSet, rho, gamma, sigma, weights=(1.0, 1.0, 1.0)):
    """Objective value and exact gradient at x (see MomentObjective)."""
    x = np.asarray(x, dtype=np.float64)
    if x.size != observed.L:
        raise DomainError("signal length must match the observed window length")
    return MomentObjective(observed, rho, gamma, sigma, weights).value_and_gradient(x)


def spectral_init(objective: MomentObjective, rng: np.random.Generator) -> np.ndarray:
    """Deterministic-shape initialization from order-2 data: match the
    power spectrum implied by the debiased circular autocorrelation and
    draw random phases for the unknown part."""
    L = objective.L
    scale = objective.scale_estimate()
    if objective.obs2 is None:
        return np.full(L, scale / math.sqrt(L))
    c2 = np.array(objective.obs2, dtype=float)
    c2[0] -= objective.sigma**2
    c2 *= L**2 / (objective.gamma * (L - np.arange(L)))
    power = np.clip(np.real(np.fft.fft(c2)), 0.0, None)
    mag = np.sqrt(power)
    phase = rng.uniform(0.0, 2.0 * math.pi, size=L)
    phase[0] = 0.0
    half = np.arange(1, L)
    phase[half] = phase[half] - phase[half][::-1]  # odd symmetry keeps x real
    x0 = np.fft.ifft(mag * np.exp(1j * phase)).real
    nrm = np.linalg.norm(x0)
    return x0 * (scale / nrm) if nrm > 0 else np.full(L, scale / math.sqrt(L))


def moment_match_lsq(
    observed: AutocorrSet,
    rho: GroupDistribution,
    gamma: float,
    sigma: float,
    cfg: RecoveryConfig = RecoveryConfig(),
    model_L: Optional[int] = None,
) -> RecoveryResult:
    """Best-of-restarts projected quasi-Newton fit of the signal to the
    observed autocorrelations.

    Restart 0 uses the order-2 spectral initialization, the rest draw
    uniformly from the box.  The winner is the lexicographic minimum of
    (residual, restart index), so restart order never changes the result.
    """
    if model_L is not None and observed.L != model_L:
        raise DomainError(f"observed L = {observed.L} does not match model L = {model_L}")
    objective = MomentObjective(
        observed, rho, gamma, sigma, weights=cfg.weights, weight_mode=cfg.weight_mode
    )
    L = objective.L
    bound = cfg.box_bound if cfg.box_bound is not None else 10.0 * objective.scale_estimate()
    bounds = [(-bound, bound)] * L

    best = None
    for restart in range(cfg.restarts):
        rng = rngmod.stream(cfg.seed, "restart", restart)
        if restart == 0:
            x0 = np.clip(spectral_init(objective, rng), -bound, bound)
        else:
            x0 = rng.uniform(-bound, bound, size=L)
        trace = []

        def record(xk):
            trace.append(objective.value_and_gradient(xk)[0])

        res = scipy.optimize.minimize(
            objective.value_and_gradient,
            x0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            callback=record,
            options={
                "maxiter": cfg.max_iters,
                "ftol": cfg.step_tol,
                "gtol": cfg.grad_tol,
                "maxcor": 20,
            },
        )
        f, g = objective.value_and_gradient(res.x)
        cand = {
            "x": np.clip(res.x, -bound, bound),
            "f": f,
            "gnorm": float(np.max(np.abs(g))),
            "iters": int(res.nit),
            "trace": [objective.value_and_gradient(x0)[0]] + trace,
            "restart": restart,
        }
        if best is None or (cand["f"], cand["restart"]) < (best["f"], best["restart"]):
            best = cand

    converged = best["gnorm"] < max(cfg.grad_tol * 1e3, 1e-6) or best["f"] < 1e-18
    return RecoveryResult(
        x_hat=Signal(best["x"]),
        residual=best["f"],
        converged=bool(converged),
        iterations=best["iters"],
        winner_restart=best["restart"],
        diagnostics={
            "grad_norm": best["gnorm"],
            "box_bound": bound,
            "_objective_trace": best["trace"],
        },
    )


def recover_identity_group(
    observed: AutocorrSet,
    gamma: float,
    sigma: float,
    cfg: RecoveryConfig = RecoveryConfig(),
) -> RecoveryResult:
    """Moment matching specialized to the trivial group (no averaging).

    The orbit is the signal itself.  The result flags, from the order-3
    and order-2 data, whether the edge-entry condition x[0] x[L-1] != 0
    that guarantees uniqueness looks violated.
    """
    result = moment_match_lsq(observed, PointMassIdentity(), gamma, sigma, cfg)
    L = observed.L
    edge_ok = True
    if observed.order2 is not None and L >= 2:
        # order-2 lag L-1 carries only the x[0]*x[L-1] product
        edge = float(observed.order2[L - 1]) * L / gamma  # 2L/(2 gamma)
        scale_sq = max((float(observed.order2[0]) - sigma**2) * L / gamma, 1e-300)
        edge_ok = abs(edge) > 1e-6 * scale_sq
    result.diagnostics["edge_hypothesis_ok"] = bool(edge_ok)
    if not edge_ok:
        result.diagnostics["warning"] = (
            "order-2 extreme lag is ~0: edge entries x[0], x[L-1] look vanishing, "
            "uniqueness of the fit is not guaranteed"
        )
    return result


# ---------------------------------------------------------------------------
# closed-form bispectrum inversion (uniform cyclic shifts)


def _circular_mean(angles: np.ndarray, weights: np.ndarray) -> float:
    return float(np.angle(np.sum(weights * np.exp(1j * angles))))


def invert_bispectrum(features: InvariantFeatures, dft_floor: float = DFT_FLOOR) -> Signal:
    """Reconstruct a real signal (orbit representative) from mean, power
    spectrum and bispectrum.

    Moduli come from the power spectrum.  Phases: psi[1] := 0 picks the
    orbit representative; for k >= 2 every split k = k1 + k2 with
    k1, k2 >= 1 proposes psi[k1] + psi[k2] - angle(B[k1, k2]) and the
    proposals are combined by a weighted circular mean.  A phase ramp
    psi[k] += k * alpha is then chosen from the conjugate-symmetry
    constraint psi[k] + psi[L-k] + L * alpha = 0 (mod 2 pi), which makes
    the inverse DFT real; alpha is defined modulo 2 pi / L, i.e. exactly
    modulo a cyclic shift.
    """
    L = features.L
    power = np.asarray(features.power, dtype=float)
    if L < 2:
        raise DomainError("bispectrum inversion needs L >= 2")
    if np.min(power) <= dft_floor**2:
        raise HypothesisViolation(
            f"power spectrum entry {float(np.min(power)):.3e} at or below the DFT floor; "
            "non-vanishing DFT hypothesis fails"
        )
    moduli = np.sqrt(power)
    bis = np.asarray(features.bispectrum, dtype=complex)

    psi = np.zeros(L)
    for k in range(2, L):
        splits = np.arange(1, k)  # k1 from 1..k-1, k2 = k - k1
        angles = psi[splits] + psi[k - splits] - np.angle(bis[splits, k - splits])
        weights = np.abs(bis[splits, k - splits])
        if not np.any(weights > 0):
            weights = np.ones_like(weights)
        psi[k] = _circular_mean(angles, weights)

    ks = np.arange(1, L)
    ramp_votes = psi[ks] + psi[L - ks]
    ramp_weights = power[ks] * power[L - ks]
    alpha = -_circular_mean(ramp_votes, ramp_weights) / L
    phases = psi + np.arange(L) * alpha
    phases[0] = 0.0 if features.mean >= 0 else math.pi

    X = moduli * np.exp(1j * phases)
    X = 0.5 * (X + np.conj(X[(-np.arange(L)) % L]))  # exact conjugate symmetry
    return Signal(np.fft.ifft(X).real)


# ---------------------------------------------------------------------------
# rotation-invariant recovery for steerable coefficients


@dataclass(frozen=True, eq=False)
class RotationInvariants:
    """Rotation-invariant coefficient products of a steerable table.

    pairs[k][q1, q2]            = a[k,q1] conj(a[k,q2]),      0 <= k <= k_max
    triples[(k1, k2)][q1,q2,q3] = a[k1,q1] a[k2,q2] conj(a[k1+k2,q3]),
                                  k1 >= k2 >= 0, k1 + k2 <= k_max.
    Products for negative frequencies follow by conjugation and index
    reordering, so this canonical subset carries the full set.
    """

    k_max: int
    pairs: dict
    triples: dict


def rotation_invariants(img: SteerableImage) -> RotationInvariants:
    pairs = {}
    triples = {}
    for k in range(img.k_max + 1):
        v = img.rings[k]
        pairs[k] = np.outer(v, np.conj(v))
    for k1 in range(img.k_max + 1):
        for k2 in range(0, min(k1, img.k_max - k1) + 1):
            v1, v2, v3 = img.rings[k1], img.rings[k2], img.rings[k1 + k2]
            triples[(k1, k2)] = np.einsum("a,b,c->abc", v1, v2, np.conj(v3))
    return RotationInvariants(k_max=img.k_max, pairs=pairs, triples=triples)


def _rank_one_factor(gram: np.ndarray) -> np.ndarray:
    """Vector v with v v^H closest to the Gram matrix (leading eigenpair)."""
    vals, vecs = np.linalg.eigh(gram)
    lam = max(float(vals[-1]), 0.0)
    return math.sqrt(lam) * vecs[:, -1]


def recover_rotation_coeffs(
    pairs: dict,
    triples: dict,
    k_max: int,
    floor: float = 1e-12,
) -> SteerableImage:
    """Rebuild a steerable coefficient table from invariant products.

    Ring 0 is rotation-invariant and comes straight from the (0,0) triple
    diagonal (real cube roots) with moduli from its Gram matrix.  Each
    ring k >= 1 is the rank-one factor of its Gram matrix, determined up
    to a unit phase; the (k-1, 1) triples pin that phase relative to the
    rings below.  The global gauge sets the largest-modulus ring-1
    coefficient real positive, so the output is one fixed representative
    of the rotation orbit.
    """
    rings: list[np.ndarray] = []
    for k in range(k_max + 1):
        if k not in pairs:
            raise DomainError(f"missing pair products for ring {k}")
        gram = np.asarray(pairs[k], dtype=complex)
        qk = gram.shape[0]
        if k == 0:
            if qk == 0:
                rings.append(np.zeros(0, dtype=complex))
                continue
            mod = np.sqrt(np.clip(np.real(np.diag(gram)), 0.0, None))
            t000 = np.asarray(triples[(0, 0)], dtype=complex)
            cubes = np.real(t000[np.arange(qk), np.arange(qk), np.arange(qk)])
            signs = np.where(cubes < 0, -1.0, 1.0)
            rings.append((signs * mod).astype(complex))
            continue
        if qk == 0 or float(np.real(np.trace(gram))) <= floor:
            raise HypothesisViolation(
                f"ring {k} has no nonzero coefficient; rotation recovery hypothesis fails"
            )
        cand = _rank_one_factor(gram).astype(complex)
        if k == 1:
            qstar = int(np.argmax(np.abs(cand)))
            cand = cand * np.exp(-1j * np.angle(cand[qstar]))  # gauge
            rings.append(cand)
            continue
        tri = np.asarray(triples[(k - 1, 1)], dtype=complex)
        # with v_k = c e^{i delta}: triples = ref * e^{-i delta}, so the
        # aligned sum below has angle -delta
        ref = np.einsum("a,b,c->abc", rings[k - 1], rings[1], np.conj(cand))
        num = np.sum(tri * np.conj(ref))
        if abs(num) <= floor:
            raise HypothesisViolation(
                f"triple products linking ring {k} to rings 1 and {k - 1} vanish"
            )
        rings.append(cand * np.exp(-1j * np.angle(num)))
    return SteerableImage(tuple(rings))
