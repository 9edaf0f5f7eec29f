"""Built-in invariant suite behind `mtdkit verify`.

Small-scale, seconds-fast re-checks of the package's load-bearing
identities.  Each check returns a pass flag and a one-line detail; the
CLI prints one line per check and exits nonzero on any failure.
"""

from __future__ import annotations

import numpy as np

from . import rng as rngmod
from .autocorr import (
    empirical_autocorr,
    ensemble_autocorr,
    mtd_moment_prediction,
    noise_bias,
)
from .errors import MtdError
from .generate import (
    SeparationMode,
    draw_signal,
    generate_mtd,
    make_placement,
    observation_from_bytes,
    observation_sidecar,
    observation_to_bytes,
    validate_separation,
)
from .model import (
    CyclicShift,
    Signal,
    SteerableImage,
    UniformCyclic,
    apply_group,
    orbit_mse,
    rotation_aligned_error,
)
from .recover import (
    invert_bispectrum,
    recover_rotation_coeffs,
    residual_and_gradient,
    rotation_invariants,
)
from .autocorr import exact_invariant_features


def check_group_law(seed):
    gen = rngmod.stream(seed, "group-law")
    for _ in range(50):
        L = int(gen.integers(2, 9))
        x = Signal(gen.normal(size=L))
        s1, s2 = int(gen.integers(L)), int(gen.integers(L))
        lhs = apply_group(CyclicShift(s1), apply_group(CyclicShift(s2), x))
        rhs = apply_group(CyclicShift((s1 + s2) % L), x)
        if not np.array_equal(lhs.values, rhs.values):
            return False, f"composition mismatch at L={L}, s=({s1},{s2})"
        mse, _ = orbit_mse(apply_group(CyclicShift(s1), x), x)
        if mse != 0.0:
            return False, "orbit member scored nonzero"
    return True, "shift composition and orbit identities hold (50 cases)"


def check_separation(seed):
    gen = rngmod.stream(seed, "separation")
    for _ in range(30):
        L = int(gen.integers(2, 8))
        M = int(gen.integers(20, 200))
        for mode in SeparationMode:
            gap = mode.default_gap(L)
            n_max = min((L * M - L) // gap, M - 1)
            if n_max < 1:
                continue
            N = int(gen.integers(1, n_max + 1))
            for strategy in ("uniform-random-valid", "equispaced"):
                plan = make_placement(L, M, N, mode, strategy, seed=int(gen.integers(1 << 30)))
                if not validate_separation(plan.starts, gap):
                    return False, f"gap violation: {mode.value}/{strategy}"
    return True, "all emitted plans pass the pairwise separation scan"


def check_autocorr_bruteforce(seed):
    gen = rngmod.stream(seed, "brute")
    for _ in range(25):
        L = int(gen.integers(2, 5))
        M = int(gen.integers(1, 6))
        z = gen.normal(size=L * M)
        zp = np.concatenate([z, np.zeros(L)])
        acs = empirical_autocorr(z, L=L)
        lm = L * M
        for l1 in range(L):
            for l2 in range(L):
                ref = sum(zp[j] * zp[j + l1] * zp[j + l2] for j in range(lm)) / lm
                if abs(acs.order3[l1, l2] - ref) > 1e-12:
                    return False, f"order-3 mismatch at lags ({l1},{l2})"
    return True, "triple-loop evaluation matches to 1e-12 (25 cases)"


def check_ensemble_oracle(seed):
    gen = rngmod.stream(seed, "ens-oracle")
    L, sigma = 3, 0.8
    x = Signal(gen.normal(size=L))
    rho = UniformCyclic(L)
    ens = ensemble_autocorr(x, rho, sigma)
    T = 200_000
    shifts = gen.integers(L, size=T)
    base = np.stack([np.roll(x.values, s) for s in range(L)])[shifts]
    Y = np.concatenate([np.zeros((T, L)), base, np.zeros((T, L))], axis=1)
    Y += gen.normal(0, sigma, size=Y.shape)
    for l1 in range(L):
        vals = np.mean([Y[:, j] * Y[:, j + l1] for j in range(2 * L)], axis=0)
        z = abs(vals.mean() - ens.order2[l1]) / (vals.std() / np.sqrt(T))
        if z > 5.0:
            return False, f"order-2 lag {l1} off by {z:.1f} standard errors"
    return True, "Monte Carlo window ensemble matches analytic order-2 (5 SE)"


def check_noise_prediction(seed):
    # pure-noise observation: the limit prediction must equal sigma^2 at
    # order-2 lag 0.  Sensitive to the sign of the noise-bias term chi,
    # which is exactly what the fault-injection canary flips.
    L, M, sigma, gamma = 4, 20_000, 1.5, 0.2
    N = int(gamma * M)
    plan = make_placement(L, M, N, SeparationMode.WELL_SEPARATED, "equispaced", seed=seed)
    obs = generate_mtd(Signal(np.zeros(L)), UniformCyclic(L), plan, sigma, seed=seed)
    acs = empirical_autocorr(obs)
    x0 = Signal(np.zeros(L))
    pred = mtd_moment_prediction(x0, UniformCyclic(L), sigma, gamma)
    err = float(np.max(np.abs(acs.order2 - pred.order2)))
    tol = 10.0 * sigma**2 / np.sqrt(L * M)
    if err > tol:
        return False, f"order-2 prediction error {err:.4f} exceeds {tol:.4f}"
    chi = noise_bias(sigma, L)
    if abs(chi.order2[0] - sigma**2) > 1e-12:
        return False, f"chi[0] = {chi.order2[0]!r}, expected sigma^2 = {sigma**2!r}"
    return True, f"pure-noise order-2 matches prediction (err {err:.2e} <= {tol:.2e})"


def check_bispectrum(seed):
    for t in range(5):
        x = draw_signal((seed, "bis", t), 5, require="dft")
        x_hat = invert_bispectrum(exact_invariant_features(x))
        mse, _ = orbit_mse(x_hat, x)
        if mse > 1e-10:
            return False, f"exact inversion error {mse:.2e}"
    return True, "exact-feature inversion reaches orbit mse < 1e-10 (5 signals)"


def check_rotation(seed):
    gen = rngmod.stream(seed, "rot")
    for _ in range(5):
        rings = [gen.normal(size=2)] + [
            gen.normal(size=2) + 1j * gen.normal(size=2) for _ in range(3)
        ]
        img = SteerableImage(tuple(rings))
        inv = rotation_invariants(img)
        rec = recover_rotation_coeffs(inv.pairs, inv.triples, img.k_max)
        err, _ = rotation_aligned_error(rec, img)
        if err > 1e-10:
            return False, f"rotation recovery error {err:.2e}"
    return True, "invariant-product recovery exact up to rotation (5 tables)"


def check_gradient(seed):
    gen = rngmod.stream(seed, "grad")
    from .autocorr import AutocorrSet

    for _ in range(10):
        L = int(gen.integers(2, 6))
        obs = AutocorrSet(
            L=L,
            d_max=3,
            order1=float(gen.normal()),
            order2=gen.normal(size=L),
            order3=gen.normal(size=(L, L)),
        )
        obs.order3 = 0.5 * (obs.order3 + obs.order3.T)
        x = gen.normal(size=L)
        rho = UniformCyclic(L)
        f, g = residual_and_gradient(x, obs, rho, 0.2, 1.0)
        h = 1e-5
        for m in range(L):
            e = np.zeros(L)
            e[m] = h
            fd = (
                residual_and_gradient(x + e, obs, rho, 0.2, 1.0)[0]
                - residual_and_gradient(x - e, obs, rho, 0.2, 1.0)[0]
            ) / (2 * h)
            if abs(fd - g[m]) / max(abs(g[m]), abs(fd), 1e-10) > 1e-5:
                return False, f"gradient component {m} off (fd {fd!r} vs {g[m]!r})"
    return True, "analytic gradient matches central differences (10 cases)"


def check_serialization(seed):
    plan = make_placement(3, 50, 8, SeparationMode.WELL_SEPARATED, seed=seed)
    obs = generate_mtd(
        draw_signal((seed, "ser"), 3), UniformCyclic(3), plan, 0.7, seed=seed
    )
    blob = observation_to_bytes(obs)
    back = observation_from_bytes(blob, observation_sidecar(obs))
    if not np.array_equal(back.samples, obs.samples):
        return False, "samples did not round-trip bit-exactly"
    if observation_to_bytes(back) != blob:
        return False, "re-serialization changed bytes"
    return True, "binary + sidecar round-trip is bit-exact"


CHECKS = [
    ("group-law", check_group_law),
    ("separation-scan", check_separation),
    ("autocorr-bruteforce", check_autocorr_bruteforce),
    ("ensemble-oracle", check_ensemble_oracle),
    ("noise-prediction", check_noise_prediction),
    ("bispectrum-inversion", check_bispectrum),
    ("rotation-recovery", check_rotation),
    ("gradient-check", check_gradient),
    ("serialization-roundtrip", check_serialization),
]


def run_all(seed: int = 0) -> dict:
    results = []
    for name, fn in CHECKS:
        try:
            passed, detail = fn(seed)
        except MtdError as e:
            passed, detail = False, f"raised {type(e).__name__}: {e}"
        results.append({"name": name, "passed": bool(passed), "detail": detail})
    n_passed = sum(1 for r in results if r["passed"])
    return {
        "checks": results,
        "n_checks": len(results),
        "n_passed": n_passed,
        "all_passed": n_passed == len(results),
    }
