"""Monte-Carlo sweeps over (sigma, N, M, gamma) grids.

One trial = generate an observation, take its autocorrelations, recover
the signal, score the orbit-aligned error against the hidden truth (the
only place truth is read).  Sweeps run trials over a grid, emit CSV rows
and a JSON summary with per-cell medians and fitted scaling exponents.

Determinism: every trial's seed is hashed from (base seed, cell
parameters, trial index), so rows never depend on execution order,
thread count, or the presence of other cells.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import rng as rngmod
from .autocorr import empirical_autocorr, features_from_mtd_moments, mra_invariant_features
from .errors import DomainError, MtdError
from .generate import (
    MraSampleSet,
    SeparationMode,
    draw_signal,
    embed_mra_as_mtd,
    generate_mra,
    generate_mtd,
    make_placement,
)
from .model import CategoricalCyclic, PointMassIdentity, UniformCyclic, orbit_mse
from .recover import RecoveryConfig, invert_bispectrum, moment_match_lsq, recover_identity_group

MODELS = ("cyclic-uniform", "cyclic-categorical", "identity", "mra")
METHODS = ("bispectrum", "lsq", "identity")


@dataclass(frozen=True)
class SweepConfig:
    model: str
    L: int
    sigmas: tuple
    gamma: float
    n_grid: tuple  # occurrence counts; M = N / gamma per cell
    trials: int = 25
    method: str = "bispectrum"
    base_seed: int = 0
    mode: SeparationMode = SeparationMode.WELL_SEPARATED
    placement: str = "uniform-random-valid"
    signal_amplitude: Optional[float] = None  # peak |x|; None keeps unit-variance draws
    signal_margin: float = 0.3  # rejection margin for the DFT / edge hypothesis
    target_eps: float = 0.05
    categorical_weights: Optional[tuple] = None
    recovery: RecoveryConfig = RecoveryConfig()

    def __post_init__(self):
        if self.model not in MODELS:
            raise DomainError(f"unknown model {self.model!r}")
        if self.method not in METHODS:
            raise DomainError(f"unknown method {self.method!r}")
        if not self.sigmas or any(s < 0 for s in self.sigmas):
            raise DomainError("sigma grid must be non-empty and non-negative")
        if not self.n_grid or any(n < 1 for n in self.n_grid):
            raise DomainError("N grid must be non-empty and positive")
        if self.trials < 3:
            raise DomainError("trials must be >= 3")
        if not 0.0 < self.gamma < 1.0:
            raise DomainError("gamma must lie in (0, 1)")
        if self.target_eps <= 0:
            raise DomainError("target error must be positive")

    def distribution(self):
        if self.model == "cyclic-categorical":
            if self.categorical_weights is None:
                raise DomainError("cyclic-categorical model needs categorical_weights")
            return CategoricalCyclic(np.asarray(self.categorical_weights, dtype=float))
        if self.model == "identity":
            return PointMassIdentity()
        return UniformCyclic(self.L)

    def group_kind(self) -> str:
        return "identity" if self.model == "identity" else "cyclic"

    def signal_requirement(self) -> str:
        return "edges" if self.model == "identity" else "dft"

    def cells(self) -> list:
        return [(float(s), int(n)) for s in self.sigmas for n in self.n_grid]


@dataclass(frozen=True)
class TrialRecord:
    sigma: float
    N: int
    M: int
    gamma: float
    seed: int
    rmse: float  # orbit-aligned relative RMSE; NaN for failed trials
    residual: float
    wall_ms: float
    converged: bool


@dataclass(eq=False)
class SweepTable:
    config: SweepConfig
    rows: list = field(default_factory=list)

    def median_rmse(self, sigma=None, N=None) -> float:
        sel = [
            r.rmse
            for r in self.rows
            if (sigma is None or r.sigma == sigma) and (N is None or r.N == N)
        ]
        if not sel:
            return math.nan
        arr = np.array(sel)
        arr[~np.isfinite(arr)] = np.inf  # failed trials count as arbitrarily bad
        med = float(np.median(arr))
        return med


CSV_HEADER = "sigma,N,M,gamma,seed,rmse,residual,wall_ms,converged"


def rows_to_csv(rows, include_timing: bool = True) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        wall = f"{r.wall_ms:.3f}" if include_timing else "0.000"
        lines.append(
            f"{r.sigma!r},{r.N},{r.M},{r.gamma!r},{r.seed},{r.rmse!r},"
            f"{r.residual!r},{wall},{str(r.converged).lower()}"
        )
    return "\n".join(lines) + "\n"


def _trial_signal(cfg: SweepConfig, trial: int):
    # common random signals: keyed by trial index only, so every cell and
    # every ladder point sees the same signal panel
    x = draw_signal(
        ("sweep-signal", cfg.base_seed, trial),
        cfg.L,
        require=cfg.signal_requirement(),
        margin=cfg.signal_margin,
        normalize="linf" if cfg.signal_amplitude else None,
    )
    if cfg.signal_amplitude:
        from .model import Signal

        x = Signal(cfg.signal_amplitude * x.values)
    return x


def run_trial(cfg: SweepConfig, sigma: float, N: int, trial: int) -> TrialRecord:
    """One generate -> autocorrelate -> recover -> score pass.

    Hypothesis or capacity failures become a recorded failed trial (NaN
    error, converged false) rather than aborting the sweep.
    """
    seed = rngmod.derive_seed(cfg.base_seed, "trial", sigma, N, trial)
    M = int(round(N / cfg.gamma))
    t0 = time.perf_counter()
    rmse, residual, converged = math.nan, math.nan, False
    try:
        x = _trial_signal(cfg, trial)
        if cfg.model == "mra":
            sample_set = generate_mra(x, cfg.distribution(), N, sigma, seed=seed)
            x_hat = invert_bispectrum(mra_invariant_features(sample_set))
            mse, _ = orbit_mse(x_hat, x, "cyclic")
            rmse, residual, converged = math.sqrt(mse), 0.0, True
        else:
            plan = make_placement(
                cfg.L, M, N, mode=cfg.mode, strategy=cfg.placement, seed=seed
            )
            obs = generate_mtd(x, cfg.distribution(), plan, sigma, seed=seed)
            acs = empirical_autocorr(obs)
            if cfg.method == "bispectrum":
                feats = features_from_mtd_moments(acs, cfg.gamma, sigma)
                x_hat = invert_bispectrum(feats)
                residual, converged = 0.0, True
            else:
                rcfg = replace(cfg.recovery, seed=seed)
                recover = recover_identity_group if cfg.method == "identity" else moment_match_lsq
                if cfg.method == "identity":
                    result = recover(acs, cfg.gamma, sigma, rcfg)
                else:
                    result = moment_match_lsq(acs, cfg.distribution(), cfg.gamma, sigma, rcfg)
                x_hat = result.x_hat
                residual, converged = result.residual, result.converged
            mse, _ = orbit_mse(x_hat, x, cfg.group_kind())
            rmse = math.sqrt(mse)
    except MtdError:
        converged = False
    wall_ms = (time.perf_counter() - t0) * 1e3
    return TrialRecord(
        sigma=float(sigma),
        N=int(N),
        M=M,
        gamma=cfg.gamma,
        seed=seed,
        rmse=rmse,
        residual=residual,
        wall_ms=wall_ms,
        converged=converged,
    )


def run_sweep(cfg: SweepConfig, threads: int = 1) -> SweepTable:
    """All cells x trials; rows come back in (cell, trial) order no matter
    how many workers executed them."""
    tasks = [(sigma, N, t) for sigma, N in cfg.cells() for t in range(cfg.trials)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda a: run_trial(cfg, *a), tasks))
    else:
        rows = [run_trial(cfg, *a) for a in tasks]
    return SweepTable(config=cfg, rows=rows)


# ---------------------------------------------------------------------------
# scaling fits


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    stderr: float
    n_points: int


def fit_loglog(xs, ys) -> FitResult:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 2:
        raise DomainError("need at least 2 points for a log-log fit")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise DomainError("log-log fit needs positive values")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - np.mean(ly)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    dof = max(xs.size - 2, 1)
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    stderr = math.sqrt(ss_res / dof / sxx) if sxx > 0 else math.inf
    return FitResult(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=float(r2),
        stderr=float(stderr),
        n_points=int(xs.size),
    )


def fit_scaling_exponent(table: SweepTable, axis: str = "sigma") -> FitResult:
    """OLS slope of log median-RMSE against log axis ("sigma", "N" or "M")."""
    if axis not in ("sigma", "N", "M"):
        raise DomainError(f"unknown scaling axis {axis!r}")
    groups: dict = {}
    for r in table.rows:
        key = getattr(r, "sigma" if axis == "sigma" else "N")
        groups.setdefault(key, []).append(r)
    if axis == "M":
        groups = {k * int(round(1 / table.config.gamma)): v for k, v in groups.items()}
    xs, ys = [], []
    for key in sorted(groups):
        vals = np.array([r.rmse for r in groups[key]])
        vals[~np.isfinite(vals)] = np.inf
        med = float(np.median(vals))
        xs.append(key)
        ys.append(med)
    if len(xs) < 3:
        raise DomainError("need >= 3 distinct axis values for a scaling fit")
    if any(not np.isfinite(y) or y <= 0 for y in ys):
        raise DomainError("scaling fit needs positive finite medians")
    return fit_loglog(xs, ys)


def summary_dict(table: SweepTable) -> dict:
    cells = []
    for sigma, N in table.config.cells():
        sel = [r for r in table.rows if r.sigma == sigma and r.N == N]
        med = table.median_rmse(sigma=sigma, N=N)
        cells.append(
            {
                "sigma": sigma,
                "N": N,
                "M": sel[0].M if sel else None,
                "gamma": table.config.gamma,
                "trials": len(sel),
                "failed": sum(1 for r in sel if not np.isfinite(r.rmse)),
                "median_rmse": None if not np.isfinite(med) else med,
            }
        )
    fits = {}
    for axis, values in (("sigma", table.config.sigmas), ("N", table.config.n_grid)):
        if len(set(values)) >= 3:
            try:
                fit = fit_scaling_exponent(table, axis)
            except DomainError:
                continue
            fits[axis] = {
                "slope": fit.slope,
                "intercept": fit.intercept,
                "r_squared": fit.r_squared,
                "stderr": fit.stderr,
                "ci95": [fit.slope - 2 * fit.stderr, fit.slope + 2 * fit.stderr],
                "n_points": fit.n_points,
            }
    return {
        "model": table.config.model,
        "method": table.config.method,
        "L": table.config.L,
        "base_seed": table.config.base_seed,
        "cells": cells,
        "fits": fits,
    }


def summary_json(table: SweepTable) -> str:
    return json.dumps(summary_dict(table), sort_keys=True, indent=1)


# ---------------------------------------------------------------------------
# empirical sample complexity


@dataclass(frozen=True)
class SampleComplexityResult:
    """Smallest tested N whose median orbit MSE meets the target.

    This upper-bounds the true sample complexity: it commits to one
    estimator, while the definition takes the best over all of them.
    """

    sigma: float
    eps: float
    n_star: Optional[int]
    bracket: tuple  # (largest failing N tested, n_star) or (n_max, None)
    saturated: bool
    medians: dict  # tested N -> median orbit MSE


def _median_mse(cfg: SweepConfig, sigma: float, N: int) -> float:
    mses = []
    for t in range(cfg.trials):
        rec = run_trial(cfg, sigma, N, t)
        mses.append(rec.rmse**2 if np.isfinite(rec.rmse) else np.inf)
    return float(np.median(np.array(mses)))


def estimate_sample_complexity(
    cfg: SweepConfig,
    sigma: float,
    eps: Optional[float] = None,
    n_min: int = 1000,
    n_max: int = 6_000_000,
    ladder_ratio: float = 2.0 ** (1.0 / 3.0),
) -> SampleComplexityResult:
    """Scan a fixed geometric ladder of N upward and return the first rung
    whose median orbit MSE is at or below eps.

    The ladder and the per-(sigma, N, trial) seeds are fixed, so raising
    eps can only move the answer to an earlier rung (monotone in eps) and
    repeated calls reproduce identical medians.  Cost is dominated by the
    final rung: the geometric sum below it is a constant factor.
    """
    eps = cfg.target_eps if eps is None else float(eps)
    if eps <= 0:
        raise DomainError("eps must be positive")
    medians: dict = {}
    prev = None
    n = float(n_min)
    while True:
        N = int(round(n))
        med = _median_mse(cfg, sigma, N)
        medians[N] = med
        if med <= eps:
            return SampleComplexityResult(
                sigma=sigma,
                eps=eps,
                n_star=N,
                bracket=(prev if prev is not None else 0, N),
                saturated=False,
                medians=medians,
            )
        prev = N
        n *= ladder_ratio
        if int(round(n)) > n_max:
            return SampleComplexityResult(
                sigma=sigma,
                eps=eps,
                n_star=None,
                bracket=(prev, None),
                saturated=True,
                medians=medians,
            )


# ---------------------------------------------------------------------------
# paired reference-samples vs embedded-observation comparison


def mra_vs_mtd_comparison(cfg: SweepConfig, embed_m_factor: int = 4, threads: int = 1) -> dict:
    """Run the same recovery on (a) aligned reference samples and (b) the
    very same samples embedded into a long observation, trial by trial.

    Arm (a) averages Fourier invariants over the N aligned samples; arm
    (b) sees only the embedded observation's autocorrelations.  Both end
    in bispectrum inversion.  Returns {"mra": SweepTable, "mtd": SweepTable}
    with matching (cell, trial) keys.
    """
    if cfg.model not in ("cyclic-uniform", "mra"):
        raise DomainError("paired comparison is defined for uniform cyclic shifts")
    rho = UniformCyclic(cfg.L)
    mra_rows, mtd_rows = [], []

    def one(args):
        sigma, N, trial = args
        seed = rngmod.derive_seed(cfg.base_seed, "pair", sigma, N, trial)
        x = _trial_signal(cfg, trial)
        sample_set = generate_mra(x, rho, N, sigma, seed=seed)
        M = embed_m_factor * N
        gamma = N / M
        t0 = time.perf_counter()
        try:
            x_hat = invert_bispectrum(mra_invariant_features(sample_set))
            mse, _ = orbit_mse(x_hat, x, "cyclic")
            rmse_a, conv_a = math.sqrt(mse), True
        except MtdError:
            rmse_a, conv_a = math.nan, False
        t1 = time.perf_counter()
        try:
            obs = embed_mra_as_mtd(
                sample_set, M, mode=SeparationMode.WELL_SEPARATED, seed=seed
            )
            feats = features_from_mtd_moments(empirical_autocorr(obs), gamma, sigma)
            x_hat = invert_bispectrum(feats)
            mse, _ = orbit_mse(x_hat, x, "cyclic")
            rmse_b, conv_b = math.sqrt(mse), True
        except MtdError:
            rmse_b, conv_b = math.nan, False
        t2 = time.perf_counter()
        # the reference arm has no placement; record M = N, gamma = 1
        row_a = TrialRecord(sigma, N, N, 1.0, seed, rmse_a, 0.0, (t1 - t0) * 1e3, conv_a)
        row_b = TrialRecord(sigma, N, M, gamma, seed, rmse_b, 0.0, (t2 - t1) * 1e3, conv_b)
        return row_a, row_b

    tasks = [(sigma, N, t) for sigma, N in cfg.cells() for t in range(cfg.trials)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, tasks))
    else:
        results = [one(a) for a in tasks]
    for row_a, row_b in results:
        mra_rows.append(row_a)
        mtd_rows.append(row_b)
    return {
        "mra": SweepTable(config=cfg, rows=mra_rows),
        "mtd": SweepTable(config=cfg, rows=mtd_rows),
    }


def median_standard_error(values) -> float:
    """Large-sample normal-approximation SE of a sample median."""
    arr = np.asarray([v for v in values if np.isfinite(v)], dtype=float)
    if arr.size < 2:
        return math.inf
    return 1.2533 * float(arr.std(ddof=1)) / math.sqrt(arr.size)
