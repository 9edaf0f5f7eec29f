"""Command-line surface.

Subcommands: generate, moments, recover, sweep, verify.  Configs are JSON
documents validated before any work starts (unknown keys rejected); all
randomness flows from --seed.  Exit codes: 0 success, 2 config error,
3 capacity error, 4 malformed file, 5 model-hypothesis violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import autocorr as autocorr_mod
from . import selfcheck
from .autocorr import AutocorrSet, empirical_autocorr, features_from_mtd_moments
from .errors import CapacityError, ConfigError, DomainError, FormatError, HypothesisViolation
from .generate import (
    SeparationMode,
    draw_signal,
    generate_mtd,
    load_observation,
    make_placement,
    save_observation,
)
from .model import CategoricalCyclic, PointMassIdentity, Signal, UniformCyclic, orbit_mse
from .recover import (
    RecoveryConfig,
    invert_bispectrum,
    moment_match_lsq,
    recover_identity_group,
)
from .sweeps import (
    SweepConfig,
    mra_vs_mtd_comparison,
    median_standard_error,
    rows_to_csv,
    run_sweep,
    summary_json,
)

EXIT_CONFIG = 2
EXIT_CAPACITY = 3
EXIT_FORMAT = 4
EXIT_HYPOTHESIS = 5


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _load_config(path, schema: dict, name: str) -> dict:
    """Validate a flat JSON object against {key: (required, checker)}."""
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}")
    if not isinstance(doc, dict):
        raise ConfigError(f"{name} config must be a JSON object")
    unknown = set(doc) - set(schema)
    if unknown:
        raise ConfigError(f"unknown {name} config keys: {sorted(unknown)}")
    for key, (required, checker) in schema.items():
        if key not in doc:
            if required:
                raise ConfigError(f"missing required {name} config key: {key!r}")
            continue
        err = checker(doc[key])
        if err:
            raise ConfigError(f"config key {key!r}: {err}")
    return doc


def _positive_int(v):
    return None if isinstance(v, int) and v > 0 else "must be a positive integer"


def _nonneg_number(v):
    return None if isinstance(v, (int, float)) and v >= 0 else "must be a number >= 0"


def _number_list(v):
    ok = isinstance(v, list) and v and all(isinstance(x, (int, float)) for x in v)
    return None if ok else "must be a non-empty list of numbers"


def _string(v):
    return None if isinstance(v, str) else "must be a string"


def _distribution_from_config(doc: dict, L: int):
    kind = doc.get("distribution", "uniform-cyclic")
    if kind == "uniform-cyclic":
        return UniformCyclic(L)
    if kind == "identity":
        return PointMassIdentity()
    if kind == "categorical-cyclic":
        weights = doc.get("weights")
        if not isinstance(weights, list) or len(weights) != L:
            raise ConfigError("categorical-cyclic distribution needs 'weights' of length L")
        return CategoricalCyclic(np.asarray(weights, dtype=float))
    raise ConfigError(f"unknown distribution {kind!r}")


# ---------------------------------------------------------------------------
# generate

GENERATE_SCHEMA = {
    "L": (True, _positive_int),
    "M": (True, _positive_int),
    "N": (True, _positive_int),
    "sigma": (True, _nonneg_number),
    "mode": (False, _string),
    "placement": (False, _string),
    "distribution": (False, _string),
    "weights": (False, _number_list),
    "signal": (False, _number_list),
    "signal_requirement": (False, _string),
}


def cmd_generate(args) -> int:
    doc = _load_config(args.config, GENERATE_SCHEMA, "generate")
    L, M, N = doc["L"], doc["M"], doc["N"]
    if N / M >= 1:
        raise ConfigError(f"density gamma = N/M = {N}/{M} violates N/M < 1")
    seed = args.seed
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % (1 << 63))
        print(f"note: no --seed given, using auto-seed {seed}")
    mode = SeparationMode(doc.get("mode", "well-separated"))
    rho = _distribution_from_config(doc, L)
    if "signal" in doc:
        if len(doc["signal"]) != L:
            raise ConfigError("explicit signal must have length L")
        x = Signal(np.asarray(doc["signal"], dtype=float))
    else:
        x = draw_signal(("cli-generate", seed), L, require=doc.get("signal_requirement", "dft"))
    plan = make_placement(
        L, M, N, mode=mode, strategy=doc.get("placement", "uniform-random-valid"), seed=seed
    )
    obs = generate_mtd(x, rho, plan, doc["sigma"], seed=seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    obs_path = out / "observation.mtd"
    save_observation(obs, obs_path)
    print(
        f"wrote {obs_path} (+.json): L={L} M={M} N={N} mode={mode.value} "
        f"sigma={doc['sigma']} seed={seed}"
    )
    return 0


# ---------------------------------------------------------------------------
# moments


def cmd_moments(args) -> int:
    obs = load_observation(args.observation)
    acs = empirical_autocorr(obs, d_max=args.dmax)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "moments.json").write_text(acs.to_json())
    (out / "moments.csv").write_text(acs.to_csv())
    print(
        f"wrote {out / 'moments.json'} and .csv: L={acs.L} d_max={acs.d_max} "
        f"order1={acs.order1!r}"
    )
    return 0


# ---------------------------------------------------------------------------
# recover

RECOVER_SCHEMA = {
    "L": (True, _positive_int),
    "gamma": (True, _nonneg_number),
    "sigma": (True, _nonneg_number),
    "distribution": (False, _string),
    "weights": (False, _number_list),
    "truth": (False, _number_list),
    "restarts": (False, _positive_int),
    "box_bound": (False, _nonneg_number),
}


def cmd_recover(args) -> int:
    doc = _load_config(args.config, RECOVER_SCHEMA, "recover")
    try:
        acs = AutocorrSet.from_json(Path(args.moments).read_text())
    except FileNotFoundError:
        raise ConfigError(f"moments file not found: {args.moments}")
    except (json.JSONDecodeError, KeyError) as e:
        raise FormatError(f"malformed moments file: {e}")
    L, gamma, sigma = doc["L"], doc["gamma"], doc["sigma"]
    if acs.L != L:
        raise ConfigError(f"moments have L = {acs.L} but model L = {L}")
    rho = _distribution_from_config(doc, L)
    rcfg = RecoveryConfig(
        restarts=doc.get("restarts", 20),
        box_bound=doc.get("box_bound"),
        seed=args.seed if args.seed is not None else 0,
    )
    if args.method == "bispectrum":
        if not isinstance(rho, UniformCyclic):
            raise ConfigError("bispectrum method requires the uniform-cyclic distribution")
        x_hat = invert_bispectrum(features_from_mtd_moments(acs, gamma, sigma))
        from .recover import RecoveryResult

        result = RecoveryResult(x_hat=x_hat, residual=0.0, converged=True)
    elif args.method == "identity":
        result = recover_identity_group(acs, gamma, sigma, rcfg)
    else:
        result = moment_match_lsq(acs, rho, gamma, sigma, rcfg)
    group_kind = "identity" if isinstance(rho, PointMassIdentity) else "cyclic"
    if "truth" in doc:
        mse, _ = orbit_mse(result.x_hat, np.asarray(doc["truth"], dtype=float), group_kind)
        result.orbit_rmse = float(np.sqrt(mse))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "recovery.json").write_text(json.dumps(result.to_json_dict(), sort_keys=True, indent=1))
    (out / "signal.csv").write_text("".join(f"{float(v)!r}\n" for v in result.x_hat.values))
    msg = f"wrote {out / 'recovery.json'}: residual={result.residual!r} converged={result.converged}"
    if result.orbit_rmse is not None:
        msg += f" orbit_rmse={result.orbit_rmse!r}"
    print(msg)
    return 0


# ---------------------------------------------------------------------------
# sweep

SWEEP_SCHEMA = {
    "model": (True, _string),
    "L": (True, _positive_int),
    "sigmas": (True, _number_list),
    "gamma": (True, _nonneg_number),
    "n_grid": (True, _number_list),
    "trials": (False, _positive_int),
    "method": (False, _string),
    "mode": (False, _string),
    "placement": (False, _string),
    "signal_amplitude": (False, _nonneg_number),
    "signal_margin": (False, _nonneg_number),
    "target_eps": (False, _nonneg_number),
    "categorical_weights": (False, _number_list),
    "restarts": (False, _positive_int),
    "comparison": (False, lambda v: None if isinstance(v, bool) else "must be a boolean"),
}


def sweep_config_from_doc(doc: dict, base_seed: int) -> SweepConfig:
    try:
        return SweepConfig(
            model=doc["model"],
            L=doc["L"],
            sigmas=tuple(float(s) for s in doc["sigmas"]),
            gamma=float(doc["gamma"]),
            n_grid=tuple(int(n) for n in doc["n_grid"]),
            trials=doc.get("trials", 25),
            method=doc.get("method", "bispectrum"),
            base_seed=base_seed,
            mode=SeparationMode(doc.get("mode", "well-separated")),
            placement=doc.get("placement", "uniform-random-valid"),
            signal_amplitude=doc.get("signal_amplitude"),
            target_eps=doc.get("target_eps", 0.05),
            categorical_weights=(
                tuple(doc["categorical_weights"]) if "categorical_weights" in doc else None
            ),
            recovery=RecoveryConfig(restarts=doc.get("restarts", 20)),
        )
    except DomainError as e:
        raise ConfigError(str(e))


def cmd_sweep(args) -> int:
    doc = _load_config(args.config, SWEEP_SCHEMA, "sweep")
    if args.seed is None:
        raise ConfigError("sweep requires an explicit --seed (reproducibility contract)")
    cfg = sweep_config_from_doc(doc, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    include_timing = not args.no_timing
    if doc.get("comparison"):
        pair = mra_vs_mtd_comparison(cfg, threads=args.threads)
        (out / "table_mra.csv").write_text(rows_to_csv(pair["mra"].rows, include_timing))
        (out / "table_mtd.csv").write_text(rows_to_csv(pair["mtd"].rows, include_timing))
        report = {"cells": []}
        for sigma, N in cfg.cells():
            rmse_a = [r.rmse for r in pair["mra"].rows if r.sigma == sigma and r.N == N]
            rmse_b = [r.rmse for r in pair["mtd"].rows if r.sigma == sigma and r.N == N]
            se = float(
                np.hypot(median_standard_error(rmse_a), median_standard_error(rmse_b))
            )
            report["cells"].append(
                {
                    "sigma": sigma,
                    "N": N,
                    "median_rmse_mra": float(np.median(rmse_a)),
                    "median_rmse_mtd": float(np.median(rmse_b)),
                    "pooled_se": se,
                }
            )
        (out / "summary.json").write_text(json.dumps(report, sort_keys=True, indent=1))
        print(f"wrote paired comparison tables and summary under {out}")
        return 0
    table = run_sweep(cfg, threads=args.threads)
    (out / "table.csv").write_text(rows_to_csv(table.rows, include_timing))
    (out / "summary.json").write_text(summary_json(table))
    n_rows = len(table.rows)
    print(f"wrote {out / 'table.csv'} ({n_rows} rows) and summary.json")
    return 0


# ---------------------------------------------------------------------------
# verify


def cmd_verify(args) -> int:
    if args.inject_fault:
        if args.inject_fault not in autocorr_mod._FAULTS:
            raise ConfigError(f"unknown fault {args.inject_fault!r}")
        autocorr_mod._FAULTS[args.inject_fault] = True
    report = selfcheck.run_all(seed=args.seed if args.seed is not None else 0)
    for item in report["checks"]:
        print(f"{'PASS' if item['passed'] else 'FAIL'}  {item['name']}: {item['detail']}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verify.json").write_text(json.dumps(report, sort_keys=True, indent=1))
    print(f"{report['n_passed']}/{report['n_checks']} checks passed")
    return 0 if report["all_passed"] else 1


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mtdkit",
        description="multi-target detection: synthesis, moments, recovery, sweeps",
    )
    p.add_argument("--threads", type=int, default=1, help="worker pool size for sweeps")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize an observation")
    g.add_argument("--config", required=True)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    m = sub.add_parser("moments", help="empirical autocorrelations of an observation")
    m.add_argument("observation")
    m.add_argument("--dmax", type=int, choices=(1, 2, 3), default=3)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_moments)

    r = sub.add_parser("recover", help="recover the signal orbit from moments")
    r.add_argument("moments")
    r.add_argument("--config", required=True)
    r.add_argument("--method", choices=("lsq", "bispectrum", "identity"), default="lsq")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_recover)

    s = sub.add_parser("sweep", help="Monte-Carlo sweep over a parameter grid")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", required=True)
    s.add_argument(
        "--no-timing",
        action="store_true",
        help="write wall_ms as 0.000 so re-runs are byte-identical",
    )
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="run the built-in invariant suite")
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--out", default=None)
    v.add_argument("--inject-fault", default=None, help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        return _fail(EXIT_CONFIG, str(e))
    except CapacityError as e:
        return _fail(EXIT_CAPACITY, str(e))
    except (FormatError, OSError) as e:
        return _fail(EXIT_FORMAT, str(e))
    except HypothesisViolation as e:
        return _fail(EXIT_HYPOTHESIS, str(e))
    except DomainError as e:
        return _fail(EXIT_CONFIG, str(e))


if __name__ == "__main__":
    sys.exit(main())
