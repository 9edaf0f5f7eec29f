"""Synthetic observation generation.

An observation of length L*M carries N occurrences of a hidden signal,
each transformed by a random group element, placed at separated start
indices, plus i.i.d. Gaussian noise everywhere:

    y = sum_i s_i * (g_i . x) + noise,   g_i ~ rho i.i.d.

Separation regimes: "non-overlapping" keeps start indices at least L
apart (supports disjoint); "well-separated" keeps them at least 2L apart,
leaving L signal-free entries after every occurrence.  A set of short
aligned samples z_i = g_i . x + noise_i ("reference samples") is the
known-locations analogue and can be embedded into a valid observation by
planting the samples at separated starts and filling the complement with
fresh noise of the same variance.
"""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng as rngmod
from .errors import CapacityError, DomainError, FormatError
from .model import (
    CyclicShift,
    GroupDistribution,
    Identity,
    Signal,
    apply_group,
    as_signal,
    distribution_key,
    sample_shifts,
    shift_weights,
)

OBS_MAGIC = b"MTD1"


class SeparationMode(str, enum.Enum):
    NON_OVERLAPPING = "non-overlapping"
    WELL_SEPARATED = "well-separated"

    def default_gap(self, L: int) -> int:
        return L if self is SeparationMode.NON_OVERLAPPING else 2 * L


def _required_gap(mode: SeparationMode, L: int, relaxed: bool) -> int:
    # the well-separated analysis remains valid down to a gap of 2L - 1;
    # the default keeps the plainer 2L
    if mode is SeparationMode.WELL_SEPARATED and relaxed:
        return 2 * L - 1
    return mode.default_gap(L)


@dataclass(frozen=True, eq=False)
class PlacementPlan:
    """Start indices for N occurrences in a length-L*M observation."""

    starts: np.ndarray
    L: int
    M: int
    mode: SeparationMode
    min_gap: int

    def __post_init__(self):
        starts = np.asarray(self.starts, dtype=np.int64)
        object.__setattr__(self, "starts", starts)
        if self.L < 1 or self.M < 1:
            raise DomainError("L and M must be positive")
        if starts.ndim != 1 or starts.size < 1:
            raise DomainError("plan must contain at least one start index")
        n, lm = starts.size, self.L * self.M
        if self.min_gap < self.mode.default_gap(self.L) - (
            1 if self.mode is SeparationMode.WELL_SEPARATED else 0
        ):
            raise DomainError(f"min_gap {self.min_gap} too small for mode {self.mode.value}")
        if np.any(np.diff(starts) < self.min_gap):
            raise DomainError(f"start indices closer than min_gap={self.min_gap}")
        if starts[0] < 0 or starts[-1] + self.L > lm:
            raise DomainError("occurrence does not fit inside the observation")
        if n >= self.M:
            raise DomainError(f"density N/M = {n}/{self.M} must stay below 1")
        starts.setflags(write=False)

    @property
    def N(self) -> int:
        return int(self.starts.size)

    @property
    def gamma(self) -> float:
        return self.N / self.M


def validate_separation(starts: np.ndarray, min_gap: int) -> bool:
    """Scan of all pairs (sorted starts make consecutive gaps sufficient)."""
    s = np.sort(np.asarray(starts, dtype=np.int64))
    return bool(s.size < 2 or np.min(np.diff(s)) >= min_gap)


def make_placement(
    L: int,
    M: int,
    N: int,
    mode: SeparationMode = SeparationMode.WELL_SEPARATED,
    strategy: str = "uniform-random-valid",
    seed: int = 0,
    relaxed_wellsep: bool = False,
) -> PlacementPlan:
    """Build a valid plan.

    "equispaced" places starts at i * floor(L*M / N), deterministically.
    "uniform-random-valid" draws exactly uniformly over all valid plans:
    with u_i = starts_i - i * gap, valid plans biject onto non-decreasing
    tuples 0 <= u_0 <= ... <= u_{N-1} <= slack, which themselves biject
    onto N-subsets of {0..slack+N-1} via v_i = u_i + i.  Sampling a uniform
    subset (Floyd's algorithm) therefore terminates in O(N) draws at any
    density, where naive rejection on the full vector would stall.
    """
    mode = SeparationMode(mode)
    gap = _required_gap(mode, L, relaxed_wellsep)
    lm = L * M
    if N < 1:
        raise DomainError("N must be >= 1")
    if (N - 1) * gap + L > lm or N >= M:
        raise CapacityError(
            f"cannot place N={N} occurrences of length L={L} with gap {gap} in length {lm}"
        )
    if strategy == "equispaced":
        spacing = lm // N
        if spacing < gap:
            raise CapacityError(f"equispaced spacing {spacing} below required gap {gap}")
        starts = np.arange(N, dtype=np.int64) * spacing
    elif strategy == "uniform-random-valid":
        slack = lm - L - (N - 1) * gap
        gen = rngmod.stream(seed, "plan", L, M, N, mode.value, gap)
        # Floyd's subset sampling: uniform N distinct values in [0, slack+N)
        chosen: set[int] = set()
        for j in range(slack, slack + N):
            t = int(gen.integers(0, j + 1))
            chosen.add(t if t not in chosen else j)
        v = np.sort(np.fromiter(chosen, dtype=np.int64, count=N))
        u = v - np.arange(N, dtype=np.int64)
        starts = u + np.arange(N, dtype=np.int64) * gap
    else:
        raise DomainError(f"unknown placement strategy {strategy!r}")
    return PlacementPlan(starts=starts, L=L, M=M, mode=mode, min_gap=gap)


# ---------------------------------------------------------------------------
# observations


@dataclass(frozen=True, eq=False)
class TruthRecord:
    """Ground truth stored beside an observation; recovery never reads it."""

    signal: Signal
    elements: tuple


@dataclass(frozen=True, eq=False)
class MtdObservation:
    samples: np.ndarray
    plan: PlacementPlan
    sigma: float
    seed: int
    truth: Optional[TruthRecord] = None

    def __post_init__(self):
        a = np.asarray(self.samples, dtype=np.float64)
        if a.size != self.plan.L * self.plan.M:
            raise DomainError("sample count must equal L*M")
        a.setflags(write=False)
        object.__setattr__(self, "samples", a)

    @property
    def L(self) -> int:
        return self.plan.L

    @property
    def M(self) -> int:
        return self.plan.M


@dataclass(frozen=True, eq=False)
class MraSampleSet:
    """N aligned noisy copies z_i = g_i . x + noise_i, each of length L."""

    samples: np.ndarray
    sigma: float
    seed: int
    truth: Optional[TruthRecord] = None

    def __post_init__(self):
        a = np.asarray(self.samples, dtype=np.float64)
        if a.ndim != 2:
            raise DomainError("sample set must be an (N, L) array")
        a.setflags(write=False)
        object.__setattr__(self, "samples", a)

    @property
    def N(self) -> int:
        return int(self.samples.shape[0])

    @property
    def L(self) -> int:
        return int(self.samples.shape[1])


def generate_mtd(
    x,
    rho: GroupDistribution,
    plan: PlacementPlan,
    sigma: float,
    seed: int,
) -> MtdObservation:
    """Observation with the given plan: noise field plus transformed copies.

    Bitwise reproducible from (inputs, seed); group draws and the noise
    field come from independent keyed streams.
    """
    x = as_signal(x)
    if x.L != plan.L:
        raise DomainError("signal length must match the plan's L")
    if sigma < 0:
        raise DomainError("sigma must be >= 0")
    lm = plan.L * plan.M
    shifts = sample_shifts(rho, rngmod.stream(seed, "groups", distribution_key(rho)), plan.N)
    samples = rngmod.gaussian_field((seed, "noise"), lm, sigma)
    # windows are disjoint (separation >= L), so flat fancy indexing is safe
    rolled = np.stack([np.roll(x.values, s) for s in range(plan.L)])
    idx = plan.starts[:, None] + np.arange(plan.L)[None, :]
    samples[idx] += rolled[shifts]
    elements = tuple(CyclicShift(int(s)) if s else Identity() for s in shifts)
    return MtdObservation(
        samples=samples,
        plan=plan,
        sigma=float(sigma),
        seed=int(seed),
        truth=TruthRecord(signal=x, elements=tuple(elements)),
    )


def generate_mra(
    x,
    rho: GroupDistribution,
    N: int,
    sigma: float,
    seed: int,
) -> MraSampleSet:
    """N independent aligned samples z_i = g_i . x + noise_i."""
    x = as_signal(x)
    if N < 1:
        raise DomainError("N must be >= 1")
    if sigma < 0:
        raise DomainError("sigma must be >= 0")
    shifts = sample_shifts(rho, rngmod.stream(seed, "groups", distribution_key(rho)), N)
    noise = rngmod.gaussian_field((seed, "noise"), N * x.L, sigma).reshape(N, x.L)
    idx = (np.arange(x.L)[None, :] - shifts[:, None]) % x.L
    samples = x.values[idx] + noise
    elements = tuple(CyclicShift(int(s)) if s else Identity() for s in shifts)
    return MraSampleSet(
        samples=samples,
        sigma=float(sigma),
        seed=int(seed),
        truth=TruthRecord(signal=x, elements=elements),
    )


def embed_mra_as_mtd(
    sample_set: MraSampleSet,
    M: int,
    mode: SeparationMode = SeparationMode.NON_OVERLAPPING,
    seed: int = 0,
    strategy: str = "uniform-random-valid",
) -> MtdObservation:
    """Plant aligned samples into a long observation.

    Three steps: start from zeros, copy the N samples to a valid separated
    plan, then fill every remaining index with fresh N(0, sigma^2) noise.
    The result is distributed exactly like a generated observation with
    the same signal, group law and noise level.
    """
    N, L = sample_set.N, sample_set.L
    plan = make_placement(L, M, N, mode=mode, strategy=strategy, seed=seed)
    lm = L * M
    samples = rngmod.gaussian_field((seed, "embed-fill"), lm, sample_set.sigma)
    idx = plan.starts[:, None] + np.arange(L)[None, :]
    samples[idx] = sample_set.samples
    return MtdObservation(
        samples=samples,
        plan=plan,
        sigma=sample_set.sigma,
        seed=int(seed),
        truth=sample_set.truth,
    )


# ---------------------------------------------------------------------------
# serialization: binary container + JSON sidecar

_HEADER = struct.Struct("<4sIIIBdQ")  # magic, L, M, N, mode, sigma, seed


def observation_to_bytes(obs: MtdObservation) -> bytes:
    mode_byte = 0 if obs.plan.mode is SeparationMode.NON_OVERLAPPING else 1
    header = _HEADER.pack(
        OBS_MAGIC, obs.plan.L, obs.plan.M, obs.plan.N, mode_byte, obs.sigma, obs.seed
    )
    return header + obs.samples.astype("<f8").tobytes()


def _element_to_json(g) -> dict:
    if isinstance(g, Identity):
        return {"kind": "identity"}
    if isinstance(g, CyclicShift):
        return {"kind": "cyclic-shift", "shift": int(g.shift)}
    return {"kind": "planar-rotation", "theta": float(g.theta)}


def _element_from_json(d):
    if d["kind"] == "identity":
        return Identity()
    if d["kind"] == "cyclic-shift":
        return CyclicShift(int(d["shift"]))
    raise FormatError(f"unknown group element kind {d.get('kind')!r}")


def observation_sidecar(obs: MtdObservation) -> str:
    doc = {
        "L": obs.plan.L,
        "M": obs.plan.M,
        "N": obs.plan.N,
        "mode": obs.plan.mode.value,
        "min_gap": obs.plan.min_gap,
        "sigma": obs.sigma,
        "seed": obs.seed,
        "starts": [int(s) for s in obs.plan.starts],
    }
    if obs.truth is not None:
        doc["truth"] = {
            "signal": [float(v) for v in obs.truth.signal.values],
            "elements": [_element_to_json(g) for g in obs.truth.elements],
        }
    return json.dumps(doc, sort_keys=True, indent=1)


def observation_from_bytes(blob: bytes, sidecar: Optional[str] = None) -> MtdObservation:
    if len(blob) < _HEADER.size:
        raise FormatError("observation file truncated (header incomplete)")
    magic, L, M, N, mode_byte, sigma, seed = _HEADER.unpack(blob[: _HEADER.size])
    if magic != OBS_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {OBS_MAGIC!r}")
    if mode_byte not in (0, 1):
        raise FormatError(f"bad separation mode byte {mode_byte}")
    lm = L * M
    body = blob[_HEADER.size :]
    if len(body) != 8 * lm:
        raise FormatError(f"expected {8 * lm} sample bytes, found {len(body)}")
    samples = np.frombuffer(body, dtype="<f8").astype(np.float64)
    mode = SeparationMode.NON_OVERLAPPING if mode_byte == 0 else SeparationMode.WELL_SEPARATED
    if sidecar is None:
        raise FormatError("observation requires its JSON sidecar for the plan")
    doc = json.loads(sidecar)
    starts = np.asarray(doc["starts"], dtype=np.int64)
    if len(starts) != N:
        raise FormatError("sidecar start count disagrees with header N")
    plan = PlacementPlan(starts=starts, L=L, M=M, mode=mode, min_gap=int(doc["min_gap"]))
    truth = None
    if "truth" in doc:
        truth = TruthRecord(
            signal=Signal(np.asarray(doc["truth"]["signal"], dtype=np.float64)),
            elements=tuple(_element_from_json(e) for e in doc["truth"]["elements"]),
        )
    return MtdObservation(samples=samples, plan=plan, sigma=float(sigma), seed=int(seed), truth=truth)


def save_observation(obs: MtdObservation, path, sidecar_path=None):
    path = str(path)
    sidecar_path = str(sidecar_path) if sidecar_path else path + ".json"
    with open(path, "wb") as fh:
        fh.write(observation_to_bytes(obs))
    with open(sidecar_path, "w") as fh:
        fh.write(observation_sidecar(obs))


def load_observation(path, sidecar_path=None) -> MtdObservation:
    path = str(path)
    sidecar_path = str(sidecar_path) if sidecar_path else path + ".json"
    with open(path, "rb") as fh:
        blob = fh.read()
    try:
        with open(sidecar_path) as fh:
            sidecar = fh.read()
    except FileNotFoundError:
        sidecar = None
    return observation_from_bytes(blob, sidecar)


# ---------------------------------------------------------------------------
# signal families used by trials and tests


def draw_signal(
    seed_parts: tuple,
    L: int,
    require: str = "dft",
    margin: float = 0.05,
    normalize: Optional[str] = None,
    max_tries: int = 1000,
) -> Signal:
    """Standard-normal signal, rejection-sampled until a recovery
    hypothesis holds.

    require="dft": every DFT coefficient modulus exceeds margin * ||x||;
    require="edges": |x[0]| and |x[L-1]| exceed margin * ||x||_inf;
    require=None: no constraint.  normalize scales to unit "linf" or "l2"
    norm after acceptance.
    """
    gen = rngmod.stream(seed_parts, "signal")
    for _ in range(max_tries):
        v = gen.normal(size=L)
        nrm = np.linalg.norm(v)
        if nrm == 0:
            continue
        if require == "dft":
            if np.min(np.abs(np.fft.fft(v))) <= margin * nrm:
                continue
        elif require == "edges":
            amp = np.max(np.abs(v))
            if abs(v[0]) <= margin * amp or abs(v[-1]) <= margin * amp:
                continue
        elif require is not None:
            raise DomainError(f"unknown signal requirement {require!r}")
        if normalize == "linf":
            v = v / np.max(np.abs(v))
        elif normalize == "l2":
            v = v / nrm
        elif normalize is not None:
            raise DomainError(f"unknown normalization {normalize!r}")
        return Signal(v)
    raise DomainError(f"no admissible signal after {max_tries} draws")


def window_law(x, rho: GroupDistribution, sigma: float):
    """Mean and covariance of the 2L-window starting at an occurrence in a
    well-separated observation: the law of [g . x, zeros] + noise.

    Used as the analytic reference for window-statistics checks.
    """
    x = as_signal(x)
    L = x.L
    w = shift_weights(rho, L)
    shifted = np.stack([np.roll(x.values, s) for s in range(L)])  # (s, n)
    mean_sig = w @ shifted
    second = np.einsum("s,sm,sn->mn", w, shifted, shifted)
    cov_sig = second - np.outer(mean_sig, mean_sig)
    mean = np.concatenate([mean_sig, np.zeros(L)])
    cov = np.zeros((2 * L, 2 * L))
    cov[:L, :L] = cov_sig
    cov += sigma**2 * np.eye(2 * L)
    return mean, cov
