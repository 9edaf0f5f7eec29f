"""Deterministic randomness plumbing.

Every random quantity in the package is derived from integer seeds through
keyed hashing, never from global state.  Two properties matter:

* stream separation: each purpose ("noise", "plan", "groups", ...) gets an
  independent Philox stream keyed by blake2b(seed, purpose, ...), so adding
  a new consumer never perturbs existing draws;
* counter-keyed noise: Gaussian fields are produced in fixed-size chunks
  whose keys depend only on (seed parts, chunk index).  Entry i of a field
  is a pure function of (seed parts, i), so parallel or partial generation
  cannot change the values.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

# fixed chunk length for counter-keyed Gaussian fields; changing this
# changes every generated observation, so it is part of the format
GAUSS_CHUNK = 1 << 16


def _encode_part(part) -> bytes:
    if isinstance(part, bytes):
        tag, body = b"b", part
    elif isinstance(part, str):
        tag, body = b"s", part.encode("utf-8")
    elif isinstance(part, (bool, np.bool_)):
        tag, body = b"i", int(part).to_bytes(16, "little", signed=True)
    elif isinstance(part, (int, np.integer)):
        tag, body = b"i", int(part).to_bytes(16, "little", signed=True)
    elif isinstance(part, (float, np.floating)):
        tag, body = b"f", struct.pack("<d", float(part))
    elif isinstance(part, (tuple, list)):
        tag = b"t"
        body = b"".join(_encode_part(p) for p in part)
    else:
        raise TypeError(f"cannot key rng stream on {type(part)!r}")
    return tag + len(body).to_bytes(8, "little") + body


def derive_key(*parts) -> np.ndarray:
    """128-bit Philox key derived from arbitrary hashable parts."""
    h = hashlib.blake2b(digest_size=16)
    for part in parts:
        h.update(_encode_part(part))
    lo, hi = struct.unpack("<QQ", h.digest())
    return np.array([lo, hi], dtype=np.uint64)


def derive_seed(*parts) -> int:
    """64-bit integer seed derived from parts (for recording in outputs)."""
    return int(derive_key(*parts)[0])


def stream(*parts) -> np.random.Generator:
    """Independent Generator keyed by the given parts."""
    return np.random.Generator(np.random.Philox(key=derive_key(*parts)))


def gaussian_field(parts: tuple, n: int, sigma: float) -> np.ndarray:
    """n i.i.d. N(0, sigma^2) values; entry i depends only on (parts, i).

    Values come in GAUSS_CHUNK-sized blocks, each from its own keyed
    stream, so the field can be regenerated piecewise in any order.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    out = np.empty(n, dtype=np.float64)
    if sigma == 0.0:
        out.fill(0.0)
        return out
    for c in range(0, n, GAUSS_CHUNK):
        chunk = min(GAUSS_CHUNK, n - c)
        rng = stream(parts, "gauss-chunk", c // GAUSS_CHUNK)
        out[c : c + chunk] = rng.normal(0.0, sigma, size=chunk)
    return out
