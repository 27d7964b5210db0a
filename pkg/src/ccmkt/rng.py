"""Counter-based random streams.

Every variate is a pure function of ``(key, index, slot)`` where ``index``
is the sample position, so streams are prefix-stable: drawing 10 or 10**5
samples under one key yields the same first 10 values.  The mixer is the
SplitMix64 finalizer; nothing here touches numpy's global or default
generators, which keeps streams identical across platforms and numpy
versions.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_FOLD_INIT = 0x243F6A8885A308D3
_TWO_PI = 2.0 * np.pi
_MAX_REJECTION_ROUNDS = 256


def mix64(x: int) -> int:
    """SplitMix64 finalizer on a Python int."""
    z = x & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        return z ^ (z >> np.uint64(31))


def tag_code(tag: str) -> int:
    return int.from_bytes(hashlib.blake2b(tag.encode(), digest_size=8).digest(), "little")


def derive_seed(*parts: int | str) -> int:
    """Fold integers (or string tags) into one 64-bit key."""
    h = mix64(_FOLD_INIT + len(parts))
    for part in parts:
        value = tag_code(part) if isinstance(part, str) else int(part) & MASK64
        h = mix64((h ^ mix64(value + GOLDEN)) + GOLDEN)
    return h


def uniforms(key: int, index, slot: int = 0) -> np.ndarray:
    """Uniform variates on the open interval (0, 1)."""
    stream = np.uint64(derive_seed(key, slot))
    idx = np.asarray(index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix64_array(stream + (idx + np.uint64(1)) * np.uint64(GOLDEN))
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


def standard_normals(key: int, index, slot: int = 0) -> np.ndarray:
    """Box-Muller on two uniform slots (cosine branch only)."""
    u1 = uniforms(key, index, 2 * slot)
    u2 = uniforms(key, index, 2 * slot + 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


def standard_gammas(key: int, index, shape: float) -> np.ndarray:
    """Gamma(shape, 1) variates by the Marsaglia-Tsang squeeze method.

    Rejection round ``t`` of sample ``j`` only consumes slots derived from
    ``(key, j, t)``, so the output of each sample does not depend on how
    many others are drawn alongside it.
    """
    if shape <= 0:
        raise ValueError("gamma shape must be positive")
    idx = np.asarray(index, dtype=np.uint64)
    boost = shape < 1.0
    a = shape + 1.0 if boost else shape
    d = a - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(idx.shape, dtype=float)
    pending = np.arange(idx.size)
    flat_idx = idx.ravel()
    flat_out = out.ravel()
    for t in range(_MAX_REJECTION_ROUNDS):
        if pending.size == 0:
            break
        j = flat_idx[pending]
        x = standard_normals(key, j, slot=3 * t)
        u = uniforms(key, j, slot=3 * t + 2 + (1 << 20))
        v = (1.0 + c * x) ** 3
        ok = v > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            logv = np.where(ok, np.log(np.where(ok, v, 1.0)), 0.0)
        accept = ok & (
            (u < 1.0 - 0.0331 * x**4) | (np.log(u) < 0.5 * x * x + d * (1.0 - v + logv))
        )
        flat_out[pending[accept]] = d * v[accept]
        pending = pending[~accept]
    else:
        if pending.size:
            raise RuntimeError("gamma rejection sampler did not terminate")
    if boost:
        flat_out *= uniforms(key, flat_idx, slot=(1 << 21)) ** (1.0 / shape)
    return flat_out.reshape(idx.shape)


def betas(key: int, index, alpha: float, beta: float) -> np.ndarray:
    """Beta(alpha, beta) as X / (X + Y) with independent gamma streams."""
    x = standard_gammas(derive_seed(key, "beta-x"), index, alpha)
    y = standard_gammas(derive_seed(key, "beta-y"), index, beta)
    return x / (x + y)
