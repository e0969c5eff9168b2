"""Dense m-way tensors: marginals, inner products, norms and log-domain reductions.

Tensors are plain C-ordered ``numpy.ndarray`` objects, so the flat layout is
row-major with the last axis varying fastest: entry ``(i_1, ..., i_m)`` sits at
flat offset ``sum_k i_k * prod_{l>k} n_l``. Axis indices in this package are
0-based.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

INLINE_MAX_ENTRIES = 10**5


def check_shape(sizes: Sequence[int]) -> tuple[int, ...]:
    """Validate per-axis sizes and return them as a tuple."""
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 1:
        raise ValueError("a tensor needs at least one axis")
    if any(s < 1 for s in sizes):
        raise ValueError(f"every axis size must be >= 1, got {sizes}")
    count = 1
    for s in sizes:
        count *= s
    if count > sys.maxsize // 8:
        raise ValueError(f"tensor with {count} entries is not addressable")
    return sizes


def as_tensor(data, sizes: Sequence[int] | None = None) -> np.ndarray:
    """Return ``data`` as a contiguous float64 tensor, reshaping a flat buffer if sizes are given."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if sizes is not None:
        sizes = check_shape(sizes)
        if arr.size != int(np.prod(sizes, dtype=np.int64)):
            raise ValueError(f"data length {arr.size} does not match sizes {sizes}")
        arr = arr.reshape(sizes)
    else:
        check_shape(arr.shape)
    return arr


def _check_axis(T: np.ndarray, k: int) -> int:
    if not 0 <= k < T.ndim:
        raise IndexError(f"axis {k} out of range for a {T.ndim}-way tensor")
    return k


def _other_axes(ndim: int, k: int) -> tuple[int, ...]:
    return tuple(a for a in range(ndim) if a != k)


def marginal(T: np.ndarray, k: int) -> np.ndarray:
    """k-th marginal r_k(T): sum over every axis except ``k``."""
    _check_axis(T, k)
    return T.sum(axis=_other_axes(T.ndim, k))


def marginals(T: np.ndarray) -> list[np.ndarray]:
    return [marginal(T, k) for k in range(T.ndim)]


def inner(A: np.ndarray, B: np.ndarray) -> float:
    """Frobenius inner product."""
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    return float(np.dot(A.ravel(), B.ravel()))


def norm1(A: np.ndarray) -> float:
    return float(np.abs(A).sum())


def norm_inf(A: np.ndarray) -> float:
    return float(np.abs(A).max()) if A.size else 0.0


def logsumexp(a: np.ndarray, axis=None, keepdims: bool = False) -> np.ndarray:
    """Max-shifted log-sum-exp; slices that are entirely -inf give -inf, never NaN."""
    a = np.asarray(a, dtype=np.float64)
    amax = np.max(a, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(amax), amax, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - shift), axis=axis, keepdims=True)) + shift
    if not keepdims:
        out = np.squeeze(out, axis=axis) if axis is not None else out.reshape(())
    return out


def log_plan(beta: Sequence[np.ndarray], scaled_cost: np.ndarray) -> np.ndarray:
    """log B(beta) = sum_k beta_k[i_k] - C/eta, built by broadcasting."""
    m = scaled_cost.ndim
    if len(beta) != m:
        raise ValueError(f"expected {m} potential vectors, got {len(beta)}")
    out = -scaled_cost
    for k, b in enumerate(beta):
        b = np.asarray(b, dtype=np.float64)
        if b.shape != (scaled_cost.shape[k],):
            raise ValueError(f"potential {k} has shape {b.shape}, expected ({scaled_cost.shape[k]},)")
        shape = [1] * m
        shape[k] = -1
        out = out + b.reshape(shape)
    return out


def log_marginal(logT: np.ndarray, k: int) -> np.ndarray:
    """log r_k(exp(logT)) with a per-slice max shift."""
    _check_axis(logT, k)
    moved = np.moveaxis(logT, k, 0).reshape(logT.shape[k], -1)
    return logsumexp(moved, axis=1)


def lse_marginal(beta: Sequence[np.ndarray], scaled_cost: np.ndarray, k: int) -> np.ndarray:
    """Log of the k-th marginal of B(beta), computed without leaving the log domain.

    Parameters
    ----------
    beta : sequence of m vectors
        Dual potentials; ``beta[l]`` has length ``scaled_cost.shape[l]``.
    scaled_cost : ndarray
        The cost tensor already divided by the regularization, C / eta.
    k : int
        Axis whose marginal is returned.

    Returns
    -------
    ndarray of shape (n_k,)
        Entry j is ``log sum_{i: i_k = j} exp(sum_l beta_l[i_l] - C_i / eta)``.
    """
    _check_axis(scaled_cost, k)
    return log_marginal(log_plan(beta, scaled_cost), k)


def materialize(beta: Sequence[np.ndarray], scaled_cost: np.ndarray) -> np.ndarray:
    """Explicit B(beta); only for tensors small enough to hold in memory."""
    return np.exp(log_plan(beta, scaled_cost))


def outer(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Rank-one tensor v_1 (x) v_2 (x) ... (x) v_m."""
    out = np.asarray(vectors[0], dtype=np.float64)
    for v in vectors[1:]:
        out = np.multiply.outer(out, np.asarray(v, dtype=np.float64))
    return out


# -- file formats ---------------------------------------------------------

def save_tensor(path, T: np.ndarray, inline: bool | None = None) -> Path:
    """Write ``T`` as a JSON manifest.

    Small tensors (at most ``INLINE_MAX_ENTRIES``) default to the inline form
    ``{"sizes": [...], "data": [...]}``. Larger ones get a manifest
    ``{"m", "sizes", "dtype": "f64le", "data_file"}`` next to a raw
    little-endian float64 file in row-major order.
    """
    path = Path(path)
    T = as_tensor(T)
    if inline is None:
        inline = T.size <= INLINE_MAX_ENTRIES
    if inline:
        if T.size > INLINE_MAX_ENTRIES:
            raise ValueError("inline tensor files are limited to 1e5 entries")
        doc = {"sizes": list(T.shape), "data": [float(x) for x in T.ravel()]}
    else:
        data_path = path.with_suffix(".f64")
        data_path.write_bytes(T.astype("<f8").tobytes(order="C"))
        doc = {"m": T.ndim, "sizes": list(T.shape), "dtype": "f64le", "data_file": data_path.name}
    path.write_text(json.dumps(doc))
    return path


def load_tensor(path) -> np.ndarray:
    path = Path(path)
    doc = json.loads(path.read_text())
    sizes = doc.get("sizes")
    if sizes is None:
        raise ValueError(f"{path}: missing 'sizes'")
    if "data" in doc:
        return as_tensor(doc["data"], sizes)
    if doc.get("dtype", "f64le") != "f64le":
        raise ValueError(f"{path}: unsupported dtype {doc['dtype']!r}")
    if "m" in doc and doc["m"] != len(sizes):
        raise ValueError(f"{path}: m={doc['m']} disagrees with sizes {sizes}")
    data_file = Path(doc["data_file"])
    if not data_file.is_absolute():
        data_file = path.parent / data_file
    raw = np.frombuffer(data_file.read_bytes(), dtype="<f8")
    return as_tensor(raw.astype(np.float64), sizes)
