"""Numeric primitives: matrix products, masked softmax, norms, seeded RNG,
and a central finite-difference gradient oracle.

Sequence matrices are plain 2-D numpy arrays (rows = tokens or pyramid
entries, cols = features). float64 is the default; float32 is supported
for tolerance-scaling experiments and every routine preserves the input
dtype.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ContractError, ShapeError

DTYPES = {64: np.float64, 32: np.float32}

# PCG64 reference stream: first four raw 64-bit outputs for seed 0.
# Pinned in tests so seeded data and inits stay reproducible.
PCG64_SEED0_REFERENCE = (
    0xA30FEBCFD9C2825F,
    0x4510BDF882D9D721,
    0x0A7D3DA94ECDE8B8,
    0x043B27B61342F01D,
)


def as_dtype(precision: int):
    try:
        return DTYPES[precision]
    except KeyError:
        raise ValueError(f"precision must be 64 or 32, got {precision}") from None


def make_rng(seed) -> np.random.Generator:
    """PCG64-backed generator; equal seeds give bitwise-equal streams."""
    return np.random.Generator(np.random.PCG64(seed))


def matmul(a: np.ndarray, b: np.ndarray, transpose_b: bool = False, exact: bool = False) -> np.ndarray:
    """Matrix product ``a @ b`` (or ``a @ b.T``).

    Leading batch dimensions broadcast as in :func:`numpy.matmul`.

    With ``exact=True`` the inner dimension is accumulated strictly left to
    right with separate multiply and add (no fused operations), which is
    bitwise equal to a textbook triple loop. The default path goes through
    BLAS: same-shaped calls are reproducible run to run, but may differ
    from the strict order in the last bits.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if transpose_b:
        b = np.swapaxes(b, -1, -2)
    if a.shape[-1] != b.shape[-2]:
        shown = f"{b.shape[:-2] + b.shape[-2:][::-1]} (transposed)" if transpose_b else f"{b.shape}"
        raise ShapeError(f"inner dimensions disagree: {a.shape} x {shown}")
    if not exact:
        return np.matmul(a, b)
    inner = a.shape[-1]
    out_shape = np.broadcast_shapes(a.shape[:-2], b.shape[:-2]) + (a.shape[-2], b.shape[-1])
    out = np.zeros(out_shape, dtype=np.result_type(a, b))
    for j in range(inner):
        out += a[..., :, j : j + 1] * b[..., j : j + 1, :]
    return out


def softmax_rows(logits: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Row-wise softmax restricted to allowed cells.

    ``mask`` is a boolean array (True = allowed) broadcastable to
    ``logits``. Denied cells come out exactly zero and never influence the
    allowed ones, so their logits may hold anything finite.
    """
    logits = np.asarray(logits)
    if mask is None:
        x = logits - logits.max(axis=-1, keepdims=True)
    else:
        mask = np.broadcast_to(mask, logits.shape)
        live = mask.any(axis=-1)
        if not live.all():
            rows = np.flatnonzero(~live.reshape(-1))
            raise ContractError(f"softmax row(s) {rows[:8].tolist()} have every cell masked")
        x = np.where(mask, logits, -np.inf)
        x -= x.max(axis=-1, keepdims=True)
    np.exp(x, out=x)
    x /= x.sum(axis=-1, keepdims=True)
    return x


def row_norms(x: np.ndarray) -> np.ndarray:
    """Euclidean norm of every row."""
    x = np.asarray(x)
    return np.sqrt((x * x).sum(axis=-1))


def check_finite(x: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values in {what}")
    return x


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.array(x, dtype=np.float64, copy=True)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x))
        flat[i] = orig - eps
        fm = float(f(x))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"f is not finite near coordinate {i}")
        g[i] = (fp - fm) / (2.0 * eps)
    return grad
