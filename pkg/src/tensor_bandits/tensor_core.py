"""Dense order-N tensors and the multilinear primitives built on them.

Tensors are plain ``numpy.ndarray`` objects in C (row-major) order, so the
last index varies fastest.  Modes are numbered from 0.

The mode-n unfolding puts mode ``n`` on the rows and iterates the remaining
modes in ascending order with the lowest one slowest (for ``n = 0`` that is
mode 1 slowest).  Under this convention::

    matricize(g x_0 V_0 ... x_{N-1} V_{N-1}, n)
        == V_n @ matricize(g, n) @ kron(V_0, ..., V_{n-1}, V_{n+1}, ..., V_{N-1}).T

with the Kronecker factors in *ascending* mode order.
"""

from __future__ import annotations

import io
import os
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "as_tensor",
    "inner",
    "frob_norm",
    "mode_n_product",
    "multi_mode_product",
    "matricize",
    "fold",
    "vectorize",
    "unvectorize",
    "kron_all",
    "write_tnsr",
    "read_tnsr",
]


def as_tensor(y, copy: bool = False) -> np.ndarray:
    """Validate ``y`` as a finite float64 tensor and return it as an ndarray.

    Raises
    ------
    ValueError
        If ``y`` has a zero-length mode or contains NaN/Inf.
    """
    if copy:
        arr = np.array(y, dtype=np.float64, order="C")
    else:
        arr = np.asarray(y, dtype=np.float64)
    if arr.ndim == 0:
        raise ValueError("a tensor needs at least one mode")
    if any(s < 1 for s in arr.shape):
        raise ValueError(f"all mode lengths must be positive, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains non-finite elements")
    return np.ascontiguousarray(arr)


def _check_mode(n: int, ndim: int) -> int:
    if not isinstance(n, (int, np.integer)) or not 0 <= n < ndim:
        raise ValueError(f"mode {n!r} out of range for an order-{ndim} tensor")
    return int(n)


def inner(a, b) -> float:
    """Sum of elementwise products of two same-shape tensors."""
    a = as_tensor(a)
    b = as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(a.ravel(), b.ravel()))


def frob_norm(y) -> float:
    """Frobenius norm, ``sqrt(inner(y, y))``."""
    y = as_tensor(y)
    return float(np.sqrt(np.dot(y.ravel(), y.ravel())))


def mode_n_product(y, b, n: int) -> np.ndarray:
    """Mode-n product ``y x_n b``.

    Parameters
    ----------
    y : ndarray of shape (d_0, ..., d_{N-1})
    b : ndarray of shape (d', d_n)
    n : int
        Mode index, ``0 <= n < N``.

    Returns
    -------
    ndarray
        Shape of ``y`` with mode ``n`` replaced by ``d'``; element
        ``[.., j, ..] = sum_i b[j, i] * y[.., i, ..]``.
    """
    y = as_tensor(y)
    b = np.asarray(b, dtype=np.float64)
    n = _check_mode(n, y.ndim)
    if b.ndim != 2 or b.shape[1] != y.shape[n]:
        raise ValueError(
            f"matrix of shape {b.shape} incompatible with mode {n} of length {y.shape[n]}"
        )
    out = np.tensordot(b, y, axes=(1, n))
    return np.ascontiguousarray(np.moveaxis(out, 0, n))


def multi_mode_product(y, mats: Sequence, modes: Iterable[int] | None = None,
                       transpose: bool = False) -> np.ndarray:
    """Apply ``y x_{m} mats[k]`` for each listed mode (all modes by default).

    With ``transpose=True`` each matrix is transposed first, which is the
    usual way of projecting onto factor subspaces (``y x_n U_n^T``).
    """
    if modes is None:
        modes = range(len(mats))
    out = as_tensor(y)
    for m, mat in zip(modes, mats):
        mat = np.asarray(mat, dtype=np.float64)
        out = mode_n_product(out, mat.T if transpose else mat, m)
    return out


def matricize(y, n: int) -> np.ndarray:
    """Mode-n unfolding: a ``(d_n, prod of other d)`` matrix of mode-n fibers."""
    y = as_tensor(y)
    n = _check_mode(n, y.ndim)
    return np.moveaxis(y, n, 0).reshape(y.shape[n], -1)


def fold(m, n: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`matricize` for a tensor of the given ``shape``."""
    shape = tuple(int(s) for s in shape)
    n = _check_mode(n, len(shape))
    m = np.asarray(m, dtype=np.float64)
    moved = (shape[n],) + shape[:n] + shape[n + 1:]
    if m.size != int(np.prod(shape)) or m.shape[0] != shape[n]:
        raise ValueError(f"matrix of shape {m.shape} cannot fold into {shape} along mode {n}")
    return np.ascontiguousarray(np.moveaxis(m.reshape(moved), 0, n))


def _check_perm(perm, size: int) -> np.ndarray:
    perm = np.asarray(perm)
    if perm.shape != (size,) or not np.issubdtype(perm.dtype, np.integer):
        raise ValueError(f"permutation must be an integer array of length {size}")
    seen = np.zeros(size, dtype=bool)
    if perm.min(initial=0) < 0 or perm.max(initial=0) >= size:
        raise ValueError("permutation entries out of range")
    seen[perm] = True
    if not seen.all():
        raise ValueError("permutation is not a bijection")
    return perm


def vectorize(y, perm=None) -> np.ndarray:
    """Row-major flattening, optionally reordered so that ``out[k] = flat[perm[k]]``."""
    flat = as_tensor(y).ravel()
    if perm is None:
        return flat.copy()
    return flat[_check_perm(perm, flat.size)]


def unvectorize(v, shape: Sequence[int], perm=None) -> np.ndarray:
    """Inverse of :func:`vectorize`."""
    v = np.asarray(v, dtype=np.float64).ravel()
    size = int(np.prod(shape))
    if v.size != size:
        raise ValueError(f"vector of length {v.size} does not fit shape {tuple(shape)}")
    if perm is None:
        return v.reshape(shape).copy()
    flat = np.empty_like(v)
    flat[_check_perm(perm, size)] = v
    return flat.reshape(shape)


def kron_all(mats: Sequence) -> np.ndarray:
    """Kronecker product ``mats[0] (x) mats[1] (x) ...``."""
    out = np.ones((1, 1))
    for m in mats:
        out = np.kron(out, np.asarray(m, dtype=np.float64))
    return out


# -- TNSR v1 text format ---------------------------------------------------

def write_tnsr(dest, y) -> None:
    """Write ``y`` as TNSR v1 text to a path or a text file object.

    The header line is ``TNSR 1 N d_1 ... d_N``, followed by one element per
    line in row-major order using shortest round-trip float formatting.
    """
    y = as_tensor(y)
    lines = ["TNSR 1 %d %s" % (y.ndim, " ".join(str(s) for s in y.shape))]
    lines.extend(repr(float(v)) for v in y.ravel())
    text = "\n".join(lines) + "\n"
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", encoding="ascii") as fh:
            fh.write(text)
    else:
        dest.write(text)


def read_tnsr(src) -> np.ndarray:
    """Read a TNSR v1 tensor from a path or a text file object."""
    if isinstance(src, (str, os.PathLike)):
        with open(src, "r", encoding="ascii") as fh:
            text = fh.read()
    elif isinstance(src, io.TextIOBase) or hasattr(src, "read"):
        text = src.read()
    else:
        raise TypeError("src must be a path or a readable text stream")
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty TNSR input")
    head = lines[0].split()
    if len(head) < 3 or head[0] != "TNSR" or head[1] != "1":
        raise ValueError(f"line 1: expected 'TNSR 1 N d_1 ... d_N', got {lines[0]!r}")
    try:
        order = int(head[2])
        shape = tuple(int(s) for s in head[3:])
    except ValueError as exc:
        raise ValueError(f"line 1: malformed header {lines[0]!r}") from exc
    if order != len(shape) or order < 1:
        raise ValueError(f"line 1: header declares N={order} but lists {len(shape)} mode lengths")
    count = int(np.prod(shape))
    body = lines[1:]
    if len(body) != count:
        raise ValueError(f"expected {count} elements, found {len(body)}")
    try:
        values = np.array([float(v) for v in body], dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"non-numeric element in TNSR body: {exc}") from exc
    return as_tensor(values.reshape(shape))
