"""Dense tensor primitives: mode flattening, mode products and Tucker algebra.

Tensors are plain ``numpy.ndarray`` objects of float64. The canonical memory
layout is C order (row major): the first index varies slowest. Mode-``m``
flattening moves mode ``m`` to the front and reshapes in C order, so the
column ordering of the flattening is induced by the canonical layout and is
consistent across flatten/unflatten/product. Modes are 0-based.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_tensor",
    "mode_flatten",
    "mode_unflatten",
    "mode_product",
    "multi_product",
    "multi_product_skip",
    "tucker_reconstruct",
    "core_of",
    "stack_last",
    "frobenius_norm",
    "is_orthonormal",
    "require_orthonormal",
]

ORTHO_TOL = 1e-8


def as_tensor(values) -> np.ndarray:
    """Return ``values`` as a C-contiguous float64 array, rejecting NaN/Inf."""
    t = np.ascontiguousarray(values, dtype=np.float64)
    if not np.all(np.isfinite(t)):
        raise ValueError("tensor contains non-finite values")
    return t


def _check_mode(t: np.ndarray, mode: int) -> None:
    if not 0 <= mode < t.ndim:
        raise ValueError(f"mode {mode} out of range for order-{t.ndim} tensor")


def mode_flatten(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` flattening: an ``I_m x prod(other dims)`` matrix whose
    rows are the mode-``mode`` fibers of ``t``."""
    _check_mode(t, mode)
    return np.moveaxis(t, mode, 0).reshape(t.shape[mode], -1)


def mode_unflatten(mat: np.ndarray, mode: int, dims) -> np.ndarray:
    """Inverse of :func:`mode_flatten` for a tensor with extents ``dims``."""
    dims = tuple(int(d) for d in dims)
    if not 0 <= mode < len(dims):
        raise ValueError(f"mode {mode} out of range for order-{len(dims)} tensor")
    mat = np.asarray(mat, dtype=np.float64)
    rest = [d for k, d in enumerate(dims) if k != mode]
    expected = (dims[mode], int(np.prod(rest, dtype=np.int64)))
    if mat.shape != expected:
        raise ValueError(f"matrix shape {mat.shape} does not match expected {expected}")
    return np.ascontiguousarray(np.moveaxis(mat.reshape([dims[mode]] + rest), 0, mode))


def mode_product(t: np.ndarray, u: np.ndarray, mode: int) -> np.ndarray:
    """Multiply ``t`` along ``mode`` by the matrix ``u`` (acting on the left)."""
    _check_mode(t, mode)
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2 or u.shape[1] != t.shape[mode]:
        raise ValueError(
            f"matrix of shape {u.shape} cannot act on mode {mode} with extent {t.shape[mode]}"
        )
    new_dims = list(t.shape)
    new_dims[mode] = u.shape[0]
    return mode_unflatten(u @ mode_flatten(t, mode), mode, new_dims)


def multi_product(t: np.ndarray, factors) -> np.ndarray:
    """Apply one matrix per mode, folding :func:`mode_product` over modes."""
    if len(factors) != t.ndim:
        raise ValueError(f"expected {t.ndim} factors, got {len(factors)}")
    for m, u in enumerate(factors):
        t = mode_product(t, u, m)
    return t


def multi_product_skip(t: np.ndarray, factors, skip: int) -> np.ndarray:
    """Like :func:`multi_product` but leave mode ``skip`` untouched.

    ``factors[skip]`` is ignored and may be ``None``.
    """
    _check_mode(t, skip)
    if len(factors) != t.ndim:
        raise ValueError(f"expected {t.ndim} factors, got {len(factors)}")
    for m, u in enumerate(factors):
        if m == skip:
            continue
        t = mode_product(t, u, m)
    return t


def tucker_reconstruct(core: np.ndarray, factors) -> np.ndarray:
    """Assemble a tensor from its Tucker core and per-mode factor matrices."""
    return multi_product(core, factors)


def core_of(t: np.ndarray, factors) -> np.ndarray:
    """Project ``t`` onto the factor matrices: the core is ``t`` multiplied by
    each transposed factor."""
    return multi_product(t, [np.asarray(u).T for u in factors])


def stack_last(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Concatenate two tensors along the last (sample) mode."""
    if a.ndim != b.ndim or a.shape[:-1] != b.shape[:-1]:
        raise ValueError(f"leading dims mismatch: {a.shape} vs {b.shape}")
    return np.concatenate([a, b], axis=-1)


def frobenius_norm(t: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(t).ravel()))


def is_orthonormal(mat: np.ndarray, tol: float = ORTHO_TOL) -> bool:
    mat = np.asarray(mat)
    gram = mat.T @ mat
    return bool(np.max(np.abs(gram - np.eye(mat.shape[1]))) <= tol)


def require_orthonormal(mat: np.ndarray, tol: float = ORTHO_TOL, name: str = "factor") -> np.ndarray:
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[1] > mat.shape[0]:
        raise ValueError(f"{name} must be a tall matrix, got shape {mat.shape}")
    if not is_orthonormal(mat, tol):
        raise ValueError(f"{name} columns are not orthonormal within {tol}")
    return mat
