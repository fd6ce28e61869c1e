"""Weighted-inner-product linear algebra helpers.

All operators act on stacked value vectors: a function with values
``f[i] in C^d`` at node ``i`` is stored as the flat vector
``(f[0], f[1], ...)`` of length ``N*d``.  The discrete inner product is
``<f, g> = sum_i w_i <f[i], g[i]>`` with the quadrature weights ``w_i``,
so adjoints, norms and projections all carry the weight matrix
``W = diag(w_i I_d)``.
"""
from __future__ import annotations

import numpy as np


def weight_vector(grid, d: int) -> np.ndarray:
    """Flat vector of quadrature weights repeated per internal component."""
    return np.repeat(np.asarray(grid.weights, dtype=float), d)


def weighted_dot(grid, f, g, d: int | None = None) -> complex:
    f = np.asarray(f)
    g = np.asarray(g)
    if f.ndim == 2:
        d = f.shape[1]
        f = f.ravel()
        g = g.ravel()
    if d is None:
        d = f.size // len(grid.weights)
    w = weight_vector(grid, d)
    return complex(np.vdot(f, w * g))


def weighted_norm(grid, f, d: int | None = None) -> float:
    return float(np.sqrt(max(weighted_dot(grid, f, f, d).real, 0.0)))


def weighted_adjoint(mat: np.ndarray, grid, d: int) -> np.ndarray:
    """Adjoint with respect to the weighted inner product: W^-1 M^H W."""
    w = weight_vector(grid, d)
    return (mat.conj().T * w[None, :]) / w[:, None]


def symmetrize(mat: np.ndarray, grid, d: int) -> np.ndarray:
    """Conjugate by W^(1/2) so weighted-self-adjoint matrices become Hermitian."""
    s = np.sqrt(weight_vector(grid, d))
    return mat * (s[:, None] / s[None, :])


def unsymmetrize(mat: np.ndarray, grid, d: int) -> np.ndarray:
    s = np.sqrt(weight_vector(grid, d))
    return mat * (s[None, :] / s[:, None])


def hermitian_defect(mat: np.ndarray) -> float:
    return float(np.max(np.abs(mat - mat.conj().T)))


def blocks_to_matrix(blocks: np.ndarray) -> np.ndarray:
    """(N, N, d, d) block array -> (N*d, N*d) matrix."""
    n, n2, d, d2 = blocks.shape
    if n != n2 or d != d2:
        raise ValueError(f"expected square block layout, got {blocks.shape}")
    return np.ascontiguousarray(blocks.transpose(0, 2, 1, 3).reshape(n * d, n * d))


def matrix_to_blocks(mat: np.ndarray, n: int, d: int) -> np.ndarray:
    """(N*d, N*d) matrix -> (N, N, d, d) block array."""
    return mat.reshape(n, d, n, d).transpose(0, 2, 1, 3)


def block_diagonal(blocks: np.ndarray) -> np.ndarray:
    """(N, d, d) diagonal blocks -> (N*d, N*d) block-diagonal matrix."""
    n, d, _ = blocks.shape
    out = np.zeros((n * d, n * d), dtype=blocks.dtype)
    for i in range(n):
        out[i * d:(i + 1) * d, i * d:(i + 1) * d] = blocks[i]
    return out


def condition_2norm(mat: np.ndarray) -> float:
    sv = np.linalg.svd(mat, compute_uv=False)
    if sv[-1] == 0.0:
        return np.inf
    return float(sv[0] / sv[-1])


def weighted_singular_values(mat: np.ndarray, grid, d: int) -> np.ndarray:
    """Singular values of the operator on weighted L2 (descending)."""
    return np.linalg.svd(symmetrize(mat, grid, d), compute_uv=False)


def weighted_hs_norm(mat: np.ndarray, grid, d: int) -> float:
    """Hilbert-Schmidt norm of the integral operator represented by ``mat``.

    ``mat`` is the Nystrom matrix (kernel blocks times column weights), so the
    kernel-level weighted sum  sum_ij w_i w_j |k_ij|^2  equals the Frobenius
    norm of the W^(1/2)-conjugated matrix.
    """
    return float(np.linalg.norm(symmetrize(mat, grid, d)))
