"""Boundary values of A(z) = -V R0(z) and the Fredholm solves for the T-kernel.

Boundary values on the band are split by the Sokhotski-Plemelj rule

    (nu - mu -+ i0)^(-1) = PV (nu - mu)^(-1) +- i pi delta(nu - mu),

and the principal value is computed by the subtraction technique:

    PV int phi(nu)/(nu - mu) dnu
        = int [phi(nu) - phi(mu)]/(nu - mu) dnu + phi(mu) log((b - mu)/(mu - a)).

The subtracted integrand is regular with the kernel's own modulus of
continuity; at nu = mu its value is phi'(mu), estimated by a centered
finite-difference stencil on the neighbouring nodes (5 points in the
interior, one-sided near the ends).  The wide stencil matters: it is what
keeps the engineered null vector of 1 - A(lambda_n +- i0) singular to far
below the conditioning guard, so that embedded eigenvalues are detected as
genuine rank deficiencies rather than smeared into merely bad conditioning.

The T-kernel columns solve (1 - A(mu +- i0)) t(., mu) = v(., mu); near a
certified embedded eigenvalue the system is deflated by the spectral
projection P and solved by least squares on range(P).
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import AccuracyWarning, ColumnSolveError, ConditioningError, \
    DomainError, PreconditionError
from .grids import EnergyGrid, GridFunction, interpolation_rows
from .kernels import OperatorKernel, tabulate_kernel
from .linalg import blocks_to_matrix, weight_vector, weighted_norm

#: conditioning guard for direct boundary solves (reciprocal condition number)
RCOND_FLOOR = 1e-8

#: half-width of the finite-difference stencil for the regularized diagonal
FD_RADIUS = 2

#: relative cutoff separating deflated null directions in projected solves
PROJECTED_RCOND = 1e-8


@dataclass(frozen=True)
class BoundaryPoint:
    """A spectral-parameter location: mu +- i0 on the band, or off-axis z."""

    energy: float = None
    side: str = None  # "plus" -> mu + i0, "minus" -> mu - i0
    offaxis: complex = None

    def __post_init__(self):
        on = self.energy is not None and self.side is not None
        off = self.offaxis is not None
        if on == off:
            raise ValueError("specify exactly one of (energy, side) or offaxis")
        if on and self.side not in ("plus", "minus"):
            raise ValueError(f"side must be 'plus' or 'minus', got {self.side!r}")

    @classmethod
    def plus(cls, mu: float) -> "BoundaryPoint":
        return cls(energy=mu, side="plus")

    @classmethod
    def minus(cls, mu: float) -> "BoundaryPoint":
        return cls(energy=mu, side="minus")

    @classmethod
    def off(cls, z: complex) -> "BoundaryPoint":
        return cls(offaxis=complex(z))


def side_sign(side: str) -> int:
    return +1 if side == "plus" else -1


def fd_weights(nodes: np.ndarray, x0: float, order: int = 1) -> np.ndarray:
    """Finite-difference weights for the order-th derivative at x0 (Fornberg)."""
    nodes = np.asarray(nodes, dtype=float)
    n = nodes.size
    c = np.zeros((n, order + 1))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = nodes[0] - x0
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = nodes[i] - x0
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


def _diag_stencil(grid: EnergyGrid, m: int, radius: int = FD_RADIUS):
    lo = max(m - radius, 0)
    hi = min(m + radius + 1, grid.n)
    idx = np.arange(lo, hi)
    return idx, fd_weights(grid.nodes[idx], grid.nodes[m])


def pv_log_moment(grid: EnergyGrid, mu: float) -> float:
    """PV int_a^b dnu/(nu - mu), exactly log((b - mu)/(mu - a))."""
    if not grid.a < mu < grid.b:
        raise DomainError(f"mu={mu} outside the open band ({grid.a}, {grid.b})")
    return float(np.log((grid.b - mu) / (mu - grid.a)))


def pv_cauchy_matrix(grid: EnergyGrid, blocks: np.ndarray,
                     deriv_blocks: np.ndarray = None,
                     diag_correction: np.ndarray = None) -> np.ndarray:
    """Matrix of f |-> PV int B(lam_i, nu) f(nu) / (nu - lam_i) dnu.

    ``blocks`` is (N, N, d, d); the singular node of row i is node i itself.
    ``deriv_blocks`` (default ``blocks``) supplies the kernel used inside the
    finite-difference cell that replaces the removable j = i term;
    ``diag_correction`` (N, d, d) adds an extra multiple of f_i there, which
    lets callers split a product derivative into consistent pieces.
    """
    n, _, d, _ = blocks.shape
    nodes, w = grid.nodes, grid.weights
    if deriv_blocks is None:
        deriv_blocks = blocks

    denom = nodes[None, :] - nodes[:, None]
    np.fill_diagonal(denom, 1.0)
    coef = w[None, :] / denom
    np.fill_diagonal(coef, 0.0)

    out = blocks * coef[:, :, None, None]
    # subtraction of phi(lam_i) and the analytic log moment
    logs = np.log((grid.b - nodes) / (nodes - grid.a))
    diag_scalar = logs - coef.sum(axis=1)
    idx = np.arange(n)
    out[idx, idx] += diag_scalar[:, None, None] * blocks[idx, idx]
    # removable j = i cell: w_i * d/dnu [D(lam_i, nu) f(nu)] at nu = lam_i
    for i in range(n):
        sidx, sw = _diag_stencil(grid, i)
        out[i, sidx] += w[i] * sw[:, None, None] * deriv_blocks[i, sidx]
        if diag_correction is not None:
            out[i, i] += w[i] * diag_correction[i]
    return blocks_to_matrix(out)


def _pv_fixed_blocks(grid: EnergyGrid, blocks: np.ndarray, m: int) -> np.ndarray:
    """Blocks of f |-> PV int B(lam_i, nu) f(nu) / (nu - mu) dnu at mu = node m."""
    n, _, d, _ = blocks.shape
    nodes, w = grid.nodes, grid.weights
    mu = nodes[m]
    denom = nodes - mu
    denom[m] = 1.0
    coef = w / denom
    coef[m] = 0.0

    out = blocks * coef[None, :, None, None]
    diag_scalar = pv_log_moment(grid, mu) - coef.sum()
    out[:, m] += diag_scalar * blocks[:, m]
    sidx, sw = _diag_stencil(grid, m)
    out[:, sidx] += w[m] * sw[None, :, None, None] * blocks[:, sidx]
    return out


def assemble_A_boundary(kernel: OperatorKernel, grid: EnergyGrid, mu: float,
                        side: str = "plus") -> np.ndarray:
    """Dense matrix of A(mu +- i0) = -V R0(mu +- i0).

    ``mu`` may be a grid node or any interior energy; off-node locations
    re-tabulate the kernel column at mu and interpolate f(mu).  Emits an
    AccuracyWarning when mu sits within one local spacing of a band end.
    """
    if not grid.a < mu < grid.b:
        raise DomainError(f"mu={mu} outside the open band ({grid.a}, {grid.b})")
    sgn = side_sign(side)
    n, d = grid.n, kernel.dim
    tab = tabulate_kernel(kernel, grid)
    m = grid.nearest_node(mu)
    edge_gap = min(mu - grid.a, grid.b - mu)
    if edge_gap < grid.local_spacing(0 if mu - grid.a < grid.b - mu else n - 1):
        warnings.warn(
            f"boundary value at mu={mu:g} lies within one spacing of a band end; "
            "columns there are small but relatively inaccurate", AccuracyWarning,
            stacklevel=2)

    if abs(grid.nodes[m] - mu) < 1e-9 * grid.span:
        blocks = _pv_fixed_blocks(grid, tab, m)
        blocks = blocks.copy()
        blocks[:, m] += sgn * 1j * np.pi * tab[:, m]
        return -blocks_to_matrix(blocks)

    # off-node: every quadrature term is regular; f(mu) is interpolated
    nodes, w = grid.nodes, grid.weights
    denom = nodes - mu
    coef = w / denom
    vcol = np.asarray([kernel(lam, mu) for lam in nodes])  # (N, d, d)
    starts, rows = interpolation_rows(nodes, np.array([mu]))
    blocks = tab * coef[None, :, None, None]
    scal = pv_log_moment(grid, mu) - coef.sum() + sgn * 1j * np.pi
    s0 = starts[0]
    for t, r in enumerate(rows[0]):
        blocks[:, s0 + t] += scal * r * vcol
    return -blocks_to_matrix(blocks)


def assemble_A_offaxis(kernel: OperatorKernel, grid: EnergyGrid,
                       z: complex) -> np.ndarray:
    """A(z) = -V R0(z) for Im z != 0: plain Nystrom, no singular handling."""
    if z.imag == 0.0:
        raise DomainError("off-axis assembly needs Im z != 0")
    tab = tabulate_kernel(kernel, grid)
    coef = grid.weights / (grid.nodes - z)
    return -blocks_to_matrix(tab * coef[None, :, None, None])


def assemble_A(kernel: OperatorKernel, grid: EnergyGrid,
               point: BoundaryPoint) -> np.ndarray:
    if point.offaxis is not None:
        return assemble_A_offaxis(kernel, grid, point.offaxis)
    return assemble_A_boundary(kernel, grid, point.energy, point.side)


def _rhs_column(kernel: OperatorKernel, grid: EnergyGrid, mu: float) -> np.ndarray:
    """v(., mu) stacked as an (N*d, d) right-hand side."""
    tab = tabulate_kernel(kernel, grid)
    m = grid.nearest_node(mu)
    if abs(grid.nodes[m] - mu) < 1e-9 * grid.span:
        col = tab[:, m]
    else:
        col = np.asarray([kernel(lam, mu) for lam in grid.nodes])
    return col.reshape(grid.n * kernel.dim, kernel.dim)


def _guarded_solve(mat: np.ndarray, rhs: np.ndarray, what: str):
    anorm = np.linalg.norm(mat, 1)
    lu, piv = sla.lu_factor(mat)
    rcond = sla.lapack.zgecon(lu, anorm)[0]
    if rcond < RCOND_FLOOR:
        raise ConditioningError(
            f"{what}: condition number ~{0 if rcond == 0 else 1.0 / rcond:.2e} "
            "exceeds 1e8; near an embedded eigenvalue use solve_projected",
            condition=np.inf if rcond == 0 else 1.0 / rcond)
    return sla.lu_solve((lu, piv), rhs)


def solve_T_column(kernel: OperatorKernel, grid: EnergyGrid, mu: float,
                   side: str = "plus") -> np.ndarray:
    """Solve (1 - A(mu +- i0)) t(., mu) = v(., mu); returns (N, d, d) blocks."""
    n, d = grid.n, kernel.dim
    A = assemble_A_boundary(kernel, grid, mu, side)
    rhs = _rhs_column(kernel, grid, mu)
    sol = _guarded_solve(np.eye(n * d) - A, rhs, f"T column at mu={mu:g}{side:.1s}i0")
    return sol.reshape(n, d, d)


def solve_T_column_offaxis(kernel: OperatorKernel, grid: EnergyGrid, mu: float,
                           eps: float, side: str = "plus") -> np.ndarray:
    """T-kernel column at z = mu +- i eps (limiting-absorption approximant)."""
    z = mu + 1j * eps * side_sign(side)
    n, d = grid.n, kernel.dim
    A = assemble_A_offaxis(kernel, grid, z)
    rhs = _rhs_column(kernel, grid, mu)
    sol = _guarded_solve(np.eye(n * d) - A, rhs, f"T column at z={z:g}")
    return sol.reshape(n, d, d)


@dataclass(eq=False)
class TKernel:
    """Tabulated boundary values t(lam_i, mu_j, mu_j +- i0) as d x d blocks.

    ``diag_derivative[i]`` estimates d/dlam t(lam, mu_i) at lam = mu_i, the
    removable-diagonal value the K-kernel needs.
    """

    grid: EnergyGrid
    side: str
    blocks: np.ndarray            # (N, N, d, d)
    diag_derivative: np.ndarray   # (N, d, d)

    @property
    def dim(self) -> int:
        return self.blocks.shape[2]

    def diagonal(self) -> np.ndarray:
        n = self.grid.n
        return self.blocks[np.arange(n), np.arange(n)]

    def save_json(self, path):
        import json
        payload = {
            "a": self.grid.a, "b": self.grid.b, "side": self.side,
            "n_nodes": self.grid.n, "dim": self.dim,
            "nodes": self.grid.nodes.tolist(),
            "blocks_re": self.blocks.real.tolist(),
            "blocks_im": self.blocks.imag.tolist(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    def save_binary(self, path):
        """Little-endian dump: int64 header (N, d, side flag), float64 nodes,
        complex128 blocks in row-major (lam index, mu index, row, col) order."""
        with open(path, "wb") as fh:
            np.asarray([self.grid.n, self.dim,
                        1 if self.side == "plus" else -1],
                       dtype="<i8").tofile(fh)
            np.asarray([self.grid.a, self.grid.b], dtype="<f8").tofile(fh)
            self.grid.nodes.astype("<f8").tofile(fh)
            self.blocks.astype("<c16").tofile(fh)

    @classmethod
    def load_binary(cls, path, grid: EnergyGrid) -> "TKernel":
        with open(path, "rb") as fh:
            head = np.fromfile(fh, dtype="<i8", count=3)
            n, d, flag = (int(x) for x in head)
            np.fromfile(fh, dtype="<f8", count=2 + n)
            blocks = np.fromfile(fh, dtype="<c16").reshape(n, n, d, d)
        side = "plus" if flag == 1 else "minus"
        dd = _diagonal_derivative(grid, blocks)
        return cls(grid, side, blocks, dd)


def _diagonal_derivative(grid: EnergyGrid, blocks: np.ndarray) -> np.ndarray:
    """d/dlam t(lam, mu_i) at lam = mu_i by the centered stencil down column i."""
    n = grid.n
    out = np.empty((n,) + blocks.shape[2:], dtype=complex)
    for i in range(n):
        sidx, sw = _diag_stencil(grid, i)
        out[i] = np.einsum("s,sab->ab", sw, blocks[sidx, i])
    return out


def _blocked_column(kernel: OperatorKernel, grid: EnergyGrid, j: int,
                    side: str, spectral, P: np.ndarray) -> np.ndarray:
    """T-kernel column at a certified embedded eigenvalue node.

    Splitting the resolvent by 1 = P + sum |f_n><f_n| turns the column into

        t(., mu) = x + (1 - P) v(., mu) - sum_n (l_n - mu - i0)^(-1) g_n(.) g_n(mu)^*

    with g_n = V f_n and (1 - A(mu +- i0)) x = P v(., mu).  The deflated
    least-squares solve fixes x up to the null direction g_n, which does not
    affect the kernel diagonal; at mu = l_n the pole cancels against
    g_n(mu) = (l_n - mu) f_n(mu) and contributes -g_n(.) f_n(l_n)^* exactly.
    The g_n f_n^* product is invariant under the eigenvector's phase freedom.
    """
    from .kernels import tabulate_kernel as _tab
    n, d = grid.n, kernel.dim
    mu = grid.nodes[j]
    rhs = _rhs_column(kernel, grid, mu)
    prhs = P @ rhs
    A = assemble_A_boundary(kernel, grid, mu, side)
    x = _deflated_lstsq(np.eye(n * d) - A, prhs, grid, d)[0]
    col = x + (rhs - prhs)

    tab = _tab(kernel, grid)
    w = grid.weights
    for k in spectral.embedded_set:
        u = spectral.vectors[:, k].reshape(n, d)
        gv = np.einsum("ijab,j,jb->ia", tab, w, u)  # V f_n at the nodes
        ln = spectral.eigenvalues[k]
        if abs(ln - mu) < 1e-6 * grid.span:
            col -= np.einsum("ia,b->iab", gv, u[j].conj()).reshape(n * d, d)
        else:
            gn_at = gv[j]
            col -= np.einsum("ia,b->iab", gv, gn_at.conj()).reshape(n * d, d) \
                / (ln - mu)
    return col.reshape(n, d, d)


def build_T_kernel(kernel: OperatorKernel, grid: EnergyGrid, side: str = "plus",
                   spectral=None, projector=None, workers: int = 1) -> TKernel:
    """Tabulate t(lam_i, mu_j, mu_j +- i0) by per-column Fredholm solves.

    Columns at certified embedded eigenvalues (taken from ``spectral``, a
    SpectralData) are computed through the deflated solve plus the explicit
    pole limit of the eigenprojection part; see _blocked_column.  Column
    solves are independent; ``workers`` > 1 runs them on a thread pool in a
    deterministic order.
    """
    n, d = grid.n, kernel.dim
    side_sign(side)  # validates
    blocked = {}
    if spectral is not None and spectral.embedded_set:
        P = projector
        if P is None:
            from .spectral import projection_P
            P = projection_P(spectral)
        Pm = P.entries if hasattr(P, "entries") else np.asarray(P)
        for k in spectral.embedded_set:
            m = grid.nearest_node(spectral.eigenvalues[k])
            if abs(grid.nodes[m] - spectral.eigenvalues[k]) < 1e-6 * grid.span:
                blocked[m] = Pm

    def one_column(j: int):
        if j in blocked:
            return _blocked_column(kernel, grid, j, side, spectral, blocked[j])
        return solve_T_column(kernel, grid, grid.nodes[j], side)

    failures = []
    columns = [None] * n
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = {j: pool.submit(one_column, j) for j in range(n)}
        for j in range(n):
            try:
                columns[j] = futs[j].result()
            except Exception as exc:  # propagated per-column
                failures.append((grid.nodes[j], exc))
    else:
        for j in range(n):
            try:
                columns[j] = one_column(j)
            except Exception as exc:
                failures.append((grid.nodes[j], exc))
    if failures:
        raise ColumnSolveError(failures)

    blocks = np.empty((n, n, d, d), dtype=complex)
    for j in range(n):
        blocks[:, j] = columns[j]
    return TKernel(grid, side, blocks, _diagonal_derivative(grid, blocks))


def _deflated_lstsq(mat: np.ndarray, rhs: np.ndarray, grid, d: int):
    """Minimal-weighted-norm least squares with deflation of tiny directions.

    Solves ``mat x = rhs`` in the W^(1/2)-conjugated frame, truncating
    singular values below PROJECTED_RCOND relative to the largest; returns
    (solution, restricted condition number over the kept directions).
    """
    sqw = np.sqrt(weight_vector(grid, d))
    rhs2 = rhs[:, None] if rhs.ndim == 1 else rhs
    ms = mat * (sqw[:, None] / sqw[None, :])
    u, s, vh = np.linalg.svd(ms)
    keep = s > PROJECTED_RCOND * s[0]
    cond_restricted = float(s[0] / s[keep][-1]) if keep.any() else np.inf
    y = vh.conj().T[:, keep] @ ((u[:, keep].conj().T @ (sqw[:, None] * rhs2))
                                / s[keep][:, None])
    x = y / sqw[:, None]
    return (x[:, 0] if rhs.ndim == 1 else x), cond_restricted


def _projected_solve_matrix(kernel: OperatorKernel, grid: EnergyGrid,
                            point: BoundaryPoint, P: np.ndarray,
                            rhs: np.ndarray):
    """Deflated least-squares realization of (1 - A(z))^(-1) P.

    The right-hand side is projected by P; the operator is kept whole and
    solved by minimal-weighted-norm least squares with the near-null
    directions deflated.  Keeping the operator unprojected is essential for
    continuity in z: near an embedded eigenvalue the almost-singular
    direction pairs with the eigenfunction cokernel, whose overlap with a
    P-projected right-hand side vanishes at the same rate as the singular
    value, so the amplified component stays bounded.  Projecting the
    operator on both sides re-routes that pairing and produces solutions
    that blow up like 1/dist(z, lambda_n).

    Returns (P-applied solution, restricted condition number).
    """
    d = kernel.dim
    sqw = np.sqrt(weight_vector(grid, d))
    rhs = np.asarray(rhs, dtype=complex)
    squeeze = rhs.ndim == 1
    rhs2 = rhs[:, None] if squeeze else rhs

    prhs = P @ rhs2
    nr = np.linalg.norm(sqw[:, None] * rhs2)
    defect = np.linalg.norm(sqw[:, None] * (rhs2 - prhs))
    if nr > 0 and defect > 1e-8 * nr:
        raise PreconditionError(
            f"right-hand side is not in range(P): relative defect {defect / nr:g}")

    A = assemble_A(kernel, grid, point)
    x, cond_restricted = _deflated_lstsq(np.eye(A.shape[0]) - A, prhs, grid, d)
    x = P @ x
    return (x[:, 0] if squeeze else x), cond_restricted


def solve_projected(kernel: OperatorKernel, grid: EnergyGrid,
                    point: BoundaryPoint, P, rhs: GridFunction):
    """Deflated solve of (1 - A(z)) x = rhs for rhs in range(P).

    Returns (GridFunction solution, restricted condition number).  The
    restricted condition number is the ratio of the largest kept singular
    value to the smallest one above the deflation cutoff.
    """
    Pm = P.entries if hasattr(P, "entries") else np.asarray(P)
    flat, cond = _projected_solve_matrix(kernel, grid, point, Pm, rhs.flat())
    return GridFunction.from_flat(grid, flat, rhs.dim), cond


def boundary_condition_number(kernel: OperatorKernel, grid: EnergyGrid,
                              mu: float, side: str = "plus") -> float:
    """2-norm condition number of the symmetrized 1 - A(mu +- i0)."""
    from .linalg import condition_2norm, symmetrize
    A = assemble_A_boundary(kernel, grid, mu, side)
    M = np.eye(A.shape[0]) - A
    return condition_2norm(symmetrize(M, grid, kernel.dim))
