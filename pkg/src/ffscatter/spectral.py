"""Dense discretizations of H0, V, H and their spectral analysis.

H0 is multiplication by the band energy, so its matrix is block diagonal with
lambda_i * I_d blocks.  V is discretized by the Nystrom rule,
V[i][j] = v(lambda_i, lambda_j) * w_j, which is self-adjoint in the weighted
inner product.  Eigen-solves happen in the W^(1/2)-conjugated (symmetrized)
picture where the matrix is plainly Hermitian.

Eigenvalues inside the band need classifying: a finite grid turns the
continuous spectrum into a fan of spurious eigenvalues whose eigenvectors are
single-node spikes, while a genuine embedded eigenfunction is smooth and
spread over many nodes.  The classifier certifies an interior eigenvalue as
embedded when its residual is small and its weighted mass is not concentrated
near one node.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import ConditioningError, DomainError, UnsupportedCheckError
from .grids import EnergyGrid, GridFunction
from .kernels import EmbeddedScenario, OperatorKernel, tabulate_kernel, \
    tabulate_kernel_dlambda
from .linalg import block_diagonal, hermitian_defect, symmetrize, unsymmetrize, \
    weight_vector, weighted_adjoint

#: resolvent evaluation floor: refuse z closer than this to the band
EPS_MIN = 1e-8

CLASS_DISCRETE_BELOW = "discrete-below"
CLASS_DISCRETE_ABOVE = "discrete-above"
CLASS_EMBEDDED = "embedded-candidate"
CLASS_ARTIFACT = "continuum-artifact"


@dataclass(eq=False)
class DenseOperator:
    """Dense matrix on the stacked value space with its weighting convention."""

    entries: np.ndarray
    grid: EnergyGrid
    dim: int
    weighting: str = "plain"  # or "symmetrized"

    @property
    def shape(self):
        return self.entries.shape

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def symmetrized(self) -> "DenseOperator":
        if self.weighting == "symmetrized":
            return self
        return DenseOperator(symmetrize(self.entries, self.grid, self.dim),
                             self.grid, self.dim, "symmetrized")

    def plain(self) -> "DenseOperator":
        if self.weighting == "plain":
            return self
        return DenseOperator(unsymmetrize(self.entries, self.grid, self.dim),
                             self.grid, self.dim, "plain")


def assemble_H0(grid: EnergyGrid, dim: int) -> DenseOperator:
    """Multiplication by the band energy: diag(lambda_i I_d)."""
    diag = np.repeat(grid.nodes, dim).astype(complex)
    return DenseOperator(np.diag(diag), grid, dim, "plain")


def assemble_V(kernel: OperatorKernel, grid: EnergyGrid) -> DenseOperator:
    """Nystrom discretization of the integral operator V."""
    tab = tabulate_kernel(kernel, grid)
    n, d = grid.n, kernel.dim
    mat = tab.transpose(0, 2, 1, 3).reshape(n * d, n * d) * \
        np.repeat(grid.weights, d)[None, :]
    return DenseOperator(np.ascontiguousarray(mat), grid, d, "plain")


def assemble_H(kernel: OperatorKernel, grid: EnergyGrid) -> DenseOperator:
    h0 = assemble_H0(grid, kernel.dim)
    v = assemble_V(kernel, grid)
    return DenseOperator(h0.entries + v.entries, grid, kernel.dim, "plain")


@dataclass(eq=False)
class SpectralData:
    """Eigendecomposition of H with per-eigenvalue classification.

    ``vectors`` holds weighted-orthonormal eigenvectors (value representation)
    as columns; ``embedded_set`` indexes the certified embedded eigenvalues.
    """

    grid: EnergyGrid
    dim: int
    eigenvalues: np.ndarray
    vectors: np.ndarray
    classification: list
    embedded_set: list
    residuals: np.ndarray
    tol_embed: float
    localization: np.ndarray = field(default=None, repr=False)

    @property
    def discrete_set(self) -> list:
        return [i for i, c in enumerate(self.classification)
                if c in (CLASS_DISCRETE_BELOW, CLASS_DISCRETE_ABOVE)]

    def counts(self) -> dict:
        out = {}
        for c in self.classification:
            out[c] = out.get(c, 0) + 1
        return out

    def to_json(self) -> str:
        payload = {
            "a": self.grid.a,
            "b": self.grid.b,
            "n_nodes": self.grid.n,
            "dim": self.dim,
            "tol_embed": self.tol_embed,
            "eigenvalues": self.eigenvalues.tolist(),
            "classification": list(self.classification),
            "embedded_set": list(self.embedded_set),
            "residuals": self.residuals.tolist(),
        }
        return json.dumps(payload, indent=2)


def _localization_ratio(grid: EnergyGrid, dim: int, vec: np.ndarray,
                        lam: float, window: int = 3) -> float:
    """Fraction of weighted mass within ``window`` grid positions of the node
    nearest ``lam``."""
    mass = grid.weights * np.sum(np.abs(vec.reshape(grid.n, dim)) ** 2, axis=1)
    total = mass.sum()
    if total == 0.0:
        return 1.0
    i0 = grid.nearest_node(lam)
    lo, hi = max(i0 - window, 0), min(i0 + window + 1, grid.n)
    return float(mass[lo:hi].sum() / total)


def eigendecompose(H: DenseOperator, grid: EnergyGrid,
                   tol_embed: float = 1e-6,
                   localization_cut: float = 0.5) -> SpectralData:
    """Full Hermitian eigendecomposition with eigenvalue classification."""
    d = H.dim
    sym = H.symmetrized().entries
    scale = max(np.max(np.abs(sym)), 1.0)
    if hermitian_defect(sym) > 1e-10 * scale:
        raise ValueError("operator is not Hermitian after symmetrization")
    sym = 0.5 * (sym + sym.conj().T)
    evals, z = np.linalg.eigh(sym)
    sqrt_w = np.sqrt(weight_vector(grid, d))
    vectors = z / sqrt_w[:, None]  # weighted-orthonormal, value representation

    hplain = H.plain().entries
    resid_mat = hplain @ vectors - vectors * evals[None, :]
    w = weight_vector(grid, d)
    residuals = np.sqrt(np.sum(w[:, None] * np.abs(resid_mat) ** 2, axis=0))

    classification = []
    embedded = []
    localization = np.empty(evals.size)
    for k, lam in enumerate(evals):
        loc = _localization_ratio(grid, d, vectors[:, k], lam)
        localization[k] = loc
        if lam < grid.a:
            classification.append(CLASS_DISCRETE_BELOW)
        elif lam > grid.b:
            classification.append(CLASS_DISCRETE_ABOVE)
        elif residuals[k] <= tol_embed and loc < localization_cut:
            classification.append(CLASS_EMBEDDED)
            embedded.append(k)
        else:
            classification.append(CLASS_ARTIFACT)
    return SpectralData(grid=grid, dim=d, eigenvalues=evals, vectors=vectors,
                        classification=classification, embedded_set=embedded,
                        residuals=residuals, tol_embed=tol_embed,
                        localization=localization)


def projection_P(spec: SpectralData) -> DenseOperator:
    """P = 1 - sum_n |f_n><f_n| over the certified embedded eigenfunctions."""
    n = spec.vectors.shape[0]
    P = np.eye(n, dtype=complex)
    w = weight_vector(spec.grid, spec.dim)
    for k in spec.embedded_set:
        u = spec.vectors[:, k]
        P -= np.outer(u, u.conj() * w)
    return DenseOperator(P, spec.grid, spec.dim, "plain")


def resolvent_direct(H: DenseOperator, z: complex, eps_min: float = EPS_MIN,
                     override: bool = False) -> DenseOperator:
    """R(z) = (H - z)^(-1) by dense LU with partial pivoting.

    Refuses z within ``eps_min`` of the band [a, b] unless ``override``;
    raises ConditioningError (with the condition estimate) near an eigenvalue.
    """
    grid, d = H.grid, H.dim
    re, im = z.real, z.imag
    dist_to_band = abs(im) if grid.a <= re <= grid.b else np.hypot(
        max(grid.a - re, 0.0, re - grid.b), im)
    if dist_to_band < eps_min and not override:
        raise DomainError(
            f"z={z} is within {eps_min} of the band [{grid.a}, {grid.b}]; "
            "pass override=True to force the solve")
    mat = H.plain().entries - z * np.eye(H.size)
    anorm = np.linalg.norm(mat, 1)
    lu, piv = sla.lu_factor(mat)
    rcond = sla.lapack.zgecon(lu, anorm)[0]
    if rcond < 1e-14:
        raise ConditioningError(
            f"(H - z) is numerically singular at z={z}",
            condition=np.inf if rcond == 0 else 1.0 / rcond)
    R = sla.lu_solve((lu, piv), np.eye(H.size, dtype=complex))
    residual = np.max(np.abs(mat @ R - np.eye(H.size)))
    if residual > 1e-9:
        raise ConditioningError(
            f"resolvent residual {residual:g} exceeds 1e-9 at z={z}",
            condition=1.0 / rcond)
    return DenseOperator(R, grid, d, "plain")


def check_eigenfunction_regularity(scenario: EmbeddedScenario,
                                   grid: EnergyGrid) -> dict:
    """Residuals of the three boundary-value identities of an embedded pair.

    (i)   [V f_n](lambda_n) = 0
    (ii)  f_n(lambda_n) = -[V' f_n](lambda_n)
    (iii) f_n = -R0(lambda_n +- i0) V f_n, evaluated through the
          factor-cancellation form of the regularized quotient.
    """
    kernel = scenario.kernel
    if not kernel.differentiable:
        raise UnsupportedCheckError(
            "eigenfunction regularity checks need a differentiable kernel")
    ln = scenario.lambda_n
    fvals = scenario.eigenfunction(grid).values  # (N, d)
    w = grid.weights

    vrow = np.asarray([kernel(ln, mu) for mu in grid.nodes])
    vf_at_ln = np.einsum("j,jab,jb->a", w, vrow, fvals)
    res_i = float(np.linalg.norm(vf_at_ln))

    dvrow = np.asarray([kernel.dlambda(ln, mu) for mu in grid.nodes])
    dvf_at_ln = np.einsum("j,jab,jb->a", w, dvrow, fvals)
    f_at_ln = np.atleast_1d(scenario.profile(ln))
    res_ii = float(np.linalg.norm(f_at_ln + dvf_at_ln))

    # (iii): [R0(ln +- i0) V f](lam) = [Vf](lam) / (lam - ln -+ i0); with
    # Vf = (ln - lam) f the quotient cancels to -f(lam) at lam = ln exactly,
    # and elsewhere we divide the quadrature value of Vf pointwise.
    tab = tabulate_kernel(kernel, grid)
    vf = np.einsum("ijab,j,jb->ia", tab, w, fvals)
    m = grid.nearest_node(ln)
    on_node = abs(grid.nodes[m] - ln) < 1e-9 * grid.span
    quot = np.empty_like(fvals)
    for i in range(grid.n):
        if on_node and i == m:
            quot[i] = -fvals[i]
        else:
            quot[i] = vf[i] / (grid.nodes[i] - ln)
    resid_vec = fvals + quot
    res_iii = float(np.sqrt(np.sum(w[:, None] * np.abs(resid_vec) ** 2)))

    return {"vf_at_eigenvalue": res_i,
            "derivative_identity": res_ii,
            "resolvent_identity": res_iii}


def operator_norm_estimate(op: DenseOperator) -> float:
    return float(np.linalg.norm(op.symmetrized().entries, 2))


def spectral_range_sanity(spec: SpectralData, kernel: OperatorKernel) -> bool:
    """min/max eigenvalues of H must stay within [a - ||V||, b + ||V||]."""
    vnorm = operator_norm_estimate(assemble_V(kernel, spec.grid))
    return bool(spec.eigenvalues[0] >= spec.grid.a - vnorm - 1e-9
                and spec.eigenvalues[-1] <= spec.grid.b + vnorm + 1e-9)


def completeness_defect(spec: SpectralData) -> float:
    """|| I - P - sum |f_n><f_n| || for the certified embedded family."""
    P = projection_P(spec).entries
    n = P.shape[0]
    w = weight_vector(spec.grid, spec.dim)
    total = P.copy()
    for k in spec.embedded_set:
        u = spec.vectors[:, k]
        total += np.outer(u, u.conj() * w)
    return float(np.linalg.norm(total - np.eye(n), 2))
