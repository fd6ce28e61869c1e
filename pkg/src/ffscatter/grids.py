"""Quadrature grids on the energy band and the rescaled real-line representation.

The energy band is a finite interval [a, b].  Functions live on quadrature
nodes strictly inside the band.  The rescaled representation maps the band
onto the real line through

    x = (1/2) log((lambda - a) / (b - lambda)),

a strictly increasing bijection (a, b) -> R.  The unitary change of
representation U and its inverse carry the Jacobian factors

    [U f](x)      = sqrt((b-a)/2) * sech(x) * f(lambda(x))
    [Uinv phi](l) = sqrt((b-a)/2) / sqrt((l-a)(b-l)) * phi(x(l))

with lambda(x) = (a + b e^{2x}) / (1 + e^{2x}).  Off-node values are obtained
by 4-point barycentric Lagrange interpolation; near the ends of a grid the
stencil becomes one-sided.  Points mapped outside the truncated line grid are
treated as zero, encoding the boundary-vanishing hypothesis on the functions
this package works with.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError

SCHEMES = ("composite-midpoint", "gauss-legendre")

#: width of the local interpolation stencil used by apply_U / apply_Uinv
INTERP_POINTS = 4


@dataclass(frozen=True, eq=False)
class EnergyGrid:
    """Quadrature rule on the band [a, b].

    Nodes are strictly increasing and strictly inside (a, b); weights are
    positive and sum to b - a.  Instances are immutable and safe to share.
    """

    a: float
    b: float
    nodes: np.ndarray
    weights: np.ndarray
    scheme: str

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if self.b <= self.a:
            raise ConfigurationError(f"need b > a, got a={self.a}, b={self.b}")
        if nodes.ndim != 1 or nodes.size != weights.size:
            raise ConfigurationError("nodes and weights must be 1-d and equal length")
        if not (self.a < nodes[0] and nodes[-1] < self.b):
            raise ConfigurationError("nodes must lie strictly inside (a, b)")
        if np.any(np.diff(nodes) <= 0):
            raise ConfigurationError("nodes must be strictly increasing")
        if np.any(weights <= 0):
            raise ConfigurationError("weights must be positive")
        total = weights.sum()
        if abs(total - (self.b - self.a)) > 1e-12 * (self.b - self.a):
            raise ConfigurationError(
                f"weights sum to {total!r}, expected {self.b - self.a!r}")

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def span(self) -> float:
        return self.b - self.a

    def local_spacing(self, i: int) -> float:
        """Distance scale of the grid around node i."""
        nodes = self.nodes
        if i == 0:
            return nodes[1] - nodes[0]
        if i == self.n - 1:
            return nodes[-1] - nodes[-2]
        return 0.5 * (nodes[i + 1] - nodes[i - 1])

    def nearest_node(self, lam: float) -> int:
        return int(np.argmin(np.abs(self.nodes - lam)))


@dataclass(frozen=True, eq=False)
class LineGrid:
    """Uniform grid of Nx points on [-L, L), spacing h = 2L/Nx exactly."""

    half_width: float
    count: int
    nodes: np.ndarray = field(init=False)
    spacing: float = field(init=False)

    def __post_init__(self):
        if self.half_width <= 0:
            raise ConfigurationError("half_width must be positive")
        if self.count <= 0 or self.count % 2 != 0:
            raise ConfigurationError("count must be a positive even integer")
        h = 2.0 * self.half_width / self.count
        nodes = -self.half_width + h * np.arange(self.count)
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "spacing", h)

    @property
    def n(self) -> int:
        return self.count

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.count, self.spacing)


@dataclass(eq=False)
class GridFunction:
    """Vector-valued function sampled on an EnergyGrid or LineGrid.

    ``values`` has shape (node count, d).
    """

    grid: object
    values: np.ndarray
    dim: int

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape != (self.grid.n, self.dim):
            raise ValueError(
                f"values shape {vals.shape} does not match "
                f"(nodes={self.grid.n}, d={self.dim})")
        self.values = vals

    def norm(self) -> float:
        w = np.asarray(self.grid.weights)
        return float(np.sqrt(np.sum(w * np.sum(np.abs(self.values) ** 2, axis=1))))

    def flat(self) -> np.ndarray:
        return self.values.ravel()

    @classmethod
    def from_flat(cls, grid, flat: np.ndarray, dim: int) -> "GridFunction":
        return cls(grid, np.asarray(flat).reshape(grid.n, dim), dim)

    @classmethod
    def sample(cls, grid, func, dim: int | None = None) -> "GridFunction":
        """Sample a callable lambda -> C^d (or scalar) at the grid nodes."""
        vals = np.asarray([np.atleast_1d(func(x)) for x in grid.nodes], dtype=complex)
        return cls(grid, vals, vals.shape[1] if dim is None else dim)


def build_grid(a: float, b: float, n: int, scheme: str = "gauss-legendre") -> EnergyGrid:
    """Build a quadrature grid with ``n`` nodes on [a, b].

    ``composite-midpoint`` uses equal panels; ``gauss-legendre`` is exact for
    polynomials of degree <= 2n - 1.  Rejects n < 8 and b <= a.
    """
    if b <= a:
        raise ConfigurationError(f"need b > a, got a={a}, b={b}")
    if n < 8:
        raise ConfigurationError(f"need at least 8 nodes, got {n}")
    if scheme == "composite-midpoint":
        h = (b - a) / n
        nodes = a + h * (np.arange(n) + 0.5)
        weights = np.full(n, h)
    elif scheme == "gauss-legendre":
        x, w = np.polynomial.legendre.leggauss(n)
        nodes = 0.5 * (b - a) * x + 0.5 * (a + b)
        weights = 0.5 * (b - a) * w
    else:
        raise ConfigurationError(f"unknown scheme {scheme!r}; use one of {SCHEMES}")
    return EnergyGrid(a, b, nodes, weights, scheme)


def build_line_grid(half_width: float = 8.0, count: int = 512) -> LineGrid:
    return LineGrid(half_width, count)


def rescale_energy(lam, a: float, b: float):
    """x = (1/2) log((lam - a)/(b - lam)); strictly increasing on (a, b)."""
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr <= a) or np.any(lam_arr >= b):
        raise DomainError(f"energy {lam!r} outside the open band ({a}, {b})")
    x = 0.5 * np.log((lam_arr - a) / (b - lam_arr))
    return float(x) if np.isscalar(lam) else x


def unrescale_energy(x, a: float, b: float):
    """Inverse of rescale_energy: lam(x) = a + (b - a) / (1 + e^(-2x))."""
    x_arr = np.asarray(x, dtype=float)
    lam = a + (b - a) / (1.0 + np.exp(-2.0 * x_arr))
    return float(lam) if np.isscalar(x) else lam


def interpolation_rows(nodes: np.ndarray, targets: np.ndarray,
                       npts: int = INTERP_POINTS):
    """Local Lagrange interpolation weights.

    For each target returns the first stencil index and the ``npts`` row
    weights such that  f(target) ~= sum_s weights[s] * f[start + s].
    Stencils are the ``npts`` consecutive nodes nearest the target (one-sided
    at the ends, extrapolating beyond the node range).
    """
    nodes = np.asarray(nodes, dtype=float)
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    n = nodes.size
    npts = min(npts, n)
    pos = np.searchsorted(nodes, targets)
    starts = np.clip(pos - npts // 2, 0, n - npts)
    rows = np.empty((targets.size, npts))
    for k, (t, s) in enumerate(zip(targets, starts)):
        xs = nodes[s:s + npts]
        diff = t - xs
        hit = np.argmin(np.abs(diff))
        if abs(diff[hit]) < 1e-14 * max(1.0, abs(t)):
            rows[k] = 0.0
            rows[k, hit] = 1.0
            continue
        # barycentric form of the Lagrange basis on the local stencil
        bw = np.empty(npts)
        for j in range(npts):
            bw[j] = 1.0 / np.prod(xs[j] - np.delete(xs, j))
        q = bw / diff
        rows[k] = q / q.sum()
    return starts, rows


def interpolation_matrix(nodes: np.ndarray, targets: np.ndarray,
                         npts: int = INTERP_POINTS) -> np.ndarray:
    """(len(targets), len(nodes)) dense matrix of interpolation weights."""
    starts, rows = interpolation_rows(nodes, targets, npts)
    out = np.zeros((len(np.atleast_1d(targets)), len(nodes)))
    for k, s in enumerate(starts):
        out[k, s:s + rows.shape[1]] = rows[k]
    return out


def _u_prefactor(grid: EnergyGrid) -> float:
    return np.sqrt(0.5 * grid.span)


def u_matrix(grid: EnergyGrid, line: LineGrid) -> np.ndarray:
    """Dense (Nx, N) matrix of the change of representation for one component."""
    lam_targets = unrescale_energy(line.nodes, grid.a, grid.b)
    interp = interpolation_matrix(grid.nodes, lam_targets)
    return _u_prefactor(grid) / np.cosh(line.nodes)[:, None] * interp


def uinv_matrix(line: LineGrid, grid: EnergyGrid) -> np.ndarray:
    """Dense (N, Nx) inverse-map matrix; zero rows where x(lambda) leaves the grid."""
    x_targets = rescale_energy(grid.nodes, grid.a, grid.b)
    interp = interpolation_matrix(line.nodes, x_targets)
    inside = np.abs(x_targets) <= line.half_width
    amp = _u_prefactor(grid) / np.sqrt((grid.nodes - grid.a) * (grid.b - grid.nodes))
    return np.where(inside[:, None], amp[:, None] * interp, 0.0)


def apply_U(f: GridFunction, target: LineGrid) -> GridFunction:
    """Map a band function to the rescaled-line representation."""
    if not isinstance(f.grid, EnergyGrid):
        raise ValueError("apply_U expects a function on an EnergyGrid")
    vals = u_matrix(f.grid, target) @ f.values
    return GridFunction(target, vals, f.dim)


def apply_Uinv(phi: GridFunction, target: EnergyGrid) -> GridFunction:
    """Map a line function back to the band; phi is taken as 0 outside [-L, L]."""
    if not isinstance(phi.grid, LineGrid):
        raise ValueError("apply_Uinv expects a function on a LineGrid")
    vals = uinv_matrix(phi.grid, target) @ phi.values
    return GridFunction(target, vals, phi.dim)


def gaussian_bump(center: float, sigma: float, dim: int = 1, component: int = 0,
                  amplitude: float = 1.0):
    """Closed-form Gaussian bump along one internal component."""
    e = np.zeros(dim, dtype=complex)
    e[component] = amplitude

    def f(lam):
        return e * np.exp(-0.5 * ((lam - center) / sigma) ** 2)

    return f


def panel_centers(a: float, b: float, count: int = 5, avoid=(),
                  sigma_rel: float | None = None):
    """Bump centers and width for a test panel on [a, b].

    Centers keep every bump's ~1e-6 tail level at least 0.05 (b - a) away
    from the band ends and from each energy in ``avoid``.
    """
    span = b - a
    if sigma_rel is None:
        sigma_rel = 0.03 if avoid else 0.045
    sigma = sigma_rel * span
    clearance = 0.05 * span + 5.3 * sigma  # Gaussian tail ~1e-6 of peak
    candidates = np.linspace(a + clearance, b - clearance, 8 * count + 1)
    centers = [c for c in candidates
               if all(abs(c - lam) >= clearance for lam in avoid)]
    if len(centers) < count:
        raise ConfigurationError(
            "cannot place the requested test panel away from the avoided energies")
    picks = [centers[int(round(t * (len(centers) - 1)))]
             for t in np.linspace(0.0, 1.0, count)]
    return picks, sigma


def bump_panel(grid: EnergyGrid, dim: int = 1, count: int = 5,
               avoid=(), sigma_rel: float | None = None) -> list[GridFunction]:
    """Panel of smooth test bumps for operator comparisons.

    ``count`` Gaussian bumps at distinct centers, alternating internal-space
    components, with tails below ~1e-6 of peak at 0.05 (b - a) from the band
    ends and from every energy in ``avoid`` (embedded eigenvalues).  Used
    wherever an identity only holds on functions vanishing near the band
    edges and the singular energies.
    """
    picks, sigma = panel_centers(grid.a, grid.b, count, avoid, sigma_rel)
    panel = []
    for k, c in enumerate(picks):
        f = gaussian_bump(c, sigma, dim=dim, component=k % dim)
        panel.append(GridFunction.sample(grid, f, dim))
    return panel


def line_panel(a: float, b: float, line: LineGrid, dim: int = 1,
               count: int = 5, avoid=(),
               sigma_rel: float | None = None) -> list[GridFunction]:
    """The same test panel mapped to the line in closed form.

    Evaluates sqrt((b-a)/2) sech(x) f(lambda(x)) analytically at the line
    nodes, so the images carry no interpolation roughness; this is the right
    input for spectral-accuracy cross-checks of line-grid operators.
    """
    picks, sigma = panel_centers(a, b, count, avoid, sigma_rel)
    pref = np.sqrt(0.5 * (b - a))
    lam = unrescale_energy(line.nodes, a, b)
    sech = 1.0 / np.cosh(line.nodes)
    panel = []
    for k, c in enumerate(picks):
        f = gaussian_bump(c, sigma, dim=dim, component=k % dim)
        vals = pref * sech[:, None] * np.asarray([f(x) for x in lam])
        panel.append(GridFunction(line, vals, dim))
    return panel
