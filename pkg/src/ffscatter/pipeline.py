"""Shared artifact construction with per-resolution caching.

Report suites (and the test suite) repeatedly need the same chain
grid -> tabulated kernel -> spectral data -> T-kernel -> scattering matrix ->
wave operators at several resolutions.  ``ArtifactStore`` memoizes each stage
per (kernel, resolution, scheme) so refinement studies pay for every solve
once.  Artifacts are immutable once built; the store is not thread-safe.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .fredholm import TKernel, build_T_kernel
from .grids import EnergyGrid, LineGrid, build_grid, build_line_grid, bump_panel
from .kernels import EmbeddedScenario, OperatorKernel, build_exp_well_kernel, \
    build_embedded_scenario_with_background, build_separable_kernel, \
    sin_bump, sin2_bump, poly_bump, zero_kernel, PROFILE_FAMILIES
from .smatrix import ScatteringData, scattering_matrix
from .spectral import DenseOperator, SpectralData, assemble_H, eigendecompose, \
    projection_P
from .waveops import assemble_K, assemble_Wminus_stationary, assemble_Wplus


def kernel_from_config(cfg) -> tuple:
    """(OperatorKernel, EmbeddedScenario or None) from a ScenarioConfig."""
    a, b, d = cfg.a, cfg.b, cfg.dim
    fam = cfg.kernel_family
    if fam == "zero":
        return zero_kernel(a, b, d), None
    if fam == "separable":
        profiles = []
        for spec_str in cfg.profiles:
            parts = spec_str.split(":")
            name = parts[0]
            if name not in PROFILE_FAMILIES:
                raise ConfigurationError(
                    f"unknown profile {name!r}; choose from "
                    f"{sorted(PROFILE_FAMILIES)}")
            mode = int(parts[1]) if len(parts) > 1 else 1
            comp = int(parts[2]) if len(parts) > 2 else 0
            amp = float(parts[3]) if len(parts) > 3 else 1.0
            maker = PROFILE_FAMILIES[name]
            kw = {"power": mode} if name == "poly-bump" else {"mode": mode}
            profiles.append(maker(a, b, dim=d, component=comp, amplitude=amp,
                                  **kw))
        return build_separable_kernel(profiles, cfg.coefficients), None
    if fam == "exp-well":
        return build_exp_well_kernel(a, b, dim=d, kappa=cfg.coefficients,
                                     amplitude=cfg.amplitude), None
    if fam == "embedded":
        scen = build_embedded_scenario_with_background(
            a, b, cfg.lambda_n, background_coupling=cfg.amplitude, dim=d)
        return scen.kernel, scen
    raise ConfigurationError(
        f"unknown kernel family {fam!r}; choose from "
        "zero, separable, exp-well, embedded")


@dataclass(eq=False)
class Artifacts:
    """Lazily built per-resolution objects for one kernel."""

    kernel: OperatorKernel
    grid: EnergyGrid
    scenario: EmbeddedScenario = None
    tol_embed: float = 1e-6
    _cache: dict = field(default_factory=dict, repr=False)

    def _get(self, key, maker):
        if key not in self._cache:
            self._cache[key] = maker()
        return self._cache[key]

    @property
    def hamiltonian(self) -> DenseOperator:
        return self._get("H", lambda: assemble_H(self.kernel, self.grid))

    @property
    def spectral(self) -> SpectralData:
        return self._get("spec", lambda: eigendecompose(
            self.hamiltonian, self.grid, tol_embed=self.tol_embed))

    @property
    def projector(self) -> DenseOperator:
        return self._get("P", lambda: projection_P(self.spectral))

    def tkernel(self, side: str = "plus") -> TKernel:
        def make():
            spec = self.spectral if self.scenario is not None else None
            return build_T_kernel(self.kernel, self.grid, side, spectral=spec)
        return self._get(("tk", side), make)

    @property
    def scattering(self) -> ScatteringData:
        return self._get("sd", lambda: scattering_matrix(self.tkernel("plus")))

    @property
    def wminus(self) -> np.ndarray:
        return self._get("Wm", lambda: assemble_Wminus_stationary(
            self.tkernel("plus"), self.grid))

    @property
    def wplus(self) -> np.ndarray:
        return self._get("Wp", lambda: assemble_Wplus(self.wminus,
                                                      self.scattering))

    @property
    def kop(self) -> np.ndarray:
        return self._get("K", lambda: assemble_K(self.tkernel("plus"),
                                                 self.grid))

    @property
    def embedded_energies(self) -> list:
        spec = self.spectral
        return [float(spec.eigenvalues[k]) for k in spec.embedded_set]

    def panel(self, count: int = 5):
        key = ("panel", count)
        avoid = tuple(self.embedded_energies) if self.scenario else ()
        return self._get(key, lambda: bump_panel(self.grid, self.kernel.dim,
                                                 count=count, avoid=avoid))


class ArtifactStore:
    """Memoized Artifacts per (kernel identity, n nodes, scheme)."""

    def __init__(self):
        self._items = {}
        self._lines = {}

    def get(self, kernel: OperatorKernel, n: int, scheme: str = "gauss-legendre",
            scenario: EmbeddedScenario = None, a: float = None,
            b: float = None) -> Artifacts:
        key = (id(kernel), n, scheme)
        if key not in self._items:
            grid = build_grid(kernel.a if a is None else a,
                              kernel.b if b is None else b, n, scheme)
            self._items[key] = Artifacts(kernel, grid, scenario=scenario)
        return self._items[key]

    def line(self, half_width: float, count: int) -> LineGrid:
        key = (half_width, count)
        if key not in self._lines:
            self._lines[key] = build_line_grid(half_width, count)
        return self._lines[key]
