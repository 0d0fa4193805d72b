"""Guided TE modes of symmetric slab waveguides.

Two solvers live here:

* :func:`solve_te_modes` -- the analytic three-layer slab, roots of the
  transcendental dispersion relation found by bracketing and bisection.
* :func:`fd_modes` -- eigenvectors of the discretized transverse operator for
  an arbitrary index profile.  These are the exact eigenmodes of the BPM
  discretization and are what the device calibrations use.

Lengths are in micrometres, propagation constants in rad/um.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ConfigError, GridMismatch, GridTooCoarse, NoGuidedMode, SingleMode

N_BRACKETS = 200
NEFF_TOL = 1e-12
NORM_TOL = 1e-6


@dataclass(frozen=True)
class Grid:
    """Uniform transverse grid ``x_min .. x_max`` (inclusive)."""

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 3:
            raise ConfigError(f"grid needs at least 3 points, got {self.n_points}")
        if not self.x_max > self.x_min:
            raise ConfigError("grid x_max must exceed x_min")

    @classmethod
    def from_spacing(cls, x_min: float, x_max: float, dx: float) -> "Grid":
        n = int(round((x_max - x_min) / dx)) + 1
        return cls(x_min, x_min + (n - 1) * dx, n)

    @property
    def spacing(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @cached_property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    def window(self, lo: float, hi: float) -> tuple["Grid", slice]:
        """Sub-grid covering ``[lo, hi]`` on the same lattice, and its slice."""
        i0 = max(0, int(np.floor((lo - self.x_min) / self.spacing + 1e-9)))
        i1 = min(self.n_points - 1, int(np.ceil((hi - self.x_min) / self.spacing - 1e-9)))
        x = self.x
        return Grid(float(x[i0]), float(x[i1]), i1 - i0 + 1), slice(i0, i1 + 1)

    def compatible(self, other: "Grid") -> bool:
        return (
            self.n_points == other.n_points
            and abs(self.x_min - other.x_min) < 1e-9
            and abs(self.x_max - other.x_max) < 1e-9
        )


def inner(f: np.ndarray, g: np.ndarray, grid: Grid) -> complex:
    """Trapezoidal ``<f, g> = int conj(f) g dx``."""
    return complex(np.trapezoid(np.conj(f) * g, dx=grid.spacing))


def power(f: np.ndarray, grid: Grid) -> float:
    return float(np.trapezoid(np.abs(f) ** 2, dx=grid.spacing))


@dataclass(frozen=True)
class SlabSpec:
    core_index: float = 1.46
    clad_index: float = 1.45
    core_width: float = 8.0
    wavelength: float = 1.55

    def __post_init__(self):
        if self.clad_index <= 0 or self.core_width <= 0 or self.wavelength <= 0:
            raise ConfigError("indices, width and wavelength must be positive")
        if self.core_index < self.clad_index:
            raise ConfigError("core index must not be below cladding index")

    @property
    def k0(self) -> float:
        return 2 * np.pi / self.wavelength

    @property
    def numerical_aperture(self) -> float:
        return float(np.sqrt(self.core_index**2 - self.clad_index**2))

    @property
    def v_number(self) -> float:
        """Normalized frequency ``k0 * (w/2) * NA``; TE1 is guided above pi/2."""
        return self.k0 * self.core_width / 2 * self.numerical_aperture


@dataclass(frozen=True)
class ModeBasis:
    betas: np.ndarray
    profiles: np.ndarray  # (n_modes, n_points), real
    grid: Grid
    spec: SlabSpec | None = None
    center: float = 0.0

    @property
    def n_modes(self) -> int:
        return len(self.betas)

    @property
    def neffs(self) -> np.ndarray:
        k0 = self.spec.k0 if self.spec is not None else None
        if k0 is None:
            raise ValueError("basis has no SlabSpec; effective indices undefined")
        return np.asarray(self.betas) / k0

    def superpose(self, coefficients) -> np.ndarray:
        c = np.asarray(coefficients, dtype=complex)
        return c @ self.profiles[: len(c)]


@dataclass(frozen=True)
class ModalAmplitudes:
    c0: complex
    c1: complex
    residual_power: float = 0.0

    def __post_init__(self):
        if self.residual_power < 0:
            raise ValueError("residual_power must be nonnegative")

    @property
    def guided_power(self) -> float:
        return abs(self.c0) ** 2 + abs(self.c1) ** 2

    @property
    def total_power(self) -> float:
        return self.guided_power + self.residual_power

    def as_array(self) -> np.ndarray:
        return np.array([self.c0, self.c1], dtype=complex)


def dispersion(spec: SlabSpec, n_eff, parity: int):
    """Pole-free TE dispersion function, normalized by ``k0 * NA``.

    ``parity`` 0 gives the even family (``gamma cos - kappa sin``), 1 the odd
    family (``gamma sin + kappa cos``).  Guided modes are the zeros inside
    ``(clad_index, core_index)``.
    """
    n_eff = np.asarray(n_eff, dtype=float)
    k0, a = spec.k0, spec.core_width / 2
    kap = k0 * np.sqrt(np.clip(spec.core_index**2 - n_eff**2, 0.0, None))
    gam = k0 * np.sqrt(np.clip(n_eff**2 - spec.clad_index**2, 0.0, None))
    scale = k0 * spec.numerical_aperture if spec.core_index > spec.clad_index else k0
    if parity == 0:
        d = gam * np.cos(kap * a) - kap * np.sin(kap * a)
    else:
        d = gam * np.sin(kap * a) + kap * np.cos(kap * a)
    return d / scale


def _bisect(f, lo: float, hi: float, tol: float = NEFF_TOL) -> float:
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol or mid in (lo, hi):
            break
        fm = f(mid)
        if fm == 0.0:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def find_neffs(spec: SlabSpec) -> list[tuple[float, int]]:
    """All guided ``(n_eff, parity)`` pairs, highest index first."""
    n1, n2 = spec.core_index, spec.clad_index
    if not n1 > n2:
        return []
    span = n1 - n2
    # near-endpoint samples catch roots just above cutoff
    t = np.concatenate([[1e-13, 1e-9], np.linspace(0, 1, N_BRACKETS + 1)[1:-1], [1 - 1e-9]])
    samples = n2 + span * t
    roots = []
    for parity in (0, 1):
        d = dispersion(spec, samples, parity)
        for i in np.nonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)[0]:
            root = _bisect(lambda n: float(dispersion(spec, n, parity)), samples[i], samples[i + 1])
            roots.append((root, parity))
    roots.sort(key=lambda r: -r[0])
    return roots


def slab_profile(spec: SlabSpec, n_eff: float, parity: int, x: np.ndarray) -> np.ndarray:
    """Unnormalized analytic profile centered on ``x = 0``."""
    k0, a = spec.k0, spec.core_width / 2
    kap = k0 * np.sqrt(spec.core_index**2 - n_eff**2)
    gam = k0 * np.sqrt(n_eff**2 - spec.clad_index**2)
    inside = np.abs(x) <= a
    tail = np.exp(-gam * (np.abs(x) - a))
    if parity == 0:
        return np.where(inside, np.cos(kap * x), np.cos(kap * a) * tail)
    return np.where(inside, np.sin(kap * x), np.sign(x) * np.sin(kap * a) * tail)


def _analytic_norm(spec: SlabSpec, n_eff: float, parity: int) -> float:
    k0, a = spec.k0, spec.core_width / 2
    kap = k0 * np.sqrt(spec.core_index**2 - n_eff**2)
    gam = k0 * np.sqrt(n_eff**2 - spec.clad_index**2)
    s = 1.0 if parity == 0 else -1.0
    edge = np.cos(kap * a) ** 2 if parity == 0 else np.sin(kap * a) ** 2
    return a + s * np.sin(2 * kap * a) / (2 * kap) + edge / gam


def solve_te_modes(spec: SlabSpec, grid: Grid, max_modes: int = 2, center: float = 0.0) -> ModeBasis:
    """Guided TE modes of ``spec`` sampled on ``grid``, guide axis at ``center``.

    Raises:
        NoGuidedMode: the slab guides nothing.
        GridTooCoarse: trapezoidal norm of a profile deviates from the
            analytic norm by more than 1e-6 (relative).
    """
    a = spec.core_width / 2
    if center - a - 5.0 < grid.x_min or center + a + 5.0 > grid.x_max:
        raise ConfigError("grid must extend at least 5 um beyond each core edge")
    roots = find_neffs(spec)[:max_modes]
    if not roots:
        raise NoGuidedMode(f"no guided TE mode (V = {spec.v_number:.4f})")
    x = grid.x - center
    profiles = []
    for n_eff, parity in roots:
        psi = slab_profile(spec, n_eff, parity, x)
        norm = power(psi, grid)
        exact = _analytic_norm(spec, n_eff, parity)
        if abs(norm - exact) / exact > NORM_TOL:
            raise GridTooCoarse(
                f"TE{len(profiles)} normalization error {abs(norm - exact) / exact:.2e} > {NORM_TOL:g}"
            )
        profiles.append(psi / np.sqrt(norm))
    betas = np.array([spec.k0 * r[0] for r in roots])
    return ModeBasis(betas=betas, profiles=np.array(profiles), grid=grid, spec=spec, center=center)


def decompose(field, basis: ModeBasis) -> ModalAmplitudes:
    """Project a field onto the first two modes of ``basis``.

    ``field`` is a ``ScalarField`` or a bare complex array on ``basis.grid``.
    """
    if hasattr(field, "amplitudes"):
        if not field.grid.compatible(basis.grid):
            raise GridMismatch("field and basis live on different grids")
        amps = field.amplitudes
    else:
        amps = np.asarray(field)
        if amps.shape != (basis.grid.n_points,):
            raise GridMismatch(f"field length {amps.shape} != grid size {basis.grid.n_points}")
    grid = basis.grid
    cs = [inner(basis.profiles[m], amps, grid) for m in range(min(2, basis.n_modes))]
    while len(cs) < 2:
        cs.append(0j)
    residual = power(amps, grid) - abs(cs[0]) ** 2 - abs(cs[1]) ** 2
    if residual < -1e-9:
        raise GridTooCoarse(f"negative residual power {residual:.3e}; basis not orthonormal on grid")
    return ModalAmplitudes(cs[0], cs[1], max(residual, 0.0))


def beat_length(basis: ModeBasis) -> float:
    """``2 pi / (beta0 - beta1)``."""
    if basis.n_modes < 2:
        raise SingleMode("beat length needs two guided modes")
    d = float(basis.betas[0] - basis.betas[1])
    if d == 0.0:
        raise SingleMode("degenerate propagation constants")
    return 2 * np.pi / d


def fd_modes(n_profile: np.ndarray, grid: Grid, wavelength: float, n_modes: int = 2,
             n_floor: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Eigenmodes of the discrete operator ``d2/dx2 + k0^2 n(x)^2``.

    Dirichlet edges, same stencil as the propagator.  Only modes with
    ``beta > k0 * n_floor`` are returned (default: the profile minimum).
    Profiles are normalized and sign-fixed so their largest lobe is positive.

    Returns:
        ``(betas, profiles)`` with betas descending.
    """
    k0 = 2 * np.pi / wavelength
    n_profile = np.asarray(n_profile, dtype=float)
    h = grid.spacing
    n_floor = float(n_profile.min()) if n_floor is None else n_floor
    diag = -2.0 / h**2 + k0**2 * n_profile**2
    off = np.full(grid.n_points - 1, 1.0 / h**2)
    lo = (k0 * n_floor) ** 2
    hi = float(diag.max()) + 4.0 / h**2
    w, v = eigh_tridiagonal(diag, off, select="v", select_range=(lo, hi))
    order = np.argsort(w)[::-1][:n_modes]
    if len(order) == 0:
        raise NoGuidedMode("profile guides no mode above the floor index")
    betas = np.sqrt(w[order])
    prof = v[:, order].T / np.sqrt(h)
    for p in prof:
        if p[np.argmax(np.abs(p))] < 0:
            p *= -1
    return betas, prof
