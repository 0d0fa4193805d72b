"""Crank-Nicolson finite-difference beam propagation.

Fields are slowly varying envelopes relative to the carrier
``exp(-i k0 n0 z)``; a guided mode with propagation constant ``beta``
therefore picks up ``exp(-i (beta - k0 n0) z)`` along a straight guide, and
TE1 advances in phase relative to TE0 by ``(beta0 - beta1) z``.

Layouts are duck-typed: anything with ``total_length``, ``z_start`` and
``index_chunk(z, x) -> (n_linear, n2)`` can be propagated.  ``n2`` may be
``None`` for a purely linear chunk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import _kernels
from .errors import ConfigError, GridMismatch, NonFiniteField
from .modes import Grid, power

CHUNK = 256


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    amplitudes: np.ndarray
    z: float = 0.0
    vacuum_wavelength: float = 1.55
    reference_index: float = 1.455

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.grid.n_points,):
            raise GridMismatch(f"amplitudes shape {amps.shape} != ({self.grid.n_points},)")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def k0(self) -> float:
        return 2 * math.pi / self.vacuum_wavelength

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def replace(self, amplitudes: np.ndarray, z: float) -> "ScalarField":
        return ScalarField(self.grid, amplitudes, z, self.vacuum_wavelength, self.reference_index)


@dataclass(frozen=True)
class PropagationParams:
    dz: float = 0.5
    absorber_width: float = 10.0
    absorber_strength: float = 0.05  # peak of -Im(n^2)
    scheme_weight: float = 0.5
    kerr_iterations: int = 2
    max_dz: float = 1.0

    def __post_init__(self):
        if not self.dz > 0:
            raise ConfigError("dz must be positive")
        if self.dz > self.max_dz:
            raise ConfigError(f"dz = {self.dz} exceeds the accuracy guard max_dz = {self.max_dz}")
        if not 0.0 <= self.scheme_weight <= 1.0:
            raise ConfigError("scheme_weight must lie in [0, 1]")
        if self.kerr_iterations < 1:
            raise ConfigError("kerr_iterations must be >= 1")
        if self.absorber_width < 0 or self.absorber_strength < 0:
            raise ConfigError("absorber width and strength must be nonnegative")


@dataclass(frozen=True)
class IndexSlice:
    """Index profile of one z-slice; ``kerr_coefficient`` is scalar or per-point."""

    linear_index: np.ndarray
    kerr_coefficient: np.ndarray | float = 0.0

    def __post_init__(self):
        n = np.asarray(self.linear_index, dtype=float)
        if np.any(n < 1.0):
            raise ConfigError("linear index must be >= 1")
        if np.any(np.asarray(self.kerr_coefficient) < 0):
            raise ConfigError("kerr coefficient must be >= 0")
        object.__setattr__(self, "linear_index", n)


@dataclass
class Trajectory:
    z: np.ndarray
    intensity: np.ndarray  # (n_records, n_points)
    field: ScalarField
    power: np.ndarray = dc_field(default_factory=lambda: np.zeros(0))

    @property
    def absorbed_power(self) -> np.ndarray:
        """Power lost since the first record (absorber plus any leakage)."""
        return self.power[0] - self.power


def total_power(field) -> float:
    if isinstance(field, ScalarField):
        return power(field.amplitudes, field.grid)
    raise TypeError("total_power expects a ScalarField")


def absorber_profile(grid: Grid, params: PropagationParams) -> np.ndarray:
    """Quadratic ramp of ``-Im(n^2)`` inside ``absorber_width`` of each edge."""
    x = grid.x
    w = params.absorber_width
    if w <= 0 or params.absorber_strength == 0:
        return np.zeros_like(x)
    depth = np.maximum(np.maximum(grid.x_min + w - x, x - (grid.x_max - w)), 0.0)
    return params.absorber_strength * (depth / w) ** 2


def _check_finite(e: np.ndarray, z: float):
    if not np.all(np.isfinite(e)):
        raise NonFiniteField(f"non-finite field at z = {z:.3f} um")


def _march(e, nlin, n2, sigma, k0, n0, dz, h, params):
    """Advance ``e`` (nb, nx) in place through one chunk of slices."""
    if n2 is None or not np.any(n2):
        v = (k0 * k0) * (nlin * nlin - n0 * n0) - 1j * (k0 * k0) * sigma
        _kernels.march_linear(e, np.ascontiguousarray(v), dz, k0 * n0, h, params.scheme_weight)
    else:
        _kernels.march_kerr(
            e,
            np.ascontiguousarray(nlin, dtype=float),
            np.ascontiguousarray(n2, dtype=float),
            sigma,
            k0,
            n0,
            dz,
            h,
            params.scheme_weight,
            params.kerr_iterations,
        )


def step(field: ScalarField, slice: IndexSlice, params: PropagationParams) -> ScalarField:
    """One Crank-Nicolson step of length ``params.dz`` through ``slice``."""
    n = slice.linear_index
    if n.shape != (field.grid.n_points,):
        raise GridMismatch("index slice does not match the field grid")
    n2 = np.broadcast_to(np.asarray(slice.kerr_coefficient, dtype=float), n.shape)
    e = field.amplitudes.copy()[None, :]
    sigma = absorber_profile(field.grid, params)
    _march(e, n[None, :], n2[None, :], sigma, field.k0, field.reference_index,
           params.dz, field.grid.spacing, params)
    _check_finite(e, field.z + params.dz)
    return field.replace(e[0], field.z + params.dz)


def _step_plan(length: float, dz: float) -> tuple[int, float]:
    if length <= 0:
        return 0, dz
    n = max(1, math.ceil(length / dz - 1e-9))
    return n, length / n


def march_batch(
    amplitudes: np.ndarray,
    grid: Grid,
    layout,
    params: PropagationParams,
    z0: float,
    z1: float,
    wavelength: float = 1.55,
    reference_index: float = 1.455,
) -> np.ndarray:
    """Propagate a batch of fields (rows of ``amplitudes``) from ``z0`` to ``z1``.

    ``grid`` may be any window of the layout's transverse extent; the layout
    is sampled on ``grid.x`` directly.  Returns a new array.
    """
    e = np.array(amplitudes, dtype=complex, ndmin=2, copy=True)
    if e.shape[1] != grid.n_points:
        raise GridMismatch("batch width does not match grid")
    n_steps, dz = _step_plan(z1 - z0, params.dz)
    k0 = 2 * math.pi / wavelength
    sigma = absorber_profile(grid, params)
    x = grid.x
    done = 0
    while done < n_steps:
        k = min(CHUNK, n_steps - done)
        zm = z0 + (done + 0.5 + np.arange(k)) * dz
        nlin, n2 = layout.index_chunk(zm, x)
        _march(e, nlin, n2, sigma, k0, reference_index, dz, grid.spacing, params)
        done += k
        _check_finite(e, z0 + done * dz)
    return e


def propagate(field: ScalarField, layout, params: PropagationParams, record_every: int = 0) -> Trajectory:
    """March ``field`` through the whole layout.

    Intensity snapshots are stored every ``record_every`` steps (0 keeps
    only the input and output).
    """
    z_start = getattr(layout, "z_start", 0.0)
    if abs(field.z - z_start) > 1e-9:
        raise ConfigError(f"field at z = {field.z} but layout starts at {z_start}")
    n_steps, dz = _step_plan(layout.total_length, params.dz)
    k0 = field.k0
    n0 = field.reference_index
    sigma = absorber_profile(field.grid, params)
    x = field.grid.x
    e = field.amplitudes.copy()[None, :]
    zs = [field.z]
    snaps = [np.abs(e[0]) ** 2]
    powers = [power(e[0], field.grid)]
    done = 0
    while done < n_steps:
        k = min(CHUNK, n_steps - done)
        if record_every:
            k = min(k, record_every - done % record_every)
        zm = z_start + (done + 0.5 + np.arange(k)) * dz
        nlin, n2 = layout.index_chunk(zm, x)
        _march(e, nlin, n2, sigma, k0, n0, dz, field.grid.spacing, params)
        done += k
        _check_finite(e, z_start + done * dz)
        if (record_every and done % record_every == 0) or done == n_steps:
            zs.append(z_start + done * dz)
            snaps.append(np.abs(e[0]) ** 2)
            powers.append(power(e[0], field.grid))
    final = field.replace(e[0], z_start + n_steps * dz if n_steps else field.z)
    return Trajectory(np.array(zs), np.array(snaps), final, np.array(powers))


@dataclass(frozen=True)
class UniformLayout:
    """A z-invariant index map, handy for tests and straight guides."""

    linear_index: np.ndarray | None = None
    total_length: float = 0.0
    z_start: float = 0.0
    profile: object = None  # callable x -> n, used when linear_index is None

    def index_chunk(self, z, x):
        n = self.profile(x) if self.profile is not None else np.asarray(self.linear_index)
        if n.shape != x.shape:
            raise GridMismatch("uniform layout profile does not match grid")
        return np.broadcast_to(n, (len(z), len(x))), None
