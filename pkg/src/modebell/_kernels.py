"""Numba kernels for the Crank-Nicolson marching scheme.

All kernels advance the paraxial envelope equation

    2 i k0 n0 dE/dz = d2E/dx2 + V(x) E,    V = k0^2 (n^2 - n0^2) - i k0^2 sigma

on a uniform grid with zero (Dirichlet) edge values.  ``sigma`` is the
absorbing-layer profile.  Each kernel takes precomputed per-step arrays for a
chunk of steps so the Python loop only runs once per chunk.
"""

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def _thomas(lower, diag, upper, rhs, out, scratch):
    n = diag.shape[0]
    scratch[0] = upper / diag[0]
    out[0] = rhs[0] / diag[0]
    for j in range(1, n):
        m = diag[j] - lower * scratch[j - 1]
        scratch[j] = upper / m
        out[j] = (rhs[j] - lower * out[j - 1]) / m
    for j in range(n - 2, -1, -1):
        out[j] -= scratch[j] * out[j + 1]


@numba.njit(cache=True, nogil=True)
def _rhs(e, v, alpha, inv_h2, rhs):
    n = e.shape[0]
    for j in range(n):
        left = e[j - 1] if j > 0 else 0.0
        right = e[j + 1] if j < n - 1 else 0.0
        rhs[j] = e[j] + alpha * ((left - 2.0 * e[j] + right) * inv_h2 + v[j] * e[j])


@numba.njit(cache=True, nogil=True)
def thomas_solve(lower, diag, upper, rhs):
    """Solve a tridiagonal system with constant off-diagonals (test hook)."""
    out = np.empty_like(rhs)
    scratch = np.empty_like(rhs)
    _thomas(lower, diag, upper, rhs, out, scratch)
    return out


@numba.njit(cache=True, nogil=True)
def march_linear(e, v_steps, dz, k0n0, h, weight):
    """Advance a batch ``e`` (nb, nx) through ``v_steps`` (ns, nx) in place.

    The matrix is shared by the whole batch, so it is factored once per step.
    """
    nb, nx = e.shape
    a = -1j * dz / (2.0 * k0n0)
    inv_h2 = 1.0 / (h * h)
    lower = -weight * a * inv_h2
    c = np.empty(nx, dtype=np.complex128)
    m = np.empty(nx, dtype=np.complex128)
    rhs = np.empty(nx, dtype=np.complex128)
    for s in range(v_steps.shape[0]):
        v = v_steps[s]
        # forward elimination coefficients, shared by all rows
        m[0] = 1.0 - weight * a * (-2.0 * inv_h2 + v[0])
        c[0] = lower / m[0]
        for j in range(1, nx):
            m[j] = 1.0 - weight * a * (-2.0 * inv_h2 + v[j]) - lower * c[j - 1]
            c[j] = lower / m[j]
        for b in range(nb):
            _rhs(e[b], v, (1.0 - weight) * a, inv_h2, rhs)
            row = e[b]
            row[0] = rhs[0] / m[0]
            for j in range(1, nx):
                row[j] = (rhs[j] - lower * row[j - 1]) / m[j]
            for j in range(nx - 2, -1, -1):
                row[j] -= c[j] * row[j + 1]


@numba.njit(cache=True, nogil=True)
def march_kerr(e, nlin_steps, n2_steps, sigma, k0, n0, dz, h, weight, iterations):
    """Advance a batch through Kerr steps: ``n = n_lin + n2 |E|^2``.

    Each step is solved ``iterations`` times; the first pass takes the
    intensity from the start of the step, later passes the average of the
    start intensity and the previous iterate.
    """
    nb, nx = e.shape
    k0n0 = k0 * n0
    a = -1j * dz / (2.0 * k0n0)
    inv_h2 = 1.0 / (h * h)
    lower = -weight * a * inv_h2
    k2 = k0 * k0
    v = np.empty(nx, dtype=np.complex128)
    diag = np.empty(nx, dtype=np.complex128)
    rhs = np.empty(nx, dtype=np.complex128)
    out = np.empty(nx, dtype=np.complex128)
    scratch = np.empty(nx, dtype=np.complex128)
    i0 = np.empty(nx)
    for s in range(nlin_steps.shape[0]):
        nlin = nlin_steps[s]
        n2 = n2_steps[s]
        for b in range(nb):
            row = e[b]
            for j in range(nx):
                i0[j] = row[j].real ** 2 + row[j].imag ** 2
            out[:] = row
            for it in range(iterations):
                for j in range(nx):
                    if it == 0:
                        inten = i0[j]
                    else:
                        inten = 0.5 * (i0[j] + out[j].real ** 2 + out[j].imag ** 2)
                    n = nlin[j] + n2[j] * inten
                    v[j] = k2 * (n * n - n0 * n0) - 1j * k2 * sigma[j]
                    diag[j] = 1.0 - weight * a * (-2.0 * inv_h2 + v[j])
                _rhs(row, v, (1.0 - weight) * a, inv_h2, rhs)
                _thomas(lower, diag, lower, rhs, out, scratch)
            row[:] = out
