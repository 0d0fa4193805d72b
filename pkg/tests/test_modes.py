import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import brentq

from modebell.errors import ConfigError, GridMismatch, GridTooCoarse, NoGuidedMode, SingleMode
from modebell.modes import (
    Grid,
    ModalAmplitudes,
    SlabSpec,
    beat_length,
    decompose,
    fd_modes,
    find_neffs,
    power,
    solve_te_modes,
)


def dense_scan_neffs(nc, ncl, width, wl, samples=1_000_000):
    """Independent oracle: sign changes of the pole-free TE relations
    ``u sin u - w cos u`` (even) and ``u cos u + w sin u`` (odd) on a dense
    effective-index scan, each refined with brentq."""
    k0 = 2 * math.pi / wl
    a = width / 2

    def uw(n):
        return k0 * a * np.sqrt(nc**2 - n**2), k0 * a * np.sqrt(n**2 - ncl**2)

    def even(n):
        u, w = uw(n)
        return u * np.sin(u) - w * np.cos(u)

    def odd(n):
        u, w = uw(n)
        return u * np.cos(u) + w * np.sin(u)

    n = np.linspace(ncl, nc, samples)[1:-1]
    roots = []
    for f in (even, odd):
        v = f(n)
        for i in np.flatnonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0):
            roots.append(brentq(f, n[i], n[i + 1], xtol=1e-15, rtol=1e-15))
    return sorted(roots, reverse=True)


@pytest.mark.parametrize("width", [8.0, 4.0, 12.0, 20.0])
def test_neffs_match_dense_scan_oracle(width):
    spec = SlabSpec(1.46, 1.45, width, 1.55)
    ours = [n for n, _ in find_neffs(spec)]
    oracle = dense_scan_neffs(1.46, 1.45, width, 1.55)
    assert len(ours) == len(oracle)
    assert np.max(np.abs(np.array(ours) - np.array(oracle))) < 1e-8


def test_default_guide_has_two_modes_with_frozen_indices():
    # frozen from the dense-scan oracle above
    spec = SlabSpec()
    basis = solve_te_modes(spec, Grid.from_spacing(-30, 30, 0.05))
    assert basis.n_modes == 2
    assert basis.neffs == pytest.approx([1.458293, 1.453603], abs=2e-6)


def test_four_micron_guide_is_single_mode():
    spec = SlabSpec(1.46, 1.45, 4.0, 1.55)
    assert spec.v_number < math.pi / 2
    basis = solve_te_modes(spec, Grid.from_spacing(-30, 30, 0.05))
    assert basis.n_modes == 1
    with pytest.raises(SingleMode):
        beat_length(basis)


def test_mode_parity_and_orthonormality():
    g = Grid.from_spacing(-30, 30, 0.05)
    b = solve_te_modes(SlabSpec(), g)
    p0, p1 = b.profiles
    assert np.allclose(p0, p0[::-1], atol=1e-12)
    assert np.allclose(p1, -p1[::-1], atol=1e-12)
    gram = np.array([[np.trapezoid(a * c, dx=g.spacing) for c in b.profiles] for a in b.profiles])
    assert np.allclose(gram, np.eye(2), atol=1e-6)


def test_beat_length_value():
    b = solve_te_modes(SlabSpec(), Grid.from_spacing(-30, 30, 0.05))
    assert beat_length(b) == pytest.approx(2 * math.pi / (b.betas[0] - b.betas[1]))
    assert beat_length(b) == pytest.approx(330.43, rel=1e-3)


@given(st.complex_numbers(max_magnitude=3), st.complex_numbers(max_magnitude=3))
def test_decompose_round_trip(c0, c1):
    g = Grid.from_spacing(-30, 30, 0.05)
    b = solve_te_modes(SlabSpec(), g)
    amps = decompose(b.superpose([c0, c1]), b)
    assert isinstance(amps, ModalAmplitudes)
    assert abs(amps.c0 - c0) < 1e-6 * (1 + abs(c0)) and abs(amps.c1 - c1) < 1e-6 * (1 + abs(c1))
    assert amps.residual_power < 1e-6 * (1 + abs(c0) ** 2 + abs(c1) ** 2)


@given(st.floats(1.0, 30.0), st.floats(0.01, 5.0))
def test_neff_increases_with_width(w, dw):
    a = find_neffs(SlabSpec(1.46, 1.45, w, 1.55))[0][0]
    b = find_neffs(SlabSpec(1.46, 1.45, w + dw, 1.55))[0][0]
    assert 1.45 < a < b < 1.46


def test_mode_count_matches_v_number():
    for w in (2.0, 6.0, 10.0, 25.0):
        spec = SlabSpec(1.46, 1.45, w, 1.55)
        assert len(find_neffs(spec)) == math.ceil(spec.v_number / (math.pi / 2))


def test_errors():
    g = Grid.from_spacing(-30, 30, 0.05)
    with pytest.raises(NoGuidedMode):
        solve_te_modes(SlabSpec(1.45, 1.45, 8.0, 1.55), g)
    with pytest.raises(ConfigError):
        solve_te_modes(SlabSpec(), Grid.from_spacing(-6, 6, 0.05))
    with pytest.raises(GridTooCoarse):
        solve_te_modes(SlabSpec(), Grid.from_spacing(-30, 30, 2.0))
    with pytest.raises(ConfigError):
        SlabSpec(1.44, 1.45, 8.0, 1.55)
    with pytest.raises(GridMismatch):
        decompose(np.zeros(10), solve_te_modes(SlabSpec(), g))


def _subpixel_profile(g, half=4.0):
    h, x = g.spacing, g.x
    f = np.clip((np.minimum(x + h / 2, half) - np.maximum(x - h / 2, -half)) / h, 0, 1)
    return np.sqrt(1.45**2 + f * (1.46**2 - 1.45**2))


def test_fd_modes_agree_with_analytic():
    g = Grid.from_spacing(-30, 30, 0.05)
    betas, prof = fd_modes(_subpixel_profile(g), g, 1.55, 2)
    an = solve_te_modes(SlabSpec(), g)
    assert np.allclose(betas * 1.55 / (2 * math.pi), an.neffs, atol=2e-7)
    for k in range(2):
        assert abs(np.trapezoid(prof[k] * an.profiles[k], dx=g.spacing)) > 0.9999
    assert power(prof[0], g) == pytest.approx(1.0, abs=1e-9)


def test_fd_modes_converge_second_order():
    errs = []
    for dx in (0.05, 0.025):
        g = Grid.from_spacing(-30, 30, dx)
        betas, _ = fd_modes(_subpixel_profile(g), g, 1.55, 1)
        errs.append(abs(betas[0] * 1.55 / (2 * math.pi) - solve_te_modes(SlabSpec(), g).neffs[0]))
    assert 3.0 < errs[0] / errs[1] < 5.0
