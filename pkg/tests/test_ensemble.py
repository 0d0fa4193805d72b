import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from modebell.circuit import CircuitConfig
from modebell.ensemble import (
    CorrelationSurface,
    CoupledModeBackend,
    EnsembleSample,
    LambdaSequence,
    angle_grid,
    correlation_surface,
    make_backend,
    measure_ab,
    normalized_correlation,
    sample_lambda,
    surface_from_samples,
)
from modebell.errors import ConfigError, DegenerateEnsemble


def _samples(lam, a, b):
    return [EnsembleSample(float(l), float(x), float(y), 1 / len(lam)) for l, x, y in zip(lam, a, b)]


def test_uniform_grid_values_and_weights():
    s = sample_lambda(8)
    np.testing.assert_allclose(s.values, 2 * np.pi * np.arange(8) / 8)
    np.testing.assert_allclose(s.weights, 1 / 8)
    assert s.source == "uniform-grid" and s.seed is None


def test_seeded_random_is_reproducible():
    a = sample_lambda(64, "seeded-random", 5)
    b = sample_lambda(64, "seeded-random", 5)
    c = sample_lambda(64, "seeded-random", 6)
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert np.all((a.values >= 0) & (a.values < 2 * np.pi))


def test_sampling_errors():
    with pytest.raises(ConfigError):
        sample_lambda(1)
    with pytest.raises(ConfigError):
        sample_lambda(8, "seeded-random")
    with pytest.raises(ConfigError):
        sample_lambda(8, "sobol")
    with pytest.raises(ConfigError):
        LambdaSequence(np.zeros(3), np.full(3, 0.5))


def test_normalization_on_many_random_sets():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(10_000):
        n = int(rng.integers(2, 40))
        a = rng.normal(size=n) * rng.uniform(1e-3, 1e3)
        w = rng.uniform(0.1, 1, n)
        w /= w.sum()
        rms = math.sqrt(np.sum(w * a ** 2))
        worst = max(worst, abs(np.sum(w * (a / rms) ** 2) - 1))
        # the library routine on (A, A) is exactly this normalized second moment
        s = normalized_correlation([EnsembleSample(k, x, x, wk) for k, (x, wk) in enumerate(zip(a, w))])
        worst = max(worst, abs(s - 1))
    assert worst < 1e-12


def test_textbook_examples():
    lam = 2 * np.pi * np.arange(64) / 64
    assert normalized_correlation(_samples(lam, np.cos(lam), np.cos(lam))) == pytest.approx(1, abs=1e-12)
    assert normalized_correlation(_samples(lam, np.cos(lam), -np.cos(lam))) == pytest.approx(-1, abs=1e-12)
    assert normalized_correlation(_samples(lam, np.cos(lam), np.sin(lam))) == pytest.approx(0, abs=1e-12)
    assert normalized_correlation(_samples(lam, np.ones(64), -3 * np.ones(64))) == pytest.approx(-1, abs=1e-12)
    # cos(l) against cos(l - d) gives cos(d)
    assert normalized_correlation(_samples(lam, np.cos(lam), np.cos(lam - 0.7))) == pytest.approx(
        math.cos(0.7), abs=1e-12)


def test_degenerate_ensembles():
    lam = np.arange(4.0)
    with pytest.raises(DegenerateEnsemble):
        normalized_correlation(_samples(lam, np.zeros(4), np.ones(4)))
    with pytest.raises(DegenerateEnsemble):
        normalized_correlation([])
    seq = sample_lambda(4)
    S = surface_from_samples(np.array([[0.0] * 4, [1, 2, 3, 4]]), np.array([[1.0, -1, 1, -1]]), seq)
    assert np.isnan(S[0, 0]) and np.isfinite(S[1, 0])


finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(data=st.lists(st.tuples(st.floats(0, 6.28), finite, finite), min_size=2, max_size=30),
       perm_seed=st.integers(0, 2 ** 31))
def test_order_independence_and_bound(data, perm_seed):
    samples = [EnsembleSample(*d, 1.0) for d in data]
    try:
        s = normalized_correlation(samples)
    except DegenerateEnsemble:
        return
    perm = np.random.default_rng(perm_seed).permutation(len(samples))
    assert normalized_correlation([samples[i] for i in perm]) == s
    assert abs(s) <= 1 + 1e-12


@given(seed=st.integers(0, 10_000))
def test_surface_matches_scalar_routine(seed):
    rng = np.random.default_rng(seed)
    seq = sample_lambda(12, "seeded-random", seed)
    A, B = rng.normal(size=(3, 12)), rng.normal(size=(4, 12))
    S = surface_from_samples(A, B, seq)
    for i in range(3):
        for j in range(4):
            ref = normalized_correlation(
                [EnsembleSample(l, a, b, w) for l, a, b, w in zip(seq.values, A[i], B[j], seq.weights)])
            assert S[i, j] == pytest.approx(ref, abs=1e-12)


def test_surface_csv_roundtrip(tmp_path):
    s = CorrelationSurface([0.0, 1.0], [0.5], np.array([[0.25], [np.nan]]), "phi+")
    s.write_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines == ["theta1,theta2,S", "0.0,0.5,0.25", "1.0,0.5,"]
    with pytest.raises(ValueError):
        CorrelationSurface([0.0], [0.0, 1.0], np.zeros((2, 2)))


def test_angle_grid():
    g = angle_grid()
    assert len(g) == 40 and g[1] == pytest.approx(math.pi / 40)
    with pytest.raises(ConfigError):
        angle_grid(0.3)


def test_backend_factory():
    assert isinstance(make_backend("cm"), CoupledModeBackend)
    assert make_backend("oracle") == "oracle"
    with pytest.raises(ConfigError):
        make_backend("fdtd")


# ----------------------------------------------------------------------
# coupled-mode backend


@pytest.mark.parametrize("kind", ["phi+", "psi-"])
def test_global_phase_is_invisible(kind):
    be = CoupledModeBackend()
    cfg = CircuitConfig(state_kind=kind)
    lam = sample_lambda(32).values
    g = angle_grid(math.pi / 10)
    a0, b0, _ = be.measure(cfg, lam, g, g)
    a1, b1, _ = be.measure(cfg, lam, g, g, common_phase=1.234)
    np.testing.assert_allclose(a0, a1, atol=1e-12)
    np.testing.assert_allclose(b0, b1, atol=1e-12)


@pytest.mark.parametrize("route", ["bypass", "kerr-off"])
@pytest.mark.parametrize("kind", ["product++", "product+-", "product-+", "product--"])
def test_product_surfaces_factorize(kind, route):
    cfg = CircuitConfig(state_kind=kind, product_route=route)
    s = correlation_surface(CoupledModeBackend(), cfg, angle_grid(), angle_grid())
    m = np.where(np.isnan(s.S), 0.0, s.S)
    sv = np.linalg.svd(m, compute_uv=False)
    assert sv[1] < 1e-9 * sv[0]


def test_surface_is_pi_periodic():
    g = np.arange(80) * math.pi / 40
    s = correlation_surface(CoupledModeBackend(), CircuitConfig(), g, g)
    np.testing.assert_allclose(s.S[:40, :40], s.S[40:, 40:], atol=1e-12)
    np.testing.assert_allclose(s.S[:40, :40], s.S[:40, 40:], atol=1e-12)


def test_lambda_granularity_converged():
    g = angle_grid()
    cfg = CircuitConfig(kerr_strength=3.0)
    s64 = correlation_surface("cm", cfg, g, g, sample_lambda(64))
    s128 = correlation_surface("cm", cfg, g, g, sample_lambda(128))
    assert np.nanmax(np.abs(s64.S - s128.S)) < 0.01


def test_measure_ab_matches_surface_row():
    cfg = CircuitConfig(theta1=0.3, theta2=0.1)
    be = CoupledModeBackend()
    A, B, _ = be.measure(cfg, [0.4], [0.3], [0.1])
    s = measure_ab(be, cfg, 0.4)
    assert (s.A, s.B) == (A[0, 0], B[0, 0])


@pytest.mark.parametrize("kind", ["phi+", "phi-", "psi+", "psi-"])
def test_oracle_surface(kind):
    g = angle_grid(math.pi / 8)
    s = correlation_surface("oracle", CircuitConfig(state_kind=kind), g, g)
    sign = 1 if kind.endswith("+") else -1
    arg = g[:, None] + g[None, :] if kind.startswith("phi") else g[:, None] - g[None, :]
    np.testing.assert_allclose(s.S, sign * np.cos(2 * arg), atol=1e-12)
