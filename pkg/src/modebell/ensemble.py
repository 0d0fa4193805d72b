"""Ensemble over the random inter-field phase and normalized correlations.

A backend maps ``(config, lambdas, theta1 grid, theta2 grid)`` to the
intensity differences ``A[i, k] = A(theta1_i, lambda_k)`` and
``B[j, k] = B(theta2_j, lambda_k)``.  Because ``A`` only depends on ``theta1``
(and ``B`` on ``theta2``), a whole correlation surface costs one backend call.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .circuit import CircuitConfig
from .errors import ConfigError, DegenerateEnsemble
from .oracle import AnalyzerOperator, cnot_outputs, expect_correlation, state_for

DEGENERATE_RTOL = 1e-9


@dataclass(frozen=True)
class LambdaSequence:
    values: np.ndarray
    weights: np.ndarray
    source: str = "uniform-grid"
    seed: int | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if v.shape != w.shape or v.ndim != 1:
            raise ConfigError("values and weights must be 1-D arrays of equal length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.values)


def sample_lambda(n: int, mode: str = "uniform-grid", seed: int | None = None) -> LambdaSequence:
    """``uniform-grid``: ``2 pi k / n``; ``seeded-random``: ``n`` uniform draws."""
    if n < 2:
        raise ConfigError("need at least 2 lambda values")
    if mode == "uniform-grid":
        vals = 2 * np.pi * np.arange(n) / n
    elif mode == "seeded-random":
        if seed is None:
            raise ConfigError("seeded-random sampling needs a seed")
        vals = np.random.default_rng(seed).uniform(0.0, 2 * np.pi, n)
    else:
        raise ConfigError(f"unknown lambda sampling mode {mode!r}")
    return LambdaSequence(vals, np.full(n, 1.0 / n), mode, seed)


@dataclass(frozen=True)
class EnsembleSample:
    lam: float
    A: float
    B: float
    weight: float = 1.0


@dataclass
class CorrelationSurface:
    theta1_grid: np.ndarray
    theta2_grid: np.ndarray
    S: np.ndarray  # NaN marks a missing (degenerate) cell
    state_kind: str = ""
    evaluator: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.theta1_grid = np.asarray(self.theta1_grid, dtype=float)
        self.theta2_grid = np.asarray(self.theta2_grid, dtype=float)
        self.S = np.asarray(self.S, dtype=float)
        if self.S.shape != (len(self.theta1_grid), len(self.theta2_grid)):
            raise ValueError("surface shape does not match its angle grids")

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.S)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["theta1", "theta2", "S"])
            for i, t1 in enumerate(self.theta1_grid):
                for j, t2 in enumerate(self.theta2_grid):
                    s = self.S[i, j]
                    w.writerow([repr(float(t1)), repr(float(t2)), "" if np.isnan(s) else repr(float(s))])


# ----------------------------------------------------------------------
# correlation


def _rms(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    acc = np.zeros(values.shape[:-1])
    for k in range(values.shape[-1]):
        acc = acc + weights[k] * values[..., k] ** 2
    return np.sqrt(acc)


def normalized_correlation(samples, scale: float = 1.0) -> float:
    """Weighted ``sum w A' B'`` with ``A' = A / rms_w(A)``, ``B' = B / rms_w(B)``.

    Samples are reduced in ascending-lambda order so the result does not
    depend on the order they are supplied in.  ``scale`` is the power scale
    below which an RMS counts as zero (relative tolerance 1e-9).
    """
    samples = sorted(samples, key=lambda s: (s.lam, s.A, s.B))
    if not samples:
        raise DegenerateEnsemble("empty sample list")
    a = np.array([s.A for s in samples])
    b = np.array([s.B for s in samples])
    w = np.array([s.weight for s in samples], dtype=float)
    w = w / w.sum()
    ra, rb = _rms(a, w), _rms(b, w)
    if ra <= DEGENERATE_RTOL * scale or rb <= DEGENERATE_RTOL * scale:
        raise DegenerateEnsemble(f"vanishing rms (A: {ra:.3e}, B: {rb:.3e})")
    s = 0.0
    for k in range(len(a)):
        s += w[k] * (a[k] / ra) * (b[k] / rb)
    return float(s)


def surface_from_samples(A: np.ndarray, B: np.ndarray, lambdas: LambdaSequence, scale: float = 1.0):
    """Vectorized normalized correlation for every ``(theta1, theta2)`` pair.

    Returns ``S`` with NaN where either RMS vanishes.
    """
    order = np.argsort(lambdas.values, kind="stable")
    w = lambdas.weights[order]
    A = np.asarray(A, dtype=float)[:, order]
    B = np.asarray(B, dtype=float)[:, order]
    ra, rb = _rms(A, w), _rms(B, w)
    bad_a = ra <= DEGENERATE_RTOL * scale
    bad_b = rb <= DEGENERATE_RTOL * scale
    an = A / np.where(bad_a, 1.0, ra)[:, None]
    bn = B / np.where(bad_b, 1.0, rb)[:, None]
    S = np.zeros((A.shape[0], B.shape[0]))
    for k in range(A.shape[1]):
        S += w[k] * np.outer(an[:, k], bn[:, k])
    S[bad_a, :] = np.nan
    S[:, bad_b] = np.nan
    return S


# ----------------------------------------------------------------------
# backends


class CoupledModeBackend:
    """Lumped CNOT model plus ideal analyzers (``A = 2 Re(c0* c1 e^{2 i theta})``).

    The prepared control superposition carries the relative phase ``theta3``.
    """

    name = "coupled-mode"

    def __init__(self, kappa_pi: float = 2 * math.pi):
        self.kappa_pi = kappa_pi

    def outputs(self, config: CircuitConfig, lams, common_phase: float = 0.0):
        c = np.array(config.control_coefficients(), dtype=complex)
        c[1] *= np.exp(1j * config.theta3)
        t = np.array(config.target_coefficients(), dtype=complex)
        lams = np.asarray(lams, dtype=float)
        g = np.exp(1j * common_phase)
        if config.is_product and config.product_route == "bypass":
            ph = np.exp(1j * lams)
            one = np.ones_like(ph)
            return c[0] * ph * g, c[1] * ph * g, t[0] * one * g, t[1] * one * g
        kappa = 0.0 if config.is_product else config.kerr_strength
        c0, c1, t0, t1 = cnot_outputs(c, t, lams, kappa, self.kappa_pi)
        return c0 * g, c1 * g, t0 * g, t1 * g

    def measure(self, config: CircuitConfig, lams, theta1s, theta2s, common_phase: float = 0.0):
        c0, c1, t0, t1 = self.outputs(config, lams, common_phase)
        e1 = np.exp(2j * np.asarray(theta1s, dtype=float))[:, None]
        e2 = np.exp(2j * np.asarray(theta2s, dtype=float))[:, None]
        A = 2 * (np.conj(c0)[None, :] * c1[None, :] * e1).real
        B = 2 * (np.conj(t0)[None, :] * t1[None, :] * e2).real
        power_c = np.abs(c0) ** 2 + np.abs(c1) ** 2
        power_t = np.abs(t0) ** 2 + np.abs(t1) ** 2
        return A, B, {"power_c": power_c, "power_t": power_t}


def make_backend(name: str, **kw):
    if name in ("coupled-mode", "coupled_mode", "cm"):
        return CoupledModeBackend(**kw)
    if name == "bpm":
        from .pipeline import BpmBackend

        return BpmBackend(**kw)
    if name == "oracle":
        return "oracle"
    raise ConfigError(f"unknown backend {name!r}")


def _backend(backend):
    return make_backend(backend) if isinstance(backend, str) else backend


def measure_ab(backend, config: CircuitConfig, lam: float, common_phase: float = 0.0) -> EnsembleSample:
    """One ensemble member at the config's analyzer settings."""
    be = _backend(backend)
    A, B, _ = be.measure(config, [lam], [config.theta1], [config.theta2], common_phase)
    return EnsembleSample(float(lam), float(A[0, 0]), float(B[0, 0]))


def angle_grid(step: float = math.pi / 40, period: float = math.pi) -> np.ndarray:
    n = int(round(period / step))
    if abs(n * step - period) > 1e-9 * period:
        raise ConfigError("angle step must divide pi")
    return step * np.arange(n)


def correlation_surface(backend, config: CircuitConfig, theta1_grid, theta2_grid,
                        lambdas: LambdaSequence | None = None) -> CorrelationSurface:
    """``S(theta1, theta2)`` for every grid pair; degenerate cells are NaN.

    ``backend="oracle"`` evaluates the exact two-mode expectation instead of
    an ensemble.
    """
    t1 = np.asarray(theta1_grid, dtype=float)
    t2 = np.asarray(theta2_grid, dtype=float)
    if t1.size == 0 or t2.size == 0:
        raise ConfigError("angle grids must be nonempty")
    be = _backend(backend)
    if be == "oracle":
        st = state_for(config.state_kind)

        def ev(a, b):
            return expect_correlation(st, np.asarray(a)[:, None], np.asarray(b)[None, :])

        return CorrelationSurface(t1, t2, ev(t1, t2), config.state_kind, ev)
    lambdas = lambdas or sample_lambda(64)

    def ev(a, b):
        A, B, _ = be.measure(config, lambdas.values, a, b)
        return surface_from_samples(A, B, lambdas)

    return CorrelationSurface(t1, t2, ev(t1, t2), config.state_kind, ev)


def analyzer_expectations(theta, c0, c1):
    """Ideal analyzer outputs for arrays of amplitudes (helper for sweeps)."""
    return AnalyzerOperator(theta).expect(c0, c1)


def with_theta(config: CircuitConfig, theta1=None, theta2=None) -> CircuitConfig:
    kw = {}
    if theta1 is not None:
        kw["theta1"] = theta1
    if theta2 is not None:
        kw["theta2"] = theta2
    return replace(config, **kw)
