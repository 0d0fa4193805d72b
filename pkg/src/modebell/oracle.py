"""Exact two-mode algebra and a lumped coupled-mode model of the CNOT.

Basis ordering for joint states is ``|c t>`` with index ``2 c + t``:
``{|00>, |01>, |10>, |11>}`` (control mode first).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .modes import ModalAmplitudes

SQ2 = math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class TwoModeState:
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex).reshape(4)
        norm = float(np.vdot(c, c).real)
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state norm {norm} differs from 1")
        object.__setattr__(self, "coefficients", c)

    def matrix(self) -> np.ndarray:
        """2x2 coefficient matrix, rows = control mode, cols = target mode."""
        return self.coefficients.reshape(2, 2)

    def schmidt_rank(self, tol: float = 1e-12) -> int:
        return int(np.sum(np.linalg.svd(self.matrix(), compute_uv=False) > tol))


@dataclass(frozen=True)
class AnalyzerOperator:
    theta: float

    @property
    def matrix(self) -> np.ndarray:
        e = np.exp(2j * self.theta)
        return np.array([[0, e], [np.conj(e), 0]], dtype=complex)

    def expect(self, c0: complex, c1: complex) -> float:
        """``<psi|A|psi>`` for the single-field state ``c0 |0> + c1 |1>``."""
        return float(2 * (np.conj(c0) * c1 * np.exp(2j * self.theta)).real)


_BELL = {
    "phi+": (1, 0, 0, 1),
    "phi-": (1, 0, 0, -1),
    "psi+": (0, 1, 1, 0),
    "psi-": (0, 1, -1, 0),
}


def make_entangled(kind: str) -> TwoModeState:
    try:
        v = _BELL[kind.lower()]
    except KeyError:
        raise ValueError(f"unknown entangled kind {kind!r}; expected one of {sorted(_BELL)}") from None
    return TwoModeState(np.array(v, dtype=complex) / SQ2)


def _sign(s) -> int:
    if s in (1, "+"):
        return 1
    if s in (-1, "-"):
        return -1
    raise ValueError(f"sign must be '+', '-', 1 or -1, got {s!r}")


def make_product(sign_c, sign_t) -> TwoModeState:
    c = np.array([1, _sign(sign_c)]) / SQ2
    t = np.array([1, _sign(sign_t)]) / SQ2
    return TwoModeState(np.kron(c, t))


def product_of(control, target) -> TwoModeState:
    """Product of two normalized single-field states given as ``(c0, c1)``."""
    return TwoModeState(np.kron(np.asarray(control, complex), np.asarray(target, complex)))


def state_for(kind: str) -> TwoModeState:
    kind = kind.lower()
    if kind.startswith("product"):
        return make_product(kind[7], kind[8])
    return make_entangled(kind)


def expect_correlation(state: TwoModeState, theta1, theta2):
    """``<state| A(theta1) (x) B(theta2) |state>``; broadcasts over angle arrays."""
    t1 = np.asarray(theta1, dtype=float)
    t2 = np.asarray(theta2, dtype=float)
    c = state.coefficients
    e1 = np.exp(2j * t1)
    e2 = np.exp(2j * t2)
    # A (x) B only connects |c t> to |1-c 1-t>
    val = (
        np.conj(c[0]) * c[3] * e1 * e2
        + np.conj(c[1]) * c[2] * e1 * np.conj(e2)
        + np.conj(c[2]) * c[1] * np.conj(e1) * e2
        + np.conj(c[3]) * c[0] * np.conj(e1) * np.conj(e2)
    )
    out = val.real
    return float(out) if out.ndim == 0 else out


def expect_local(state: TwoModeState, theta, which: str = "control"):
    """Single-side expectation ``<A(theta)>`` (identity on the other field)."""
    m = state.matrix()
    rho = m @ m.conj().T if which == "control" else m.T @ m.conj()
    e = np.exp(2j * np.asarray(theta, dtype=float))
    out = 2 * (rho[1, 0] * e).real
    return float(out) if np.ndim(out) == 0 else out


# ----------------------------------------------------------------------
# lumped CNOT


def classical_cnot_model(control: ModalAmplitudes, target: ModalAmplitudes, lam: float, kappa: float,
                         kappa_pi: float = 2 * math.pi) -> tuple[ModalAmplitudes, ModalAmplitudes]:
    """Closed-form coupled-mode model of the Kerr Mach-Zehnder CNOT.

    Phases follow the propagation convention of the BPM (a higher index
    retards the phase: ``exp(-i k0 dn L)``).

    * control amplitudes are multiplied by ``exp(i lam)``; its TE1 content
      ``u`` moves to the bus, TE0 stays;
    * target arms ``tL = (t0 + t1)/sqrt 2``, ``tR = (t0 - t1)/sqrt 2``;
    * bus and tL form the KMZ: coupler ``[[1, -i], [-i, 1]]/sqrt 2``, Kerr
      phase ``exp(-i kappa |arm|^2)`` on each arm, pi bias on the tL arm,
      second coupler.  At ``kappa = 0`` this is the identity (bar state);
    * tR carries a static phase ``exp(-i kappa_pi / 4)`` cancelling the
      self-phase the tL light gets when the bus is empty;
    * arms merge back: ``t0 = (tL + tR)/sqrt 2``, ``t1 = (tL - tR)/sqrt 2``.

    With ``kappa = kappa_pi`` and ``lam = 0`` the basis states obey the CNOT
    truth table exactly.  Vectorizes over ``lam``; returns scalars when
    ``lam`` is scalar.
    """
    c0, c1, t0, t1, lam, scalar = _cnot_arrays(control, target, lam)
    out = _cnot_core(c0, c1, t0, t1, lam, kappa, kappa_pi)
    if scalar:
        return ModalAmplitudes(complex(out[0][0]), complex(out[1][0])), ModalAmplitudes(
            complex(out[2][0]), complex(out[3][0]))
    return out


def _cnot_arrays(control, target, lam):
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=float))
    return (control.c0, control.c1, target.c0, target.c1, lam_arr, np.ndim(lam) == 0)


def _cnot_core(c0, c1, t0, t1, lam, kappa, kappa_pi):
    ph = np.exp(1j * lam)
    u = c1 * ph
    ctl0 = c0 * ph
    v = (t0 + t1) / SQ2
    tr = (t0 - t1) / SQ2 * np.ones_like(ph)
    a = (u - 1j * v) / SQ2
    b = (-1j * u + v) / SQ2
    a = a * np.exp(-1j * kappa * np.abs(a) ** 2)
    b = -b * np.exp(-1j * kappa * np.abs(b) ** 2)
    u2 = (a - 1j * b) / SQ2
    v2 = (-1j * a + b) / SQ2
    tl = -v2
    tr = tr * np.exp(-1j * kappa_pi / 4)
    return ctl0, u2, (tl + tr) / SQ2, (tl - tr) / SQ2


def cnot_outputs(control, target, lams, kappa, kappa_pi=2 * math.pi):
    """Vectorized lumped CNOT: arrays ``(c0, c1, t0, t1)`` over ``lams``."""
    return _cnot_core(complex(control[0]), complex(control[1]), complex(target[0]), complex(target[1]),
                      np.asarray(lams, dtype=float), kappa, kappa_pi)
