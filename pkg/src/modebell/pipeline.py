"""BPM ensemble backend.

Running the whole scheme once per ``(lambda, theta1, theta2)`` would be far
too slow, so the propagation is split at the places where linearity allows
reuse:

1. up to the Kerr section the device is linear: the control and target
   launches are propagated once each and combined as ``e^{i lam} C + T``;
2. the Kerr section is propagated for a uniform grid of ``lambda_nodes``
   phases in one batch;
3. after it the device is linear again: the batch is compressed to a
   low-rank basis (SVD), the basis propagated to the analyzers and the
   fields reconstructed;
4. every analyzer setting is applied to a windowed low-rank basis of the
   fields entering it, reducing each ``A(theta, lam)`` to a small Gram form.

Arbitrary ``lambda`` values are evaluated by trigonometric interpolation of
the basis coefficients between the nodes.  The fields are smooth and
``2 pi``-periodic in ``lambda``, so the interpolation converges spectrally;
the node count bounds the resolvable harmonics.  Without a Kerr section the
fields are exactly ``e^{i lam} C + T`` and no interpolation is needed.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .bpm import PropagationParams, march_batch
from .calibrate import load_or_calibrate
from .circuit import CircuitConfig, SchemeDesign, build_full_scheme, build_mode_analyzer
from .errors import ConfigError

log = logging.getLogger(__name__)


def _lowrank(rows: np.ndarray, rtol: float):
    """``rows ~= coef @ basis`` keeping singular values above ``rtol * s_max``."""
    u, s, vh = np.linalg.svd(rows, full_matrices=False)
    if s[0] == 0:
        return np.zeros((rows.shape[0], 1), complex), np.zeros((1, rows.shape[1]), complex)
    r = int(np.sum(s > rtol * s[0]))
    return u[:, :r] * s[:r], vh[:r]


def trig_interp_matrix(nodes: int, lams) -> np.ndarray:
    """Matrix mapping samples at ``2 pi k / nodes`` to values at ``lams``.

    Uses the symmetric (real-signal friendly) band ``-N/2 .. N/2`` with the
    Nyquist term split evenly; exact at the nodes.
    """
    lams = np.asarray(lams, dtype=float)
    k = np.fft.fftfreq(nodes, 1.0 / nodes)
    phase = np.exp(1j * np.outer(lams, k))  # (m, N)
    if nodes % 2 == 0:
        ny = nodes // 2
        idx = np.flatnonzero(k == -ny)[0]
        phase[:, idx] = np.cos(ny * lams)
    # value(lam) = sum_k F_k e^{i k lam} / N with F = fft(samples)
    dft = np.exp(-2j * np.pi * np.outer(np.arange(nodes), np.arange(nodes)) / nodes)
    return phase @ dft / nodes


@dataclass
class _DeviceState:
    """Fields entering the analyzers as ``coef(lam) @ basis`` per side."""

    nodes: int | None  # None: exactly linear in (e^{i lam}, 1)
    coef: dict  # side -> (nodes, r) or (2, r)
    basis: dict  # side -> (r, nw)
    grids: dict  # side -> window Grid


class BpmBackend:
    name = "bpm"

    def __init__(self, design: SchemeDesign | None = None, params: PropagationParams | None = None,
                 calibration=None, lambda_nodes: int = 64, rank_rtol: float = 1e-7,
                 window_half: float = 26.0, workers: int = 1):
        self.design = design or SchemeDesign()
        self.params = params or PropagationParams()
        self.cal = calibration or load_or_calibrate(self.design, self.params)
        if lambda_nodes < 8:
            raise ConfigError("lambda_nodes must be at least 8")
        self.lambda_nodes = lambda_nodes
        self.rank_rtol = rank_rtol
        self.window_half = window_half
        self.workers = max(1, int(workers))
        self.n0 = (self.design.core_index + self.design.clad_index) / 2
        self._devices: dict = {}
        self._grams: dict = {}

    # -- device up to the analyzers ---------------------------------

    def _run(self, e, grid, lay, z0, z1):
        return march_batch(e, grid, lay, self.params, z0, z1, self.design.wavelength, self.n0)

    def _device(self, config: CircuitConfig) -> _DeviceState:
        key = (config.state_kind, config.theta3, config.kerr_strength, config.product_route,
               config.ma_separation)
        if key in self._devices:
            return self._devices[key]
        d = self.design
        cfg = replace(config, theta1=0.0, theta2=0.0)
        lay, fields = build_full_scheme(cfg, 0.0, d, self.cal)
        grid = d.grid
        z_ma = lay.meta["z_ma"]
        kz = lay.meta["kerr_z"]
        kerr = kz is not None and cfg.kerr_strength > 0 and not cfg.is_product
        ct = np.array([fields.control, fields.target])
        if not kerr:
            out = self._run(ct, grid, lay, 0.0, z_ma)
            rows, nodes = out, None
        else:
            pre = self._run(ct, grid, lay, 0.0, kz[0])
            lam = 2 * np.pi * np.arange(self.lambda_nodes) / self.lambda_nodes
            batch = np.exp(1j * lam)[:, None] * pre[0][None, :] + pre[1][None, :]
            log.info("Kerr section: %d lambda nodes", self.lambda_nodes)
            post = self._run(batch, grid, lay, kz[0], kz[1])
            coef, basis = _lowrank(post, self.rank_rtol)
            basis = self._run(basis, grid, lay, kz[1], z_ma)
            rows, nodes = coef @ basis, self.lambda_nodes
        coefs, bases, grids = {}, {}, {}
        for side, xc in (("c", d.control_x), ("t", d.target_x)):
            wg, sl = grid.window(xc - self.window_half, xc + self.window_half)
            coefs[side], bases[side] = _lowrank(rows[:, sl], self.rank_rtol)
            grids[side] = wg
        st = _DeviceState(nodes, coefs, bases, grids)
        log.info("analyzer basis ranks: control %d, target %d", bases["c"].shape[0], bases["t"].shape[0])
        self._devices[key] = st
        return st

    def _lambda_coef(self, st: _DeviceState, side: str, lams) -> np.ndarray:
        c = st.coef[side]
        lams = np.asarray(lams, dtype=float)
        if st.nodes is None:
            return np.exp(1j * lams)[:, None] * c[0][None, :] + c[1][None, :]
        return trig_interp_matrix(st.nodes, lams) @ c

    # -- analyzers ----------------------------------------------------

    def _gram(self, st: _DeviceState, side: str, theta: float) -> np.ndarray:
        key = (id(st), side, float(theta))
        if key in self._grams:
            return self._grams[key]
        d = self.design
        xc = d.control_x if side == "c" else d.target_x
        ma = build_mode_analyzer(theta, d, self.cal, xc, side)
        wg = st.grids[side]
        out = self._run(st.basis[side], wg, ma, 0.0, ma.total_length)
        x = wg.x
        g = np.zeros((out.shape[0], out.shape[0]), complex)
        for port, sign in ((f"{side}_plus", 1.0), (f"{side}_minus", -1.0)):
            lo, hi = ma.port(port).bounds
            m = (x >= lo) & (x <= hi)
            o = out[:, m]
            g += sign * np.trapezoid(np.conj(o)[:, None, :] * o[None, :, :], x[m], axis=-1)
        self._grams[key] = g
        return g

    def _side(self, st, side, lams, thetas):
        c = self._lambda_coef(st, side, lams)
        todo = [th for th in dict.fromkeys(float(t) for t in thetas) if (id(st), side, th) not in self._grams]
        if self.workers > 1 and len(todo) > 1:
            # the BPM kernels release the GIL, so threads run in parallel
            with ThreadPoolExecutor(self.workers) as pool:
                list(pool.map(lambda th: self._gram(st, side, th), todo))
        res = np.empty((len(thetas), len(c)))
        for i, th in enumerate(thetas):
            g = self._gram(st, side, th)
            res[i] = np.einsum("ki,ij,kj->k", np.conj(c), g, c).real
        power = np.einsum("ki,ij,kj->k", np.conj(c), self._basis_gram(st, side), c).real
        return res, power

    def _basis_gram(self, st, side):
        b = st.basis[side]
        return np.trapezoid(np.conj(b)[:, None, :] * b[None, :, :], dx=st.grids[side].spacing, axis=-1)

    def measure(self, config: CircuitConfig, lams, theta1s, theta2s, common_phase: float = 0.0):
        """``A[i, k]``, ``B[j, k]`` port differences; a common phase cancels."""
        st = self._device(config)
        A, pc = self._side(st, "c", lams, np.atleast_1d(theta1s))
        B, pt = self._side(st, "t", lams, np.atleast_1d(theta2s))
        return A, B, {"power_c": pc, "power_t": pt}

    def direct_fields(self, config: CircuitConfig, lam: float) -> np.ndarray:
        """Reference: propagate the whole scheme for one ``lambda`` as a single
        nonlinear field, without superposition, interpolation or low-rank
        compression.  Segment boundaries match the fast path so that only
        those approximations are compared, not the z-step placement."""
        cfg = replace(config, theta1=0.0, theta2=0.0)
        lay, fields = build_full_scheme(cfg, lam, self.design, self.cal)
        kz = lay.meta["kerr_z"]
        kerr = kz is not None and cfg.kerr_strength > 0 and not cfg.is_product
        cuts = [0.0] + ([kz[0], kz[1]] if kerr else []) + [lay.meta["z_ma"]]
        e = fields.total[None, :]
        for a, b in zip(cuts[:-1], cuts[1:]):
            e = self._run(e, self.design.grid, lay, a, b)
        return e[0]

    def reconstructed_fields(self, config: CircuitConfig, lam: float) -> dict:
        st = self._device(config)
        return {s: (self._lambda_coef(st, s, [lam]) @ st.basis[s])[0] for s in ("c", "t")}

    def windows(self, config: CircuitConfig) -> dict:
        st = self._device(config)
        d = self.design
        return {s: d.grid.window(xc - self.window_half, xc + self.window_half)[1]
                for s, xc in (("c", d.control_x), ("t", d.target_x))}

