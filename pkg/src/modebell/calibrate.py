"""BPM calibration of the scheme's free parameters.

Every quantity is fixed by a short numerical experiment on the actual
discretized layout, so calibrations are only valid for the design and
propagation parameters they were computed with.  Results are cached as JSON
keyed by a fingerprint of both.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from dataclasses import asdict, replace
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .bpm import PropagationParams, march_batch
from .circuit import (
    Calibration,
    SchemeDesign,
    STRIP_RANGE,
    _stage_ends,
    build_cnot,
    build_mode_analyzer,
    bus_x,
    guide_modes,
    phase_section,
    strip_phase,
)
from .errors import CalibrationError
from .modes import Grid, fd_modes, power, slab_profile, find_neffs

log = logging.getLogger(__name__)

CACHE_ENV = "MODEBELL_CACHE"
CAL_VERSION = 4


def fingerprint(design: SchemeDesign, params: PropagationParams) -> str:
    blob = json.dumps({"v": CAL_VERSION, "design": asdict(design), "params": asdict(params)}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV, Path.home() / ".cache" / "modebell"))


def _load_table(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, ValueError):
        return {}


def _from_dict(d: dict) -> Calibration:
    return Calibration(**{**d, "strip_poly": tuple(d.get("strip_poly", ()))})


_memo: dict[str, Calibration] = {}


def load_or_calibrate(design: SchemeDesign, params: PropagationParams | None = None) -> Calibration:
    """Cached calibration for ``design``; computes and stores it if missing."""
    params = params or PropagationParams()
    key = fingerprint(design, params)
    if key in _memo:
        return _memo[key]
    bundled = _load_table(resources.files("modebell") / "data" / "calibration.json")
    user = _load_table(_cache_dir() / "calibration.json")
    entry = user.get(key) or bundled.get(key)
    if entry is None:
        log.info("no cached calibration for %s; running BPM calibration", key)
        cal = calibrate(design, params)
        store(cal, _cache_dir() / "calibration.json")
    else:
        cal = _from_dict(entry)
    _memo[key] = cal
    return cal


def store(cal: Calibration, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table = _load_table(path)
    table[cal.fingerprint] = cal.to_dict()
    path.write_text(json.dumps(table, indent=2, sort_keys=True))


# ----------------------------------------------------------------------
# measurement helpers


class Bench:
    """Grid, parameters and helpers shared by the calibration experiments."""

    def __init__(self, design: SchemeDesign, params: PropagationParams):
        self.design = design
        self.params = params
        self.grid = design.grid
        self.x = self.grid.x
        self.n0 = (design.core_index + design.clad_index) / 2
        self.control = guide_modes(design, design.control_x)
        self.target = guide_modes(design, design.target_x)

    def run(self, layout, fields, z0, z1):
        return march_batch(fields, self.grid, layout, self.params, z0, z1,
                           self.design.wavelength, self.n0)

    def window_power(self, e, lo, hi):
        m = (self.x >= lo) & (self.x <= hi)
        return float(np.trapezoid(np.abs(e[..., m]) ** 2, self.x[m]))

    def single_mode(self, x0: float, width: float) -> np.ndarray:
        spec = replace(self.design.platform, core_width=width)
        n_eff, parity = find_neffs(spec)[0]
        psi = slab_profile(spec, n_eff, parity, self.x - x0)
        return psi / math.sqrt(power(psi, self.grid))

    def project(self, mode, e) -> complex:
        return complex(np.trapezoid(np.conj(mode) * e, dx=self.grid.spacing))


def _fill(x, h, lo, hi):
    return np.clip((np.minimum(x + h / 2, hi) - np.maximum(x - h / 2, lo)) / h, 0.0, 1.0)


def phase_matched_bus_width(design: SchemeDesign) -> float:
    """Width of a single-moded guide whose TE0 index equals the two-moded
    guide's TE1 index, both on the sub-pixel-averaged discrete profile."""
    g = Grid.from_spacing(-30, 30, design.dx)
    x, h = g.x, g.spacing
    nc2, ncl2 = design.core_index**2, design.clad_index**2

    def neff(width, m):
        f = _fill(x, h, -width / 2, width / 2)
        betas, _ = fd_modes(np.sqrt(ncl2 + f * (nc2 - ncl2)), g, design.wavelength, m + 1)
        return betas[m] * design.wavelength / (2 * math.pi)

    target = neff(design.guide_width, 1)
    return brentq(lambda w: neff(w, 0) - target, 0.5, design.arm_width, xtol=1e-7)


def coupler_transfer_length(gap: float, width: float, design: SchemeDesign) -> float:
    """Full-transfer length ``pi / (beta_even - beta_odd)`` of a symmetric coupler."""
    g = Grid.from_spacing(-30 - gap, 30 + gap, design.dx)
    x, h = g.x, g.spacing
    c = (gap + width) / 2
    f = np.minimum(_fill(x, h, -c - width / 2, -c + width / 2) + _fill(x, h, c - width / 2, c + width / 2), 1)
    n = np.sqrt(design.clad_index**2 + f * (design.core_index**2 - design.clad_index**2))
    betas, _ = fd_modes(n, g, design.wavelength, 2)
    return math.pi / (betas[0] - betas[1])


def strip_slope(design: SchemeDesign, params: PropagationParams, delta_n: float = 4e-4) -> float:
    """Relative TE1-vs-TE0 phase per (delta_n * um) of a half-width strip."""
    w = design.guide_width
    g = Grid.from_spacing(-30, 30, design.dx)
    from .modes import solve_te_modes

    basis = solve_te_modes(design.platform, g, 2)
    n0 = (design.core_index + design.clad_index) / 2
    L = design.ma_phase_length
    rel = []
    for dn in (-delta_n, delta_n):
        lay = phase_section(dn, L, 0.0, w, strip_width=w / 2, platform=design.platform)
        out = march_batch(basis.profiles.astype(complex), g, lay, params, 0.0, L, design.wavelength, n0)
        c00 = np.trapezoid(basis.profiles[0] * out[0], dx=g.spacing)
        c11 = np.trapezoid(basis.profiles[1] * out[1], dx=g.spacing)
        rel.append(np.angle(c11 / c00))
    d = (rel[1] - rel[0] + math.pi) % (2 * math.pi) - math.pi
    return d / (2 * delta_n * L)


def _strip_relative_phase(design, params, dns):
    w = design.guide_width
    g = Grid.from_spacing(-30, 30, design.dx)
    from .modes import solve_te_modes

    basis = solve_te_modes(design.platform, g, 2)
    n0 = (design.core_index + design.clad_index) / 2
    L = design.ma_phase_length
    out = []
    for dn in dns:
        lay = phase_section(dn, L, 0.0, w, strip_width=w / 2, platform=design.platform)
        e = march_batch(basis.profiles.astype(complex), g, lay, params, 0.0, L, design.wavelength, n0)
        c00 = np.trapezoid(basis.profiles[0] * e[0], dx=g.spacing)
        c11 = np.trapezoid(basis.profiles[1] * e[1], dx=g.spacing)
        out.append(np.angle(c11 / c00))
    return np.unwrap(np.array(out)), L


def strip_curve(design: SchemeDesign, params: PropagationParams, samples: int = 11) -> np.ndarray:
    """Cubic fit of the strip's relative modal phase per um over the usable
    index range; the mapping is slightly nonlinear because the strip also
    reshapes the modes."""
    if samples % 2 == 0:
        raise ValueError("samples must be odd so that zero is sampled")
    dns = np.linspace(-STRIP_RANGE, STRIP_RANGE, samples)
    phase, L = _strip_relative_phase(design, params, dns)  # unwrapped along increasing dn
    rel = (phase - phase[samples // 2]) / L
    # no constant term: zero index shift adds no phase
    coef, *_ = np.linalg.lstsq(np.column_stack([dns**3, dns**2, dns]), rel, rcond=None)
    poly = np.append(coef, 0.0)
    resid = np.max(np.abs(np.polyval(poly, dns) - rel)) * L
    log.info("strip curve fit residual %.2e rad", resid)
    if resid > 1e-3:
        raise CalibrationError(f"strip phase curve is not cubic (residual {resid:.2e} rad)")
    return poly


def analyzer_interference(theta_or_dn, design, cal, params, *, raw_dn: bool = False):
    """Complex interference coefficient ``K`` of an analyzer.

    For input ``c0 TE0 + c1 TE1`` the port difference is
    ``I+ - I- = D + 2 Re(conj(c0) c1 K)`` where ``D`` is the basis-state
    imbalance; ideally ``K = exp(2 i theta)``.  Returns ``(K, D0, D1, P)`` with
    ``P`` the total port powers for TE0 and TE1 inputs.
    """
    g = Grid.from_spacing(-30, 30, design.dx)
    from .modes import solve_te_modes

    basis = solve_te_modes(design.platform, g, 2)
    if raw_dn:
        cal = replace(cal, ma_offset=0.0)
        theta = strip_phase(theta_or_dn, cal) * design.ma_phase_length / 2
    else:
        theta = theta_or_dn
    lay = build_mode_analyzer(theta, design, cal, 0.0, "m")
    n0 = (design.core_index + design.clad_index) / 2
    out = march_batch(basis.profiles.astype(complex), g, lay, params, 0.0, lay.total_length,
                      design.wavelength, n0)
    x = g.x
    plus = (x >= lay.port("m_plus").bounds[0]) & (x <= lay.port("m_plus").bounds[1])
    minus = (x >= lay.port("m_minus").bounds[0]) & (x <= lay.port("m_minus").bounds[1])

    def ip(a, b, m):
        return complex(np.trapezoid(np.conj(a[m]) * b[m], x[m]))

    k = ip(out[0], out[1], plus) - ip(out[0], out[1], minus)
    d0 = (ip(out[0], out[0], plus) - ip(out[0], out[0], minus)).real
    d1 = (ip(out[1], out[1], plus) - ip(out[1], out[1], minus)).real
    p = [(ip(o, o, plus) + ip(o, o, minus)).real for o in out]
    return k, d0, d1, p


# ----------------------------------------------------------------------
# the calibration sequence


def calibrate(design: SchemeDesign, params: PropagationParams | None = None) -> Calibration:
    params = params or PropagationParams()
    bench = Bench(design, params)
    rep: dict = {}
    cal = Calibration(fingerprint=fingerprint(design, params))

    wb = phase_matched_bus_width(design)
    cal = replace(cal, bus_width=wb)
    rep["bus_width"] = wb
    log.info("bus width %.5f um", wb)

    s = strip_slope(design, params)
    poly = strip_curve(design, params)
    cal = replace(cal, strip_slope=float(s), strip_poly=tuple(float(c) for c in poly))
    rep["strip_slope"] = s
    rep["strip_poly"] = list(cal.strip_poly)
    cal = _calibrate_demux(bench, cal, rep)
    cal = _calibrate_dc(bench, cal, rep)
    cal = _calibrate_target_phase(bench, cal, rep)
    cal = _calibrate_trim(bench, cal, rep)
    cal = _calibrate_bias(bench, cal, rep)
    cal = _calibrate_tail(bench, cal, rep)
    cal = _calibrate_analyzer(bench, cal, rep)
    return replace(cal, report=rep)


def _control_launch(bench, m):
    return bench.control.profiles[m].astype(complex)


def _calibrate_demux(bench: Bench, cal: Calibration, rep: dict) -> Calibration:
    """Demux length maximizing control TE1 -> bus transfer (bus measured once
    it has left the control guide)."""
    d = bench.design
    e1 = _control_launch(bench, 1)[None, :]
    e0 = _control_launch(bench, 0)[None, :]

    def bus_power(L, e):
        c = replace(cal, demux_length=float(L))
        lay = build_cnot(0.0, d, c, parts=frozenset({"control", "bus"}))
        st = _stage_ends(d, c)
        out = bench.run(lay, e, 0.0, st["route_in"][1])
        return bench.window_power(out[0], -6.0, d.control_x - d.guide_width / 2 - 3.0)

    Lc = coupler_transfer_length_asym(bench, cal)
    grid = np.linspace(0.6 * Lc, 1.2 * Lc, 7)
    vals = [bus_power(L, e1) for L in grid]
    i = int(np.argmax(vals))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(lambda L: -bus_power(L, e1), bounds=(lo, hi), method="bounded",
                          options={"xatol": 2.0})
    L = float(res.x)
    rep["demux_length"] = L
    rep["demux_te1_transfer"] = -float(res.fun)
    rep["demux_te0_leak"] = bus_power(L, e0)
    log.info("demux %.1f um: TE1 transfer %.4f, TE0 leak %.2e", L, -res.fun, rep["demux_te0_leak"])
    return replace(cal, demux_length=L)


def coupler_transfer_length_asym(bench: Bench, cal: Calibration) -> float:
    """Supermode estimate of the control-TE1 / bus transfer length."""
    d = bench.design
    g = Grid.from_spacing(-40, 40, d.dx)
    x, h = g.x, g.spacing
    xb = bus_x(d, cal) - d.control_x
    f = np.minimum(_fill(x, h, -d.guide_width / 2, d.guide_width / 2)
                   + _fill(x, h, xb - cal.bus_width / 2, xb + cal.bus_width / 2), 1)
    n = np.sqrt(d.clad_index**2 + f * (d.core_index**2 - d.clad_index**2))
    betas, _ = fd_modes(n, g, d.wavelength, 3)
    # TE0 of the wide guide is far detuned; the pair of interest is modes 1 and 2
    return math.pi / (betas[1] - betas[2])


def _calibrate_dc(bench: Bench, cal: Calibration, rep: dict) -> Calibration:
    """3 dB coupler length: bus light splits equally between the Kerr arms."""
    d = bench.design
    st = _stage_ends(d, cal)
    lay0 = build_cnot(0.0, d, cal)
    e = bench.run(lay0, _control_launch(bench, 1)[None, :], 0.0, st["route_in"][0])

    def imbalance(L):
        c = replace(cal, dc_length=float(L))
        s = _stage_ends(d, c)
        lay = build_cnot(0.0, d, c)
        out = bench.run(lay, e, s["route_in"][0], s["fan_out"][1])
        pa = bench.window_power(out[0], d.kerr_arm_x - 5, d.kerr_arm_x + 5)
        pb = bench.window_power(out[0], -d.kerr_arm_x - 5, -d.kerr_arm_x + 5)
        return (pa - pb) / (pa + pb)

    Lc = coupler_transfer_length(d.dc_gap, d.arm_width, d)
    grid = np.linspace(0.02 * Lc, 0.9 * Lc, 12)
    vals = [imbalance(L) for L in grid]
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa * fb <= 0:
            L = brentq(imbalance, a, b, xtol=0.05)
            break
    else:
        raise CalibrationError(f"no 3 dB point found for coupler gap {d.dc_gap}: {vals}")
    rep["dc_length"] = L
    rep["dc_supermode_full_transfer"] = Lc
    log.info("3 dB coupler %.2f um (full transfer %.1f um)", L, Lc)
    return replace(cal, dc_length=float(L))


def _calibrate_target_phase(bench: Bench, cal: Calibration, rep: dict) -> Calibration:
    """Target modal phase so TE0 and TE1 launched into the target reach the
    Kerr arms with equal phase (both then share one trim setting)."""
    d = bench.design
    z1 = _stage_ends(d, cal)["kerr"][0]

    def residual(c):
        v = bench.run(build_cnot(0.0, d, c), bench.target.profiles.astype(complex), 0.0, z1)
        a0, b0 = _arm_amplitudes(bench, v[0], d.kerr_arm_x, d.arm_width)
        a1, b1 = _arm_amplitudes(bench, v[1], d.kerr_arm_x, d.arm_width)
        return float(np.angle(a1 / a0 + b1 / b0))

    dn = 0.0
    for _ in range(3):  # the strip also perturbs the split slightly; iterate
        dn -= residual(replace(cal, target_dn=dn)) / (cal.strip_slope * d.target_phase_length)
    cal = replace(cal, target_dn=float(dn))
    rep["target_dn"] = dn
    rep["target_phase_residual"] = residual(cal)
    log.info("target modal phase dn %.3e, residual %.3f rad", dn, rep["target_phase_residual"])
    return cal


def _arm_amplitudes(bench, e, xk, aw):
    ma = bench.single_mode(xk, aw)
    mb = bench.single_mode(-xk, aw)
    return bench.project(ma, e), bench.project(mb, e)


def _calibrate_trim(bench: Bench, cal: Calibration, rep: dict) -> Calibration:
    """Trim phase on tL so bus and tL light meet the first coupler in phase.

    Ideal couplers map in-phase inputs to arm amplitudes with
    ``arg(a_v / a_u) = -pi/2`` and ``arg(b_v / b_u) = +pi/2``.
    """
    d = bench.design
    st = _stage_ends(d, cal)
    z1 = st["kerr"][0]
    aw = d.arm_width

    def arms(c):
        lay = build_cnot(0.0, d, c)
        u = bench.run(lay, _control_launch(bench, 1)[None, :], 0.0, z1)[0]
        v = bench.run(lay, bench.target.profiles[0].astype(complex)[None, :], 0.0, z1)[0]
        au, bu = _arm_amplitudes(bench, u, d.kerr_arm_x, aw)
        av, bv = _arm_amplitudes(bench, v, d.kerr_arm_x, aw)
        return au, bu, av, bv

    au, bu, av, bv = arms(cal)
    probe = 3e-4
    _, _, av2, _ = arms(replace(cal, trim_dn=probe))
    slope = np.angle(av2 / av) / probe  # phase of tL light per unit trim delta_n
    err = np.angle(np.exp(1j * (-math.pi / 2 - np.angle(av / au)))
                   + np.exp(1j * (math.pi / 2 - np.angle(bv / bu))))
    dn = float(err / slope)
    cal = replace(cal, trim_dn=dn)
    au, bu, av, bv = arms(cal)
    rep["trim_dn"] = dn
    rep["trim_residual_a"] = float(np.angle(av / au) + math.pi / 2)
    rep["trim_residual_b"] = float(np.angle(bv / bu) - math.pi / 2)
    rep["kmz_split_bus"] = float(abs(au) ** 2 / (abs(au) ** 2 + abs(bu) ** 2))
    rep["kmz_split_target"] = float(abs(av) ** 2 / (abs(av) ** 2 + abs(bv) ** 2))
    log.info("trim dn %.3e, residual phases %.3f %.3f", dn, rep["trim_residual_a"], rep["trim_residual_b"])
    return cal


def _cos_fit_optimum(f, period_dn):
    """Maximize ``f(dn) = A + B cos(s dn + c)`` from three samples one third
    of a period apart; returns the maximizing ``dn`` in ``[-period/2, period/2)``."""
    dns = np.array([0.0, period_dn / 3, 2 * period_dn / 3])
    vals = np.array([f(v) for v in dns])
    s = 2 * math.pi / period_dn
    # vals = A + Re(C exp(i s dn)) with C = B exp(i c)
    mat = np.column_stack([np.ones(3), np.cos(s * dns), -np.sin(s * dns)])
    a, cr, ci = np.linalg.solve(mat, vals)
    best = -math.atan2(ci, cr) / s
    return (best + period_dn / 2) % period_dn - period_dn / 2


def _calibrate_bias(bench: Bench, cal: Calibration, rep: dict) -> Calibration:
    """KMZ bias putting bus light back into the bus with the Kerr effect off
    (minimum bus light reaching the tL side)."""
    d = bench.design
    st = _stage_ends(d, cal)
    lay = build_cnot(0.0, d, cal)
    e = bench.run(lay, _control_launch(bench, 1)[None, :], 0.0, st["bias"][0])
    period = _patch_period(bench, d.bias_length)

    def tl_power(dn):
        lay = build_cnot(0.0, d, replace(cal, bias_dn=float(dn)))
        out = bench.run(lay, e, st["bias"][0], st["route_out"][1])
        return bench.window_power(out[0], d.target_x + d.target_arm_offset - 6.0, -4.0)

    dn = _cos_fit_optimum(lambda v: -tl_power(v), period)
    rep["bias_dn"] = dn
    rep["kmz_cross_leak"] = tl_power(dn)
    log.info("KMZ bias dn %.3e: cross leak %.2e", dn, rep["kmz_cross_leak"])
    return replace(cal, bias_dn=float(dn))


def _patch_period(bench: Bench, length: float) -> float:
    """Index shift giving a 2 pi phase on an arm mode over ``length``."""
    d = bench.design
    aw = d.arm_width
    spec = replace(d.platform, core_width=aw)
    n_eff, parity = find_neffs(spec)[0]
    xs = np.linspace(-aw / 2 - 30, aw / 2 + 30, 24001)
    psi = slab_profile(spec, n_eff, parity, xs)
    gamma = np.trapezoid(np.where(np.abs(xs) <= aw / 2, psi**2, 0), xs) / np.trapezoid(psi**2, xs)
    return 2 * math.pi / (d.platform.k0 * gamma * length)


def _calibrate_tail(bench: Bench, cal: Calibration, rep: dict) -> Calibration:
    """Static tR phase so that, at kappa_pi with an empty bus, TE0 stays TE0."""
    d = bench.design
    st = _stage_ends(d, cal)
    lay = build_cnot(cal.kappa_pi, d, cal)
    e = bench.run(lay, bench.target.profiles[0].astype(complex)[None, :], 0.0, st["bias"][0])
    period = _patch_period(bench, d.bias_length)

    def te0(dn):
        lay = build_cnot(cal.kappa_pi, d, replace(cal, tail_dn=float(dn)))
        out = bench.run(lay, e, st["bias"][0], st["bus_out"][1])[0]
        return abs(bench.project(bench.target.profiles[0], out)) ** 2

    dn = _cos_fit_optimum(te0, period)
    rep["tail_dn"] = dn
    rep["tail_te0_power"] = te0(dn)
    log.info("tR phase dn %.3e: TE0 power %.4f", dn, rep["tail_te0_power"])
    return replace(cal, tail_dn=float(dn))


def _calibrate_analyzer(bench: Bench, cal: Calibration, rep: dict) -> Calibration:
    d = bench.design
    k, *_ = analyzer_interference(0.0, d, cal, bench.params, raw_dn=True)
    off = float(np.angle(k))
    rep["ma_offset"] = off
    rep["ma_visibility"] = float(abs(k))
    log.info("strip slope %.4f rad/(dn um), analyzer offset %.4f rad, |K| %.4f",
             cal.strip_slope, off, abs(k))
    return replace(cal, ma_offset=off)


def truth_table(design: SchemeDesign, cal: Calibration, params: PropagationParams | None = None,
                kappa: float | None = None) -> dict:
    """CNOT basis-state fidelities at lambda = 0.

    For each (control mode, target mode) input the target output is projected
    onto the target guide's modes; fidelity is the expected mode's power over
    all power on the target side of the chip.
    """
    params = params or PropagationParams()
    bench = Bench(design, params)
    kappa = cal.kappa_pi if kappa is None else kappa
    lay = build_cnot(kappa, design, cal)
    out = {}
    for c in (0, 1):
        for y in (0, 1):
            e = _control_launch(bench, c) + bench.target.profiles[y]
            f = bench.run(lay, e[None, :], 0.0, lay.total_length)[0]
            want = y if c == 0 else 1 - y
            amp = bench.project(bench.target.profiles[want], f)
            side = bench.window_power(f, -bench.design.x_extent, 0.0)
            out[(c, y)] = abs(amp) ** 2 / side
    return out
