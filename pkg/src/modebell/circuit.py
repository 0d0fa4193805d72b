"""Photonic building blocks and the composite entangling scheme.

Geometry of the full scheme (``x`` in um, ``z`` increasing to the right)::

    control guide (8 um, two-moded) at x = +24 ----------------------- MA(theta1)
        TE1 -> bus (phase-matched, single-moded) ~~~ KMZ ~~~ bus -> TE1
    target guide (8 um) at x = -24 -< tL (upper arm) ~~~ KMZ ~~~ tL >- MA(theta2)
                                     < tR (lower arm, static phase) >

The target is split by a Y-junction into two single-moded arms ``tL``/``tR``
and merged again (a modal Mach-Zehnder: a relative arm phase of pi swaps
TE0 and TE1).  The control's TE1 content is pulled into a bus by a
phase-matched asymmetric coupler.  Bus and ``tL`` form a second, Kerr-loaded
Mach-Zehnder (KMZ): two 3 dB couplers, Kerr windows on both arms and a static
pi bias so that the KMZ is in the bar state when the Kerr effect is off.
Inside the KMZ the arm intensities depend on the bus/target interference and
hence on the random phase lambda; the Kerr phase therefore does as well.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ConfigError, GeometryError
from .layout import DeviceLayout, Guide, KerrWindow, Patch, Port, Segment, MAX_SLOPE
from .modes import Grid, SlabSpec, find_neffs, slab_profile

PLATFORM = SlabSpec()
STATE_KINDS = ("phi+", "phi-", "psi+", "psi-", "product++", "product+-", "product-+", "product--")


# ----------------------------------------------------------------------
# primitives


def _fragment(features, length, ports, name, platform) -> DeviceLayout:
    return DeviceLayout(
        features=tuple(features),
        total_length=float(length),
        ports=tuple(ports),
        segments=(Segment(name, 0.0, float(length)),),
        core_index=platform.core_index,
        clad_index=platform.clad_index,
        wavelength=platform.wavelength,
    )


def _positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise GeometryError(f"{k} must be positive, got {v}")


def _slope_ok(offset, length, what):
    slope = math.pi * abs(offset) / (2 * length)
    if slope > MAX_SLOPE:
        raise GeometryError(f"{what}: bend slope {slope:.3f} exceeds tan(5 deg) = {MAX_SLOPE:.3f}")


def straight(width: float = 8.0, length: float = 100.0, x: float = 0.0,
             platform: SlabSpec = PLATFORM, name: str = "straight") -> DeviceLayout:
    _positive(width=width, length=length)
    g = Guide(0.0, length, x, x, width, width, name)
    return _fragment([g], length, [Port("in", 0.0, x, width + 4), Port("out", length, x, width + 4)],
                     name, platform)


def s_bend(offset: float, length: float, x: float = 0.0, width: float = 4.0,
           platform: SlabSpec = PLATFORM, name: str = "s_bend") -> DeviceLayout:
    _positive(width=width, length=length)
    _slope_ok(offset, length, name)
    g = Guide(0.0, length, x, x + offset, width, width, name)
    return _fragment([g], length,
                     [Port("in", 0.0, x, width + 4), Port("out", length, x + offset, width + 4)],
                     name, platform)


def y_splitter(arm_sep: float, length: float, x: float = 0.0, width: float = 8.0,
               arm_width: float | None = None, platform: SlabSpec = PLATFORM,
               name: str = "y_splitter", merge: bool = False) -> DeviceLayout:
    """Symmetric Y-junction: a ``width`` guide splits into two ``arm_width`` arms
    that start edge-to-edge and bend apart to ``x +- arm_sep/2``.

    ``merge=True`` builds the mirror image (two arms joining into one guide).
    """
    aw = width / 2 if arm_width is None else arm_width
    _positive(arm_sep=arm_sep, length=length, width=width, arm_width=aw)
    if arm_sep < aw:
        raise GeometryError(f"arm separation {arm_sep} smaller than arm width {aw}: arms overlap")
    start = (width - aw) / 2
    end = arm_sep / 2
    _slope_ok(end - start, length, name)
    a, b = (end, start) if merge else (start, end)
    up = Guide(0.0, length, x + a, x + b, aw, aw, f"{name} upper arm")
    lo = Guide(0.0, length, x - a, x - b, aw, aw, f"{name} lower arm")
    pw = min(arm_sep, aw + 4)
    if merge:
        ports = [Port("in_plus", 0.0, x + end, pw), Port("in_minus", 0.0, x - end, pw),
                 Port("out", length, x, width + 4)]
    else:
        ports = [Port("in", 0.0, x, width + 4), Port("out_plus", length, x + end, pw),
                 Port("out_minus", length, x - end, pw)]
    return _fragment([up, lo], length, ports, name, platform)


def directional_coupler(gap: float, length: float, x: float = 0.0, width: float = 4.0,
                        width_b: float | None = None, platform: SlabSpec = PLATFORM,
                        name: str = "directional_coupler") -> DeviceLayout:
    """Two parallel straight guides ``a`` (upper) and ``b`` separated by ``gap``."""
    wb = width if width_b is None else width_b
    _positive(length=length, width=width, width_b=wb)
    if gap <= 0:
        raise GeometryError(f"coupler gap must be positive (got {gap}); guides would overlap")
    xa = x + gap / 2 + width / 2
    xb = x - gap / 2 - wb / 2
    ga = Guide(0.0, length, xa, xa, width, width, f"{name} a")
    gb = Guide(0.0, length, xb, xb, wb, wb, f"{name} b")
    pa, pb = width + gap, wb + gap
    ports = [Port("a_in", 0.0, xa, pa), Port("b_in", 0.0, xb, pb),
             Port("a_out", length, xa, pa), Port("b_out", length, xb, pb)]
    return _fragment([ga, gb], length, ports, name, platform)


def phase_section(delta_n: float, length: float, x: float = 0.0, width: float = 8.0,
                  strip_width: float | None = None, platform: SlabSpec = PLATFORM,
                  name: str = "phase_section") -> DeviceLayout:
    """Straight guide with an index shift ``delta_n`` over a central strip.

    With the strip covering the whole core the guided content picks up
    ``k0 * delta_n * length`` times its core confinement.  A half-width strip
    acts unequally on TE0 and TE1 and so shifts their relative phase.
    """
    _positive(length=length, width=width)
    sw = width if strip_width is None else strip_width
    g = Guide(0.0, length, x, x, width, width, name)
    p = Patch(0.0, length, x - sw / 2, x + sw / 2, float(delta_n), f"{name} strip")
    return _fragment([g, p], length, [Port("in", 0.0, x, width + 4), Port("out", length, x, width + 4)],
                     name, platform)


def mode_fourth_moment(width: float, platform: SlabSpec = PLATFORM, window: float | None = None) -> float:
    """``int psi0^4 dx`` of the TE0 mode of a ``width`` slab, over ``|x| <= window/2``."""
    spec = replace(platform, core_width=width)
    n_eff, parity = find_neffs(spec)[0]
    x = np.linspace(-width / 2 - 30, width / 2 + 30, 24001)
    psi = slab_profile(spec, n_eff, parity, x)
    psi /= math.sqrt(np.trapezoid(psi**2, x))
    w = width if window is None else window
    return float(np.trapezoid(np.where(np.abs(x) <= w / 2, psi**4, 0.0), x))


def kerr_n2(kappa: float, length: float, width: float = 4.0, platform: SlabSpec = PLATFORM) -> float:
    """Kerr coefficient giving a phase of ``kappa`` per unit guided power.

    To first order a guided mode carrying power ``P`` through a Kerr core
    of length ``L`` acquires ``k0 n2 P L int_core psi^4``.
    """
    if kappa < 0:
        raise ConfigError("kerr strength must be >= 0")
    return kappa / (platform.k0 * length * mode_fourth_moment(width, platform))


def kerr_section(kappa: float, length: float, x: float = 0.0, width: float = 4.0,
                 platform: SlabSpec = PLATFORM, name: str = "kerr_section") -> DeviceLayout:
    _positive(length=length, width=width)
    n2 = kerr_n2(kappa, length, width, platform)
    g = Guide(0.0, length, x, x, width, width, name)
    k = KerrWindow(0.0, length, x - width / 2, x + width / 2, n2, f"{name} window")
    return _fragment([g, k], length, [Port("in", 0.0, x, width + 4), Port("out", length, x, width + 4)],
                     name, platform)


# ----------------------------------------------------------------------
# composite scheme


@dataclass(frozen=True)
class SchemeDesign:
    """Fixed geometry of the scheme; calibrated quantities live in
    :class:`Calibration`."""

    core_index: float = 1.46
    clad_index: float = 1.45
    wavelength: float = 1.55
    guide_width: float = 8.0
    arm_width: float = 4.0
    control_x: float = 24.0
    target_x: float = -24.0
    x_extent: float = 60.0
    dx: float = 0.05
    input_length: float = 50.0
    prep_length: float = 1000.0
    demux_gap: float = 5.0
    bus_offset: float = 8.0
    target_phase_length: float = 1000.0
    bus_bend_length: float = 800.0
    target_arm_offset: float = 8.0
    split_length: float = 800.0
    trim_length: float = 600.0
    route_length: float = 1200.0
    dc_gap: float = 1.5
    kerr_arm_x: float = 10.0
    fan_length: float = 600.0
    kerr_length: float = 2000.0
    bias_length: float = 600.0
    output_length: float = 100.0
    ma_phase_length: float = 2000.0
    ma_split_length: float = 1000.0
    ma_arm_sep: float = 16.0
    ma_tail_length: float = 100.0

    @property
    def platform(self) -> SlabSpec:
        return SlabSpec(self.core_index, self.clad_index, self.guide_width, self.wavelength)

    @property
    def grid(self) -> Grid:
        return Grid.from_spacing(-self.x_extent, self.x_extent, self.dx)

    @property
    def dc_x(self) -> float:
        return (self.dc_gap + self.arm_width) / 2

    @property
    def ma_separation(self) -> float:
        return self.control_x - self.target_x


@dataclass(frozen=True)
class Calibration:
    bus_width: float = 2.3235
    demux_length: float = 1300.0
    dc_length: float = 180.0
    trim_dn: float = 0.0
    bias_dn: float = 0.0
    tail_dn: float = 0.0
    target_dn: float = 0.0  # modal phase strip aligning target TE0/TE1 paths into tL
    kappa_pi: float = 2 * math.pi
    strip_slope: float = 1.8  # relative modal phase per (delta_n * um) of a half-width strip
    strip_poly: tuple = ()  # cubic fit of that phase per um versus delta_n (highest power first)
    ma_offset: float = 0.0  # interference phase of an analyzer at delta_n = 0
    fingerprint: str = ""
    report: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CircuitConfig:
    theta1: float = 0.0
    theta2: float = 0.0
    theta3: float = 0.0
    kerr_strength: float = 3.0
    state_kind: str = "phi+"
    ma_separation: float = 48.0
    product_route: str = "bypass"  # or "kerr-off"

    def __post_init__(self):
        if self.state_kind not in STATE_KINDS:
            raise ConfigError(f"state_kind must be one of {STATE_KINDS}, got {self.state_kind!r}")
        if self.kerr_strength < 0:
            raise ConfigError("kerr_strength must be >= 0")
        if self.product_route not in ("bypass", "kerr-off"):
            raise ConfigError("product_route must be 'bypass' or 'kerr-off'")
        if not self.ma_separation > 0:
            raise ConfigError("ma_separation must be positive")

    @property
    def is_product(self) -> bool:
        return self.state_kind.startswith("product")

    def control_coefficients(self) -> tuple[complex, complex]:
        k = self.state_kind
        sign = k[7] if self.is_product else k[-1]
        return 1 / math.sqrt(2), (1 if sign == "+" else -1) / math.sqrt(2)

    def target_coefficients(self) -> tuple[complex, complex]:
        k = self.state_kind
        if k.startswith("product"):
            s = 1 if k[8] == "+" else -1
            return 1 / math.sqrt(2), s / math.sqrt(2)
        return (1.0, 0.0) if k.startswith("phi") else (0.0, 1.0)


def _stage_ends(design: SchemeDesign, cal: Calibration) -> dict:
    """Absolute z boundaries of the CNOT's bus-lane stages (CNOT-local)."""
    names = ["pre", "bus_in", "demux", "route_in", "dc1", "fan_out", "kerr", "bias",
             "fan_in", "dc2", "route_out", "mux", "bus_out"]
    lengths = [design.target_phase_length, design.bus_bend_length, cal.demux_length, design.route_length, cal.dc_length,
               design.fan_length, design.kerr_length, design.bias_length, design.fan_length,
               cal.dc_length, design.route_length, cal.demux_length, design.bus_bend_length]
    z = 0.0
    out = {}
    for n, L in zip(names, lengths):
        out[n] = (z, z + L)
        z += L
    return out


def bus_x(design: SchemeDesign, cal: Calibration) -> float:
    return design.control_x - design.guide_width / 2 - design.demux_gap - cal.bus_width / 2


def build_cnot(kerr_strength: float, design: SchemeDesign | None = None,
               calibration: Calibration | None = None, *, parts: frozenset | None = None) -> DeviceLayout:
    """Kerr-Mach-Zehnder CNOT between the control (x > 0) and target (x < 0) guides.

    ``parts`` optionally restricts which lanes are built (``control``,
    ``bus``, ``target``); calibration runs use it to isolate paths.
    """
    design = design or SchemeDesign()
    cal = calibration or default_calibration(design)
    if kerr_strength < 0:
        raise ConfigError("kerr strength must be >= 0")
    parts = parts or frozenset({"control", "bus", "target"})
    st = _stage_ends(design, cal)
    total = st["bus_out"][1]
    w, aw, wb = design.guide_width, design.arm_width, cal.bus_width
    xc, xt = design.control_x, design.target_x
    xb = bus_x(design, cal)
    xd, xk = design.dc_x, design.kerr_arm_x
    feats = []
    if "control" in parts:
        feats.append(Guide(0.0, total, xc, xc, w, w, "control"))
    if "bus" in parts:
        b = lambda s, x0, x1, w0=aw, w1=aw: Guide(*st[s], x0, x1, w0, w1, f"bus {s}")  # noqa: E731
        feats += [
            b("bus_in", xb - design.bus_offset, xb, wb, wb),
            b("demux", xb, xb, wb, wb),
            b("route_in", xb, xd, wb, aw),
            b("dc1", xd, xd),
            b("fan_out", xd, xk),
            b("kerr", xk, xk),
            b("bias", xk, xk),
            b("fan_in", xk, xd),
            b("dc2", xd, xd),
            b("route_out", xd, xb, aw, wb),
            b("mux", xb, xb, wb, wb),
            b("bus_out", xb, xb - design.bus_offset, wb, wb),
        ]
    if "target" in parts:
        off = design.target_arm_offset
        a0 = (w - aw) / 2
        z_pre = st["pre"][1]
        z_split = z_pre + design.split_length
        z_route0 = st["route_in"][0]
        z_mux0 = st["mux"][0]
        z_merge1 = z_mux0 + design.split_length
        if z_split > z_route0 or z_merge1 > total:
            raise GeometryError("target split/merge does not fit beside the bus coupler stages")
        tl = lambda s, x0, x1: Guide(*st[s], x0, x1, aw, aw, f"tL {s}")  # noqa: E731
        feats += [
            Guide(0.0, z_pre, xt, xt, w, w, "target pre"),
            Patch(0.0, z_pre, xt - w / 4, xt + w / 4, cal.target_dn, "target modal phase"),
            Guide(z_pre, z_split, xt + a0, xt + off, aw, aw, "tL split arm"),
            Guide(z_pre, z_split, xt - a0, xt - off, aw, aw, "tR split arm"),
            Guide(z_split, z_route0, xt + off, xt + off, aw, aw, "tL wait"),
            tl("route_in", xt + off, -xd),
            tl("dc1", -xd, -xd),
            tl("fan_out", -xd, -xk),
            tl("kerr", -xk, -xk),
            tl("bias", -xk, -xk),
            tl("fan_in", -xk, -xd),
            tl("dc2", -xd, -xd),
            tl("route_out", -xd, xt + off),
            Guide(z_split, z_mux0, xt - off, xt - off, aw, aw, "tR hold"),
            Guide(z_mux0, z_merge1, xt + off, xt + a0, aw, aw, "tL merge arm"),
            Guide(z_mux0, z_merge1, xt - off, xt - a0, aw, aw, "tR merge arm"),
            Guide(z_merge1, total, xt, xt, w, w, "target out"),
        ]
        # trimmer on tL once the split is complete, before the KMZ
        t0 = z_split + 50.0
        if t0 + design.trim_length > z_route0:
            raise GeometryError("trim section does not fit between target split and KMZ routing")
        feats.append(Patch(t0, t0 + design.trim_length, xt + off - aw / 2, xt + off + aw / 2,
                           cal.trim_dn, "trim"))
        zb0, zb1 = st["bias"]
        feats.append(Patch(zb0, zb1, -xk - aw / 2, -xk + aw / 2, cal.bias_dn, "kmz bias"))
        feats.append(Patch(zb0, zb1, xt - off - aw / 2, xt - off + aw / 2, cal.tail_dn, "tR phase"))
    zk0, zk1 = st["kerr"]
    if kerr_strength > 0:
        n2 = kerr_n2(kerr_strength, design.kerr_length, aw, design.platform)
        if "bus" in parts:
            feats.append(KerrWindow(zk0, zk1, xk - aw / 2, xk + aw / 2, n2, "kerr bus arm"))
        if "target" in parts:
            feats.append(KerrWindow(zk0, zk1, -xk - aw / 2, -xk + aw / 2, n2, "kerr target arm"))
    segs = tuple(Segment(n, *z) for n, z in st.items())
    ports = (
        Port("control_in", 0.0, xc, w + 4), Port("target_in", 0.0, xt, w + 4),
        Port("control_out", total, xc, w + 4), Port("target_out", total, xt, w + 4),
    )
    p = design.platform
    return DeviceLayout(tuple(feats), total, ports, segs, p.core_index, p.clad_index, p.wavelength,
                        meta={"kerr_z": (zk0, zk1), "kerr_strength": kerr_strength})


def _pair(design, length, name, control=None, target=None) -> DeviceLayout:
    """Straight control and target guides of ``length`` plus optional extra features."""
    w = design.guide_width
    feats = [Guide(0.0, length, design.control_x, design.control_x, w, w, f"{name} control"),
             Guide(0.0, length, design.target_x, design.target_x, w, w, f"{name} target")]
    feats += list(control or []) + list(target or [])
    p = design.platform
    return DeviceLayout(tuple(feats), length, (), (Segment(name, 0.0, length),),
                        p.core_index, p.clad_index, p.wavelength)


def analyzer_delta_n(theta: float, design: SchemeDesign, cal: Calibration) -> float:
    """Strip index shift giving an interference phase of ``2 theta`` (mod 2 pi).

    The target phase is wrapped into ``[-pi, pi)`` before mapping, so the
    required index shift stays within ``+- pi / (slope * L)``.
    """
    phi = (2 * theta - cal.ma_offset + math.pi) % (2 * math.pi) - math.pi
    return strip_index(phi / design.ma_phase_length, cal)


def prep_delta_n(theta3: float, design: SchemeDesign, cal: Calibration) -> float:
    """Strip index shift adding ``theta3`` to the control's TE1/TE0 phase."""
    phi = (theta3 + math.pi) % (2 * math.pi) - math.pi
    return strip_index(phi / design.prep_length, cal)


STRIP_RANGE = 2.0e-3  # delta_n span covered by the calibrated strip curve


def strip_phase(delta_n: float, cal: Calibration) -> float:
    """Relative TE1/TE0 phase per um produced by a half-width strip."""
    if not cal.strip_poly:
        return cal.strip_slope * delta_n
    return float(np.polyval(cal.strip_poly, delta_n))


def strip_index(phase_per_um: float, cal: Calibration) -> float:
    """Inverse of :func:`strip_phase` (the calibrated curve is monotone)."""
    if not cal.strip_poly:
        return phase_per_um / cal.strip_slope
    from scipy.optimize import brentq

    f = lambda dn: strip_phase(dn, cal) - phase_per_um  # noqa: E731
    lo, hi = -STRIP_RANGE, STRIP_RANGE
    if f(lo) * f(hi) > 0:
        raise GeometryError(f"relative phase {phase_per_um:.3e} rad/um is outside the calibrated strip range")
    return brentq(f, lo, hi, xtol=1e-14, rtol=1e-14)


def build_mode_analyzer(theta: float, design: SchemeDesign | None = None,
                        calibration: Calibration | None = None, x: float = 0.0,
                        name: str = "ma") -> DeviceLayout:
    """Modal phase section (half-width strip) followed by a symmetric Y-splitter.

    Ports ``{name}_plus`` / ``{name}_minus`` sit on the two output arms.
    """
    design = design or SchemeDesign()
    cal = calibration or default_calibration(design)
    p = design.platform
    w = design.guide_width
    ph = phase_section(analyzer_delta_n(theta, design, cal), design.ma_phase_length, x, w,
                       strip_width=w / 2, platform=p, name=f"{name} phase")
    y = y_splitter(design.ma_arm_sep, design.ma_split_length, x, w, design.arm_width, p, f"{name} split")
    end = x + design.ma_arm_sep / 2
    tail = DeviceLayout(
        (Guide(0.0, design.ma_tail_length, end, end, design.arm_width, design.arm_width, f"{name} tail upper arm"),
         Guide(0.0, design.ma_tail_length, 2 * x - end, 2 * x - end, design.arm_width, design.arm_width,
               f"{name} tail lower arm")),
        design.ma_tail_length, (), (Segment(f"{name} tail", 0.0, design.ma_tail_length),),
        p.core_index, p.clad_index, p.wavelength)
    lay = ph.then(y).then(tail)
    L = lay.total_length
    pw = design.ma_arm_sep / 2
    ports = (Port(f"{name}_in", 0.0, x, w + 4), Port(f"{name}_plus", L, end, pw),
             Port(f"{name}_minus", L, 2 * x - end, pw))
    return replace(lay, ports=ports, meta={"theta": theta})


@dataclass(frozen=True)
class InputFields:
    control: np.ndarray
    target: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.control + self.target


def guide_modes(design: SchemeDesign, x: float, grid: Grid | None = None):
    """Analytic TE0/TE1 basis of the two-moded guide centred at ``x``."""
    from .modes import solve_te_modes

    return solve_te_modes(design.platform, grid or design.grid, 2, center=x)


def build_full_scheme(config: CircuitConfig, lam: float, design: SchemeDesign | None = None,
                      calibration: Calibration | None = None, common_phase: float = 0.0
                      ) -> tuple[DeviceLayout, InputFields]:
    """Whole scheme for one ensemble member.

    Returns the layout and the launched fields: control
    ``exp(i (common + lam)) (TE0 +- TE1)/sqrt 2`` and target
    ``exp(i common) * (state-dependent)``.
    """
    design = design or SchemeDesign()
    if abs(config.ma_separation - design.ma_separation) > 1e-9:
        design = replace(design, control_x=config.ma_separation / 2, target_x=-config.ma_separation / 2)
        calibration = None
    half = design.ma_arm_sep / 2 + design.ma_arm_sep / 4
    if design.ma_separation < 2 * half:
        raise GeometryError("analyzer port windows would overlap at this ma_separation")
    cal = calibration or default_calibration(design)
    w = design.guide_width
    xc, xt = design.control_x, design.target_x
    lay = _pair(design, design.input_length, "input")
    prep = Patch(0.0, design.prep_length, xc - w / 4, xc + w / 4, prep_delta_n(config.theta3, design, cal),
                 "prep strip")
    lay = lay.then(_pair(design, design.prep_length, "prep", control=[prep]))
    z_cnot = lay.total_length
    if config.is_product and config.product_route == "bypass":
        length = _stage_ends(design, cal)["bus_out"][1]
        cnot = _pair(design, length, "bypass")
        kerr_z = None
    else:
        kappa = 0.0 if config.is_product else config.kerr_strength
        cnot = build_cnot(kappa, design, cal)
        kerr_z = tuple(z + z_cnot for z in cnot.meta["kerr_z"])
    lay = lay.then(cnot).then(_pair(design, design.output_length, "output"))
    z_ma = lay.total_length
    mac = build_mode_analyzer(config.theta1, design, cal, xc, "c")
    mat = build_mode_analyzer(config.theta2, design, cal, xt, "t")
    lay = lay.then(mac.beside(mat))
    lay = replace(lay, meta={"z_cnot": z_cnot, "z_cnot_end": z_cnot + cnot.total_length, "kerr_z": kerr_z,
                             "z_ma": z_ma, "config": asdict(config)})
    lay.check(design.grid)
    bc = guide_modes(design, xc)
    bt = guide_modes(design, xt)
    ctl = np.exp(1j * (common_phase + lam)) * bc.superpose(config.control_coefficients())
    tgt = np.exp(1j * common_phase) * bt.superpose(config.target_coefficients())
    return lay, InputFields(ctl, tgt)


def default_calibration(design: SchemeDesign | None = None) -> Calibration:
    from .calibrate import load_or_calibrate

    return load_or_calibrate(design or SchemeDesign())
