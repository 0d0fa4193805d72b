import json
import math
from dataclasses import replace

import numpy as np
import pytest

from modebell.bpm import PropagationParams, march_batch
from modebell.calibrate import (
    analyzer_interference,
    coupler_transfer_length,
    fingerprint,
    load_or_calibrate,
    truth_table,
)
from modebell.circuit import (
    CircuitConfig,
    SchemeDesign,
    analyzer_delta_n,
    build_cnot,
    build_full_scheme,
    build_mode_analyzer,
    directional_coupler,
    kerr_n2,
    phase_section,
    s_bend,
    straight,
    strip_phase,
    y_splitter,
)
from modebell.errors import ConfigError, GeometryError
from modebell.layout import DeviceLayout, Guide, Port
from modebell.modes import Grid, SlabSpec, solve_te_modes

GRID = Grid.from_spacing(-30, 30, 0.05)


def _single(x0, width=4.0):
    spec = SlabSpec(1.46, 1.45, width, 1.55)
    return solve_te_modes(spec, GRID, 1, center=x0).profiles[0]


def _window_power(e, lo, hi):
    m = (GRID.x >= lo) & (GRID.x <= hi)
    return float(np.trapezoid(np.abs(e[m]) ** 2, GRID.x[m]))


def test_directional_coupler_full_transfer(design):
    lc = coupler_transfer_length(1.5, 4.0, design)
    dc = directional_coupler(1.5, lc, 0.0, 4.0)
    a, b = dc.port("a_in"), dc.port("b_in")
    out = march_batch(_single(a.x).astype(complex), GRID, dc, PropagationParams(), 0, lc)[0]
    pb = abs(np.trapezoid(_single(b.x) * out, dx=GRID.spacing)) ** 2
    assert pb >= 0.98
    assert b.x < 0 < a.x


def test_y_splitter_splits_evenly():
    y = y_splitter(16.0, 1000.0, 0.0, 8.0, 4.0)
    basis = solve_te_modes(SlabSpec(), GRID)
    out = march_batch(basis.profiles.astype(complex), GRID, y, PropagationParams(), 0, 1000.0)
    for row in out:
        p_plus = _window_power(row, *y.port("out_plus").bounds)
        p_minus = _window_power(row, *y.port("out_minus").bounds)
        assert p_plus + p_minus >= 0.95
        assert p_plus == pytest.approx(p_minus, rel=0.02)
    # TE0 leaves the arms in phase, TE1 in antiphase
    up, lo = _single(8.0), _single(-8.0)
    ph = [np.angle(np.trapezoid(up * r, dx=GRID.spacing) / np.trapezoid(lo * r, dx=GRID.spacing)) for r in out]
    assert abs(ph[0]) < 0.05
    assert abs(abs(ph[1]) - math.pi) < 0.05


def test_phase_section_gives_pi():
    spec = SlabSpec()
    basis = solve_te_modes(spec, GRID)
    psi = basis.profiles[0]
    gamma = np.trapezoid(np.where(np.abs(GRID.x) <= 4, psi**2, 0), dx=GRID.spacing)
    L = 1000.0
    dn = math.pi / (spec.k0 * gamma * L)
    outs = [march_batch(psi.astype(complex), GRID, phase_section(v, L, 0.0, 8.0), PropagationParams(), 0, L)[0]
            for v in (0.0, dn)]
    c = [np.trapezoid(psi * o, dx=GRID.spacing) for o in outs]
    assert abs(np.angle(c[0] / c[1])) == pytest.approx(math.pi, rel=0.01)


def test_analyzer_phase_slope_is_two(design, calibration):
    thetas = np.linspace(0.0, 0.6, 5)
    ks = [analyzer_interference(t, design, calibration, PropagationParams())[0] for t in thetas]
    phase = np.unwrap(np.angle(ks))
    slope = np.polyfit(thetas, phase, 1)[0]
    assert slope == pytest.approx(2.0, rel=0.01)
    assert min(abs(k) for k in ks) >= 0.95
    # the offset is calibrated away: K(theta) ~ exp(2 i theta)
    assert abs(np.angle(ks[0])) < 0.02


def test_cnot_truth_table(design, calibration):
    tt = truth_table(design, calibration)
    assert set(tt) == {(0, 0), (0, 1), (1, 0), (1, 1)}
    assert min(tt.values()) >= 0.95


def test_bundled_calibration_is_used(design, calibration):
    assert calibration.fingerprint == fingerprint(design, PropagationParams())
    assert calibration.report["demux_te1_transfer"] > 0.98
    assert calibration.report["kmz_cross_leak"] < 1e-3
    assert load_or_calibrate(design) is calibration


def test_full_scheme_layout(design, calibration):
    cfg = CircuitConfig(theta1=0.3, theta2=1.1, state_kind="psi-")
    lay, fields = build_full_scheme(cfg, 0.7, design, calibration)
    names = {p.name for p in lay.ports}
    assert {"c_plus", "c_minus", "t_plus", "t_minus"} <= names
    assert lay.meta["kerr_z"][0] > lay.meta["z_cnot"]
    assert lay.meta["z_ma"] < lay.total_length
    g = design.grid
    # control launch carries the phase lambda relative to the target
    bc = solve_te_modes(design.platform, g, 2, center=design.control_x)
    c0 = np.trapezoid(bc.profiles[0] * fields.control, dx=g.spacing)
    assert np.angle(c0) == pytest.approx(0.7, abs=1e-9)
    doc = json.loads(lay.to_json())
    assert doc["total_length"] == pytest.approx(lay.total_length)
    assert any(f["kind"] == "kerr" for f in doc["features"])


def test_product_routes(design, calibration):
    by, _ = build_full_scheme(CircuitConfig(state_kind="product++"), 0.0, design, calibration)
    off, _ = build_full_scheme(CircuitConfig(state_kind="product++", product_route="kerr-off"), 0.0, design,
                               calibration)
    assert by.meta["kerr_z"] is None
    assert not any(f.kind == "kerr" for f in off.features)
    assert by.total_length == pytest.approx(off.total_length)


def test_analyzer_index_mapping_is_wrapped(design, calibration):
    thetas = np.linspace(-7, 7, 57)
    for t in thetas:
        phi = strip_phase(analyzer_delta_n(t, design, calibration), calibration) * design.ma_phase_length
        assert abs(phi) <= math.pi + 1e-9
        d = (phi + calibration.ma_offset - 2 * t) / (2 * math.pi)
        assert abs(d - round(d)) < 1e-9
    assert analyzer_delta_n(0.4, design, calibration) == pytest.approx(
        analyzer_delta_n(0.4 + math.pi, design, calibration))


def test_preview_csv(tmp_path, design, calibration):
    lay = build_mode_analyzer(0.2, design, calibration, 0.0, "m")
    p = tmp_path / "preview.csv"
    lay.write_preview_csv(p, Grid.from_spacing(-20, 20, 0.5), dz=500.0)
    rows = p.read_text().splitlines()
    assert rows[0] == "z_um,x_um,n"
    assert len(rows) == 1 + 81 * (int(lay.total_length // 500) + 1)
    assert max(float(r.split(",")[2]) for r in rows[1:]) > 1.459


def test_kerr_scaling():
    assert kerr_n2(0.0, 1000.0) == 0.0
    assert kerr_n2(2.0, 1000.0) == pytest.approx(2 * kerr_n2(1.0, 1000.0))
    assert kerr_n2(1.0, 2000.0) == pytest.approx(kerr_n2(1.0, 1000.0) / 2)
    with pytest.raises(ConfigError):
        kerr_n2(-1.0, 100.0)


def test_geometry_errors(design, calibration):
    with pytest.raises(GeometryError):
        directional_coupler(0.0, 100.0)
    with pytest.raises(GeometryError):
        directional_coupler(-1.0, 100.0)
    with pytest.raises(GeometryError):
        s_bend(20.0, 100.0)
    with pytest.raises(GeometryError):
        y_splitter(2.0, 500.0, 0.0, 8.0, 4.0)
    with pytest.raises(GeometryError):
        straight(-1.0, 10.0)
    with pytest.raises(GeometryError):
        straight(8.0, 10.0).beside(straight(8.0, 20.0, x=30))
    with pytest.raises(GeometryError):
        straight(8.0, 10.0).beside(straight(8.0, 10.0, x=30))  # duplicate port names
    overlap = DeviceLayout((Guide(0, 100, 0, 0, 8, 8, "a"), Guide(0, 100, 3, 3, 8, 8, "b")), 100.0)
    with pytest.raises(GeometryError):
        overlap.check()
    outside = straight(8.0, 10.0).with_ports(Port("far", 10.0, 100.0, 4.0))
    with pytest.raises(GeometryError):
        outside.check(GRID)
    with pytest.raises(GeometryError):
        build_cnot(3.0, replace(design, trim_length=5000.0), calibration)
    with pytest.raises(ConfigError):
        CircuitConfig(state_kind="ghz")
    with pytest.raises(ConfigError):
        CircuitConfig(kerr_strength=-1)
    with pytest.raises(GeometryError):
        build_full_scheme(CircuitConfig(ma_separation=10.0), 0.0)


def test_series_composition_shifts_ports():
    a = straight(8.0, 10.0)
    b = s_bend(2.0, 100.0, 0.0, 8.0)
    ab = a.then(b)
    assert ab.total_length == 110.0
    assert ab.port("in").z == 0.0
    assert ab.port("out").z == 110.0 and ab.port("out").x == 2.0
    n, n2 = ab.index_chunk([5.0, 109.0], GRID.x)
    assert n.shape == (2, GRID.n_points) and n2 is None
    assert n[0, GRID.n_points // 2] == pytest.approx(1.46)
