"""Command-line entry point: ``modebell <command> --config run.json --out DIR``.

Every command validates the whole configuration first, computes its results
in memory and only then writes files, so a failing run leaves no partial
output.  Exit codes: 0 success, 2 configuration error, 3 physics error,
4 degenerate ensemble, 5 failed product audit.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import platform
import sys
import tempfile
import shutil
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import click
import numpy as np

from .bpm import PropagationParams, ScalarField, propagate
from .chsh import (
    chsh_over_sequences,
    format_table,
    maximize_chsh,
    product_bound_audit,
    theta3_sweep,
    write_sweep_csv,
    write_table_csv,
)
from .circuit import CircuitConfig, SchemeDesign, build_full_scheme
from .ensemble import CoupledModeBackend, angle_grid, correlation_surface, sample_lambda
from .errors import ConfigError, DegenerateEnsemble, NoGuidedMode, PhysicsError
from .modes import Grid, SlabSpec, solve_te_modes
from . import plots

EXIT_CONFIG, EXIT_PHYSICS, EXIT_DEGENERATE, EXIT_AUDIT = 2, 3, 4, 5
log = logging.getLogger("modebell")


# ----------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class WaveguideConfig:
    core_index: float = 1.46
    clad_index: float = 1.45
    core_width: float = 8.0
    wavelength: float = 1.55


@dataclass(frozen=True)
class DiscretizationConfig:
    dx: float = 0.05
    x_extent: float = 60.0
    dz: float = 0.5
    absorber_width: float = 10.0
    absorber_strength: float = 0.05
    kerr_iterations: int = 2


@dataclass(frozen=True)
class EnsembleConfig:
    n_lambda: int = 64
    mode: str = "seeded-random"
    sequences: int = 16
    seed: int = 0


@dataclass(frozen=True)
class AnalysisConfig:
    backend: str = "coupled-mode"
    angle_step_pi40: float = 1.0  # angle grid step in units of pi/40
    refine: bool = False
    sweep_axis: str = "kappa"
    sweep_values: tuple = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 5.0, 6.0)
    states: tuple = ()  # empty: just circuit.state_kind
    propagate_lambda: float = 0.0
    record_every: int = 100


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "modebell-out"
    plots: bool = True
    samples: bool = True


@dataclass(frozen=True)
class RunConfig:
    waveguide: WaveguideConfig = field(default_factory=WaveguideConfig)
    discretization: DiscretizationConfig = field(default_factory=DiscretizationConfig)
    circuit: CircuitConfig = field(default_factory=CircuitConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)

    @property
    def design(self) -> SchemeDesign:
        w, d = self.waveguide, self.discretization
        return SchemeDesign(core_index=w.core_index, clad_index=w.clad_index, wavelength=w.wavelength,
                            guide_width=w.core_width, dx=d.dx, x_extent=d.x_extent)

    @property
    def params(self) -> PropagationParams:
        d = self.discretization
        return PropagationParams(dz=d.dz, absorber_width=d.absorber_width,
                                 absorber_strength=d.absorber_strength, kerr_iterations=d.kerr_iterations)

    @property
    def angle_step(self) -> float:
        return self.analysis.angle_step_pi40 * math.pi / 40

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))


_SECTIONS = {
    "waveguide": WaveguideConfig,
    "discretization": DiscretizationConfig,
    "circuit": CircuitConfig,
    "ensemble": EnsembleConfig,
    "analysis": AnalysisConfig,
    "outputs": OutputConfig,
}
_TYPES = {float: (int, float), int: (int,), str: (str,), bool: (bool,), tuple: (list, tuple)}


def _section(cls, data, name):
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name!r}: {sorted(unknown)}")
    kw = {}
    for k, v in data.items():
        default = getattr(cls(), k)
        want = _TYPES.get(type(default), (type(default),))
        if isinstance(v, bool) and not isinstance(default, bool):
            raise ConfigError(f"{name}.{k} must not be a boolean")
        if not isinstance(v, want):
            raise ConfigError(f"{name}.{k} has the wrong type ({type(v).__name__})")
        kw[k] = tuple(v) if isinstance(default, tuple) else (float(v) if isinstance(default, float) else v)
    return cls(**kw)


def parse_config(text: str) -> RunConfig:
    """Strict parse: unknown sections or keys and wrong types are errors."""
    try:
        data = json.loads(text)
    except ValueError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
    cfg = RunConfig(**{k: _section(_SECTIONS[k], v, k) for k, v in data.items()})
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    SlabSpec(cfg.waveguide.core_index, cfg.waveguide.clad_index, cfg.waveguide.core_width,
             cfg.waveguide.wavelength)
    cfg.params  # noqa: B018  (validates)
    e, a = cfg.ensemble, cfg.analysis
    if e.n_lambda < 2 or e.sequences < 1:
        raise ConfigError("ensemble needs n_lambda >= 2 and sequences >= 1")
    if e.mode not in ("uniform-grid", "seeded-random"):
        raise ConfigError("ensemble.mode must be 'uniform-grid' or 'seeded-random'")
    if a.backend not in ("coupled-mode", "bpm", "oracle"):
        raise ConfigError("analysis.backend must be coupled-mode, bpm or oracle")
    if a.angle_step_pi40 <= 0 or abs(40 / a.angle_step_pi40 - round(40 / a.angle_step_pi40)) > 1e-9:
        raise ConfigError("analysis.angle_step_pi40 must divide 40 (the step must divide pi)")
    if a.sweep_axis not in ("kappa", "theta3"):
        raise ConfigError("analysis.sweep_axis must be 'kappa' or 'theta3'")
    if not a.sweep_values:
        raise ConfigError("analysis.sweep_values must be nonempty")
    for s in a.states:
        CircuitConfig(state_kind=s)
    if cfg.discretization.dx <= 0 or cfg.discretization.x_extent <= 0:
        raise ConfigError("dx and x_extent must be positive")


# ----------------------------------------------------------------------
# outputs


class Outputs:
    """Collects artifacts in a staging directory and publishes them at once."""

    def __init__(self, out_dir: Path):
        self.final = out_dir
        self.stage = Path(tempfile.mkdtemp(prefix=".modebell-"))
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.stage / name

    def publish(self, manifest: dict):
        manifest["files"] = {n: hashlib.sha256((self.stage / n).read_bytes()).hexdigest() for n in self.files}
        (self.stage / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str))
        self.final.mkdir(parents=True, exist_ok=True)
        for n in self.files + ["manifest.json"]:
            shutil.move(str(self.stage / n), self.final / n)
        shutil.rmtree(self.stage, ignore_errors=True)

    def discard(self):
        shutil.rmtree(self.stage, ignore_errors=True)


def _versions() -> dict:
    import numba
    import scipy

    from importlib.metadata import PackageNotFoundError, version

    try:
        pkg = version("artifact")
    except PackageNotFoundError:
        pkg = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "click": version("click"), "package": pkg,
            "platform": platform.platform()}


def _backend(cfg: RunConfig, workers: int):
    name = cfg.analysis.backend
    if name == "oracle":
        return "oracle"
    if name == "coupled-mode":
        return CoupledModeBackend()
    from .pipeline import BpmBackend

    return BpmBackend(cfg.design, cfg.params, workers=workers)


# ----------------------------------------------------------------------
# commands (pure: return a writer callback)


def cmd_modes(cfg: RunConfig, out: Outputs):
    w = cfg.waveguide
    spec = SlabSpec(w.core_index, w.clad_index, w.core_width, w.wavelength)
    half = w.core_width / 2 + 20
    grid = Grid.from_spacing(-half, half, cfg.discretization.dx)
    basis = solve_te_modes(spec, grid, 2)
    if basis.n_modes < 2:
        raise NoGuidedMode(f"TE1 is not guided (V = {spec.v_number:.4f} < pi/2); the scheme needs two modes")
    with open(out.path("modes.csv"), "w") as fh:
        fh.write("x_um,TE0,TE1\n")
        for x, a, b in zip(grid.x, basis.profiles[0], basis.profiles[1]):
            fh.write(f"{x:.17g},{a:.17g},{b:.17g}\n")
    with open(out.path("betas.csv"), "w") as fh:
        fh.write("mode,beta_per_um,n_eff\n")
        for m, (b, n) in enumerate(zip(basis.betas, basis.neffs)):
            fh.write(f"TE{m},{b:.17g},{n:.17g}\n")
    if cfg.outputs.plots:
        plots.line_plot(out.path("modes.svg"), {"TE0": (grid.x, basis.profiles[0]), "TE1": (grid.x, basis.profiles[1])},
                        "guided TE modes", "x (um)", "field (1/sqrt(um))")
    return {"n_modes": basis.n_modes, "n_eff": [float(n) for n in basis.neffs]}


def cmd_propagate(cfg: RunConfig, out: Outputs, workers: int):
    design = cfg.design
    lam = cfg.analysis.propagate_lambda
    from .calibrate import load_or_calibrate

    lay, inputs = build_full_scheme(cfg.circuit, lam, design, load_or_calibrate(design, cfg.params))
    grid = design.grid
    f = ScalarField(grid, inputs.total, 0.0, design.wavelength, (design.core_index + design.clad_index) / 2)
    traj = propagate(f, lay, cfg.params, cfg.analysis.record_every)
    absorbed = traj.absorbed_power / traj.power[0]
    with open(out.path("intensity.csv"), "w") as fh:
        fh.write("z_um,absorbed_fraction," + ",".join(f"x={x:.4f}" for x in grid.x) + "\n")
        for z, a, row in zip(traj.z, absorbed, traj.intensity):
            fh.write(f"{z:.17g},{a:.17g}," + ",".join(f"{v:.6e}" for v in row) + "\n")
    with open(out.path("layout.json"), "w") as fh:
        fh.write(lay.to_json())
    if cfg.outputs.plots:
        plots.heatmap(out.path("intensity.svg"), traj.intensity, grid.x, traj.z,
                      f"intensity, lambda = {lam:g}", "x (um)", "z (um)")
    return {"lambda": lam, "absorbed_fraction": float(absorbed[-1]), "length_um": lay.total_length}


def _surface(cfg, backend, config, seed):
    grid = angle_grid(cfg.angle_step)
    e = cfg.ensemble
    lams = sample_lambda(e.n_lambda, e.mode, seed if e.mode == "seeded-random" else None)
    return correlation_surface(backend, config, grid, grid, lams), lams


def cmd_surface(cfg: RunConfig, out: Outputs, workers: int, seed: int):
    be = _backend(cfg, workers)
    surf, lams = _surface(cfg, be, cfg.circuit, seed)
    if np.all(np.isnan(surf.S)):
        raise DegenerateEnsemble("every surface cell is degenerate")
    surf.write_csv(out.path("surface.csv"))
    info = {"max_abs_S": float(np.nanmax(np.abs(surf.S))), "missing_cells": int(surf.missing.sum())}
    if be != "oracle" and cfg.outputs.samples:
        c = cfg.circuit
        A, B, _ = be.measure(c, lams.values, surf.theta1_grid, surf.theta2_grid)
        with open(out.path("samples.csv"), "w") as fh:
            fh.write("lambda,theta1,theta2,A,B\n")
            i = int(np.argmin(np.abs(surf.theta1_grid - c.theta1 % math.pi)))
            j = int(np.argmin(np.abs(surf.theta2_grid - c.theta2 % math.pi)))
            for k in np.argsort(lams.values, kind="stable"):
                fh.write(f"{lams.values[k]:.17g},{surf.theta1_grid[i]:.17g},{surf.theta2_grid[j]:.17g},{A[i, k]:.17g},{B[j, k]:.17g}\n")
        with open(out.path("intensity_differences.csv"), "w") as fh:
            fh.write("theta,lambda,A,B\n")
            for t in range(len(surf.theta1_grid)):
                for k in np.argsort(lams.values, kind="stable"):
                    fh.write(f"{surf.theta1_grid[t]:.17g},{lams.values[k]:.17g},{A[t, k]:.17g},{B[t, k]:.17g}\n")
    if cfg.outputs.plots:
        plots.heatmap(out.path("surface.svg"), surf.S.T, surf.theta1_grid, surf.theta2_grid,
                      f"S(theta1, theta2), {cfg.circuit.state_kind}", "theta1 (rad)", "theta2 (rad)", -1, 1)
    return info


def cmd_chsh(cfg: RunConfig, out: Outputs, workers: int, seed: int):
    be = _backend(cfg, workers)
    states = cfg.analysis.states or (cfg.circuit.state_kind,)
    e = cfg.ensemble
    reports = []
    for s in states:
        c = replace(cfg.circuit, state_kind=s)
        if cfg.analysis.refine:
            surf, _ = _surface(cfg, be, c, seed)
            reports.append(maximize_chsh(surf, refine=True))
        else:
            reports.append(chsh_over_sequences(be, c, e.sequences, e.n_lambda, seed, cfg.angle_step, e.mode))
    write_table_csv(reports, out.path("table.csv"))
    text = format_table(reports)
    out.path("table.txt").write_text(text)
    click.echo(text, nl=False)
    return {"max_abs_B": {r.state_kind: abs(r.B_value) for r in reports}}


def cmd_sweep(cfg: RunConfig, out: Outputs, workers: int, seed: int):
    be = _backend(cfg, workers)
    a, e = cfg.analysis, cfg.ensemble
    pts = theta3_sweep(be, cfg.circuit, a.sweep_values, a.sweep_axis, e.n_lambda, e.sequences, seed,
                       cfg.angle_step, e.mode)
    write_sweep_csv(pts, out.path("sweep.csv"), a.sweep_axis)
    if cfg.outputs.plots:
        plots.line_plot(out.path("sweep.svg"), {"max|B|": ([p.value for p in pts], [p.max_b for p in pts])},
                        f"max|B| versus {a.sweep_axis}", a.sweep_axis, "max|B|", hlines=(2.0, 2 * math.sqrt(2)))
    return {"points": [(p.value, p.max_b) for p in pts]}


def cmd_audit(cfg: RunConfig, out: Outputs, seed: int, n_random: int):
    res = product_bound_audit(n_random, seed, cfg.angle_step)
    with open(out.path("audit.csv"), "w") as fh:
        fh.write("state_index,max_abs_B\n")
        for i, v in enumerate(res.values):
            fh.write(f"{i},{v:.17g}\n")
        fh.write(f"canary_phi-,{res.canary:.17g}\n")
    click.echo(f"worst product max|B| = {res.worst:.12f}; Bell canary = {res.canary:.6f}; "
               f"{'PASS' if res.passed else 'FAIL'}")
    return {"worst": res.worst, "canary": res.canary, "passed": res.passed}


# ----------------------------------------------------------------------
# click plumbing


def _load(config_path) -> RunConfig:
    if config_path is None:
        return RunConfig()
    try:
        text = Path(config_path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)


def _run(command: str, config_path, out_dir, workers, seed, body):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    out = None
    try:
        cfg = _load(config_path)
        seed = cfg.ensemble.seed if seed is None else seed
        if workers < 1:
            raise ConfigError("--workers must be >= 1")
        out = Outputs(Path(out_dir or cfg.outputs.directory))
        info = body(cfg, out, seed)
        out.publish({"command": command, "config": cfg.to_dict(), "seed": seed, "workers": workers,
                     "argv": sys.argv, "versions": _versions(), "result": info})
        out = None
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except DegenerateEnsemble as exc:
        click.echo(f"degenerate ensemble: {exc}", err=True)
        sys.exit(EXIT_DEGENERATE)
    except PhysicsError as exc:
        click.echo(f"physics error ({type(exc).__name__}): {exc}", err=True)
        sys.exit(EXIT_PHYSICS)
    finally:
        if out is not None:
            out.discard()
    return info


def _common(f):
    f = click.option("--seed", type=int, default=None, help="base seed for lambda sequences")(f)
    f = click.option("--workers", type=int, default=1, show_default=True, help="parallel workers")(f)
    f = click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help="output directory")(f)
    f = click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                     help="JSON run configuration")(f)
    return f


@click.group()
def main():
    """Mode-entanglement CHSH simulations on slab-waveguide circuits."""


@main.command()
@_common
def modes(config_path, out_dir, workers, seed):
    """Write guided mode profiles and propagation constants."""
    _run("modes", config_path, out_dir, workers, seed, lambda c, o, s: cmd_modes(c, o))


@main.command(name="propagate")
@_common
@click.option("--lambda", "lam", type=float, default=None, help="inter-field phase (overrides config)")
def propagate_cmd(config_path, out_dir, workers, seed, lam):
    """BPM intensity map of the whole scheme for one lambda."""

    def body(c, o, s):
        if lam is not None:
            c = replace(c, analysis=replace(c.analysis, propagate_lambda=lam))
        return cmd_propagate(c, o, workers)

    _run("propagate", config_path, out_dir, workers, seed, body)


@main.command()
@_common
def surface(config_path, out_dir, workers, seed):
    """Correlation surface S(theta1, theta2) and its samples."""
    _run("surface", config_path, out_dir, workers, seed, lambda c, o, s: cmd_surface(c, o, workers, s))


@main.command()
@_common
def chsh(config_path, out_dir, workers, seed):
    """Maximized CHSH report over lambda sequences."""
    _run("chsh", config_path, out_dir, workers, seed, lambda c, o, s: cmd_chsh(c, o, workers, s))


@main.command()
@_common
def sweep(config_path, out_dir, workers, seed):
    """max|B| versus Kerr strength or preparation phase."""
    _run("sweep", config_path, out_dir, workers, seed, lambda c, o, s: cmd_sweep(c, o, workers, s))


@main.command()
@_common
@click.option("--n-random", type=int, default=100, show_default=True)
def audit(config_path, out_dir, workers, seed, n_random):
    """Check that random product states never violate |B| <= 2."""
    info = {}

    def body(c, o, s):
        info.update(cmd_audit(c, o, s, n_random))
        return info

    _run("audit", config_path, out_dir, workers, seed, body)
    if not info.get("passed", False):
        sys.exit(EXIT_AUDIT)


if __name__ == "__main__":
    main()
