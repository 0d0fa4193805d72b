"""CHSH combination, its exhaustive maximization, sweeps and reports.

``B = S(t1, t2) - S(t1, t2') + S(t1', t2') + S(t1', t2)``.  For a fixed pair
``(t2, t2')`` the two first-side angles enter separately::

    B = u(t1) + v(t1'),  u = S(., t2) - S(., t2'),  v = S(., t2') + S(., t2)

so ``max |B|`` over a grid of ``n`` angles costs ``O(n^3)`` instead of
``O(n^4)``.  Missing (NaN) cells are excluded, never treated as zero.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field, replace

import numpy as np

from .circuit import CircuitConfig
from .ensemble import (
    CorrelationSurface,
    angle_grid,
    correlation_surface,
    make_backend,
    sample_lambda,
    surface_from_samples,
)
from .errors import ConfigError, DegenerateEnsemble, EmptySurface, MissingCell
from .oracle import expect_correlation, make_entangled, make_product, product_of

TIE_TOL = 1e-12
BASE_STEP = math.pi / 40


@dataclass
class ChshReport:
    theta1: float
    theta1p: float
    theta2: float
    theta2p: float
    B_value: float
    state_kind: str = ""
    lambda_sequences_used: int = 1
    B_std: float = 0.0
    surface: CorrelationSurface | None = field(default=None, repr=False)
    per_sequence: list = field(default_factory=list, repr=False)

    @property
    def angles(self) -> tuple[float, float, float, float]:
        return self.theta1, self.theta1p, self.theta2, self.theta2p

    @property
    def max_abs_b(self) -> float:
        return abs(self.B_value)

    @property
    def violation(self) -> bool:
        return abs(self.B_value) > 2.0


def _index(grid: np.ndarray, theta: float) -> int:
    t = theta % math.pi
    d = np.abs((grid - t + math.pi / 2) % math.pi - math.pi / 2)
    i = int(np.argmin(d))
    if d[i] > 1e-9:
        raise MissingCell(f"angle {theta} is not on the surface grid")
    return i


def chsh_value(surface: CorrelationSurface, theta1, theta1p, theta2, theta2p) -> float:
    """Signed ``B`` at exact grid points (angles taken mod pi)."""
    i, ip = _index(surface.theta1_grid, theta1), _index(surface.theta1_grid, theta1p)
    j, jp = _index(surface.theta2_grid, theta2), _index(surface.theta2_grid, theta2p)
    S = surface.S
    cells = [S[i, j], S[i, jp], S[ip, jp], S[ip, j]]
    if any(np.isnan(c) for c in cells):
        raise MissingCell("a required correlation cell is missing")
    return float(cells[0] - cells[1] + cells[2] + cells[3])


def _search(S: np.ndarray):
    """Best ``(value, sign, i, ip, j, jp)`` of ``|B|`` with lexicographic tie-break."""
    n1, n2 = S.shape
    if n1 == 0 or n2 == 0 or np.all(np.isnan(S)):
        raise EmptySurface("surface has no usable cells")
    best = None
    for j in range(n2):
        u = S[:, j][:, None] - S  # (n1, n2) over jp
        v = S[:, j][:, None] + S
        for sign in (1.0, -1.0):
            su = np.where(np.isnan(u), -np.inf, sign * u)
            sv = np.where(np.isnan(v), -np.inf, sign * v)
            mu, mv = su.max(axis=0), sv.max(axis=0)
            tot = mu + mv
            if not np.isfinite(tot).any():
                continue
            top = np.max(tot[np.isfinite(tot)])
            for jp in np.flatnonzero(tot >= top - TIE_TOL):
                i = int(np.flatnonzero(su[:, jp] >= mu[jp] - TIE_TOL)[0])
                ip = int(np.flatnonzero(sv[:, jp] >= mv[jp] - TIE_TOL)[0])
                cand = (float(tot[jp]), sign, i, ip, j, int(jp))
                if best is None or cand[0] > best[0] + TIE_TOL or (
                    abs(cand[0] - best[0]) <= TIE_TOL and cand[2:] < best[2:]
                ):
                    best = cand
    if best is None:
        raise EmptySurface("no complete angle quadruple on the surface")
    return best


def maximize_chsh(surface: CorrelationSurface, refine: bool = False, factor: int = 10) -> ChshReport:
    """Exhaustive grid maximization of ``|B|``.

    With ``refine`` the surface's evaluator is sampled on a grid ``factor``
    times finer spanning one coarse step either side of each incumbent angle,
    and the search is repeated there (the incumbent is part of the fine grid,
    so refinement never lowers the result).
    """
    val, sign, i, ip, j, jp = _search(surface.S)
    t1g, t2g = surface.theta1_grid, surface.theta2_grid
    rep = ChshReport(t1g[i], t1g[ip], t2g[j], t2g[jp], sign * val, surface.state_kind, 1, 0.0, surface)
    if not refine:
        return rep
    if surface.evaluator is None:
        raise ConfigError("refinement needs a surface with an evaluator")

    def local(g, centres):
        step = float(np.min(np.diff(np.sort(g)))) if len(g) > 1 else BASE_STEP
        fine = step / factor
        pts = {round((c + k * fine) % math.pi, 12) for c in centres for k in range(-factor, factor + 1)}
        return np.array(sorted(pts))

    f1 = local(t1g, (rep.theta1, rep.theta1p))
    f2 = local(t2g, (rep.theta2, rep.theta2p))
    fs = CorrelationSurface(f1, f2, surface.evaluator(f1, f2), surface.state_kind, surface.evaluator)
    fine = maximize_chsh(fs)
    if abs(fine.B_value) < abs(rep.B_value):
        return rep
    return fine


# ----------------------------------------------------------------------
# ensembles of lambda sequences


def chsh_over_sequences(backend, config: CircuitConfig, n_sequences: int = 16, n_lambda: int = 64,
                        seed: int = 0, step: float = BASE_STEP, mode: str = "seeded-random") -> ChshReport:
    """Mean and spread of ``max |B|`` over independent lambda sequences.

    Sequence ``k`` uses seed ``seed + k``.  The reported quadruple is the one
    chosen most often (ties: lexicographically smallest).
    """
    if n_sequences < 1:
        raise ConfigError("need at least one lambda sequence")
    be = make_backend(backend) if isinstance(backend, str) else backend
    grid = angle_grid(step)
    seqs = [sample_lambda(n_lambda, mode, None if mode == "uniform-grid" else seed + k)
            for k in range(n_sequences)]
    if be == "oracle":
        rep = maximize_chsh(correlation_surface("oracle", config, grid, grid))
        return replace(rep, lambda_sequences_used=0)
    lams = np.concatenate([s.values for s in seqs])
    A, B, _ = be.measure(config, lams, grid, grid)
    reports = []
    for k, s in enumerate(seqs):
        cols = slice(k * n_lambda, (k + 1) * n_lambda)
        S = surface_from_samples(A[:, cols], B[:, cols], s)
        reports.append(maximize_chsh(CorrelationSurface(grid, grid, S, config.state_kind)))
    vals = np.array([r.max_abs_b for r in reports])
    counts = Counter(r.angles for r in reports)
    top = max(counts.values())
    quad = min(q for q, c in counts.items() if c == top)
    return ChshReport(*quad, float(vals.mean()), config.state_kind, n_sequences,
                      float(vals.std(ddof=1)) if n_sequences > 1 else 0.0, reports[0].surface,
                      [(r.angles, r.B_value) for r in reports])


# ----------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepPoint:
    value: float
    max_b: float  # NaN if the ensemble was degenerate everywhere
    angles: tuple
    b_std: float = 0.0


def theta3_sweep(backend, config: CircuitConfig, values, axis: str = "kappa", n_lambda: int = 64,
                 n_sequences: int = 1, seed: int = 0, step: float = BASE_STEP,
                 mode: str = "uniform-grid") -> list[SweepPoint]:
    """``max |B|`` versus the Kerr strength (``axis="kappa"``) or the
    preparation phase (``axis="theta3"``)."""
    values = list(values)
    if not values:
        raise ConfigError("sweep range is empty")
    if axis not in ("kappa", "theta3"):
        raise ConfigError("sweep axis must be 'kappa' or 'theta3'")
    be = make_backend(backend) if isinstance(backend, str) else backend
    out = []
    for v in values:
        cfg = replace(config, **({"kerr_strength": float(v)} if axis == "kappa" else {"theta3": float(v)}))
        try:
            r = chsh_over_sequences(be, cfg, n_sequences, n_lambda, seed, step, mode)
            out.append(SweepPoint(float(v), r.max_abs_b, r.angles, r.B_std))
        except (EmptySurface, DegenerateEnsemble):
            out.append(SweepPoint(float(v), math.nan, (), 0.0))
    return out


def write_sweep_csv(points, path, axis: str = "kappa") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([axis, "max_abs_B", "B_std", "theta1", "theta1p", "theta2", "theta2p", "violation"])
        for p in points:
            ang = list(p.angles) if p.angles else [""] * 4
            viol = "" if math.isnan(p.max_b) else int(p.max_b > 2.0)
            w.writerow([repr(p.value), "" if math.isnan(p.max_b) else repr(p.max_b), repr(p.b_std), *ang, viol])


# ----------------------------------------------------------------------
# product-state audit


@dataclass
class AuditResult:
    worst: float
    values: np.ndarray
    canary: float
    passed: bool


def _random_qubit(rng) -> np.ndarray:
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    return v / np.linalg.norm(v)


def _oracle_max(state, grid) -> float:
    def ev(a, b):
        return expect_correlation(state, np.asarray(a)[:, None], np.asarray(b)[None, :])

    return maximize_chsh(CorrelationSurface(grid, grid, ev(grid, grid), "", ev)).max_abs_b


def product_bound_audit(n_random: int = 100, seed: int = 0, step: float = BASE_STEP) -> AuditResult:
    """Random product states never exceed ``|B| = 2``; a Bell state must.

    The sampled states include the four sign products plus ``n_random``
    random single-field states on each side.
    """
    if n_random < 1:
        raise ConfigError("n_random must be >= 1")
    rng = np.random.default_rng(seed)
    grid = angle_grid(step)
    states = [make_product(a, b) for a in "+-" for b in "+-"]
    states += [product_of(_random_qubit(rng), _random_qubit(rng)) for _ in range(n_random)]
    vals = np.array([_oracle_max(s, grid) for s in states])
    canary = _oracle_max(make_entangled("phi-"), grid)
    worst = float(vals.max())
    return AuditResult(worst, vals, canary, worst <= 2 + 1e-9 and canary > 2.0)


# ----------------------------------------------------------------------
# reports


def _pi40(theta: float) -> str:
    k = theta / BASE_STEP
    return f"{round(k)}" if abs(k - round(k)) < 1e-6 else f"{k:.3f}"


def report_rows(reports: list[ChshReport]) -> list[dict]:
    rows = []
    for r in reports:
        row = {"state": r.state_kind}
        for name, t in zip(("theta1", "theta1p", "theta2", "theta2p"), r.angles):
            row[f"{name}_pi40"] = _pi40(t)
            row[f"{name}_mod_pi_pi40"] = _pi40(t % math.pi)
        row.update(max_abs_B=abs(r.B_value), B_std=r.B_std, sequences=r.lambda_sequences_used,
                   violation="VIOLATION" if r.violation else "no violation")
        rows.append(row)
    return rows


def write_table_csv(reports, path) -> None:
    rows = report_rows(reports)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def format_table(reports) -> str:
    """Aligned text table: angles in units of pi/40 (raw and mod pi)."""
    head = f"{'state':<10} {'theta1':>7} {'theta1p':>7} {'theta2':>7} {'theta2p':>7}   {'max|B|':>8} {'std':>7}  result"
    lines = [head, "-" * len(head)]
    for row in report_rows(reports):
        ang = " ".join(f"{row[k + '_pi40']:>7}" for k in ("theta1", "theta1p", "theta2", "theta2p"))
        lines.append(f"{row['state']:<10} {ang}   {row['max_abs_B']:8.4f} {row['B_std']:7.4f}  {row['violation']}")
    lines.append("angles in units of pi/40; all angle arithmetic is mod pi")
    return "\n".join(lines) + "\n"
