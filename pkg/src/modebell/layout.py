"""Index-map geometry: guides, index patches, Kerr windows and their composition.

A :class:`DeviceLayout` is an immutable bag of features placed in absolute
``z`` plus named ports.  Fragments are built at ``z = 0`` and combined with
:meth:`DeviceLayout.then` (series) and :meth:`DeviceLayout.beside`
(parallel).  Index maps are rasterized with sub-pixel averaging of ``n^2`` so
that smoothly moving guide edges do not produce staircase artefacts.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .bpm import IndexSlice
from .errors import GeometryError
from .modes import Grid

MAX_SLOPE = math.tan(math.radians(5.0))


def _overlap_fraction(x: np.ndarray, h: float, lo, hi) -> np.ndarray:
    """Fraction of each cell ``[x - h/2, x + h/2]`` covered by ``[lo, hi]``.

    ``lo``/``hi`` broadcast against ``x`` (typically shape ``(nz, 1)``).
    """
    return np.clip((np.minimum(x + h / 2, hi) - np.maximum(x - h / 2, lo)) / h, 0.0, 1.0)


@dataclass(frozen=True)
class Guide:
    """A core strip whose axis follows a raised-cosine S-bend from ``x0`` to ``x1``
    and whose width tapers linearly from ``w0`` to ``w1``."""

    z0: float
    z1: float
    x0: float
    x1: float
    w0: float
    w1: float
    name: str = ""

    kind = "guide"

    def center(self, z):
        t = np.clip((np.asarray(z) - self.z0) / (self.z1 - self.z0), 0.0, 1.0)
        return self.x0 + (self.x1 - self.x0) * (1 - np.cos(np.pi * t)) / 2

    def width(self, z):
        t = np.clip((np.asarray(z) - self.z0) / (self.z1 - self.z0), 0.0, 1.0)
        return self.w0 + (self.w1 - self.w0) * t

    @property
    def max_slope(self) -> float:
        return math.pi * abs(self.x1 - self.x0) / (2 * (self.z1 - self.z0))

    def shifted(self, dz: float) -> "Guide":
        return replace(self, z0=self.z0 + dz, z1=self.z1 + dz)


@dataclass(frozen=True)
class Patch:
    """Additive index change ``delta_n`` over ``[x_lo, x_hi]``."""

    z0: float
    z1: float
    x_lo: float
    x_hi: float
    delta_n: float
    name: str = ""

    kind = "patch"

    def shifted(self, dz: float) -> "Patch":
        return replace(self, z0=self.z0 + dz, z1=self.z1 + dz)


@dataclass(frozen=True)
class KerrWindow:
    """Region with intensity-dependent index ``n2 * |E|^2``."""

    z0: float
    z1: float
    x_lo: float
    x_hi: float
    n2: float
    name: str = ""

    kind = "kerr"

    def shifted(self, dz: float) -> "KerrWindow":
        return replace(self, z0=self.z0 + dz, z1=self.z1 + dz)


@dataclass(frozen=True)
class Port:
    """Transverse window ``[x - width/2, x + width/2]`` at position ``z``."""

    name: str
    z: float
    x: float
    width: float

    @property
    def bounds(self) -> tuple[float, float]:
        return self.x - self.width / 2, self.x + self.width / 2

    def shifted(self, dz: float, dx: float = 0.0) -> "Port":
        return replace(self, z=self.z + dz, x=self.x + dx)


@dataclass(frozen=True)
class Segment:
    name: str
    z_start: float
    z_end: float


@dataclass(frozen=True)
class DeviceLayout:
    features: tuple = ()
    total_length: float = 0.0
    ports: tuple = ()
    segments: tuple = ()
    core_index: float = 1.46
    clad_index: float = 1.45
    wavelength: float = 1.55
    z_start: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    # -- composition -------------------------------------------------

    def shifted(self, dz: float) -> "DeviceLayout":
        return replace(
            self,
            features=tuple(f.shifted(dz) for f in self.features),
            ports=tuple(p.shifted(dz) for p in self.ports),
            segments=tuple(Segment(s.name, s.z_start + dz, s.z_end + dz) for s in self.segments),
        )

    def then(self, other: "DeviceLayout") -> "DeviceLayout":
        """Series composition: ``other`` starts where ``self`` ends.

        On a name clash the later port wins, except ``in`` which keeps the
        first fragment's entry.
        """
        moved = other.shifted(self.total_length)
        ports = {p.name: p for p in self.ports}
        for p in moved.ports:
            if p.name == "in" and "in" in ports:
                continue
            ports[p.name] = p
        ports = tuple(ports.values())
        return replace(
            self,
            features=self.features + moved.features,
            total_length=self.total_length + other.total_length,
            ports=ports,
            segments=self.segments + moved.segments,
            meta={**self.meta, **other.meta},
        )

    def beside(self, other: "DeviceLayout") -> "DeviceLayout":
        """Parallel composition of two fragments of equal length."""
        if abs(self.total_length - other.total_length) > 1e-9:
            raise GeometryError(
                f"parallel fragments differ in length ({self.total_length} vs {other.total_length})"
            )
        names = {p.name for p in self.ports}
        clash = names & {p.name for p in other.ports}
        if clash:
            raise GeometryError(f"duplicate port names {sorted(clash)}")
        return replace(
            self,
            features=self.features + other.features,
            ports=self.ports + other.ports,
            segments=self.segments + other.segments,
            meta={**self.meta, **other.meta},
        )

    def with_ports(self, *ports: Port, prefix: str = "") -> "DeviceLayout":
        renamed = tuple(replace(p, name=prefix + p.name) for p in self.ports)
        return replace(self, ports=renamed + tuple(ports))

    def port(self, name: str) -> Port:
        for p in self.ports:
            if p.name == name:
                return p
        raise KeyError(f"no port named {name!r}; have {[p.name for p in self.ports]}")

    def guides(self) -> list[Guide]:
        return [f for f in self.features if isinstance(f, Guide)]

    # -- rasterization -----------------------------------------------

    def index_chunk(self, z, x):
        """Linear index ``(nz, nx)`` and Kerr coefficient (or ``None``) at ``z``."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        x = np.asarray(x, dtype=float)
        h = float(x[1] - x[0])
        nz = len(z)
        zlo, zhi = z.min(), z.max()
        fill = np.zeros((nz, len(x)))
        dn = None
        n2 = None
        for f in self.features:
            if f.z1 <= zlo or f.z0 > zhi:
                continue
            on = (z >= f.z0) & (z < f.z1)
            if not on.any():
                continue
            if isinstance(f, Guide):
                zc = z[on][:, None]
                c, w = f.center(zc), f.width(zc)
                fill[on] += _overlap_fraction(x, h, c - w / 2, c + w / 2)
            elif isinstance(f, Patch):
                if dn is None:
                    dn = np.zeros((nz, len(x)))
                dn[on] += f.delta_n * _overlap_fraction(x, h, f.x_lo, f.x_hi)
            else:
                if n2 is None:
                    n2 = np.zeros((nz, len(x)))
                n2[on] += f.n2 * _overlap_fraction(x, h, f.x_lo, f.x_hi)
        np.minimum(fill, 1.0, out=fill)
        nc2, ncl2 = self.core_index**2, self.clad_index**2
        n = np.sqrt(ncl2 + fill * (nc2 - ncl2))
        if dn is not None:
            n += dn
        return n, n2

    def slice_at(self, z: float, grid: Grid) -> IndexSlice:
        n, n2 = self.index_chunk([z], grid.x)
        return IndexSlice(n[0], 0.0 if n2 is None else n2[0])

    # -- checks --------------------------------------------------------

    def check(self, grid: Grid | None = None) -> None:
        """Raise :class:`GeometryError` for non-paraxial bends, overlapping
        parallel guides, or ports outside ``grid``."""
        guides = self.guides()
        for g in guides:
            if g.max_slope > MAX_SLOPE:
                raise GeometryError(
                    f"guide {g.name or '?'} bends at slope {g.max_slope:.3f} > tan(5 deg)"
                )
        for i, a in enumerate(guides):
            for b in guides[i + 1:]:
                lo, hi = max(a.z0, b.z0), min(a.z1, b.z1)
                if hi - lo <= 1e-9:
                    continue
                zs = np.linspace(lo, hi, 9)[1:-1] if hi - lo > 1e-6 else np.array([lo])
                gap = np.abs(a.center(zs) - b.center(zs)) - (a.width(zs) + b.width(zs)) / 2
                # touching arms of a Y-junction are allowed; genuine overlap is not
                if np.any(gap < -1e-6) and not (a.name.endswith("arm") and b.name.endswith("arm")):
                    raise GeometryError(f"guides {a.name!r} and {b.name!r} overlap")
        if grid is not None:
            for p in self.ports:
                lo, hi = p.bounds
                if lo < grid.x_min or hi > grid.x_max:
                    raise GeometryError(f"port {p.name} [{lo}, {hi}] outside grid")

    # -- export --------------------------------------------------------

    def to_dict(self) -> dict:
        def feat(f):
            d = asdict(f)
            d["kind"] = f.kind
            return d

        return {
            "total_length": self.total_length,
            "core_index": self.core_index,
            "clad_index": self.clad_index,
            "wavelength": self.wavelength,
            "segments": [asdict(s) for s in self.segments],
            "ports": [asdict(p) for p in self.ports],
            "features": [feat(f) for f in self.features],
            "meta": self.meta,
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, default=float)

    def write_preview_csv(self, path, grid: Grid, dz: float = 10.0) -> None:
        """Rows ``(z, x, n)`` sampled every ``dz`` along the layout."""
        zs = np.arange(0.0, self.total_length + 1e-9, dz) + self.z_start
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["z_um", "x_um", "n"])
            for i in range(0, len(zs), 64):
                n, _ = self.index_chunk(zs[i:i + 64], grid.x)
                for zi, row in zip(zs[i:i + 64], n):
                    for xi, ni in zip(grid.x, row):
                        w.writerow([f"{zi:.6g}", f"{xi:.6g}", f"{ni:.8f}"])
