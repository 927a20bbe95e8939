"""Rectangular value grids with multilinear interpolation and JSON/CSV persistence."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.ndimage import map_coordinates, uniform_filter

SCHEMA = "v1"


@dataclass(eq=False)
class ValueGrid3:
    axes: tuple[np.ndarray, np.ndarray, np.ndarray]
    values: np.ndarray
    names: tuple[str, str, str] = ("x", "y", "z")
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        self.values = np.asarray(self.values, dtype=float)
        if len(self.axes) != 3:
            raise ValueError("a ValueGrid3 has exactly three axes")
        for a in self.axes:
            if a.ndim != 1 or (a.size > 1 and np.any(np.diff(a) <= 0)):
                raise ValueError("axes must be strictly increasing vectors")
        if self.values.shape != tuple(a.size for a in self.axes):
            raise ValueError(f"values shape {self.values.shape} does not match axes")
        self._interp = None

    @property
    def shape(self):
        return self.values.shape

    def __call__(self, x, y=None, z=None) -> np.ndarray:
        """Multilinear interpolation; points outside the box give NaN."""
        pts = np.stack(np.broadcast_arrays(x, y, z), axis=-1) if y is not None else np.asarray(x)
        if self._interp is None:
            self._interp = RegularGridInterpolator(
                self.axes, self.values, method="linear", bounds_error=False, fill_value=np.nan)
        return self._interp(pts)

    def mesh(self):
        return np.meshgrid(*self.axes, indexing="ij")

    def smoothed(self, size: int = 3) -> "ValueGrid3":
        """Box average over a size**3 neighbourhood (edges reflect); NaN cells stay NaN."""
        v = self.values
        mask = np.isfinite(v)
        num = uniform_filter(np.where(mask, v, 0.0), size=size, mode="nearest")
        den = uniform_filter(mask.astype(float), size=size, mode="nearest")
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(mask & (den > 0), num / den, np.nan)
        meta = dict(self.meta, smoothing=f"box{size}")
        return ValueGrid3(self.axes, out, self.names, meta)

    # persistence: JSON carries axes and metadata, CSV the row-major values
    def save(self, directory, stem: str = "grid") -> tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        jpath, cpath = directory / f"{stem}.json", directory / f"{stem}.csv"
        doc = {"schema": SCHEMA, "names": list(self.names),
               "axes": [a.tolist() for a in self.axes], "meta": self.meta,
               "values_csv": cpath.name}
        jpath.write_text(json.dumps(doc, indent=1, default=_jsonable))
        with cpath.open("w", newline="") as fh:
            fh.write(f"# schema={SCHEMA}\n")
            wr = csv.writer(fh)
            wr.writerow(["i", "j", "k", *self.names, "value"])
            for (i, j, k), v in np.ndenumerate(self.values):
                wr.writerow([i, j, k, repr(self.axes[0][i]), repr(self.axes[1][j]),
                             repr(self.axes[2][k]), repr(float(v))])
        return jpath, cpath

    @classmethod
    def load(cls, json_path) -> "ValueGrid3":
        json_path = Path(json_path)
        doc = json.loads(json_path.read_text())
        axes = tuple(np.asarray(a) for a in doc["axes"])
        vals = np.full(tuple(a.size for a in axes), np.nan)
        with (json_path.parent / doc["values_csv"]).open() as fh:
            rows = (r for r in csv.reader(line for line in fh if not line.startswith("#")))
            next(rows)
            for r in rows:
                vals[int(r[0]), int(r[1]), int(r[2])] = float(r[-1])
        return cls(axes, vals, tuple(doc["names"]), doc.get("meta", {}))


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def interp_unit(values: np.ndarray, coords) -> np.ndarray:
    """Multilinear interpolation of a grid laid out uniformly on [0, 1]^d.

    ``coords`` is a sequence of d arrays with entries in [0, 1] (clipped)."""
    idx = []
    for n, c in zip(values.shape, coords):
        c = np.clip(np.asarray(c, dtype=float), 0.0, 1.0)
        idx.append(c * (n - 1))
    shape = np.broadcast_shapes(*(i.shape for i in idx))
    flat = [np.broadcast_to(i, shape).ravel() for i in idx]
    out = map_coordinates(values, flat, order=1, mode="nearest")
    return out.reshape(shape)
