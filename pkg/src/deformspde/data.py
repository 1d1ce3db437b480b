"""Gridded replicate data: the CSV-grid file format and marginal transforms.

A CSV-grid file starts with one header line ``# {json}`` and then holds one
replicate per row, ``ny * nx`` comma-separated values in row-major order
(``j = iy * nx + ix``, location ``(x[ix], y[iy])``).  Blank or ``nan``
entries mark land cells; a cell must be blank in every row or in none.

Header keys: ``format`` (``"csv-grid"``), ``shape`` (``[ny, nx]``), ``x``,
``y``, ``kind`` (``"raw"`` for significant wave heights in metres,
``"standardized"`` for log-standardized values), and optionally
``timestamps`` (one ordinal day per row) and ``land`` (cell indices).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

FORMAT = "csv-grid"
KINDS = ("raw", "standardized")


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True)
class GridDataset:
    """Replicates on a regular grid; ``replicates`` is ``(K, J)`` with NaN on land."""

    x: np.ndarray
    y: np.ndarray
    replicates: np.ndarray
    land_mask: np.ndarray
    kind: str = "raw"
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        J = len(x) * len(y)
        reps = np.asarray(self.replicates, dtype=float).reshape(-1, J)
        mask = np.asarray(self.land_mask, dtype=bool).reshape(J)
        if self.kind not in KINDS:
            raise DataFormatError(f"unknown data kind {self.kind!r}")
        if np.any(np.isfinite(reps[:, mask])):
            raise DataFormatError("land-masked locations must not carry observations")
        if not np.all(np.isfinite(reps[:, ~mask])):
            r, c = np.argwhere(~np.isfinite(reps[:, ~mask]))[0]
            raise DataFormatError(f"missing value at row {r}, column {np.flatnonzero(~mask)[c]}")
        if self.kind == "raw" and np.any(reps[:, ~mask] <= 0):
            r, c = np.argwhere(reps[:, ~mask] <= 0)[0]
            col = int(np.flatnonzero(~mask)[c])
            raise DataFormatError(
                f"non-positive wave height {float(reps[r, col])!r} at row {r}, column {col}"
            )
        ts = self.timestamps
        if ts is not None:
            ts = np.asarray(ts)
            if len(ts) != len(reps):
                raise DataFormatError("one timestamp per replicate is required")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "replicates", reps)
        object.__setattr__(self, "land_mask", mask)
        object.__setattr__(self, "timestamps", ts)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.y), len(self.x)

    @property
    def n_replicates(self) -> int:
        return self.replicates.shape[0]

    @property
    def locations(self) -> np.ndarray:
        """``(J, 2)`` planar coordinates of every grid cell, row-major."""
        X, Y = np.meshgrid(self.x, self.y)
        return np.column_stack([X.ravel(), Y.ravel()])

    @property
    def ocean(self) -> np.ndarray:
        return np.flatnonzero(~self.land_mask)

    @property
    def ocean_locations(self) -> np.ndarray:
        return self.locations[self.ocean]

    @property
    def ocean_values(self) -> np.ndarray:
        """``(K, J_ocean)`` observations without the land columns."""
        return self.replicates[:, self.ocean]

    @property
    def bbox(self) -> tuple[float, float]:
        """Width and height of the bounding box of the ocean locations."""
        loc = self.ocean_locations
        return tuple(float(v) for v in np.ptp(loc, axis=0))

    @property
    def origin(self) -> tuple[float, float]:
        return tuple(float(v) for v in self.ocean_locations.min(axis=0))

    def subset(self, rows) -> "GridDataset":
        rows = np.asarray(rows, dtype=int)
        ts = None if self.timestamps is None else self.timestamps[rows]
        return replace(self, replicates=self.replicates[rows], timestamps=ts)


@dataclass(frozen=True)
class MarginalStats:
    """Per-location mean and standard deviation of log wave height."""

    mean: np.ndarray
    sd: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": [None if not np.isfinite(v) else float(v) for v in self.mean],
                "sd": [None if not np.isfinite(v) else float(v) for v in self.sd]}

    @classmethod
    def from_dict(cls, d) -> "MarginalStats":
        conv = lambda a: np.array([np.nan if v is None else v for v in a], dtype=float)
        return cls(mean=conv(d["mean"]), sd=conv(d["sd"]))


def _header(data: GridDataset) -> dict:
    h = {
        "format": FORMAT,
        "shape": [len(data.y), len(data.x)],
        "x": [float(v) for v in data.x],
        "y": [float(v) for v in data.y],
        "kind": data.kind,
        "land": [int(i) for i in np.flatnonzero(data.land_mask)],
    }
    if data.timestamps is not None:
        h["timestamps"] = [v.item() if hasattr(v, "item") else v for v in data.timestamps]
    return h


def write_grid_dataset(data: GridDataset, path) -> None:
    """Write ``data``; values use ``repr`` so a reload is bit-for-bit identical."""
    lines = ["# " + json.dumps(_header(data), separators=(",", ":"))]
    for row in data.replicates:
        lines.append(",".join("" if not np.isfinite(v) else repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_grid_dataset(path, format: str = FORMAT) -> GridDataset:
    if format != FORMAT:
        raise DataFormatError(f"unsupported format {format!r}")
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("#"):
        raise DataFormatError("missing '# {json}' header line")
    try:
        head = json.loads(text[0][1:])
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"malformed header: {exc}") from exc
    for key in ("format", "shape", "x", "y"):
        if key not in head:
            raise DataFormatError(f"header lacks {key!r}")
    if head["format"] != FORMAT:
        raise DataFormatError(f"header format is {head['format']!r}, expected {FORMAT!r}")
    ny, nx = (int(v) for v in head["shape"])
    if len(head["x"]) != nx or len(head["y"]) != ny:
        raise DataFormatError("coordinate lengths do not match the declared shape")
    J = nx * ny
    rows = []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != J:
            raise DataFormatError(f"line {lineno}: expected {J} values, found {len(cells)}")
        try:
            rows.append([float(c) if c.strip() else np.nan for c in cells])
        except ValueError as exc:
            raise DataFormatError(f"line {lineno}: {exc}") from exc
    reps = np.array(rows, dtype=float).reshape(-1, J)
    missing = ~np.isfinite(reps)
    mask = np.zeros(J, dtype=bool)
    mask[np.asarray(head.get("land", []), dtype=int)] = True
    if len(reps):
        mask |= missing.all(axis=0)
        partial = missing.any(axis=0) & ~mask
        if partial.any():
            c = int(np.flatnonzero(partial)[0])
            r = int(np.flatnonzero(missing[:, c])[0])
            raise DataFormatError(f"row {r}, column {c}: blank value in an ocean column")
    ts = head.get("timestamps")
    return GridDataset(
        x=head["x"], y=head["y"], replicates=reps, land_mask=mask,
        kind=head.get("kind", "raw"), timestamps=None if ts is None else np.asarray(ts),
    )


def log_standardize(data: GridDataset) -> tuple[GridDataset, MarginalStats]:
    """Log (raw data only) and standardize each location to mean 0, sd 1.

    The sample sd uses the ``n - 1`` convention.  Standardized input is only
    re-centred and re-scaled, so the operation is idempotent.
    """
    vals = data.ocean_values
    if data.kind == "raw":
        vals = np.log(vals)
    if len(vals) < 2:
        raise ValueError("standardization needs at least two replicates")
    mean = vals.mean(axis=0)
    sd = vals.std(axis=0, ddof=1)
    if np.any(sd <= 0):
        c = int(data.ocean[np.flatnonzero(sd <= 0)[0]])
        raise ValueError(f"location {c} has zero sample variance")
    out = np.full_like(data.replicates, np.nan)
    out[:, data.ocean] = (vals - mean) / sd
    J = data.replicates.shape[1]
    full_mean = np.full(J, np.nan)
    full_sd = np.full(J, np.nan)
    full_mean[data.ocean] = mean
    full_sd[data.ocean] = sd
    return replace(data, replicates=out, kind="standardized"), MarginalStats(full_mean, full_sd)


def split_alternating(data: GridDataset) -> tuple[GridDataset, GridDataset]:
    """Even-indexed replicates to the training set, odd-indexed to the test set."""
    K = data.n_replicates
    return data.subset(np.arange(0, K, 2)), data.subset(np.arange(1, K, 2))


def grid_interpolator(data: GridDataset, values):
    """Bilinear interpolation of a per-cell field; land cells are not allowed.

    Returns a function mapping ``(n, 2)`` points to interpolated values.  A
    point whose surrounding cells include land raises ``ValueError``.
    """
    vals = np.asarray(values, dtype=float).reshape(data.shape)
    land = data.land_mask.reshape(data.shape)
    x, y = data.x, data.y

    def interp(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty(len(pts))
        for n, (px, py) in enumerate(pts):
            if not (x[0] <= px <= x[-1] and y[0] <= py <= y[-1]):
                raise ValueError(f"point {n} at ({px}, {py}) lies outside the data grid")
            ix = int(np.clip(np.searchsorted(x, px) - 1, 0, len(x) - 2)) if len(x) > 1 else 0
            iy = int(np.clip(np.searchsorted(y, py) - 1, 0, len(y) - 2)) if len(y) > 1 else 0
            tx = 0.0 if len(x) == 1 else (px - x[ix]) / (x[ix + 1] - x[ix])
            ty = 0.0 if len(y) == 1 else (py - y[iy]) / (y[iy + 1] - y[iy])
            jx = [ix, min(ix + 1, len(x) - 1)]
            jy = [iy, min(iy + 1, len(y) - 1)]
            w = np.outer([1 - ty, ty], [1 - tx, tx])
            cells = land[np.ix_(jy, jx)]
            if np.any(cells & (w > 0)):
                raise ValueError(f"point {n} at ({px}, {py}) touches a land cell")
            block = np.where(w > 0, vals[np.ix_(jy, jx)], 0.0)
            out[n] = float((w * block).sum())
        return out

    return interp
