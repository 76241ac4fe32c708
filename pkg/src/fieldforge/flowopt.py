"""Per-layer flow-rate search against expected layer geometry.

For every z-layer of a target part, every candidate flow rate is scored by
reconstructing that single slice from the trained field and measuring the
mean absolute mismatch against the expected binary layer image.  The best
rate per layer (ties broken toward 100%, then toward the smaller rate)
forms a flow schedule, exported as CSV plus a printer-command file with one
``M221 S<phi>`` line per layer.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import neuralfield as nf
from .neuralfield import SirenNet
from .sampler import DomainBounds
from .synthgen import MorphologyModel, ShapeSpec, oracle_sdf


@dataclass
class ExpectedLayerImage:
    z_index: int
    image: np.ndarray  # (ny, nx) uint8

    def __post_init__(self) -> None:
        self.image = np.asarray(self.image)
        if self.image.ndim != 2:
            raise ValueError("expected layer image must be 2D")
        extra = set(np.unique(self.image)) - {0, 1}
        if extra:
            raise ValueError(f"layer image must be binary, found {sorted(extra)}")
        self.image = self.image.astype(np.uint8)

    @property
    def is_empty(self) -> bool:
        return not self.image.any()


def default_candidates(lo: float = 45.0, hi: float = 280.0,
                       step: float = 1.0) -> np.ndarray:
    """Inclusive sweep of flow-rate candidates, default 45..280 by 1."""
    if hi < lo or step <= 0:
        raise ValueError("need hi >= lo and step > 0")
    n = int(np.floor((hi - lo) / step + 0.5)) + 1
    return lo + step * np.arange(n)


def expected_layers(spec: ShapeSpec, dims, bounds: DomainBounds,
                    phi: float = 100.0,
                    model: MorphologyModel = MorphologyModel()) -> "list[ExpectedLayerImage]":
    """Rasterize the reference geometry layer by layer on the recon lattice."""
    nx, ny, nz = dims
    xs = np.linspace(bounds.x[0], bounds.x[1], nx)
    ys = np.linspace(bounds.y[0], bounds.y[1], ny)
    zs = np.linspace(bounds.z[0], bounds.z[1], nz)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    out = []
    for k, zval in enumerate(zs):
        sdf = oracle_sdf(spec, model, xx, yy, np.full_like(xx, zval), phi)
        out.append(ExpectedLayerImage(z_index=k, image=(sdf <= 0.0).astype(np.uint8)))
    return out


@dataclass
class FitnessGrid:
    """Mismatch of every (layer, candidate) pair; lower is better."""

    z_indices: "list[int]"
    candidates: np.ndarray
    values: np.ndarray  # (layers, candidates)

    def __post_init__(self) -> None:
        self.candidates = np.asarray(self.candidates, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.z_indices), len(self.candidates)):
            raise ValueError("fitness grid shape mismatch")


@dataclass(frozen=True)
class ScheduleEntry:
    z_index: int
    z_mm: float
    phi_percent: float
    fitness: float


@dataclass
class FlowSchedule:
    entries: "list[ScheduleEntry]" = field(default_factory=list)
    candidate_lo: float = 45.0
    candidate_hi: float = 280.0

    def phis(self) -> np.ndarray:
        return np.array([e.phi_percent for e in self.entries])


def _slice_coords(dims, z_index: int, bounds: DomainBounds) -> np.ndarray:
    nx, ny, nz = dims
    xs = np.linspace(-1.0, 1.0, nx)
    ys = np.linspace(-1.0, 1.0, ny)
    zval = np.linspace(-1.0, 1.0, nz)[z_index]
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    coords = np.empty((ny * nx, 4), dtype=np.float64)
    coords[:, 0] = xx.ravel()
    coords[:, 1] = yy.ravel()
    coords[:, 2] = zval
    return coords


def _binarize(net: SirenNet, values: np.ndarray) -> np.ndarray:
    if net.config.final_activation == "sigmoid":
        return values >= 0.5
    return values <= 0.0


def layer_fitness(net: SirenNet, expected: ExpectedLayerImage, dims,
                  bounds: DomainBounds, phi: float) -> float:
    """Mean absolute difference between one reconstructed slice and its target."""
    coords = _slice_coords(dims, expected.z_index, bounds)
    coords[:, 3] = bounds.normalize_phi(phi)
    pred = _binarize(net, nf.forward(net, coords))
    ref = expected.image.ravel().astype(bool)
    if len(ref) != len(pred):
        raise ValueError("expected image does not match the slice resolution")
    return float(np.mean(pred != ref))


def optimize_schedule(net: SirenNet, expected: "list[ExpectedLayerImage]",
                      dims, bounds: DomainBounds,
                      candidates: "np.ndarray | None" = None,
                      phi_chunk: int = 32) -> "tuple[FlowSchedule, FitnessGrid]":
    """Exhaustive per-layer search over candidate flow rates.

    Layers are independent: each row of the fitness grid is the full
    mismatch curve for that layer and its argmin decides the schedule.
    Ties prefer the rate closest to 100%, then the smaller rate.  Layers
    whose expected image is empty keep a zero row and are pinned to the
    candidate nearest 100%.
    """
    if candidates is None:
        candidates = default_candidates()
    candidates = np.asarray(candidates, dtype=np.float64)
    if len(candidates) == 0:
        raise ValueError("candidate list is empty")
    nx, ny, nz = dims
    zs_mm = np.linspace(bounds.z[0], bounds.z[1], nz)
    phi_norm = np.array([bounds.normalize_phi(p) for p in candidates])

    values = np.zeros((len(expected), len(candidates)))
    entries = []
    for row, layer in enumerate(expected):
        if not 0 <= layer.z_index < nz:
            raise ValueError(f"layer z_index {layer.z_index} outside grid")
        z_mm = float(zs_mm[layer.z_index])
        if layer.is_empty:
            pick = int(np.lexsort((candidates,
                                   np.abs(candidates - 100.0)))[0])
            entries.append(ScheduleEntry(z_index=layer.z_index, z_mm=z_mm,
                                         phi_percent=float(candidates[pick]),
                                         fitness=0.0))
            continue
        base = _slice_coords(dims, layer.z_index, bounds)
        ref = layer.image.ravel().astype(bool)
        if len(ref) != ny * nx:
            raise ValueError("expected image does not match the slice resolution")
        row_vals = np.empty(len(candidates))
        for lo in range(0, len(candidates), phi_chunk):
            chunk = phi_norm[lo:lo + phi_chunk]
            coords = np.tile(base, (len(chunk), 1))
            coords[:, 3] = np.repeat(chunk, ny * nx)
            pred = _binarize(net, nf.forward(net, coords)).reshape(len(chunk), -1)
            row_vals[lo:lo + len(chunk)] = (pred != ref).mean(axis=1)
        values[row] = row_vals
        best = row_vals.min()
        ties = np.nonzero(row_vals == best)[0]
        pick = ties[np.lexsort((candidates[ties],
                                np.abs(candidates[ties] - 100.0)))[0]]
        entries.append(ScheduleEntry(z_index=layer.z_index, z_mm=z_mm,
                                     phi_percent=float(candidates[pick]),
                                     fitness=float(best)))
    schedule = FlowSchedule(entries=entries,
                            candidate_lo=float(candidates.min()),
                            candidate_hi=float(candidates.max()))
    grid = FitnessGrid(z_indices=[e.z_index for e in entries],
                       candidates=candidates, values=values)
    return schedule, grid


def _fmt_phi(phi: float) -> str:
    return str(int(round(phi))) if float(phi).is_integer() else repr(float(phi))


def export_schedule(schedule: FlowSchedule, csv_path,
                    m221_path=None) -> "tuple[Path, Path]":
    """Write the schedule CSV and the printer-command file.

    The command file holds one ``M221 S<phi>`` line per layer, in layer
    order; integral flow rates print without a decimal point.  Its default
    name is the CSV path with an .m221 suffix.
    """
    csv_path = Path(csv_path)
    m221_path = Path(m221_path) if m221_path else csv_path.with_suffix(".m221")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer", "z_mm", "phi_percent", "fitness"])
        for e in schedule.entries:
            writer.writerow([int(e.z_index), repr(float(e.z_mm)),
                             _fmt_phi(e.phi_percent), repr(float(e.fitness))])
    with open(m221_path, "w", encoding="utf-8") as fh:
        for e in schedule.entries:
            fh.write(f"M221 S{_fmt_phi(e.phi_percent)}\n")
    return csv_path, m221_path


def load_schedule(csv_path) -> FlowSchedule:
    """Read back an exported schedule CSV; inverse of export_schedule."""
    entries = []
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["layer", "z_mm", "phi_percent", "fitness"]:
            raise ValueError(f"{csv_path}: not a flow-schedule CSV")
        for row in reader:
            entries.append(ScheduleEntry(
                z_index=int(row["layer"]), z_mm=float(row["z_mm"]),
                phi_percent=float(row["phi_percent"]),
                fitness=float(row["fitness"])))
    phis = [e.phi_percent for e in entries]
    return FlowSchedule(entries=entries,
                        candidate_lo=min(phis) if phis else 45.0,
                        candidate_hi=max(phis) if phis else 280.0)


def export_fitness_grid(grid: FitnessGrid, path) -> Path:
    """Matrix CSV: header of candidate rates, one row per layer."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer"] + [_fmt_phi(c) for c in grid.candidates])
        for z_index, row in zip(grid.z_indices, grid.values):
            writer.writerow([int(z_index)] + [repr(float(v)) for v in row])
    return path
