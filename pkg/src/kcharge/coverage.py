"""Grid-sampled coverage signatures, the requirement table and k-coverage checks.

Subregions of the disk arrangement are approximated by sampling the field on
a square grid and grouping grid points by the exact set of sensors covering
them (their *signature*).
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Optional

import numpy as np

if TYPE_CHECKING:
    from kcharge.instance import NetworkInstance


class UnderCoveredError(ValueError):
    """The initial deployment does not k-cover every grid point."""


def grid_points(width: float, height: float, spacing: float) -> np.ndarray:
    """Grid over [0, width] x [0, height], boundary included, as an (N, 2) array."""
    def axis(length):
        count = int(np.floor(length / spacing + 1e-9)) + 1
        ticks = np.arange(count) * spacing
        if length - ticks[-1] > 1e-9:
            ticks = np.append(ticks, length)
        return ticks

    xs, ys = axis(width), axis(height)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def coverage_matrix(points: np.ndarray, positions: np.ndarray, radius: float) -> np.ndarray:
    """Boolean (points x sensors) matrix; the disk boundary counts as covered."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    dx = points[:, None, 0] - positions[None, :, 0]
    dy = points[:, None, 1] - positions[None, :, 1]
    return np.hypot(dx, dy) <= radius


def min_coverage(points: np.ndarray, positions: np.ndarray, radius: float) -> int:
    if len(positions) == 0:
        return 0
    return int(coverage_matrix(points, positions, radius).sum(axis=1).min())


@functools.lru_cache(maxsize=32)
def _instance_coverage(inst: "NetworkInstance", spacing: float):
    p = inst.params
    pts = grid_points(p.area_width, p.area_height, spacing)
    xy = np.array([s.position for s in inst.sensors], dtype=float).reshape(-1, 2)
    cov = coverage_matrix(pts, xy, p.sensing_range)
    cov.setflags(write=False)
    return pts, cov


@dataclass(frozen=True)
class CoverageSignatureMap:
    grid_spacing: float
    signatures: tuple[tuple[int, ...], ...]   # indexed by subregion
    point_counts: tuple[int, ...]
    sensor_regions: dict = field(compare=False, repr=False)  # sensor id -> tuple of subregion indices

    @property
    def m(self) -> int:
        return len(self.signatures)

    @property
    def entries(self) -> dict:
        return {sig: {"points": c, "subregion": i}
                for i, (sig, c) in enumerate(zip(self.signatures, self.point_counts))}

    def regions_of(self, sensor_id: int) -> tuple[int, ...]:
        return self.sensor_regions.get(sensor_id, ())


def compute_signatures(inst: "NetworkInstance", grid_spacing: Optional[float] = None) -> CoverageSignatureMap:
    spacing = float(grid_spacing or inst.params.grid_spacing)
    if not 0 < spacing <= inst.params.sensing_range:
        raise ValueError("grid spacing must be positive and no larger than the sensing range")
    _, cov = _instance_coverage(inst, spacing)
    ids = np.array([s.id for s in inst.sensors], dtype=int)
    rows, counts = np.unique(cov, axis=0, return_counts=True)
    sigs = [tuple(sorted(int(i) for i in ids[row])) for row in rows]
    order = sorted(range(len(sigs)), key=lambda i: (len(sigs[i]), sigs[i]))
    signatures = tuple(sigs[i] for i in order)
    point_counts = tuple(int(counts[i]) for i in order)
    regions: dict[int, list[int]] = {int(i): [] for i in ids}
    for idx, sig in enumerate(signatures):
        for sid in sig:
            regions[sid].append(idx)
    return CoverageSignatureMap(spacing, signatures, point_counts,
                                {sid: tuple(r) for sid, r in regions.items()})


@dataclass(frozen=True)
class RequirementTable:
    """Per-subregion number of requesting sensors still to be charged."""
    t: tuple[int, ...]
    sig: Optional[CoverageSignatureMap] = field(default=None, compare=False, repr=False)

    def __getitem__(self, i: int) -> int:
        return self.t[i]

    def __len__(self) -> int:
        return len(self.t)

    @property
    def satisfied(self) -> bool:
        return not any(self.t)

    def as_array(self) -> np.ndarray:
        return np.array(self.t, dtype=np.int64)


def build_requirement_table(sig: CoverageSignatureMap, requests: Iterable, k: int) -> RequirementTable:
    """T[i] = max(0, k - covering(i) + requesting(i)) for every subregion."""
    requesters = {r.sensor_id if hasattr(r, "sensor_id") else int(r) for r in requests}
    values = []
    for idx, signature in enumerate(sig.signatures):
        total = len(signature)
        if total < k:
            raise UnderCoveredError(
                f"subregion {idx} ({sig.point_counts[idx]} grid points) is covered by {total} < {k} sensors")
        requesting = sum(1 for s in signature if s in requesters)
        values.append(max(0, k - total + requesting))
    return RequirementTable(tuple(values), sig)


def requirement_table(inst: "NetworkInstance", grid_spacing: Optional[float] = None) -> RequirementTable:
    sig = compute_signatures(inst, grid_spacing)
    return build_requirement_table(sig, inst.requests, inst.params.coverage_k)


def apply_charge(table: RequirementTable, sensor_id: int,
                 sig: Optional[CoverageSignatureMap] = None) -> RequirementTable:
    """Return a new table with every subregion covered by ``sensor_id`` decremented (floored at 0)."""
    sig = sig or table.sig
    values = list(table.t)
    for idx in sig.regions_of(sensor_id):
        if values[idx] > 0:
            values[idx] -= 1
    return RequirementTable(tuple(values), sig)


def contributes(table: RequirementTable, sensor_id: int, sig: Optional[CoverageSignatureMap] = None) -> bool:
    """Whether charging ``sensor_id`` decrements at least one entry."""
    sig = sig or table.sig
    return any(table.t[i] > 0 for i in sig.regions_of(sensor_id))


def verify_k_coverage(inst: "NetworkInstance", charged_ids, grid_spacing: Optional[float] = None) -> bool:
    """Direct grid check with alive = non-requesters plus charged requesters."""
    spacing = float(grid_spacing or inst.params.grid_spacing)
    charged = set(charged_ids)
    requesters = set(inst.requester_ids)
    if not charged <= requesters:
        raise ValueError(f"charged ids {sorted(charged - requesters)} did not request charging")
    _, cov = _instance_coverage(inst, spacing)
    alive = np.array([(s.id not in requesters) or (s.id in charged) for s in inst.sensors], dtype=bool)
    if not alive.any():
        return False
    counts = cov[:, alive].sum(axis=1)
    return bool((counts >= inst.params.coverage_k).all())
