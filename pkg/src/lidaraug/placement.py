"""Collision-free, ground-anchored placement of canonical meshes in a scan.

A mesh is first scaled to a physical height and yawed, then put at a random
planar distance ``r``. Its azimuth span at that distance selects free
azimuth runs of the scan (within the mesh's radial and height band), one
run is picked, and the mesh base is dropped onto the lowest scan point of
its footprint column.

Yaw passed to :func:`place_mesh` is relative to the line of sight; the
returned transform carries the resulting scan-frame yaw.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .mesh import Mesh
from .sensor import TWO_PI, PolarScan, azimuth_cell_count, in_azimuth_interval, wrap_azimuth

# artifact defaults: physical heights in meters
DEFAULT_HEIGHT_RANGES = {
    "person": (1.5, 2.0),
    "bicyclist": (1.5, 2.0),
    "motorcyclist": (1.5, 2.0),
    "bicycle": (1.0, 1.4),
    "motorcycle": (1.0, 1.4),
    "car": (1.4, 1.8),
    "truck": (2.5, 4.0),
    "bus": (2.8, 3.6),
}

# keeps the chosen span strictly inside its free run despite rounding
_SPAN_EPS = 1e-9


class PlacementError(RuntimeError):
    """No viable placement was found; ``reasons`` lists per-attempt causes."""

    def __init__(self, message, reasons=()):
        super().__init__(message)
        self.reasons = list(reasons)


class GroundNotFoundError(PlacementError):
    pass


@dataclass(frozen=True)
class LocalTransform:
    height_scale: float
    yaw: float
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def apply(self, vertices) -> np.ndarray:
        return transform_vertices(vertices, self.height_scale, self.yaw, self.translation)


@dataclass(frozen=True)
class PlacementConfig:
    height_ranges: dict = field(default_factory=lambda: dict(DEFAULT_HEIGHT_RANGES))
    r_min: float = 3.0
    r_max: float = 40.0
    margin: float = 0.2
    ground_clearance: float = 0.3
    expansion_step: float = 0.5
    max_expansions: int = 5
    max_attempts: int = 10

    def __post_init__(self):
        for name, (lo, hi) in self.height_ranges.items():
            if not 0 < lo <= hi:
                raise ValueError(f"height range for {name!r} must satisfy 0 < min <= max")
        if not 0 <= self.r_min <= self.r_max:
            raise ValueError("need 0 <= r_min <= r_max")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


@dataclass(frozen=True)
class PlacementResult:
    transform: LocalTransform
    distance: float
    azimuth_span: tuple[float, float]
    z_min: float
    radial_band: tuple[float, float]
    height_band: tuple[float, float]
    attempts: int
    expansions: int


class GroundEstimate(NamedTuple):
    z_min: float
    expansions: int


def transform_vertices(vertices, height_scale, yaw, translation=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Uniform scale, then yaw about +z, then translate."""
    v = np.asarray(vertices, dtype=np.float64) * height_scale
    c, s = math.cos(yaw), math.sin(yaw)
    out = np.empty_like(v)
    out[:, 0] = c * v[:, 0] - s * v[:, 1] + translation[0]
    out[:, 1] = s * v[:, 0] + c * v[:, 1] + translation[1]
    out[:, 2] = v[:, 2] + translation[2]
    return out


def random_local_transform(class_name, ranges, rng) -> tuple[float, float]:
    """Draw ``(height_scale, yaw)``: scale uniform in the class range, yaw in [-pi, pi)."""
    try:
        lo, hi = ranges[class_name]
    except KeyError:
        raise KeyError(f"no height range configured for class {class_name!r}") from None
    scale = float(lo) if lo == hi else float(rng.uniform(lo, hi))
    return scale, float(rng.uniform(-math.pi, math.pi))


def _vertices(mesh_or_vertices):
    if isinstance(mesh_or_vertices, Mesh):
        return mesh_or_vertices.vertices
    return np.asarray(mesh_or_vertices, dtype=np.float64)


def azimuth_span(mesh, height_scale, yaw, r) -> tuple[float, float]:
    """Azimuth span of the mesh centred at distance ``r`` on the +x axis."""
    if not r > 0:
        raise ValueError("placement distance must be positive")
    v = transform_vertices(_vertices(mesh), height_scale, yaw)
    half_extent = float(np.max(np.hypot(v[:, 0], v[:, 1])))
    if r <= half_extent:
        raise PlacementError(
            f"distance {r:.3f} m is inside the mesh footprint (radius {half_extent:.3f} m)"
        )
    phi = np.arctan2(v[:, 1], v[:, 0] + r)
    return float(phi.min()), float(phi.max())


def _cell_edges(resolution):
    n = azimuth_cell_count(resolution)
    k = np.arange(n)
    lo = -math.pi + k * resolution
    hi = np.minimum(-math.pi + (k + 1) * resolution, math.pi)
    return n, lo, hi


def occupied_cells(cloud, height_band, radial_band, azimuth_resolution) -> np.ndarray:
    """Azimuth cells holding at least one point inside the radial and height band."""
    polar = PolarScan.coerce(cloud)
    n = azimuth_cell_count(azimuth_resolution)
    mask = (
        (polar.z >= height_band[0]) & (polar.z <= height_band[1])
        & (polar.r >= radial_band[0]) & (polar.r <= radial_band[1])
    )
    cells = np.floor((polar.azimuth[mask] + math.pi) / azimuth_resolution).astype(np.int64)
    occ = np.zeros(n, dtype=bool)
    occ[np.clip(cells, 0, n - 1)] = True
    return occ


def free_runs(occupied, azimuth_resolution) -> list[tuple[float, float]]:
    """Maximal circular runs of free cells as half-open ``[lo, hi)`` intervals.

    ``lo`` lies in ``[-pi, pi)``; ``hi`` exceeds ``pi`` when a run wraps.
    """
    n, edge_lo, edge_hi = _cell_edges(azimuth_resolution)
    occupied = np.asarray(occupied, dtype=bool)
    if not occupied.any():
        return [(-math.pi, math.pi)]
    if occupied.all():
        return []
    # rotate so the sequence starts right after an occupied cell
    first = int(np.flatnonzero(occupied)[0])
    order = (np.arange(n) + first + 1) % n
    free = ~occupied[order]
    padded = np.concatenate([[False], free, [False]])
    starts = np.flatnonzero(~padded[:-1] & padded[1:])
    ends = np.flatnonzero(padded[:-1] & ~padded[1:]) - 1
    runs = []
    for s, e in zip(starts, ends):
        a, b = int(order[s]), int(order[e])
        lo = float(edge_lo[a])
        hi = float(edge_hi[b]) + (TWO_PI if b < a else 0.0)
        runs.append((lo, hi))
    runs.sort()
    return runs


def find_viable_regions(cloud, span_width, height_band, radial_band,
                        azimuth_resolution) -> list[tuple[float, float]]:
    """Free azimuth intervals at least ``span_width`` wide.

    No point with planar range in ``radial_band`` and z in ``height_band``
    lies inside a returned (half-open) interval.
    """
    if not span_width > 0:
        raise ValueError("span_width must be positive")
    occ = occupied_cells(cloud, height_band, radial_band, azimuth_resolution)
    return [(lo, hi) for lo, hi in free_runs(occ, azimuth_resolution) if hi - lo >= span_width]


def estimate_ground(cloud, footprint, expansion_step=0.5, max_expansions=5) -> GroundEstimate:
    """Lowest z inside the footprint column, growing the footprint if it is empty.

    ``footprint`` is ``((az_lo, az_hi), (r_inner, r_outer))``. Each expansion
    widens the radial band by ``expansion_step`` on both sides and the
    azimuth interval by the matching angle at the footprint's mid range.
    """
    polar = PolarScan.coerce(cloud)
    if len(polar) == 0:
        raise GroundNotFoundError("cannot estimate ground in an empty cloud")
    (az_lo, az_hi), (r_in, r_out) = footprint
    mid = max(0.5 * (r_in + r_out), expansion_step, 1e-6)
    dphi = expansion_step / mid
    for k in range(max_expansions + 1):
        lo_r = max(r_in - k * expansion_step, 0.0)
        hi_r = r_out + k * expansion_step
        mask = (polar.r >= lo_r) & (polar.r <= hi_r)
        mask &= in_azimuth_interval(polar.azimuth, az_lo - k * dphi, az_hi + k * dphi)
        if mask.any():
            return GroundEstimate(float(polar.z[mask].min()), k)
    raise GroundNotFoundError(f"no ground points within {max_expansions} expansions")


def column_collisions(cloud, azimuth_interval, radial_band, height_band) -> np.ndarray:
    """Indices of points inside an (azimuth x radial x height) block."""
    polar = PolarScan.coerce(cloud)
    mask = (
        (polar.r >= radial_band[0]) & (polar.r <= radial_band[1])
        & (polar.z >= height_band[0]) & (polar.z <= height_band[1])
    )
    mask &= in_azimuth_interval(polar.azimuth, *azimuth_interval)
    return np.flatnonzero(mask)


def _distance_bounds(half_extent, sensor, config):
    lo = max(config.r_min, sensor.range_min, half_extent + config.margin + 1e-6)
    hi = min(config.r_max, sensor.range_max - half_extent - config.margin)
    return lo, hi


def place_mesh(mesh, class_name, cloud, sensor, config, rng, local=None):
    """Find a pose for ``mesh`` in ``cloud``; returns ``(placed Mesh, PlacementResult)``.

    ``local`` fixes ``(height_scale, relative_yaw)``; by default it is drawn
    from the class height range. Raises :class:`PlacementError` once
    ``config.max_attempts`` distance draws have failed.
    """
    polar = PolarScan.coerce(cloud)
    if local is None:
        local = random_local_transform(class_name, config.height_ranges, rng)
    scale, rel_yaw = local
    canon = mesh.vertices
    shaped = transform_vertices(canon, scale, rel_yaw)
    planar = np.hypot(shaped[:, 0], shaped[:, 1])
    half_extent = float(planar.max())
    r_lo, r_hi = _distance_bounds(half_extent, sensor, config)
    if r_lo > r_hi:
        raise PlacementError(
            f"mesh (radius {half_extent:.2f} m) does not fit in distance range "
            f"[{config.r_min}, {config.r_max}] m"
        )

    reasons = []
    res = sensor.azimuth_resolution
    for attempt in range(1, config.max_attempts + 1):
        r = float(rng.uniform(r_lo, r_hi)) if r_hi > r_lo else r_lo
        rel_lo, rel_hi = azimuth_span(canon, scale, rel_yaw, r)
        width = rel_hi - rel_lo
        at_ref = np.hypot(shaped[:, 0] + r, shaped[:, 1])
        radial_band = (max(float(at_ref.min()) - config.margin, 0.0),
                       float(at_ref.max()) + config.margin)

        in_ring = (polar.r >= radial_band[0]) & (polar.r <= radial_band[1])
        z_ref = float(polar.z[in_ring].min()) if in_ring.any() else -sensor.mount_height
        band = (z_ref + config.ground_clearance, z_ref + scale)
        regions = find_viable_regions(polar, max(width, 1e-12) + 2 * _SPAN_EPS, band,
                                      radial_band, res)
        if not regions:
            reasons.append(f"attempt {attempt}: no free region at r={r:.2f} m")
            continue

        lo, hi = regions[int(rng.integers(len(regions)))]
        psi_lo = lo - rel_lo + _SPAN_EPS
        psi_hi = hi - rel_hi - _SPAN_EPS
        psi = float(rng.uniform(psi_lo, psi_hi)) if psi_hi > psi_lo else psi_lo
        span = (psi + rel_lo, psi + rel_hi)

        try:
            z_min, expansions = estimate_ground(
                polar, (span, radial_band), config.expansion_step, config.max_expansions
            )
        except GroundNotFoundError as exc:
            reasons.append(f"attempt {attempt}: {exc}")
            continue

        psi_wrapped = wrap_azimuth(psi)
        transform = LocalTransform(
            height_scale=scale,
            yaw=float(wrap_azimuth(rel_yaw + psi_wrapped)),
            translation=(r * math.cos(psi_wrapped), r * math.sin(psi_wrapped), z_min),
        )
        placed = Mesh(transform.apply(canon), mesh.triangles)
        span = vertex_azimuth_span(placed.vertices, around=psi)
        final_band = (z_min + config.ground_clearance, z_min + scale)
        if column_collisions(polar, span, radial_band, final_band).size:
            reasons.append(f"attempt {attempt}: footprint occupied after ground anchoring")
            continue

        result = PlacementResult(
            transform=transform,
            distance=r,
            azimuth_span=span,
            z_min=z_min,
            radial_band=radial_band,
            height_band=final_band,
            attempts=attempt,
            expansions=expansions,
        )
        return placed, result

    raise PlacementError(f"placement failed after {config.max_attempts} attempts", reasons)


def vertex_azimuth_span(vertices, around=0.0) -> tuple[float, float]:
    """Min/max vertex azimuth, unwrapped to the branch centred on ``around``."""
    v = np.asarray(vertices, dtype=np.float64)
    phi = np.arctan2(v[:, 1], v[:, 0])
    rel = np.mod(phi - around + math.pi, TWO_PI) - math.pi
    return float(around + rel.min()), float(around + rel.max())
