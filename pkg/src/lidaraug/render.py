"""Render placed meshes as LiDAR returns and carve their shadow out of the scan."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .bvh import TriangleBVH
from .sensor import TWO_PI, PolarScan, assign_rings, in_azimuth_interval, ray_directions, ray_grid_window


@dataclass(frozen=True)
class InstancePoints:
    """Hits of sensor rays on a mesh (float64, sensor frame).

    ``ranges`` are euclidean hit distances along the unit ``directions``;
    ``xyz = ranges * directions`` holds for every point, before and after noise.
    """

    xyz: np.ndarray
    remission: np.ndarray
    rings: np.ndarray
    steps: np.ndarray
    ranges: np.ndarray
    directions: np.ndarray
    noised: np.ndarray

    def __len__(self):
        return int(self.ranges.shape[0])

    def subset(self, mask) -> "InstancePoints":
        return InstancePoints(*(getattr(self, f)[mask] for f in self.__dataclass_fields__))

    def to_cloud(self) -> np.ndarray:
        cloud = np.empty((len(self), 4), dtype=np.float32)
        cloud[:, :3] = self.xyz
        cloud[:, 3] = self.remission
        return cloud

    @classmethod
    def empty(cls) -> "InstancePoints":
        z3 = np.zeros((0, 3))
        zi = np.zeros(0, dtype=np.int64)
        return cls(z3, np.zeros(0, np.float32), zi, zi, np.zeros(0), z3, np.zeros(0, bool))


@dataclass(frozen=True)
class RingShadow:
    """Per-ring azimuth interval ``[lo, hi]`` covered by instance hits.

    Intervals are unwrapped: ``hi`` may exceed pi for windows across the seam.
    """

    bounds: dict[int, tuple[float, float]]

    def __contains__(self, ring):
        return ring in self.bounds

    def as_arrays(self, n_rings):
        lo = np.full(n_rings, np.nan)
        hi = np.full(n_rings, np.nan)
        for ring, (a, b) in self.bounds.items():
            lo[ring], hi[ring] = a, b
        return lo, hi


def angular_window(vertices) -> tuple[float, float, float, float]:
    """Conservative ``(phi_lo, phi_hi, theta_lo, theta_hi)`` covering a mesh.

    The azimuth bounds come from the vertices (exact for any surface whose
    footprint avoids the z-axis); elevation bounds use the footprint's xy
    bounding box, since a triangle interior can rise above its vertices'
    elevations.
    """
    v = np.asarray(vertices, dtype=np.float64)
    x, y, z = v[:, 0], v[:, 1], v[:, 2]
    phi = np.sort(np.arctan2(y, x))
    gaps = np.diff(np.concatenate([phi, [phi[0] + TWO_PI]]))
    k = int(np.argmax(gaps))
    if gaps[k] <= math.pi:
        # vertices surround the sensor
        phi_lo, phi_hi = -math.pi, math.pi
    else:
        phi_lo = float(phi[(k + 1) % phi.size])
        phi_hi = float(phi[k]) + (TWO_PI if k + 1 < phi.size else 0.0)
        if phi_hi < phi_lo:
            phi_hi += TWO_PI

    xlo, xhi, ylo, yhi = x.min(), x.max(), y.min(), y.max()
    near = math.hypot(max(xlo, 0.0, -xhi), max(ylo, 0.0, -yhi))
    far = max(math.hypot(a, b) for a in (xlo, xhi) for b in (ylo, yhi))
    zlo, zhi = float(z.min()), float(z.max())
    if near == 0.0:
        return phi_lo, phi_hi, -math.pi / 2, math.pi / 2
    theta_hi = math.atan2(zhi, near if zhi >= 0 else far)
    theta_lo = math.atan2(zlo, near if zlo < 0 else far)
    return phi_lo, phi_hi, theta_lo, theta_hi


def ray_cast(mesh, sensor, bvh=None):
    """Cast every grid ray in the mesh's angular window; nearest hit per ray.

    Returns ``(InstancePoints, RingShadow)`` with remission left at zero.
    """
    if bvh is None:
        bvh = TriangleBVH(mesh.vertices, mesh.triangles)
    phi_lo, phi_hi, theta_lo, theta_hi = angular_window(mesh.vertices)
    rings, steps = ray_grid_window(sensor, phi_lo, phi_hi, theta_lo, theta_hi)
    if rings.size == 0:
        return InstancePoints.empty(), RingShadow({})
    dirs = ray_directions(sensor, rings, steps)
    t, _ = bvh.nearest_hits(dirs)
    hit = np.isfinite(t) & (t >= sensor.range_min) & (t <= sensor.range_max)
    rings, steps, t, dirs = rings[hit], steps[hit], t[hit], dirs[hit]
    points = InstancePoints(
        xyz=t[:, None] * dirs,
        remission=np.zeros(t.size, dtype=np.float32),
        rings=rings,
        steps=steps,
        ranges=t,
        directions=dirs,
        noised=np.zeros(t.size, dtype=bool),
    )
    return points, ring_shadow(points, sensor, phi_lo)


def ring_shadow(points, sensor, phi_anchor=-math.pi) -> RingShadow:
    """Min/max hit azimuth per ring, unwrapped into ``[phi_anchor, phi_anchor + 2pi)``."""
    if len(points) == 0:
        return RingShadow({})
    phi = sensor.step_azimuths(points.steps)
    phi = phi_anchor + np.mod(phi - phi_anchor, TWO_PI)
    bounds = {}
    order = np.argsort(points.rings, kind="stable")
    rings, phi = points.rings[order], phi[order]
    keys, starts = np.unique(rings, return_index=True)
    ends = np.append(starts[1:], rings.size)
    for ring, s, e in zip(keys.tolist(), starts, ends):
        bounds[ring] = (float(phi[s:e].min()), float(phi[s:e].max()))
    return RingShadow(bounds)


def shadowed_mask(point_rings, azimuth, shadow, n_rings) -> np.ndarray:
    """True for points whose ring has a shadow and whose azimuth falls inside it."""
    point_rings = np.asarray(point_rings)
    azimuth = np.asarray(azimuth, dtype=np.float64)
    mask = np.zeros(point_rings.shape, dtype=bool)
    for ring, (lo, hi) in shadow.bounds.items():
        on_ring = np.flatnonzero(point_rings == ring)
        if on_ring.size:
            mask[on_ring] = in_azimuth_interval(azimuth[on_ring], lo, hi)
    return mask


def cull_shadowed_points(cloud, labels, shadow, point_rings, azimuth=None):
    """Drop points inside the ring shadow, in front of or behind the instance.

    ``point_rings`` holds each point's ring (``-1`` = unassigned, never
    culled). Returns ``(cloud, labels, keep_mask)``; ``labels`` may be None.
    """
    if azimuth is None:
        azimuth = PolarScan(cloud).azimuth
    n_rings = int(max(shadow.bounds, default=-1)) + 1
    keep = ~shadowed_mask(point_rings, azimuth, shadow, n_rings)
    kept_labels = None if labels is None else np.asarray(labels)[keep]
    return np.asarray(cloud)[keep], kept_labels, keep


def point_rings(sensor, cloud_or_polar) -> np.ndarray:
    polar = PolarScan.coerce(cloud_or_polar)
    return assign_rings(sensor, polar.elevation)


def assign_remission(points, table, rng) -> InstancePoints:
    if len(points) == 0:
        return points
    return replace(points, remission=table.sample(points.ranges, rng))


def apply_dropout_and_noise(points, p_drop, w_noise, sigma, rng, range_limits=None):
    """Drop each point with ``p_drop``; jitter a ``w_noise`` fraction along its ray.

    Random draws are made for every input point in index order, so the
    outcome for point ``i`` does not depend on how many others were dropped.
    """
    if not 0.0 <= p_drop <= 1.0 or not 0.0 <= w_noise <= 1.0:
        raise ValueError("p_drop and w_noise must lie in [0, 1]")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    n = len(points)
    drop_u = rng.random(n)
    noise_u = rng.random(n)
    jitter = rng.normal(0.0, 1.0, n) * sigma
    keep = drop_u >= p_drop
    noisy = keep & (noise_u < w_noise) & (sigma > 0)
    ranges = points.ranges.copy()
    ranges[noisy] += jitter[noisy]
    if range_limits is not None:
        ranges = np.clip(ranges, *range_limits)
    out = replace(points, ranges=ranges, xyz=ranges[:, None] * points.directions,
                  noised=points.noised | (keep & (noise_u < w_noise)))
    return out.subset(keep)
