"""Spinning LiDAR scan pattern: ring elevations times a fixed azimuth grid.

Azimuth steps are anchored at -pi: step ``k`` points along ``-pi + k * res``.
Two range conventions are used and named explicitly: *planar* range
``sqrt(x^2 + y^2)`` for footprint reasoning, and *euclidean* range for hit
distances and remission lookup.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi


class PolarPoint(NamedTuple):
    r: float  # planar range
    azimuth: float
    elevation: float
    z: float


def azimuth_cell_count(resolution) -> int:
    """Number of azimuth steps covering ``[-pi, pi)`` at ``resolution``."""
    steps = TWO_PI / resolution
    # round() absorbs float noise when 2*pi/res is meant to be integral
    n = round(steps) if abs(steps - round(steps)) < 1e-6 else math.ceil(steps)
    return int(n)


@dataclass(frozen=True)
class SensorModel:
    ring_elevations: np.ndarray  # radians, strictly increasing
    azimuth_resolution: float  # radians per step
    range_min: float
    range_max: float
    mount_height: float = 1.73
    name: str = "custom"
    n_steps: int = field(init=False)

    def __post_init__(self):
        elev = np.array(self.ring_elevations, dtype=np.float64)
        elev.setflags(write=False)
        object.__setattr__(self, "ring_elevations", elev)
        if elev.ndim != 1 or elev.size == 0:
            raise ValueError("ring_elevations must be a non-empty 1-d sequence")
        if not np.all(np.diff(elev) > 0):
            raise ValueError("ring_elevations must be strictly increasing")
        if not self.azimuth_resolution > 0:
            raise ValueError("azimuth_resolution must be positive")
        if not 0 < self.range_min < self.range_max:
            raise ValueError("need 0 < range_min < range_max")
        object.__setattr__(self, "n_steps", azimuth_cell_count(self.azimuth_resolution))

    @property
    def n_rings(self) -> int:
        return int(self.ring_elevations.size)

    def step_azimuths(self, steps=None) -> np.ndarray:
        if steps is None:
            steps = np.arange(self.n_steps)
        return -math.pi + np.asarray(steps, dtype=np.float64) * self.azimuth_resolution

    @classmethod
    def from_config(cls, cfg) -> "SensorModel":
        """Build from a config mapping (angles in degrees) or a preset name."""
        if isinstance(cfg, str):
            return preset_sensor(cfg)
        cfg = dict(cfg)
        if "preset" in cfg:
            base = preset_sensor(cfg.pop("preset"))
            if not cfg:
                return base
            cfg.setdefault("ring_elevations_deg", np.degrees(base.ring_elevations).tolist())
            cfg.setdefault("azimuth_resolution_deg", math.degrees(base.azimuth_resolution))
            cfg.setdefault("range_min", base.range_min)
            cfg.setdefault("range_max", base.range_max)
            cfg.setdefault("mount_height", base.mount_height)
        return cls(
            ring_elevations=np.radians(np.asarray(cfg["ring_elevations_deg"], dtype=float)),
            azimuth_resolution=math.radians(float(cfg["azimuth_resolution_deg"])),
            range_min=float(cfg["range_min"]),
            range_max=float(cfg["range_max"]),
            mount_height=float(cfg.get("mount_height", 1.73)),
            name=str(cfg.get("name", "custom")),
        )

    def to_config(self) -> dict:
        return {
            "name": self.name,
            "ring_elevations_deg": np.degrees(self.ring_elevations).tolist(),
            "azimuth_resolution_deg": math.degrees(self.azimuth_resolution),
            "range_min": self.range_min,
            "range_max": self.range_max,
            "mount_height": self.mount_height,
        }


_PRESETS = {
    # name: (rings, top deg, bottom deg, azimuth res deg, range min, range max, mount)
    "hdl64-like": (64, 2.0, -24.8, 0.08, 1.0, 120.0, 1.73),
    "vlp32-like": (32, 10.0, -30.0, 0.2, 1.0, 200.0, 1.84),
}


def preset_sensor(name) -> SensorModel:
    """Synthetic presets with linearly spaced rings (``hdl64-like``, ``vlp32-like``)."""
    try:
        rings, top, bottom, res, rmin, rmax, mount = _PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown sensor preset {name!r}; choose from {sorted(_PRESETS)}") from None
    elevations = np.radians(np.linspace(bottom, top, rings))
    return SensorModel(elevations, math.radians(res), rmin, rmax, mount, name=name)


# --------------------------------------------------------------------------
# coordinate transforms

def wrap_azimuth(phi):
    """Map angles into ``[-pi, pi)``; works on scalars and arrays."""
    wrapped = np.mod(np.asarray(phi, dtype=np.float64) + math.pi, TWO_PI) - math.pi
    # mod can round up to exactly 2*pi for tiny negative inputs
    wrapped = np.where(wrapped >= math.pi, wrapped - TWO_PI, wrapped)
    return wrapped if wrapped.ndim else float(wrapped)


def polar_arrays(xyz):
    """Vectorised polar transform: ``(planar_range, azimuth, elevation)``."""
    xyz = np.asarray(xyz, dtype=np.float64)
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    r = np.hypot(x, y)
    phi = np.arctan2(y, x)
    phi = np.where(phi >= math.pi, -math.pi, phi)
    theta = np.arctan2(z, r)
    return r, phi, theta


def to_polar(point) -> PolarPoint:
    x, y, z = (float(v) for v in point[:3])
    r = math.hypot(x, y)
    phi = math.atan2(y, x) if r > 0 else 0.0
    if phi >= math.pi:
        phi = -math.pi
    return PolarPoint(r, phi, math.atan2(z, r), z)


def from_polar(polar) -> tuple[float, float, float]:
    r, phi, _, z = polar
    return (r * math.cos(phi), r * math.sin(phi), z)


def planar_range(xyz) -> np.ndarray:
    xyz = np.asarray(xyz, dtype=np.float64)
    return np.hypot(xyz[..., 0], xyz[..., 1])


def euclidean_range(xyz) -> np.ndarray:
    xyz = np.asarray(xyz, dtype=np.float64)
    return np.sqrt(np.einsum("...i,...i->...", xyz[..., :3], xyz[..., :3]))


# --------------------------------------------------------------------------
# rays

def ray_direction(sensor, ring_index, azimuth_step) -> np.ndarray:
    if not 0 <= ring_index < sensor.n_rings:
        raise IndexError(f"ring index {ring_index} out of range [0, {sensor.n_rings})")
    if not 0 <= azimuth_step < sensor.n_steps:
        raise IndexError(f"azimuth step {azimuth_step} out of range [0, {sensor.n_steps})")
    theta = float(sensor.ring_elevations[ring_index])
    phi = -math.pi + azimuth_step * sensor.azimuth_resolution
    return np.array(
        [math.cos(theta) * math.cos(phi), math.cos(theta) * math.sin(phi), math.sin(theta)]
    )


def ray_directions(sensor, rings, steps) -> np.ndarray:
    """Vectorised :func:`ray_direction` for index arrays; returns ``(K, 3)``."""
    theta = sensor.ring_elevations[np.asarray(rings)]
    phi = sensor.step_azimuths(steps)
    ct = np.cos(theta)
    return np.stack([ct * np.cos(phi), ct * np.sin(phi), np.sin(theta)], axis=-1)


def steps_in_azimuth_window(sensor, phi_min, phi_max) -> np.ndarray:
    """Azimuth steps whose grid angle lies in the closed, unwrapped window.

    The window may extend past +-pi; it is then matched modulo 2*pi. A
    seam-crossing window may also be given wrapped, as ``phi_min`` near +pi
    and ``phi_max`` near -pi (both beyond +-pi/2). Any other window with
    ``phi_max < phi_min`` is empty.
    """
    if phi_max < phi_min:
        if phi_min >= math.pi / 2 and phi_max <= -math.pi / 2:
            phi_max += TWO_PI
        else:
            return np.empty(0, dtype=np.int64)
    if phi_max - phi_min >= TWO_PI:
        return np.arange(sensor.n_steps, dtype=np.int64)
    res = sensor.azimuth_resolution
    found = []
    for shift in (-TWO_PI, 0.0, TWO_PI):
        lo, hi = phi_min + shift, phi_max + shift
        if hi < -math.pi or lo >= math.pi:
            continue
        first = max(int(math.floor((lo + math.pi) / res)) - 1, 0)
        last = min(int(math.ceil((hi + math.pi) / res)) + 1, sensor.n_steps - 1)
        cand = np.arange(first, last + 1, dtype=np.int64)
        az = sensor.step_azimuths(cand)
        found.append(cand[(az >= lo) & (az <= hi)])
    if not found:
        return np.empty(0, dtype=np.int64)
    return np.unique(np.concatenate(found))


def rings_in_elevation_window(sensor, theta_min, theta_max) -> np.ndarray:
    elev = sensor.ring_elevations
    return np.flatnonzero((elev >= theta_min) & (elev <= theta_max))


def rays_in_window(sensor, phi_min, phi_max, theta_min, theta_max) -> list[tuple[int, int]]:
    """Grid cells ``(ring_index, azimuth_step)`` inside the closed angular window."""
    rings, steps = ray_grid_window(sensor, phi_min, phi_max, theta_min, theta_max)
    return list(zip(rings.tolist(), steps.tolist()))


def ray_grid_window(sensor, phi_min, phi_max, theta_min, theta_max):
    """Array form of :func:`rays_in_window`: ``(rings, steps)`` index arrays."""
    rings = rings_in_elevation_window(sensor, theta_min, theta_max)
    steps = steps_in_azimuth_window(sensor, phi_min, phi_max)
    rr, ss = np.meshgrid(rings, steps, indexing="ij")
    return rr.ravel(), ss.ravel()


def assign_rings(sensor, elevation) -> np.ndarray:
    """Nearest ring index per elevation, or -1 when no ring can claim it.

    A point is claimed by its nearest ring only if it lies within half the
    gap to the neighbouring ring on its side; beyond the outermost rings
    the adjacent inner gap is mirrored.
    """
    elev = sensor.ring_elevations
    theta = np.asarray(elevation, dtype=np.float64)
    if elev.size == 1:
        return np.zeros(theta.shape, dtype=np.int64)
    gaps = np.diff(elev)
    # upper[i]/lower[i]: half-gap tolerance above/below ring i
    upper = np.append(gaps, gaps[-1]) / 2.0
    lower = np.insert(gaps, 0, gaps[0]) / 2.0

    idx = np.clip(np.searchsorted(elev, theta), 1, elev.size - 1)
    below, above = idx - 1, idx
    pick_above = np.abs(elev[above] - theta) < np.abs(theta - elev[below])
    ring = np.where(pick_above, above, below)
    delta = theta - elev[ring]
    ok = np.where(delta >= 0, delta <= upper[ring], -delta <= lower[ring])
    return np.where(ok, ring, -1).astype(np.int64)


class PolarScan:
    """Cached polar view of a point cloud (planar range, azimuth, elevation, z)."""

    def __init__(self, cloud):
        xyz = np.asarray(cloud, dtype=np.float64)[:, :3]
        self.r, self.azimuth, self.elevation = polar_arrays(xyz)
        self.z = xyz[:, 2].copy()

    def __len__(self):
        return self.z.shape[0]

    @classmethod
    def coerce(cls, cloud_or_polar) -> "PolarScan":
        return cloud_or_polar if isinstance(cloud_or_polar, cls) else cls(cloud_or_polar)

    def select(self, mask) -> "PolarScan":
        out = object.__new__(PolarScan)
        out.r, out.azimuth = self.r[mask], self.azimuth[mask]
        out.elevation, out.z = self.elevation[mask], self.z[mask]
        return out

    @classmethod
    def concat(cls, first, second) -> "PolarScan":
        out = object.__new__(PolarScan)
        for name in ("r", "azimuth", "elevation", "z"):
            setattr(out, name, np.concatenate([getattr(first, name), getattr(second, name)]))
        return out


def in_azimuth_interval(phi, lo, hi, closed=True) -> np.ndarray:
    """Whether angles lie in the (unwrapped) interval ``[lo, hi]`` modulo 2*pi.

    With ``closed=False`` the upper end is excluded.
    """
    width = hi - lo
    phi = np.asarray(phi, dtype=np.float64)
    if width >= TWO_PI:
        return np.ones(phi.shape, dtype=bool)
    if width < 0:
        return np.zeros(phi.shape, dtype=bool)
    offset = np.mod(phi - lo, TWO_PI)
    return offset <= width if closed else offset < width
