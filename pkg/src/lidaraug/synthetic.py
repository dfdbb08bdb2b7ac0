"""Synthetic scenes and mesh libraries for demos, fixtures and benchmarks."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .bvh import TriangleBVH
from .manifest import DEFAULT_CLASS_IDS
from .mesh import Mesh, box_mesh, save_obj, save_ply
from .sensor import ray_directions


def merge_meshes(meshes) -> Mesh:
    verts, tris, offset = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        offset += m.vertices.shape[0]
    return Mesh(np.concatenate(verts), np.concatenate(tris))


def ground_plane(z, half_size=150.0) -> Mesh:
    h = half_size
    verts = [[-h, -h, z], [h, -h, z], [h, h, z], [-h, h, z]]
    return Mesh(np.array(verts, dtype=float), np.array([[0, 1, 2], [0, 2, 3]]))


def render_scene(scene, sensor, rng=None, remission=None) -> np.ndarray:
    """Ray-cast the full sensor grid against ``scene``; returns an (N, 4) cloud.

    Remission defaults to a range-dependent value with a little noise.
    """
    rng = np.random.default_rng(rng)
    rings, steps = np.meshgrid(np.arange(sensor.n_rings), np.arange(sensor.n_steps),
                               indexing="ij")
    dirs = ray_directions(sensor, rings.ravel(), steps.ravel())
    t, _ = TriangleBVH(scene.vertices, scene.triangles).nearest_hits(dirs)
    hit = np.isfinite(t) & (t >= sensor.range_min) & (t <= sensor.range_max)
    xyz = t[hit, None] * dirs[hit]
    if remission is None:
        base = np.clip(0.6 - 0.008 * t[hit], 0.05, 1.0)
        remission = np.clip(base + rng.normal(0.0, 0.05, base.size), 0.0, 1.0)
    cloud = np.empty((xyz.shape[0], 4), dtype=np.float32)
    cloud[:, :3] = xyz
    cloud[:, 3] = remission
    return cloud


def random_scene(rng, ground_z=-1.73, n_obstacles=12, extent=35.0) -> Mesh:
    """Ground plane plus random axis-aligned blocks (walls, parked cars, poles)."""
    parts = [ground_plane(ground_z)]
    for _ in range(n_obstacles):
        r = rng.uniform(4.0, extent)
        phi = rng.uniform(-math.pi, math.pi)
        dims = (rng.uniform(0.3, 5.0), rng.uniform(0.3, 5.0), rng.uniform(0.5, 4.0))
        center = (r * math.cos(phi), r * math.sin(phi), ground_z + dims[2] / 2)
        parts.append(box_mesh(dims, center))
    return merge_meshes(parts)


def synthetic_scan(sensor, rng, ground_z=-1.73, n_obstacles=12) -> np.ndarray:
    return render_scene(random_scene(rng, ground_z, n_obstacles), sensor, rng)


def ground_ring_cloud(z, radii, n_azimuth=720, remission=0.3) -> np.ndarray:
    """Points on concentric circles at height ``z``; a staged ground fixture."""
    phi = -math.pi + np.arange(n_azimuth) * (2 * math.pi / n_azimuth)
    pts = [np.stack([r * np.cos(phi), r * np.sin(phi), np.full_like(phi, z)], axis=1)
           for r in radii]
    xyz = np.concatenate(pts)
    cloud = np.empty((xyz.shape[0], 4), dtype=np.float32)
    cloud[:, :3] = xyz
    cloud[:, 3] = remission
    return cloud


# --------------------------------------------------------------------------
# meshes

def uv_sphere(n_lon=24, n_lat=12, radii=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)) -> Mesh:
    """Closed ellipsoid with ``2 * n_lon * (n_lat - 1)`` triangles."""
    lat = np.linspace(0.0, math.pi, n_lat + 1)[1:-1]
    lon = np.linspace(0.0, 2 * math.pi, n_lon, endpoint=False)
    la, lo = np.meshgrid(lat, lon, indexing="ij")
    ring = np.stack([np.sin(la) * np.cos(lo), np.sin(la) * np.sin(lo), np.cos(la)], -1)
    verts = np.concatenate([[[0, 0, 1]], ring.reshape(-1, 3), [[0, 0, -1]]])
    verts = verts * np.asarray(radii) + np.asarray(center)
    tris = []
    top, bottom = 0, verts.shape[0] - 1
    for j in range(n_lon):
        tris.append([top, 1 + j, 1 + (j + 1) % n_lon])
    for i in range(len(lat) - 1):
        for j in range(n_lon):
            a = 1 + i * n_lon + j
            b = 1 + i * n_lon + (j + 1) % n_lon
            c = a + n_lon
            d = b + n_lon
            tris += [[a, c, b], [b, c, d]]
    base = 1 + (len(lat) - 1) * n_lon
    for j in range(n_lon):
        tris.append([base + j, bottom, base + (j + 1) % n_lon])
    return Mesh(verts, np.array(tris))


def _car(rng):
    length, width = rng.uniform(3.8, 4.8), rng.uniform(1.6, 1.9)
    body = box_mesh((length, width, 0.8), (0.0, 0.0, 0.6))
    cabin = box_mesh((length * 0.5, width * 0.9, 0.6), (-0.2, 0.0, 1.3))
    wheels = [uv_sphere(10, 6, (0.35, 0.15, 0.35), (sx * length * 0.33, sy * width * 0.45, 0.35))
              for sx in (-1, 1) for sy in (-1, 1)]
    return merge_meshes([body, cabin, *wheels])


def _person(rng):
    torso = uv_sphere(12, 8, (0.2, 0.25, 0.35), (0.0, 0.0, 1.15))
    head = uv_sphere(10, 6, (0.12, 0.12, 0.14), (0.0, 0.0, 1.65))
    legs = [box_mesh((0.18, 0.14, 0.85), (0.0, s * 0.12, 0.425)) for s in (-1, 1)]
    return merge_meshes([torso, head, *legs])


def _two_wheeler(rng, rider):
    length = rng.uniform(1.6, 2.1)
    wheels = [uv_sphere(12, 8, (0.33, 0.05, 0.33), (s * length * 0.35, 0.0, 0.33))
              for s in (-1, 1)]
    frame = box_mesh((length * 0.7, 0.08, 0.4), (0.0, 0.0, 0.75))
    parts = [*wheels, frame]
    if rider:
        parts.append(uv_sphere(10, 8, (0.2, 0.2, 0.35), (0.0, 0.0, 1.3)))
        parts.append(uv_sphere(8, 6, (0.11, 0.11, 0.13), (0.05, 0.0, 1.75)))
    return merge_meshes(parts)


def _big_vehicle(rng, length_range):
    length = rng.uniform(*length_range)
    body = box_mesh((length, 2.5, 2.8), (0.0, 0.0, 1.9))
    wheels = [uv_sphere(10, 6, (0.5, 0.2, 0.5), (sx * length * 0.35, sy * 1.1, 0.5))
              for sx in (-1, 1) for sy in (-1, 1)]
    return merge_meshes([body, *wheels])


def class_mesh(class_name, rng) -> Mesh:
    """A crude procedural stand-in for a generated mesh of ``class_name``."""
    if class_name == "car":
        return _car(rng)
    if class_name == "person":
        return _person(rng)
    if class_name in ("bicycle", "motorcycle"):
        return _two_wheeler(rng, rider=False)
    if class_name in ("bicyclist", "motorcyclist"):
        return _two_wheeler(rng, rider=True)
    if class_name == "truck":
        return _big_vehicle(rng, (6.0, 9.0))
    if class_name == "bus":
        return _big_vehicle(rng, (10.0, 12.5))
    return uv_sphere(16, 10, (1.0, 1.0, 1.0), (0.0, 0.0, 1.0))


def write_mesh_library(root, rng, classes=None, per_class=3, up_axis="z") -> Path:
    """Write ``<root>/<class>/<k>.{obj,ply}`` procedural meshes (alternating formats).

    With ``up_axis="y"`` meshes are stored y-up, as many generators export them.
    """
    root = Path(root)
    classes = list(DEFAULT_CLASS_IDS) if classes is None else list(classes)
    for name in classes:
        (root / name).mkdir(parents=True, exist_ok=True)
        for k in range(per_class):
            mesh = class_mesh(name, rng)
            if up_axis == "y":
                v = mesh.vertices
                mesh = Mesh(np.stack([v[:, 0], v[:, 2], -v[:, 1]], axis=1), mesh.triangles)
            if k % 2:
                save_ply(mesh, root / name / f"{name}_{k:03d}.ply")
            else:
                save_obj(mesh, root / name / f"{name}_{k:03d}.obj")
    return root
