"""Readers and writers for KITTI-style scans, SemanticKITTI labels and box files.

Point clouds are plain ``(N, 4)`` float32 arrays with columns
``x, y, z, remission`` in the sensor frame (x forward, z up). Labels are raw
``uint32`` words; the low 16 bits carry the semantic class and the high 16
bits the instance id.

Box files hold one box per line::

    class_id cx cy cz length width height yaw

in the LiDAR frame, yaw counterclockwise about +z with zero along +x.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

POINT_DTYPE = np.dtype("<f4")
LABEL_DTYPE = np.dtype("<u4")
POINT_RECORD_BYTES = 16


class MalformedFileError(ValueError):
    """A scan, label or box file does not follow its binary/text layout."""


def wrap_angle(angle):
    """Map angles into ``(-pi, pi]``."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


# --------------------------------------------------------------------------
# point clouds

def read_point_cloud(path, *, clamp_remission=True) -> np.ndarray:
    """Read a KITTI ``.bin`` scan into an ``(N, 4)`` float32 array.

    Records with NaN/Inf fields are dropped (and the count logged). Remission
    values outside ``[0, 1]`` are clamped unless ``clamp_remission`` is off.
    """
    path = Path(path)
    size = path.stat().st_size
    if size % POINT_RECORD_BYTES:
        raise MalformedFileError(
            f"{path}: size {size} is not a multiple of {POINT_RECORD_BYTES} bytes"
        )
    points = np.fromfile(path, dtype=POINT_DTYPE).reshape(-1, 4)
    points = points.astype(np.float32, copy=False)

    finite = np.isfinite(points).all(axis=1)
    if not finite.all():
        dropped = int((~finite).sum())
        logger.warning("%s: dropped %d non-finite points", path, dropped)
        points = points[finite]

    if clamp_remission:
        rem = points[:, 3]
        out_of_range = (rem < 0.0) | (rem > 1.0)
        if out_of_range.any():
            points = points.copy()
            points[out_of_range, 3] = np.clip(rem[out_of_range], 0.0, 1.0)
    return np.ascontiguousarray(points)


def write_point_cloud(cloud, path) -> None:
    cloud = np.asarray(cloud)
    if cloud.ndim != 2 or cloud.shape[1] != 4:
        raise ValueError(f"point cloud must have shape (N, 4), got {cloud.shape}")
    np.ascontiguousarray(cloud, dtype=POINT_DTYPE).tofile(os.fspath(path))


# --------------------------------------------------------------------------
# semantic labels

def read_labels(path) -> np.ndarray:
    path = Path(path)
    size = path.stat().st_size
    if size % LABEL_DTYPE.itemsize:
        raise MalformedFileError(f"{path}: size {size} is not a multiple of 4 bytes")
    return np.fromfile(path, dtype=LABEL_DTYPE).astype(np.uint32, copy=False)


def write_labels(labels, path) -> None:
    np.ascontiguousarray(labels, dtype=LABEL_DTYPE).tofile(os.fspath(path))


def split_labels(labels):
    """Split raw label words into ``(semantic_id, instance_id)`` arrays."""
    words = np.asarray(labels, dtype=np.uint32)
    return (words & 0xFFFF).astype(np.uint16), (words >> 16).astype(np.uint16)


def join_labels(semantic, instance) -> np.ndarray:
    semantic = np.asarray(semantic, dtype=np.uint32)
    instance = np.asarray(instance, dtype=np.uint32)
    if (semantic > 0xFFFF).any() or (instance > 0xFFFF).any():
        raise ValueError("semantic and instance ids must fit in 16 bits")
    return (instance << 16) | semantic


# --------------------------------------------------------------------------
# boxes

@dataclass(frozen=True)
class BoxAnnotation:
    """Yaw-oriented 3D box in the sensor frame."""

    class_id: int
    center: tuple[float, float, float]
    dims: tuple[float, float, float]
    yaw: float

    def __post_init__(self):
        if len(self.center) != 3 or len(self.dims) != 3:
            raise ValueError("center and dims need three components")
        if not all(d > 0 for d in self.dims):
            raise ValueError(f"box dims must be strictly positive, got {self.dims}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "dims", tuple(float(d) for d in self.dims))
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    def corners(self) -> np.ndarray:
        """The 8 box corners as an ``(8, 3)`` array."""
        half = np.asarray(self.dims) / 2.0
        signs = np.array(
            [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
            dtype=float,
        )
        local = signs * half
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return local @ rot.T + np.asarray(self.center)

    def contains(self, points, tol=1e-6) -> np.ndarray:
        """Boolean mask of ``points`` inside the closed box (with tolerance)."""
        pts = np.asarray(points, dtype=float)[:, :3] - np.asarray(self.center)
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        local_x = c * pts[:, 0] + s * pts[:, 1]
        local_y = -s * pts[:, 0] + c * pts[:, 1]
        half = np.asarray(self.dims) / 2.0 + tol
        return (
            (np.abs(local_x) <= half[0])
            & (np.abs(local_y) <= half[1])
            & (np.abs(pts[:, 2]) <= half[2])
        )

    def to_line(self) -> str:
        fields = [*self.center, *self.dims, self.yaw]
        return " ".join([str(int(self.class_id))] + [f"{v:.6g}" for v in fields])


def parse_box_line(line, lineno=None) -> BoxAnnotation:
    where = f"line {lineno}: " if lineno is not None else ""
    parts = line.split()
    if len(parts) != 8:
        raise MalformedFileError(f"{where}expected 8 fields, got {len(parts)}")
    try:
        class_id = int(parts[0])
        values = [float(p) for p in parts[1:]]
    except ValueError as exc:
        raise MalformedFileError(f"{where}{exc}") from None
    if not all(math.isfinite(v) for v in values):
        raise MalformedFileError(f"{where}non-finite box value")
    try:
        return BoxAnnotation(class_id, tuple(values[0:3]), tuple(values[3:6]), values[6])
    except ValueError as exc:
        raise MalformedFileError(f"{where}{exc}") from None


def read_boxes(path) -> list[BoxAnnotation]:
    boxes = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            boxes.append(parse_box_line(line, lineno))
    return boxes


def write_boxes(boxes, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for box in boxes:
            fh.write(box.to_line() + "\n")
