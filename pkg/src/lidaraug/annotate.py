"""Annotations for inserted instances: label fragments and transformed boxes."""
from __future__ import annotations

import math

import numpy as np

from .scan_io import BoxAnnotation, join_labels, split_labels

MAX_INSTANCE_ID = 0xFFFF


class AnnotationError(RuntimeError):
    pass


def next_instance_id(labels) -> int:
    """First instance id above every id already present in ``labels``."""
    if len(labels) == 0:
        return 1
    _, inst = split_labels(labels)
    return int(inst.max()) + 1


def segmentation_labels(n_points, class_id, instance_id) -> np.ndarray:
    """Label words marking ``n_points`` inserted points as one new instance."""
    if not 0 <= class_id <= 0xFFFF:
        raise AnnotationError(f"class id {class_id} does not fit in 16 bits")
    if not 0 < instance_id <= MAX_INSTANCE_ID:
        raise AnnotationError(f"instance id {instance_id} overflows the 16-bit field")
    return join_labels(np.full(n_points, class_id), np.full(n_points, instance_id))


def transform_box(canonical, transform, class_id=0) -> BoxAnnotation:
    """Carry a canonical box through scale, yaw and translation."""
    s = transform.height_scale
    c, sn = math.cos(transform.yaw), math.sin(transform.yaw)
    cx, cy, cz = (s * v for v in canonical.center)
    tx, ty, tz = transform.translation
    center = (c * cx - sn * cy + tx, sn * cx + c * cy + ty, cz + tz)
    dims = tuple(s * d for d in canonical.dims)
    return BoxAnnotation(class_id, center, dims, transform.yaw)


def merge_labels(base, fragments, n_points=None) -> np.ndarray:
    """Append label fragments to the (already culled) base labels."""
    parts = [np.asarray(base, dtype=np.uint32)]
    parts += [np.asarray(f, dtype=np.uint32) for f in fragments]
    merged = np.concatenate(parts) if parts else np.zeros(0, np.uint32)
    if n_points is not None and merged.size != n_points:
        raise AnnotationError(
            f"label count {merged.size} does not match augmented point count {n_points}"
        )
    return merged


def merge_boxes(base, fragments) -> list[BoxAnnotation]:
    return list(base) + list(fragments)
