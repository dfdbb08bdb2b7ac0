"""Text-to-3D instance augmentation for LiDAR scans.

Insert normalised meshes into point clouds: free-space placement on the
estimated ground, sensor-pattern ray casting, occlusion removal, range-keyed
remission, dropout and ray-aligned noise, and matching labels or boxes.
"""
from .annotate import merge_labels, next_instance_id, segmentation_labels, transform_box
from .bvh import TriangleBVH, brute_force_hits, intersect_ray_triangle
from .config import DEFAULT_CLASSES, AugmentationConfig
from .manifest import MeshManifest, MeshRecord, build_manifest, sample_meshes
from .mesh import CanonicalBox, Mesh, derive_canonical_box, load_mesh, normalize_mesh
from .pipeline import (
    AugmentationDeps,
    InstanceAugmenter,
    augment_dataset,
    augment_scan,
    tree_digest,
)
from .placement import PlacementConfig, PlacementError, estimate_ground, find_viable_regions, place_mesh
from .prompts import PromptRecipe, build_prompt
from .remission import RemissionSampler, RemissionTable, build_table
from .render import apply_dropout_and_noise, cull_shadowed_points, ray_cast
from .scan_io import BoxAnnotation, read_boxes, read_labels, read_point_cloud, write_boxes, write_labels, write_point_cloud
from .sensor import SensorModel, preset_sensor

__version__ = "0.1.0"

__all__ = [
    "AugmentationConfig", "AugmentationDeps", "BoxAnnotation", "CanonicalBox",
    "InstanceAugmenter", "Mesh", "MeshManifest", "MeshRecord", "DEFAULT_CLASSES",
    "PlacementConfig", "PlacementError", "PromptRecipe", "RemissionSampler",
    "RemissionTable", "SensorModel", "TriangleBVH", "apply_dropout_and_noise",
    "augment_dataset", "augment_scan", "brute_force_hits", "build_manifest",
    "build_prompt", "build_table", "cull_shadowed_points", "derive_canonical_box",
    "estimate_ground", "find_viable_regions", "intersect_ray_triangle", "load_mesh",
    "merge_labels", "next_instance_id", "normalize_mesh", "place_mesh", "preset_sensor",
    "ray_cast", "read_boxes", "read_labels", "read_point_cloud", "sample_meshes",
    "segmentation_labels", "transform_box", "tree_digest", "write_boxes", "write_labels",
    "write_point_cloud",
]
