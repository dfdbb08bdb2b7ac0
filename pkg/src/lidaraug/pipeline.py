"""Per-scan and per-dataset instance augmentation.

For each of ``n`` sampled (class, mesh) pairs: draw a height/yaw, place the
mesh in free space on the estimated ground, ray-cast it with the sensor
pattern, remove scan points inside its per-ring shadow, sample remission by
range, apply dropout and ray-aligned noise, then append the points and
their labels or box. Each instance sees the scan as augmented by the
previous ones.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import scan_io
from ._validation import check_labels, check_point_cloud, check_random_state
from .annotate import merge_boxes, merge_labels, next_instance_id, segmentation_labels, transform_box
from .bvh import TriangleBVH
from .config import AugmentationConfig
from .manifest import MeshManifest, sample_meshes
from .placement import PlacementError, place_mesh
from .remission import RemissionTable, build_table
from .render import apply_dropout_and_noise, assign_remission, ray_cast, shadowed_mask
from .sensor import PolarScan, SensorModel, assign_rings

logger = logging.getLogger(__name__)

WORKERS_ENV = "LIDARAUG_WORKERS"
REPORT_NAME = "report.json"


class ConsistencyError(RuntimeError):
    """Points and annotations fell out of step; the scan is aborted."""


class AugmentationDeps:
    """Immutable shared inputs: manifest, remission table, sensor, mesh cache."""

    def __init__(self, manifest, table, sensor, meshes=None):
        self.manifest = manifest
        self.table = table
        self.sensor = sensor
        self._meshes = dict(meshes or {})
        self._lock = threading.Lock()

    @classmethod
    def from_config(cls, config) -> "AugmentationDeps":
        if config.manifest is None or config.remission_table is None:
            raise ValueError("config needs both 'manifest' and 'remission_table' paths")
        return cls(
            MeshManifest.load_file(config.manifest),
            RemissionTable.load(config.remission_table),
            SensorModel.from_config(config.sensor),
        )

    def mesh(self, record):
        with self._lock:
            cached = self._meshes.get(record.path)
        if cached is None:
            cached = self.manifest.load(record)
            with self._lock:
                self._meshes.setdefault(record.path, cached)
        return cached

    def preload(self, classes=None) -> None:
        for name, recs in self.manifest.records.items():
            if classes is None or name in classes:
                for rec in recs:
                    self.mesh(rec)


@dataclass
class InstanceReport:
    class_name: str
    class_id: int
    mesh: str
    distance: float
    z_min: float
    points: int
    instance_id: int | None = None


@dataclass
class ScanReport:
    requested: int = 0
    placed: int = 0
    failed: list = field(default_factory=list)
    points_in: int = 0
    points_culled: int = 0
    points_added: int = 0
    points_out: int = 0
    instances: list = field(default_factory=list)
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AugmentResult:
    cloud: np.ndarray
    annotations: object  # label words (segmentation) or list of boxes (detection)
    report: ScanReport
    instance_points: list = field(default_factory=list)
    placements: list = field(default_factory=list)
    shadows: list = field(default_factory=list)
    raw_points: list = field(default_factory=list)  # before dropout and noise
    meshes: list = field(default_factory=list)
    records: list = field(default_factory=list)


def _render_instance(mesh, class_name, polar, sensor, placement_cfg, rng):
    """Place and ray-cast one mesh, redrawing the pose when nothing is hit."""
    reasons = []
    for _ in range(placement_cfg.max_attempts):
        placed, placement = place_mesh(mesh, class_name, polar, sensor, placement_cfg, rng)
        points, shadow = ray_cast(placed, sensor, TriangleBVH(placed.vertices, placed.triangles))
        if len(points):
            return placed, placement, points, shadow
        reasons.append(f"no sensor ray hits the mesh at r={placement.distance:.2f} m")
    raise PlacementError("rendering produced no points", reasons)


def augment_scan(cloud, annotations, config, deps, rng, keep_debug=False) -> AugmentResult:
    """Insert ``config.n`` mesh instances into one scan.

    ``annotations`` are raw label words in segmentation mode and a list of
    :class:`~lidaraug.scan_io.BoxAnnotation` in detection mode. Output order
    is surviving original points followed by instances in insertion order.
    """
    t0 = time.perf_counter()
    cloud = check_point_cloud(cloud)
    rng = check_random_state(rng)
    segmentation = config.mode == "segmentation"
    if segmentation:
        labels = check_labels(annotations, cloud.shape[0])
    else:
        boxes = list(annotations)

    report = ScanReport(requested=config.n, points_in=int(cloud.shape[0]))
    result = AugmentResult(cloud, labels if segmentation else boxes, report)
    if config.n == 0:
        report.points_out = report.points_in
        report.wall_time = time.perf_counter() - t0
        return result

    sensor = deps.sensor
    placement_cfg = config.placement_config()
    records = sample_meshes(deps.manifest, config.classes, config.n, rng, config.top_k)

    kept_cloud = cloud
    kept_labels = labels if segmentation else None
    polar = PolarScan(cloud)
    rings = assign_rings(sensor, polar.elevation)
    new_clouds, new_polars, new_rings, label_frags, box_frags = [], [], [], [], []
    instance_id = next_instance_id(labels) if segmentation else None

    for record in records:
        mesh = deps.mesh(record)
        current = PolarScan.concat(polar, _concat_polar(new_polars)) if new_polars else polar
        try:
            placed, placement, points, shadow = _render_instance(
                mesh, record.class_name, current, sensor, placement_cfg, rng
            )
        except PlacementError as exc:
            report.failed.append({"class_name": record.class_name, "mesh": record.path,
                                  "reason": str(exc), "details": exc.reasons})
            continue

        points = assign_remission(points, deps.table, rng)
        raw_points = points

        # shadow removal hits the original scan and earlier instances alike
        n_rings = sensor.n_rings
        cull = shadowed_mask(rings, polar.azimuth, shadow, n_rings)
        if cull.any():
            keep = ~cull
            kept_cloud = kept_cloud[keep]
            polar = polar.select(keep)
            rings = rings[keep]
            if segmentation:
                kept_labels = kept_labels[keep]
            report.points_culled += int(cull.sum())
        for i in range(len(new_clouds)):
            cull_i = shadowed_mask(new_rings[i], new_polars[i].azimuth, shadow, n_rings)
            if cull_i.any():
                keep_i = ~cull_i
                new_clouds[i] = new_clouds[i][keep_i]
                new_polars[i] = new_polars[i].select(keep_i)
                new_rings[i] = new_rings[i][keep_i]
                if segmentation:
                    label_frags[i] = label_frags[i][keep_i]
                report.points_culled += int(cull_i.sum())

        points = apply_dropout_and_noise(
            points, config.p_drop, config.w_noise, config.sigma, rng,
            (sensor.range_min, sensor.range_max),
        )
        inst_cloud = points.to_cloud()
        inst_polar = PolarScan(inst_cloud)
        new_clouds.append(inst_cloud)
        new_polars.append(inst_polar)
        new_rings.append(assign_rings(sensor, inst_polar.elevation))
        report.points_added += len(points)

        inst = InstanceReport(record.class_name, record.class_id, record.path,
                              placement.distance, placement.z_min, len(points))
        if segmentation:
            label_frags.append(segmentation_labels(len(points), record.class_id, instance_id))
            inst.instance_id = instance_id
            instance_id += 1
        else:
            box_frags.append(transform_box(record.box, placement.transform, record.class_id))
        report.instances.append(inst)
        report.placed += 1
        if keep_debug:
            result.instance_points.append(points)
            result.placements.append(placement)
            result.shadows.append(shadow)
            result.raw_points.append(raw_points)
            result.meshes.append(placed)
            result.records.append(record)

    # later shadows may have thinned earlier instances; report what was written
    for inst, inst_cloud in zip(report.instances, new_clouds):
        inst.points = int(inst_cloud.shape[0])

    out_cloud = np.concatenate([kept_cloud, *new_clouds]) if new_clouds else kept_cloud
    out_cloud = np.ascontiguousarray(out_cloud, dtype=np.float32)
    if segmentation:
        out_ann = merge_labels(kept_labels, label_frags, out_cloud.shape[0])
    else:
        out_ann = merge_boxes(boxes, box_frags)

    report.points_out = int(out_cloud.shape[0])
    expected = report.points_in - report.points_culled + report.points_added
    if report.points_out != expected or report.placed + len(report.failed) != report.requested:
        raise ConsistencyError("point or instance bookkeeping does not add up")
    report.wall_time = time.perf_counter() - t0
    result.cloud, result.annotations = out_cloud, out_ann
    return result


def _concat_polar(polars):
    out = polars[0]
    for p in polars[1:]:
        out = PolarScan.concat(out, p)
    return out


# --------------------------------------------------------------------------
# datasets

def scan_seed(seed, name) -> np.random.SeedSequence:
    """Per-scan seed from the run seed and the scan file name."""
    digest = hashlib.blake2b(f"{int(seed)}:{name}".encode(), digest_size=16).digest()
    return np.random.SeedSequence(int.from_bytes(digest, "little"))


def annotation_path(scan_path, mode) -> Path:
    return scan_path.with_suffix(".label" if mode == "segmentation" else ".txt")


def _load_annotations(scan_path, n_points, mode):
    path = annotation_path(scan_path, mode)
    if not path.exists():
        logger.warning("%s: no annotation file, starting from empty annotations", scan_path)
        return np.zeros(n_points, np.uint32) if mode == "segmentation" else []
    return scan_io.read_labels(path) if mode == "segmentation" else scan_io.read_boxes(path)


def augment_file(scan_path, out_dir, config, deps) -> ScanReport:
    scan_path = Path(scan_path)
    cloud = scan_io.read_point_cloud(scan_path)
    annotations = _load_annotations(scan_path, cloud.shape[0], config.mode)
    rng = np.random.default_rng(scan_seed(config.seed, scan_path.name))
    result = augment_scan(cloud, annotations, config, deps, rng)
    out_dir = Path(out_dir)
    out_scan = out_dir / scan_path.name
    scan_io.write_point_cloud(result.cloud, out_scan)
    if config.mode == "segmentation":
        scan_io.write_labels(result.annotations, annotation_path(out_scan, config.mode))
    else:
        scan_io.write_boxes(result.annotations, annotation_path(out_scan, config.mode))
    return result.report


def resolve_workers(config) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return max(1, int(config.workers or 1))


def augment_dataset(scan_dir, out_dir, config, deps=None, workers=None) -> dict:
    """Augment every ``*.bin`` in ``scan_dir`` into ``out_dir``; returns the report.

    Scans run on a thread pool. Each scan has its own rng stream derived from
    ``(config.seed, file name)``, so outputs do not depend on worker count,
    scheduling, or which other scans are present.
    """
    scan_dir, out_dir = Path(scan_dir), Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    deps = deps or AugmentationDeps.from_config(config)
    workers = workers or resolve_workers(config)
    scans = sorted(scan_dir.glob("*.bin"))

    def run(path):
        try:
            return path.name, augment_file(path, out_dir, config, deps).to_dict(), None
        except Exception as exc:  # noqa: BLE001 - one bad scan must not stop the batch
            logger.exception("scan %s failed", path)
            return path.name, None, f"{type(exc).__name__}: {exc}"

    t0 = time.perf_counter()
    if workers == 1:
        results = [run(p) for p in scans]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, scans))

    per_scan = {name: rep for name, rep, _ in results if rep is not None}
    failures = {name: err for name, _, err in results if err is not None}
    report = {
        "config": config.to_dict(),
        "scans": per_scan,
        "failed_scans": failures,
        "totals": {
            "scans": len(scans),
            "scans_failed": len(failures),
            "instances_requested": sum(r["requested"] for r in per_scan.values()),
            "instances_placed": sum(r["placed"] for r in per_scan.values()),
            "points_culled": sum(r["points_culled"] for r in per_scan.values()),
            "points_added": sum(r["points_added"] for r in per_scan.values()),
        },
        "workers": workers,
        "wall_time": time.perf_counter() - t0,
    }
    (out_dir / REPORT_NAME).write_text(json.dumps(report, indent=2, default=str) + "\n")
    return report


def tree_digest(root, exclude=(REPORT_NAME,)) -> str:
    """SHA-256 over relative paths and bytes of all files except the timing report."""
    root = Path(root)
    h = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        rel = path.relative_to(root).as_posix()
        if rel in exclude:
            continue
        h.update(rel.encode() + b"\0")
        h.update(path.read_bytes())
        h.update(b"\0")
    return h.hexdigest()


# --------------------------------------------------------------------------
# estimator

class InstanceAugmenter(BaseEstimator):
    """Scikit-learn style front end to :func:`augment_scan`.

    ``fit`` resolves the sensor, loads the mesh manifest and, when no
    remission table is given, learns one from the scans passed as ``X``.
    ``fit_resample(X, y)`` then returns an augmented ``(cloud, labels)``
    pair; repeated calls draw fresh instances from the fitted random stream,
    which is what per-epoch augmentation wants.

    Parameters mirror :class:`~lidaraug.config.AugmentationConfig`;
    ``manifest`` and ``remission_table`` accept objects or file paths.
    """

    def __init__(self, manifest=None, remission_table=None, sensor="hdl64-like", n=5,
                 classes=None, p_drop=0.1, w_noise=0.6, sigma=0.03, r_min=3.0, r_max=40.0,
                 height_ranges=None, top_k=None, mode="segmentation", bin_width=1.0,
                 reservoir_size=4096, max_attempts=10, random_state=None):
        self.manifest = manifest
        self.remission_table = remission_table
        self.sensor = sensor
        self.n = n
        self.classes = classes
        self.p_drop = p_drop
        self.w_noise = w_noise
        self.sigma = sigma
        self.r_min = r_min
        self.r_max = r_max
        self.height_ranges = height_ranges
        self.top_k = top_k
        self.mode = mode
        self.bin_width = bin_width
        self.reservoir_size = reservoir_size
        self.max_attempts = max_attempts
        self.random_state = random_state

    def _make_config(self) -> AugmentationConfig:
        kwargs = dict(n=self.n, p_drop=self.p_drop, w_noise=self.w_noise, sigma=self.sigma,
                      r_min=self.r_min, r_max=self.r_max, top_k=self.top_k, mode=self.mode,
                      max_attempts=self.max_attempts)
        if self.classes is not None:
            kwargs["classes"] = list(self.classes)
        if self.height_ranges is not None:
            kwargs["height_ranges"] = dict(self.height_ranges)
        return AugmentationConfig(**kwargs)

    def fit(self, X=None, y=None):
        self.config_ = self._make_config()
        self._rng = check_random_state(self.random_state)
        sensor = self.sensor
        if not isinstance(sensor, SensorModel):
            sensor = SensorModel.from_config(sensor)
        manifest = self.manifest
        if manifest is None:
            raise ValueError("InstanceAugmenter needs a mesh manifest")
        if not isinstance(manifest, MeshManifest):
            manifest = MeshManifest.load_file(manifest)
        table = self.remission_table
        if table is None:
            if X is None:
                raise ValueError("pass scans as X to learn a remission table, or give one")
            clouds = [X] if isinstance(X, np.ndarray) and X.ndim == 2 else X
            table = build_table(clouds, self.bin_width, self.reservoir_size, self._rng)
        elif not isinstance(table, RemissionTable):
            table = RemissionTable.load(table)
        self.deps_ = AugmentationDeps(manifest, table, sensor)
        self.deps_.preload(self.config_.classes)
        return self

    def augment(self, X, y, random_state=None) -> AugmentResult:
        check_is_fitted(self, "deps_")
        rng = self._rng if random_state is None else check_random_state(random_state)
        return augment_scan(X, y, self.config_, self.deps_, rng)

    def fit_resample(self, X, y):
        if not hasattr(self, "deps_"):
            self.fit([X] if self.remission_table is None else None)
        result = self.augment(X, y)
        return result.cloud, result.annotations
