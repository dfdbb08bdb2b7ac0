"""Class-indexed mesh database: ingestion, persistence and sampling.

The manifest is a JSON document so that external generation pipelines can
write it directly::

    {
      "version": 1,
      "root": "/abs/mesh/root",
      "records": [
        {"path": "car/a.obj", "class_name": "car", "class_id": 10,
         "quality_score": 0.91, "up_axis": "z", "forward_axis": "x",
         "box": {"dims": [4.1, 1.8, 1.0], "center": [0.0, 0.0, 0.5]}}
      ],
      "skipped": [{"path": "car/bad.obj", "reason": "..."}]
    }

``path`` is relative to ``root`` (or absolute). Score files are JSON objects
mapping a mesh path (relative to the mesh root, or a bare file name) to a
quality score in ``[0, 1]``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mesh import CanonicalBox, MeshError, derive_canonical_box, load_mesh, normalize_mesh

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1
MESH_SUFFIXES = (".obj", ".ply")

# SemanticKITTI raw label ids for the instance classes used by default
DEFAULT_CLASS_IDS = {
    "car": 10,
    "bicycle": 11,
    "bus": 13,
    "motorcycle": 15,
    "truck": 18,
    "person": 30,
    "bicyclist": 31,
    "motorcyclist": 32,
}


class SamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class MeshRecord:
    path: str
    class_name: str
    class_id: int
    box: CanonicalBox
    quality_score: float | None = None
    up_axis: str = "z"
    forward_axis: str = "x"

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "class_name": self.class_name,
            "class_id": self.class_id,
            "quality_score": self.quality_score,
            "up_axis": self.up_axis,
            "forward_axis": self.forward_axis,
            "box": {"dims": list(self.box.dims), "center": list(self.box.center)},
        }

    @classmethod
    def from_dict(cls, d) -> "MeshRecord":
        box = d["box"]
        score = d.get("quality_score")
        return cls(
            path=str(d["path"]),
            class_name=str(d["class_name"]),
            class_id=int(d["class_id"]),
            box=CanonicalBox(tuple(map(float, box["dims"])), tuple(map(float, box["center"]))),
            quality_score=None if score is None else float(score),
            up_axis=str(d.get("up_axis", "z")),
            forward_axis=str(d.get("forward_axis", "x")),
        )


@dataclass
class MeshManifest:
    records: dict[str, list[MeshRecord]]
    root: Path = Path(".")
    skipped: list[dict] = field(default_factory=list)

    @property
    def classes(self) -> list[str]:
        return sorted(self.records)

    def counts(self) -> dict[str, int]:
        return {name: len(recs) for name, recs in self.records.items()}

    def resolve(self, record) -> Path:
        p = Path(record.path)
        return p if p.is_absolute() else self.root / p

    def load(self, record):
        """Load and normalise the mesh behind ``record``."""
        mesh = load_mesh(self.resolve(record))
        return normalize_mesh(mesh, record.up_axis, record.forward_axis)

    def save(self, path) -> None:
        doc = {
            "version": MANIFEST_VERSION,
            "root": str(self.root),
            "records": [r.to_dict() for name in self.classes for r in self.records[name]],
            "skipped": self.skipped,
        }
        Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load_file(cls, path) -> "MeshManifest":
        path = Path(path)
        doc = json.loads(path.read_text(encoding="utf-8"))
        if doc.get("version") != MANIFEST_VERSION:
            raise ValueError(f"{path}: unsupported manifest version {doc.get('version')!r}")
        root = Path(doc.get("root", "."))
        if not root.is_absolute():
            root = path.parent / root
        records: dict[str, list[MeshRecord]] = {}
        for d in doc["records"]:
            rec = MeshRecord.from_dict(d)
            records.setdefault(rec.class_name, []).append(rec)
        return cls(records, root, list(doc.get("skipped", [])))


def load_scores(path) -> dict[str, float]:
    scores = json.loads(Path(path).read_text(encoding="utf-8"))
    out = {}
    for key, value in scores.items():
        value = float(value)
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"quality score for {key!r} outside [0, 1]: {value}")
        out[str(key)] = value
    return out


def build_manifest(mesh_dir, class_map=None, score_file=None, up_axis="z",
                   forward_axis="x") -> MeshManifest:
    """Scan ``<mesh_dir>/<class_name>/*.{obj,ply}`` into a manifest.

    Unknown class directories are skipped with a warning; meshes that fail to
    load or normalise are recorded under ``skipped`` with the reason.
    """
    root = Path(mesh_dir).resolve()
    class_map = dict(DEFAULT_CLASS_IDS if class_map is None else class_map)
    scores = load_scores(score_file) if score_file is not None else {}

    records: dict[str, list[MeshRecord]] = {}
    skipped = []
    for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        name = class_dir.name
        if name not in class_map:
            logger.warning("skipping unknown class directory %s", class_dir)
            continue
        records.setdefault(name, [])
        for mesh_path in sorted(class_dir.iterdir()):
            if mesh_path.suffix.lower() not in MESH_SUFFIXES:
                continue
            rel = mesh_path.relative_to(root).as_posix()
            try:
                mesh = normalize_mesh(load_mesh(mesh_path), up_axis, forward_axis)
                box = derive_canonical_box(mesh)
            except (MeshError, ValueError, OSError) as exc:
                skipped.append({"path": rel, "reason": str(exc)})
                continue
            score = scores.get(rel, scores.get(mesh_path.name))
            records[name].append(
                MeshRecord(rel, name, int(class_map[name]), box, score, up_axis, forward_axis)
            )
    for name, recs in records.items():
        if not recs:
            logger.warning("class %r has no usable meshes", name)
    return MeshManifest(records, root, skipped)


def top_k_records(records, k=None) -> list[MeshRecord]:
    """The ``k`` best-scored records; ties keep manifest order, unscored sort last."""
    if k is None:
        return list(records)
    if k < 1:
        raise ValueError("top_k must be >= 1")
    ranked = sorted(
        range(len(records)),
        key=lambda i: (records[i].quality_score is None, -(records[i].quality_score or 0.0), i),
    )
    return [records[i] for i in ranked[:k]]


def sample_meshes(manifest, classes, n, rng, top_k=None) -> list[MeshRecord]:
    """Draw ``n`` classes uniformly with replacement, then one mesh per draw."""
    classes = list(classes)
    if n == 0:
        return []
    if not classes:
        raise SamplingError("no classes to sample from")
    pools = {}
    for name in dict.fromkeys(classes):
        pool = top_k_records(manifest.records.get(name, []), top_k)
        if not pool:
            raise SamplingError(f"class {name!r} has no meshes to sample from")
        pools[name] = pool
    drawn = rng.integers(len(classes), size=n)
    out = []
    for ci in drawn:
        pool = pools[classes[int(ci)]]
        out.append(pool[int(rng.integers(len(pool)))])
    return out


def mesh_cache(manifest, records=None) -> dict:
    """Pre-load normalised meshes keyed by record path."""
    if records is None:
        records = [r for recs in manifest.records.values() for r in recs]
    return {r.path: manifest.load(r) for r in records}


def box_vertices_inside(mesh, box, tol=1e-6) -> bool:
    return bool(box.contains(mesh.vertices, tol).all())


def unit_height_ok(mesh, tol=1e-6) -> bool:
    return abs(mesh.height - 1.0) <= tol and abs(float(np.min(mesh.vertices[:, 2]))) <= tol
