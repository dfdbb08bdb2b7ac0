"""Triangle meshes: OBJ/PLY loading, canonical-frame normalisation, box fitting.

The canonical frame is x forward, z up, base at ``z = 0``, height exactly 1,
with the x/y midpoint of the axis bounds at the origin.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    pass


class UnsupportedFormatError(MeshError):
    pass


class EmptyMeshError(MeshError):
    pass


class DegenerateMeshError(MeshError):
    pass


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (T, 3) int64

    def __post_init__(self):
        verts = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        tris = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if tris.shape[0] == 0:
            raise EmptyMeshError("mesh has no triangles")
        if tris.min() < 0 or tris.max() >= verts.shape[0]:
            raise MeshError("triangle index out of range")
        if not np.isfinite(verts).all():
            raise MeshError("mesh has non-finite vertices")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def height(self) -> float:
        lo, hi = self.bounds
        return float(hi[2] - lo[2])


@dataclass(frozen=True)
class CanonicalBox:
    dims: tuple[float, float, float]
    center: tuple[float, float, float]

    def contains(self, points, tol=1e-6) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        half = np.asarray(self.dims) / 2.0 + tol
        return (np.abs(pts - np.asarray(self.center)) <= half).all(axis=1)


# --------------------------------------------------------------------------
# loading

def load_mesh(path) -> Mesh:
    """Load an ASCII OBJ or an ASCII/binary PLY file; polygons are fan-triangulated."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        verts, faces = _read_obj(path)
    elif suffix == ".ply":
        verts, faces = _read_ply(path)
    else:
        raise UnsupportedFormatError(f"{path}: unsupported mesh format {suffix!r}")
    tris = _fan_triangulate(faces)
    if not tris:
        raise EmptyMeshError(f"{path}: mesh has no triangles")
    return Mesh(np.asarray(verts, dtype=np.float64).reshape(-1, 3), np.asarray(tris))


def _fan_triangulate(faces):
    tris = []
    for face in faces:
        if len(face) < 3:
            raise UnsupportedFormatError(f"face with {len(face)} vertices")
        for k in range(1, len(face) - 1):
            tris.append((face[0], face[k], face[k + 1]))
    return tris


_OBJ_IGNORED = {"vt", "vn", "vp", "g", "o", "s", "usemtl", "mtllib"}
_OBJ_UNSUPPORTED = {"l", "p", "curv", "curv2", "surf", "cstype", "deg", "bmat"}


def _read_obj(path):
    verts, faces = [], []
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif tag == "f":
                face = []
                for item in parts[1:]:
                    idx = int(item.split("/")[0])
                    # OBJ indices are 1-based; negatives count back from the end
                    face.append(idx - 1 if idx > 0 else len(verts) + idx)
                faces.append(face)
            elif tag in _OBJ_UNSUPPORTED:
                raise UnsupportedFormatError(f"{path}:{lineno}: unsupported element {tag!r}")
            elif tag not in _OBJ_IGNORED:
                continue
    return verts, faces


_PLY_TYPES = {
    "char": "b", "int8": "b", "uchar": "B", "uint8": "B",
    "short": "h", "int16": "h", "ushort": "H", "uint16": "H",
    "int": "i", "int32": "i", "uint": "I", "uint32": "I",
    "float": "f", "float32": "f", "double": "d", "float64": "d",
}


def _read_ply(path):
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise UnsupportedFormatError(f"{path}: missing 'ply' magic")
        fmt = None
        elements = []  # (name, count, [(prop name, type, list count type | None)])
        while True:
            raw = fh.readline()
            if not raw:
                raise MeshError(f"{path}: unterminated PLY header")
            parts = raw.decode("ascii", errors="replace").split()
            if not parts:
                continue
            if parts[0] == "format":
                fmt = parts[1]
            elif parts[0] == "element":
                elements.append((parts[1], int(parts[2]), []))
            elif parts[0] == "property":
                if parts[1] == "list":
                    elements[-1][2].append((parts[4], parts[3], parts[2]))
                else:
                    elements[-1][2].append((parts[2], parts[1], None))
            elif parts[0] == "end_header":
                break
        body = fh.read()

    names = [e[0] for e in elements]
    if "vertex" not in names:
        raise EmptyMeshError(f"{path}: PLY without vertex element")
    for name, _, props in elements:
        if name not in ("vertex", "face"):
            continue
        for pname, ptype, ctype in props:
            if ptype not in _PLY_TYPES or (ctype is not None and ctype not in _PLY_TYPES):
                raise UnsupportedFormatError(f"{path}: unsupported PLY type in {pname!r}")

    if fmt == "ascii":
        reader = _PlyAsciiReader(body.decode("ascii", errors="replace").split())
    elif fmt in ("binary_little_endian", "binary_big_endian"):
        reader = _PlyBinaryReader(body, "<" if fmt == "binary_little_endian" else ">")
    else:
        raise UnsupportedFormatError(f"{path}: unsupported PLY format {fmt!r}")

    verts, faces = [], []
    for name, count, props in elements:
        if any(p[1] not in _PLY_TYPES for p in props):
            raise UnsupportedFormatError(f"{path}: unsupported property type in {name!r}")
        pnames = [p[0] for p in props]
        for _ in range(count):
            row = {}
            for pname, ptype, ctype in props:
                if ctype is None:
                    row[pname] = reader.scalar(ptype)
                else:
                    n = int(reader.scalar(ctype))
                    row[pname] = [reader.scalar(ptype) for _ in range(n)]
            if name == "vertex":
                verts.append([float(row["x"]), float(row["y"]), float(row["z"])])
            elif name == "face":
                key = "vertex_indices" if "vertex_indices" in pnames else "vertex_index"
                faces.append([int(i) for i in row[key]])
    return verts, faces


class _PlyAsciiReader:
    def __init__(self, tokens):
        self._tokens = tokens
        self._pos = 0

    def scalar(self, ptype):
        tok = self._tokens[self._pos]
        self._pos += 1
        return float(tok) if _PLY_TYPES[ptype] in "fd" else int(tok)


class _PlyBinaryReader:
    def __init__(self, data, endian):
        self._data = data
        self._endian = endian
        self._pos = 0

    def scalar(self, ptype):
        fmt = self._endian + _PLY_TYPES[ptype]
        (value,) = struct.unpack_from(fmt, self._data, self._pos)
        self._pos += struct.calcsize(fmt)
        return value


def save_obj(mesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write("v " + " ".join(repr(float(c)) for c in v) + "\n")
        for t in mesh.triangles:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


def save_ply(mesh, path, binary=True) -> None:
    header = [
        "ply",
        f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
        f"element vertex {len(mesh.vertices)}",
        "property double x", "property double y", "property double z",
        f"element face {len(mesh.triangles)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fh.write(mesh.vertices.astype("<f8").tobytes())
            for t in mesh.triangles:
                fh.write(struct.pack("<B3i", 3, *(int(i) for i in t)))
        else:
            lines = [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
            lines += ["3 " + " ".join(str(int(i)) for i in t) for t in mesh.triangles]
            fh.write(("\n".join(lines) + "\n").encode("ascii"))


# --------------------------------------------------------------------------
# normalisation

_AXES = {"x": 0, "y": 1, "z": 2}


def _parse_axis(tag):
    tag = str(tag).strip().lower()
    sign = -1.0 if tag.startswith("-") else 1.0
    name = tag.lstrip("+-")
    if name not in _AXES:
        raise ValueError(f"axis tag must be one of x, y, z (optionally signed), got {tag!r}")
    return _AXES[name], sign


def reorient(vertices, up_axis="z", forward_axis="x") -> np.ndarray:
    """Permute/negate coordinates so ``forward_axis`` becomes +x and ``up_axis`` +z.

    Only exact permutations and sign flips are applied, never a matrix
    product, so an identity reorientation leaves the data bit-identical.
    """
    up_i, up_s = _parse_axis(up_axis)
    fw_i, fw_s = _parse_axis(forward_axis)
    if up_i == fw_i:
        raise ValueError("up_axis and forward_axis must differ")
    left_i = 3 - up_i - fw_i
    # left = up x forward; for the index cycle (0, 1, 2) the cross product is +1
    cyclic = (up_i, fw_i, left_i) in ((0, 1, 2), (1, 2, 0), (2, 0, 1))
    left_s = up_s * fw_s * (1.0 if cyclic else -1.0)
    verts = np.asarray(vertices, dtype=np.float64)
    out = np.empty_like(verts)
    for dst, (src, sign) in enumerate(((fw_i, fw_s), (left_i, left_s), (up_i, up_s))):
        out[:, dst] = verts[:, src] if sign > 0 else -verts[:, src]
    return out


def normalize_mesh(mesh, up_axis="z", forward_axis="x") -> Mesh:
    """Bring ``mesh`` into the canonical frame at unit height."""
    verts = reorient(mesh.vertices, up_axis, forward_axis)
    lo, hi = verts.min(axis=0), verts.max(axis=0)
    height = hi[2] - lo[2]
    if not height > 0:
        raise DegenerateMeshError("mesh has zero vertical extent")
    mid_x = (lo[0] + hi[0]) / 2.0
    mid_y = (lo[1] + hi[1]) / 2.0
    extent = max(float(np.max(hi - lo)), 1.0)
    if lo[2] == 0.0 and height == 1.0 and max(abs(mid_x), abs(mid_y)) <= 1e-12 * extent:
        # already canonical; re-centering would only add rounding noise
        return Mesh(verts, mesh.triangles.copy())
    out = np.empty_like(verts)
    out[:, 0] = (verts[:, 0] - mid_x) / height
    out[:, 1] = (verts[:, 1] - mid_y) / height
    out[:, 2] = (verts[:, 2] - lo[2]) / height
    return Mesh(out, mesh.triangles.copy())


def derive_canonical_box(mesh) -> CanonicalBox:
    lo, hi = mesh.bounds
    dims = hi - lo
    if not (dims > 0).all():
        raise DegenerateMeshError(f"mesh is flat along an axis (extents {dims.tolist()})")
    center = (lo + hi) / 2.0
    return CanonicalBox(tuple(float(d) for d in dims), tuple(float(c) for c in center))


def box_mesh(dims=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.5)) -> Mesh:
    """Closed axis-aligned box made of 12 triangles (outward winding)."""
    half = np.asarray(dims, dtype=float) / 2.0
    c = np.asarray(center, dtype=float)
    signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
    verts = c + signs * half
    tris = np.array([
        [0, 1, 3], [0, 3, 2],  # -x
        [4, 6, 7], [4, 7, 5],  # +x
        [0, 4, 5], [0, 5, 1],  # -y
        [2, 3, 7], [2, 7, 6],  # +y
        [0, 2, 6], [0, 6, 4],  # -z
        [1, 5, 7], [1, 7, 3],  # +z
    ])
    return Mesh(verts, tris)
