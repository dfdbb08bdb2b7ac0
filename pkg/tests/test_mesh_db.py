import json
from collections import Counter
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lidaraug.manifest import (
    DEFAULT_CLASS_IDS,
    MeshManifest,
    SamplingError,
    build_manifest,
    sample_meshes,
    top_k_records,
)
from lidaraug.mesh import (
    DegenerateMeshError,
    EmptyMeshError,
    Mesh,
    UnsupportedFormatError,
    box_mesh,
    derive_canonical_box,
    load_mesh,
    normalize_mesh,
    reorient,
    save_obj,
    save_ply,
)
from lidaraug.prompts import ClassRecipe, PromptRecipe, build_prompt
from lidaraug.synthetic import uv_sphere


def _write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def test_obj_single_triangle(tmp_path):
    m = load_mesh(_write(tmp_path / "t.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"))
    assert m.triangles.shape == (1, 3)


def test_obj_quad_fan(tmp_path):
    m = load_mesh(_write(tmp_path / "q.obj",
                         "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nvn 0 0 1\nf 1/1/1 2//1 3 4\n"))
    assert m.triangles.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_obj_negative_indices(tmp_path):
    m = load_mesh(_write(tmp_path / "n.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n"))
    assert m.triangles.tolist() == [[0, 1, 2]]


def test_obj_unsupported_element(tmp_path):
    with pytest.raises(UnsupportedFormatError):
        load_mesh(_write(tmp_path / "l.obj", "v 0 0 0\nv 1 0 0\nl 1 2\n"))


def test_empty_and_unknown_format(tmp_path):
    with pytest.raises(EmptyMeshError):
        load_mesh(_write(tmp_path / "e.obj", "v 0 0 0\n"))
    with pytest.raises(UnsupportedFormatError):
        load_mesh(_write(tmp_path / "m.stl", "solid"))


def _tri_multiset(mesh):
    return Counter(tuple(sorted(map(tuple, mesh.vertices[t].round(12)))) for t in mesh.triangles)


@pytest.mark.parametrize("binary", [True, False])
def test_ply_and_obj_encodings_agree(tmp_path, binary):
    cube = box_mesh((1, 2, 3), (0.5, -1, 2))
    save_obj(cube, tmp_path / "c.obj")
    save_ply(cube, tmp_path / "c.ply", binary=binary)
    a, b = load_mesh(tmp_path / "c.obj"), load_mesh(tmp_path / "c.ply")
    assert _tri_multiset(a) == _tri_multiset(b) == _tri_multiset(cube)


def test_ply_big_endian_with_extra_properties(tmp_path):
    import struct

    header = ("ply\nformat binary_big_endian 1.0\ncomment made by hand\n"
              "element vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
              "property uchar red\nelement face 1\nproperty list uchar uint vertex_indices\n"
              "end_header\n").encode()
    body = b"".join(struct.pack(">fffB", *v, 7) for v in [(0, 0, 0), (1, 0, 0), (0, 0, 2)])
    body += struct.pack(">BIII", 3, 0, 1, 2)
    (tmp_path / "be.ply").write_bytes(header + body)
    m = load_mesh(tmp_path / "be.ply")
    assert m.vertices.tolist() == [[0, 0, 0], [1, 0, 0], [0, 0, 2]]
    assert m.triangles.tolist() == [[0, 1, 2]]


def test_normalize_halves_tall_cube():
    m = normalize_mesh(box_mesh((2, 2, 2), (0, 0, 1)))
    lo, hi = m.bounds
    assert lo[2] == 0.0 and hi[2] == 1.0
    assert np.allclose(hi - lo, [1, 1, 1])


def test_normalize_identity_on_canonical():
    m = box_mesh((1, 1, 1), (0, 0, 0.5))
    n = normalize_mesh(m)
    assert np.array_equal(n.vertices, m.vertices)
    assert np.array_equal(normalize_mesh(n).vertices, n.vertices)


def test_y_up_normalization_preserves_proportions():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(30, 3)) * [1.0, 0.9, 0.4]
    pts[:, 1] = (pts[:, 1] - pts[:, 1].min()) / np.ptp(pts[:, 1]) * 1.8  # y-up, height 1.8
    m = Mesh(pts, [[0, 1, 2]])
    n = normalize_mesh(m, up_axis="y")
    assert np.ptp(n.vertices[:, 2]) == pytest.approx(1.0, abs=1e-12)
    d0 = [np.linalg.norm(pts[i] - pts[j]) for i, j in combinations(range(30), 2)]
    d1 = [np.linalg.norm(n.vertices[i] - n.vertices[j]) for i, j in combinations(range(30), 2)]
    ratio = np.array(d1) / np.array(d0)
    assert np.allclose(ratio, ratio[0], rtol=1e-12)


def test_reorient_is_proper_rotation():
    for up in ("x", "y", "z", "-y"):
        for fw in ("x", "y", "z", "-x"):
            if up.strip("-") == fw.strip("-"):
                continue
            eye = reorient(np.eye(3), up, fw)
            assert np.linalg.det(eye) == pytest.approx(1.0)


def test_canonical_boxes():
    box = derive_canonical_box(box_mesh((1, 1, 1), (0, 0, 0.5)))
    assert box.dims == (1.0, 1.0, 1.0) and box.center == (0.0, 0.0, 0.5)
    flat = derive_canonical_box(box_mesh((4, 2, 1), (0, 0, 0.5)))
    assert flat.dims == (4.0, 2.0, 1.0)
    with pytest.raises(DegenerateMeshError):
        derive_canonical_box(Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]]))


@settings(max_examples=60)
@given(st.integers(0, 2**31))
def test_random_mesh_inside_its_box(seed):
    rng = np.random.default_rng(seed)
    m = Mesh(rng.normal(size=(40, 3)) * rng.uniform(0.1, 5, 3), rng.integers(0, 40, (20, 3)))
    n = normalize_mesh(m, up_axis=str(rng.choice(["y", "z"])))
    box = derive_canonical_box(n)
    assert box.contains(n.vertices, tol=0.0).all()
    assert n.vertices[:, 2].min() == 0.0
    assert n.height == pytest.approx(1.0, abs=1e-12)


def test_manifest_ingest_counts_and_scores(tmp_path):
    for rel in ("car/a.obj", "car/b.obj", "person/c.obj"):
        save_obj(box_mesh((4, 2, 1.5), (0, 0, 0.75)), _write(tmp_path / rel, ""))
    _write(tmp_path / "dragon/d.obj", "v 0 0 0\n")
    _write(tmp_path / "car/broken.obj", "v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n")
    scores = _write(tmp_path / "scores.json", json.dumps({"a.obj": 0.9}))
    man = build_manifest(tmp_path, score_file=scores)
    assert man.counts() == {"car": 2, "person": 1}
    assert [s["path"] for s in man.skipped] == ["car/broken.obj"]
    by_path = {r.path: r for r in man.records["car"]}
    assert by_path["car/a.obj"].quality_score == 0.9
    assert by_path["car/b.obj"].quality_score is None
    assert by_path["car/a.obj"].class_id == DEFAULT_CLASS_IDS["car"]

    man.save(tmp_path / "m.json")
    again = MeshManifest.load_file(tmp_path / "m.json")
    assert again.records == man.records
    mesh = again.load(again.records["car"][0])
    assert mesh.height == pytest.approx(1.0)
    box = again.records["car"][0].box
    assert box.dims == pytest.approx((4 / 1.5, 2 / 1.5, 1.0))


def test_manifest_fixture_set_unit_height(manifest):
    assert set(manifest.classes) == set(DEFAULT_CLASS_IDS)
    for recs in manifest.records.values():
        for rec in recs:
            assert rec.box.dims[2] == pytest.approx(1.0, abs=1e-12)
            m = manifest.load(rec)
            assert rec.box.contains(m.vertices, tol=1e-12).all()


def test_y_up_library_matches_z_up(tmp_path):
    from lidaraug.synthetic import write_mesh_library

    write_mesh_library(tmp_path / "z", np.random.default_rng(1), ["car"], per_class=1)
    write_mesh_library(tmp_path / "y", np.random.default_rng(1), ["car"], per_class=1,
                       up_axis="y")
    bz = build_manifest(tmp_path / "z").records["car"][0].box
    by = build_manifest(tmp_path / "y", up_axis="y").records["car"][0].box
    assert np.allclose(bz.dims, by.dims) and np.allclose(bz.center, by.center)


def _scored(scores):
    from lidaraug.manifest import MeshRecord
    from lidaraug.mesh import CanonicalBox

    box = CanonicalBox((1, 1, 1), (0, 0, 0.5))
    return [MeshRecord(f"m{i}.obj", "car", 10, box, s) for i, s in enumerate(scores)]


def test_top_k_support():
    recs = _scored([0.9, 0.5, 0.7])
    assert [r.quality_score for r in top_k_records(recs, 2)] == [0.9, 0.7]
    man = MeshManifest({"car": recs})
    drawn = sample_meshes(man, ["car"], 500, np.random.default_rng(0), top_k=2)
    assert {r.quality_score for r in drawn} == {0.9, 0.7}
    mixed = _scored([None, 0.2, None, 0.8])
    assert [r.path for r in top_k_records(mixed, 4)] == ["m3.obj", "m1.obj", "m0.obj", "m2.obj"]


def test_sampling_deterministic_and_errors(manifest):
    a = sample_meshes(manifest, ["car", "bus"], 5, np.random.default_rng(4))
    b = sample_meshes(manifest, ["car", "bus"], 5, np.random.default_rng(4))
    assert a == b and len(a) == 5
    assert {r.class_name for r in a} <= {"car", "bus"}
    with pytest.raises(SamplingError):
        sample_meshes(manifest, ["tram"], 1, np.random.default_rng(0))
    assert sample_meshes(manifest, ["tram"], 0, np.random.default_rng(0)) == []


def test_literal_example_prompt():
    recipe = PromptRecipe({"car": ClassRecipe(["sports car"], sizes=["large"], colors=["purple"])})
    assert build_prompt(recipe, "car", np.random.default_rng(0)) == "Generate a large purple sports car"


def test_default_recipe_can_emit_example_prompt():
    recipe = PromptRecipe.default()
    seen = {build_prompt(recipe, "car", np.random.default_rng(s)) for s in range(5000)}
    assert "Generate a large purple sports car" in seen


def test_synonym_coverage():
    recipe = PromptRecipe({"bus": ClassRecipe(["a", "b", "c", "d", "e"])})
    rng = np.random.default_rng(9)
    nouns = {build_prompt(recipe, "bus", rng).rsplit(" ", 1)[1] for _ in range(1000)}
    assert nouns == {"a", "b", "c", "d", "e"}


def test_recipe_yaml_round_trip(tmp_path):
    recipe = PromptRecipe.default()
    f = tmp_path / "r.yaml"
    f.write_text(recipe.dumps())
    assert PromptRecipe.load(f).to_dict() == recipe.to_dict()
    with pytest.raises(KeyError):
        build_prompt(recipe, "tram", np.random.default_rng(0))


def test_uv_sphere_triangle_count():
    assert uv_sphere(24, 12).triangles.shape[0] == 2 * 24 * 11
