import json
import os

import numpy as np
import pytest
import yaml
from sklearn.base import clone

from lidaraug import cli, scan_io
from lidaraug.config import DEFAULT_CLASSES, AugmentationConfig
from lidaraug.pipeline import (
    InstanceAugmenter,
    augment_dataset,
    augment_scan,
    resolve_workers,
    scan_seed,
    tree_digest,
)
from lidaraug.scan_io import BoxAnnotation, split_labels


def _labels(n):
    return (np.arange(n, dtype=np.uint32) % 60000) | (np.uint32(2) << 16)


def test_defaults():
    cfg = AugmentationConfig()
    assert cfg.n == 5 and cfg.p_drop == 0.1 and cfg.w_noise == 0.6
    assert tuple(cfg.classes) == DEFAULT_CLASSES and cfg.top_k is None


@pytest.mark.parametrize("bad", [{"n": -1}, {"p_drop": 1.5}, {"w_noise": -0.1},
                                 {"classes": []}, {"mode": "x"}, {"classes": ["tram"]},
                                 {"bogus": 1}])
def test_config_validation(bad):
    with pytest.raises((ValueError, TypeError)):
        AugmentationConfig.from_dict(bad)


def test_n_zero_is_identity(deps, fixture_scans):
    cloud = fixture_scans[0]
    labels = _labels(cloud.shape[0])
    res = augment_scan(cloud, labels, AugmentationConfig(n=0), deps, np.random.default_rng(0))
    assert np.array_equal(res.cloud, cloud) and np.array_equal(res.annotations, labels)
    assert res.report.placed == 0 and res.report.points_out == cloud.shape[0]


def test_segmentation_bookkeeping(deps, fixture_scans):
    cloud = fixture_scans[1]
    labels = _labels(cloud.shape[0])
    res = augment_scan(cloud, labels, AugmentationConfig(), deps, np.random.default_rng(1),
                       keep_debug=True)
    rep = res.report
    assert rep.placed + len(rep.failed) == 5
    assert res.cloud.shape[0] == rep.points_in - rep.points_culled + rep.points_added
    assert res.annotations.size == res.cloud.shape[0]
    sem, inst = split_labels(res.annotations)
    n_new = sum(i.points for i in rep.instances)
    tail_inst = inst[res.cloud.shape[0] - n_new:]
    ids = [i.instance_id for i in rep.instances]
    assert len(set(ids)) == len(ids) and min(ids) > 2
    # class of every instance's labels equals the class its mesh was drawn under
    start = res.cloud.shape[0] - n_new
    for rec, info in zip(res.records, rep.instances):
        seg = slice(start, start + info.points)
        assert (sem[seg] == rec.class_id).all() and (inst[seg] == info.instance_id).all()
        start += info.points
    assert set(np.unique(tail_inst)) <= set(ids)


def test_detection_mode(deps, fixture_scans):
    cfg = AugmentationConfig(mode="detection", n=3)
    base = [BoxAnnotation(10, (5, 5, -1), (4, 2, 1.5), 0.1)]
    res = augment_scan(fixture_scans[2], base, cfg, deps, np.random.default_rng(2), keep_debug=True)
    assert res.annotations[0] == base[0]
    assert len(res.annotations) == 1 + res.report.placed
    for box, pts, rec in zip(res.annotations[1:], res.raw_points, res.records):
        assert box.class_id == rec.class_id
        assert box.contains(pts.xyz, tol=1e-6).all()


def test_scan_seed_depends_on_name_only():
    a = np.random.default_rng(scan_seed(42, "000001.bin")).random()
    b = np.random.default_rng(scan_seed(42, "000001.bin")).random()
    c = np.random.default_rng(scan_seed(42, "000002.bin")).random()
    assert a == b != c


def test_worker_env_override(monkeypatch):
    monkeypatch.setenv("LIDARAUG_WORKERS", "3")
    assert resolve_workers(AugmentationConfig(workers=1)) == 3
    monkeypatch.delenv("LIDARAUG_WORKERS")
    assert resolve_workers(AugmentationConfig()) == 1


@pytest.fixture
def dataset(tmp_path, fixture_scans, manifest, table):
    scans = tmp_path / "scans"
    scans.mkdir()
    for k, cloud in enumerate(fixture_scans[:3]):
        scan_io.write_point_cloud(cloud, scans / f"{k:06d}.bin")
        scan_io.write_labels(_labels(cloud.shape[0]), scans / f"{k:06d}.label")
    manifest.save(tmp_path / "manifest.json")
    table.save(tmp_path / "table.rmt")
    return tmp_path


def _config_file(root, **extra):
    doc = {"manifest": "manifest.json", "remission_table": "table.rmt", "seed": 42, **extra}
    path = root / f"config_{len(extra)}.yaml"
    path.write_text(yaml.safe_dump(doc))
    return path


def test_dataset_outputs_and_independence(dataset):
    cfg = AugmentationConfig.load(_config_file(dataset))
    rep = augment_dataset(dataset / "scans", dataset / "out_a", cfg)
    names = sorted(p.name for p in (dataset / "out_a").iterdir())
    assert names == ["000000.bin", "000000.label", "000001.bin", "000001.label",
                     "000002.bin", "000002.label", "report.json"]
    assert rep["totals"]["scans_failed"] == 0
    on_disk = json.loads((dataset / "out_a" / "report.json").read_text())
    assert on_disk["totals"] == rep["totals"]

    augment_dataset(dataset / "scans", dataset / "out_b", cfg)
    assert tree_digest(dataset / "out_a") == tree_digest(dataset / "out_b")

    # dropping one input leaves the other outputs unchanged
    os.remove(dataset / "scans" / "000001.bin")
    os.remove(dataset / "scans" / "000001.label")
    augment_dataset(dataset / "scans", dataset / "out_c", cfg)
    for name in ("000000.bin", "000000.label", "000002.bin", "000002.label"):
        assert (dataset / "out_a" / name).read_bytes() == (dataset / "out_c" / name).read_bytes()
    assert not (dataset / "out_c" / "000001.bin").exists()


def test_failed_scan_does_not_stop_batch(dataset):
    (dataset / "scans" / "000003.bin").write_bytes(b"\0" * 7)
    cfg = AugmentationConfig.load(_config_file(dataset))
    rep = augment_dataset(dataset / "scans", dataset / "out", cfg)
    assert list(rep["failed_scans"]) == ["000003.bin"]
    assert rep["totals"]["scans"] == 4 and len(rep["scans"]) == 3
    code = cli.main(["augment", "--scans", str(dataset / "scans"), "--out",
                     str(dataset / "out2"), "--config", str(_config_file(dataset))])
    assert code == 1


def test_missing_label_file_means_empty(dataset):
    os.remove(dataset / "scans" / "000000.label")
    cfg = AugmentationConfig.load(_config_file(dataset, n=0))
    augment_dataset(dataset / "scans", dataset / "out", cfg)
    out = scan_io.read_labels(dataset / "out" / "000000.label")
    assert (out == 0).all()


def test_cli_augment_n_zero_copies_inputs(dataset):
    code = cli.main(["augment", "--scans", str(dataset / "scans"), "--out", str(dataset / "o"),
                     "--config", str(_config_file(dataset, n=0))])
    assert code == 0
    for name in ("000000.bin", "000000.label", "000002.bin"):
        assert (dataset / "o" / name).read_bytes() == (dataset / "scans" / name).read_bytes()


def test_cli_single_scan(dataset, capsys):
    code = cli.main(["augment", "--scan", str(dataset / "scans" / "000001.bin"),
                     "--out", str(dataset / "single"), "--config", str(_config_file(dataset))])
    assert code == 0
    assert json.loads(capsys.readouterr().out)["requested"] == 5
    assert (dataset / "single" / "000001.label").exists()


def test_cli_usage_errors(dataset, capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["augment", "--frobnicate"])
    assert e.value.code == 2
    bad = dataset / "bad.yaml"
    bad.write_text("n: -3\n")
    with pytest.raises(SystemExit) as e:
        cli.main(["augment", "--scans", str(dataset / "scans"), "--out", str(dataset / "x"),
                  "--config", str(bad)])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        cli.main(["gen-prompts", "--class", "tram"])
    assert e.value.code == 2


def test_cli_runtime_error_exit_one(tmp_path):
    assert cli.main(["build-remission", "--scans", str(tmp_path), "--out",
                     str(tmp_path / "t.rmt")]) == 1


def test_cli_build_remission_and_ingest(dataset, mesh_dir, capsys):
    assert cli.main(["build-remission", "--scans", str(dataset / "scans"),
                     "--out", str(dataset / "t2.rmt"), "--bin-width", "2.0", "--seed", "3"]) == 0
    from lidaraug.remission import RemissionTable
    assert RemissionTable.load(dataset / "t2.rmt").bin_width == 2.0
    assert cli.main(["ingest-meshes", "--meshes", str(mesh_dir), "--out",
                     str(dataset / "m2.json"), "--up", "z", "--forward", "x"]) == 0
    out = capsys.readouterr().out
    for name in DEFAULT_CLASSES:
        assert f"{name}: 2" in out


def test_cli_gen_prompts(capsys):
    assert cli.main(["gen-prompts", "--class", "car", "--count", "3", "--seed", "7"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 3 and all(line.startswith("Generate a ") for line in lines)


def test_estimator(manifest, table, fixture_scans):
    est = InstanceAugmenter(manifest=manifest, remission_table=table, n=2, random_state=0)
    assert clone(est).get_params()["n"] == 2
    cloud = fixture_scans[0]
    X, y = est.fit_resample(cloud, _labels(cloud.shape[0]))
    assert X.shape[0] == y.shape[0]
    learned = InstanceAugmenter(manifest=manifest, n=1, random_state=0).fit([cloud])
    assert not learned.deps_.table.empty
    with pytest.raises(Exception):
        InstanceAugmenter(manifest=manifest).augment(cloud, _labels(cloud.shape[0]))
