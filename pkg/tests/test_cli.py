"""End-to-end tests for the command-line interface.

Every test drives ``main()`` in process and checks exit codes, stderr
routing, and the files each command leaves behind.  Runs use a tiny
32-pixel model so the whole module stays fast.
"""

import json
import os

import numpy as np
import pytest

from maskdetect.checkpoint import load_checkpoint
from maskdetect.cascade import DetectionBox, load_cascade_xml, save_cascade_json
from maskdetect.cli import (
    CLASS_COLORS,
    classify_crop,
    config_leaves,
    default_config,
    draw_rectangle,
    main,
)
from maskdetect.data import LABEL_NAMES, load_ppm, save_ppm, synth_dataset
from maskdetect.errors import InputError
from maskdetect.nn import BackboneConfig, HeadConfig, build_model

FIXTURE_XML = os.path.join(os.path.dirname(__file__), "fixtures", "face_cascade.xml")

TINY_CONFIG = {
    "backbone": {
        "input_size": 32,
        "width_mult": 0.25,
        "num_blocks": 2,
        "factorized_blocks": [2],
        "stem_channels": [8, 8, 16],
        "stem_strides": [2, 1, 2],
    },
    "head": {"hidden_units": 16, "hidden_layers": 1, "dropout_rate": 0.0},
    "train": {
        "epochs_phase1": 1,
        "epochs_phase2": 1,
        "unfreeze_last_k": 1,
        "batch_size": 8,
        "seed": 3,
        "augment": None,
    },
}


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    synth_dataset(8, 32, seed=1, out_dir=root)
    return root


@pytest.fixture(scope="module")
def tiny_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("config") / "tiny.json"
    path.write_text(json.dumps(TINY_CONFIG))
    return path


@pytest.fixture(scope="module")
def train_run(corpus, tiny_config, tmp_path_factory):
    """One shared training run; several tests only need its artifacts."""
    out = tmp_path_factory.mktemp("run")
    code = main(["train", "--data", str(corpus), "--out", str(out),
                 "--config", str(tiny_config)])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    """An image the fixture cascade fires on: bright top, dark bottom."""
    path = tmp_path_factory.mktemp("scene") / "scene.ppm"
    image = np.full((48, 64, 3), 128, np.uint8)
    image[10:22, 20:44] = 210
    image[22:34, 20:44] = 40
    save_ppm(image, path)
    return path


@pytest.fixture(scope="module")
def blank_scene(tmp_path_factory):
    path = tmp_path_factory.mktemp("scene") / "blank.ppm"
    save_ppm(np.full((48, 64, 3), 128, np.uint8), path)
    return path


# -- parser plumbing ------------------------------------------------------------------


def test_help_returns_zero():
    assert main(["--help"]) == 0


def test_missing_command_returns_two():
    assert main([]) == 2


def test_unknown_command_returns_two():
    assert main(["frobnicate"]) == 2


def test_unknown_flag_returns_two():
    assert main(["train", "--data", "x", "--out", "y", "--no-such-flag", "1"]) == 2


def test_every_scalar_leaf_has_a_flag():
    leaves = config_leaves(default_config())
    # spot-check the documented override plus one per section
    for dotted in ("train.epochs_phase1", "train.epochs_phase2",
                   "backbone.width_mult", "backbone.widths.b1x1",
                   "head.hidden_units", "data.split_seed",
                   "detect.scale_factor", "output.save_best"):
        assert dotted in leaves
    # list-valued leaves stay config-file only
    assert "data.ratios" not in leaves
    assert "backbone.stem_channels" not in leaves


# -- scan / synth ---------------------------------------------------------------------


def test_scan_writes_manifest(corpus, tmp_path, capsys):
    out = tmp_path / "manifest.json"
    assert main(["scan", str(corpus), "--out", str(out)]) == 0
    manifest = json.loads(out.read_text())
    assert manifest["total"] == 24
    assert manifest["counts"] == {name: 8 for name in LABEL_NAMES}
    assert len(manifest["samples"]) == 24
    assert manifest["layout"] == "native"
    assert "scanned 24 samples" in capsys.readouterr().out


def test_scan_missing_root_exits_two(tmp_path, capsys):
    code = main(["scan", str(tmp_path / "nope"), "--out", str(tmp_path / "m.json")])
    assert code == 2
    err = capsys.readouterr().err
    assert "error:" in err and "nope" in err


def test_scan_empty_root_zero_counts(tmp_path):
    root = tmp_path / "empty"
    root.mkdir()
    out = tmp_path / "m.json"
    assert main(["scan", str(root), "--out", str(out)]) == 0
    manifest = json.loads(out.read_text())
    assert manifest["total"] == 0
    assert all(v == 0 for v in manifest["counts"].values())


def test_scan_unknown_subdir_warns_on_stderr(tmp_path, capsys):
    root = tmp_path / "root"
    root.mkdir()
    (root / "with_mask").mkdir()
    (root / "stray_folder").mkdir()
    assert main(["scan", str(root), "--out", str(tmp_path / "m.json")]) == 0
    err = capsys.readouterr().err
    assert "stray_folder" in err


def test_synth_then_scan_roundtrip(tmp_path):
    out = tmp_path / "corpus"
    assert main(["synth", "--n", "3", "--size", "24", "--seed", "7",
                 "--out", str(out)]) == 0
    meta = json.loads((out / "synth_config.json").read_text())
    assert meta["n_per_class"] == 3 and meta["seed"] == 7
    manifest = tmp_path / "m.json"
    assert main(["scan", str(out), "--out", str(manifest)]) == 0
    assert json.loads(manifest.read_text())["total"] == 9


# -- config merge and overrides -------------------------------------------------------


def test_config_precedence_flags_beat_file(corpus, tiny_config, tmp_path):
    out = tmp_path / "run"
    code = main(["train", "--data", str(corpus), "--out", str(out),
                 "--config", str(tiny_config),
                 "--train.epochs_phase2", "0", "--train.batch_size", "4"])
    assert code == 0
    echo = json.loads((out / "config.json").read_text())
    assert echo["train"]["batch_size"] == 4          # flag beat file's 8
    assert echo["train"]["epochs_phase2"] == 0       # flag beat file's 1
    assert echo["train"]["epochs_phase1"] == 1       # file beat default 40
    assert echo["backbone"]["input_size"] == 32      # file beat default 75
    assert echo["head"]["num_classes"] == 3          # untouched default
    # the echoed config is itself a valid config file
    rerun = tmp_path / "rerun"
    code = main(["train", "--data", str(corpus), "--out", str(rerun),
                 "--config", str(out / "config.json")])
    assert code == 0


def test_unknown_config_keys_all_listed(corpus, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"train": {"epochz": 1}, "bogus": {"x": 2}}))
    code = main(["train", "--data", str(corpus), "--out", str(tmp_path / "r"),
                 "--config", str(bad)])
    assert code == 2
    err = capsys.readouterr().err
    assert "train.epochz" in err and "bogus" in err


def test_bad_flag_value_exits_two(corpus, tmp_path, capsys):
    code = main(["train", "--data", str(corpus), "--out", str(tmp_path / "r"),
                 "--train.batch_size", "not_a_number"])
    assert code == 2
    assert "train.batch_size" in capsys.readouterr().err


def test_invalid_config_json_exits_two(corpus, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    code = main(["train", "--data", str(corpus), "--out", str(tmp_path / "r"),
                 "--config", str(bad)])
    assert code == 2
    assert "invalid JSON" in capsys.readouterr().err


def test_flag_into_disabled_section_exits_two(corpus, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"train": {"augment": None}}))
    code = main(["train", "--data", str(corpus), "--out", str(tmp_path / "r"),
                 "--config", str(cfg),
                 "--train.augment.rotation_max_deg", "5"])
    assert code == 2
    assert "disabled" in capsys.readouterr().err


# -- train ----------------------------------------------------------------------------


def test_train_writes_all_artifacts(train_run):
    for name in ("config.json", "split.json", "logs.csv", "final.ckpt",
                 "best.ckpt", "metrics.json", "report.txt", "confusion.csv"):
        assert (train_run / name).exists(), name
    logs = (train_run / "logs.csv").read_text().strip().splitlines()
    assert len(logs) == 3  # header + 2 epochs
    metrics = json.loads((train_run / "metrics.json").read_text())
    assert metrics["split"] == "test"
    assert 0.0 <= metrics["accuracy"] <= 1.0
    assert "best_val_acc" in metrics and "best_epoch" in metrics
    report = (train_run / "report.txt").read_text()
    assert "Accuracy" in report and "Weighted_avg" in report
    confusion = (train_run / "confusion.csv").read_text().strip().splitlines()
    assert len(confusion) == 4  # header + 3 classes


def test_train_rerun_is_bit_identical(corpus, tiny_config, train_run, tmp_path):
    out = tmp_path / "again"
    assert main(["train", "--data", str(corpus), "--out", str(out),
                 "--config", str(tiny_config)]) == 0
    assert (out / "final.ckpt").read_bytes() == (train_run / "final.ckpt").read_bytes()
    assert (out / "best.ckpt").read_bytes() == (train_run / "best.ckpt").read_bytes()


def test_train_seed_changes_weights(corpus, tiny_config, train_run, tmp_path):
    out = tmp_path / "seeded"
    assert main(["train", "--data", str(corpus), "--out", str(out),
                 "--config", str(tiny_config), "--train.seed", "9"]) == 0
    assert (out / "final.ckpt").read_bytes() != (train_run / "final.ckpt").read_bytes()


def test_train_zero_epochs_is_evaluation_only(corpus, tiny_config, tmp_path):
    out = tmp_path / "zero"
    code = main(["train", "--data", str(corpus), "--out", str(out),
                 "--config", str(tiny_config),
                 "--train.epochs_phase1", "0", "--train.epochs_phase2", "0"])
    assert code == 0
    logs = (out / "logs.csv").read_text().strip().splitlines()
    assert len(logs) == 1  # header only, no epochs ran
    assert json.loads((out / "metrics.json").read_text())["accuracy"] >= 0.0

    # weights in the checkpoint are exactly the freshly initialised ones
    saved = load_checkpoint(out / "final.ckpt")
    fresh = build_model(
        BackboneConfig.from_dict(TINY_CONFIG["backbone"]),
        HeadConfig.from_dict(TINY_CONFIG["head"]),
        seed=TINY_CONFIG["train"]["seed"],
    )
    fresh_params = fresh.named_parameters()
    assert saved.named_parameters().keys() == fresh_params.keys()
    for name, param in saved.named_parameters().items():
        assert np.array_equal(param.data, fresh_params[name].data), name


def test_train_init_backbone(corpus, tiny_config, train_run, tmp_path):
    out = tmp_path / "adopted"
    code = main(["train", "--data", str(corpus), "--out", str(out),
                 "--config", str(tiny_config),
                 "--init-backbone", str(train_run / "final.ckpt"),
                 "--train.epochs_phase1", "0", "--train.epochs_phase2", "0"])
    assert code == 0
    adopted = load_checkpoint(out / "final.ckpt")
    donor_params = load_checkpoint(train_run / "final.ckpt").named_parameters()
    for name, param in adopted.named_parameters().items():
        if name.startswith("backbone."):
            assert np.array_equal(param.data, donor_params[name].data), name


def test_train_missing_data_dir_exits_two(tiny_config, tmp_path):
    code = main(["train", "--data", str(tmp_path / "nope"),
                 "--out", str(tmp_path / "r"), "--config", str(tiny_config)])
    assert code == 2


# -- evaluate -------------------------------------------------------------------------


def test_evaluate_reproduces_train_test_metrics(corpus, tiny_config, train_run, tmp_path):
    out = tmp_path / "eval"
    code = main(["evaluate", "--data", str(corpus),
                 "--checkpoint", str(train_run / "best.ckpt"),
                 "--out", str(out), "--split", "test",
                 "--split-manifest", str(train_run / "split.json"),
                 "--config", str(tiny_config)])
    assert code == 0
    evaluated = json.loads((out / "metrics.json").read_text())
    trained = json.loads((train_run / "metrics.json").read_text())
    assert evaluated["accuracy"] == trained["accuracy"]
    assert evaluated["classes"] == trained["classes"]
    assert (out / "report.txt").read_text() == (train_run / "report.txt").read_text()


def test_evaluate_unknown_split_exits_two(corpus, train_run, tmp_path, capsys):
    code = main(["evaluate", "--data", str(corpus),
                 "--checkpoint", str(train_run / "best.ckpt"),
                 "--out", str(tmp_path / "e"), "--split", "holdout"])
    assert code == 2
    assert "holdout" in capsys.readouterr().err


def test_evaluate_missing_checkpoint_fails(corpus, tmp_path):
    code = main(["evaluate", "--data", str(corpus),
                 "--checkpoint", str(tmp_path / "nope.ckpt"),
                 "--out", str(tmp_path / "e")])
    assert code in (1, 2)


# -- sweep ----------------------------------------------------------------------------


@pytest.fixture(scope="module")
def sweep_run(corpus, tiny_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    code = main(["sweep", "--data", str(corpus), "--out", str(out),
                 "--config", str(tiny_config),
                 "--train.epochs_phase1", "1", "--train.epochs_phase2", "0"])
    assert code == 0
    return out


def test_sweep_outputs(sweep_run):
    rows = (sweep_run / "sweep.csv").read_text().strip().splitlines()
    assert len(rows) == 8  # header + 7 head variants
    doc = json.loads((sweep_run / "sweep.json").read_text())
    assert len(doc["rows"]) == 7
    pairs = [(r["neurons"], r["hidden_layers"]) for r in doc["rows"]]
    assert pairs == [(32, 1), (32, 2), (64, 1), (64, 2), (128, 1), (128, 2), (128, 3)]
    best = doc["best"]
    assert (best["neurons"], best["hidden_layers"]) in pairs
    # best has the maximum validation accuracy
    assert best["val_acc"] == max(r["val_acc"] for r in doc["rows"])
    for neurons, layers in pairs:
        assert (sweep_run / "logs" / f"{neurons}x{layers}.csv").exists()


def test_sweep_marks_best_row(corpus, tiny_config, tmp_path, capsys):
    out = tmp_path / "sweep"
    code = main(["sweep", "--data", str(corpus), "--out", str(out),
                 "--config", str(tiny_config),
                 "--train.epochs_phase1", "1", "--train.epochs_phase2", "0"])
    assert code == 0
    stdout = capsys.readouterr().out
    starred = [line for line in stdout.splitlines() if line.endswith("*")]
    assert len(starred) == 1
    doc = json.loads((out / "sweep.json").read_text())
    assert f"{doc['best']['neurons']:4d} neurons" in starred[0]


# -- detect ---------------------------------------------------------------------------


def test_detect_writes_sorted_boxes(scene, tmp_path):
    out = tmp_path / "boxes.json"
    code = main(["detect", "--image", str(scene), "--cascade", FIXTURE_XML,
                 "--out", str(out)])
    assert code == 0
    doc = json.loads(out.read_text())
    assert len(doc["boxes"]) >= 1
    scores = [b["score"] for b in doc["boxes"]]
    assert scores == sorted(scores, reverse=True)
    box = doc["boxes"][0]
    assert set(box) == {"x", "y", "w", "h", "score"}
    assert doc["params"]["min_neighbors"] == 3


def test_detect_xml_and_json_cascades_agree(scene, tmp_path):
    json_cascade = tmp_path / "cascade.json"
    save_cascade_json(load_cascade_xml(FIXTURE_XML), json_cascade)
    out_a, out_b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["detect", "--image", str(scene), "--cascade", FIXTURE_XML,
                 "--out", str(out_a)]) == 0
    assert main(["detect", "--image", str(scene), "--cascade", str(json_cascade),
                 "--out", str(out_b)]) == 0
    assert json.loads(out_a.read_text())["boxes"] == json.loads(out_b.read_text())["boxes"]


def test_detect_no_faces_is_success(blank_scene, tmp_path):
    out = tmp_path / "boxes.json"
    assert main(["detect", "--image", str(blank_scene), "--cascade", FIXTURE_XML,
                 "--out", str(out)]) == 0
    assert json.loads(out.read_text())["boxes"] == []


def test_detect_malformed_cascade_reports_element_path(scene, tmp_path, capsys):
    bad = tmp_path / "bad.xml"
    bad.write_text("<opencv_storage><cascade></cascade></opencv_storage>")
    code = main(["detect", "--image", str(scene), "--cascade", str(bad),
                 "--out", str(tmp_path / "o.json")])
    assert code == 1
    assert "/opencv_storage/cascade" in capsys.readouterr().err


def test_detect_override_params(scene, tmp_path):
    out = tmp_path / "boxes.json"
    assert main(["detect", "--image", str(scene), "--cascade", FIXTURE_XML,
                 "--out", str(out), "--detect.min_neighbors", "1",
                 "--detect.step", "3"]) == 0
    doc = json.loads(out.read_text())
    assert doc["params"]["min_neighbors"] == 1
    assert doc["params"]["step"] == 3


# -- annotate -------------------------------------------------------------------------


def test_annotate_draws_classified_boxes(scene, train_run, tmp_path):
    out = tmp_path / "annotated.ppm"
    code = main(["annotate", "--image", str(scene), "--cascade", FIXTURE_XML,
                 "--checkpoint", str(train_run / "best.ckpt"), "--out", str(out)])
    assert code == 0
    doc = json.loads((tmp_path / "annotated.json").read_text())
    assert len(doc["faces"]) == 1  # the scene contains exactly one target
    face = doc["faces"][0]
    assert face["class"] in LABEL_NAMES
    assert 1.0 / 3.0 <= face["confidence"] <= 1.0

    original = load_ppm(scene)
    annotated = load_ppm(out)
    box = face["box"]
    x, y, w, h = box["x"], box["y"], box["w"], box["h"]
    color = np.array(CLASS_COLORS[LABEL_NAMES.index(face["class"])], np.uint8)
    # border bands take the class colour, and stay inside the box bounds
    assert np.all(annotated[y, x:x + w] == color)
    assert np.all(annotated[y + h - 1, x:x + w] == color)
    assert np.all(annotated[y:y + h, x] == color)
    assert np.all(annotated[y:y + h, x + w - 1] == color)
    changed = np.argwhere((annotated != original).any(axis=2))
    assert changed[:, 0].min() >= y and changed[:, 0].max() <= y + h - 1
    assert changed[:, 1].min() >= x and changed[:, 1].max() <= x + w - 1
    # interior beyond the 2-pixel band is untouched
    assert np.array_equal(annotated[y + 2:y + h - 2, x + 2:x + w - 2],
                          original[y + 2:y + h - 2, x + 2:x + w - 2])


def test_annotate_no_faces_copies_image(blank_scene, train_run, tmp_path):
    out = tmp_path / "annotated.ppm"
    json_out = tmp_path / "faces.json"
    code = main(["annotate", "--image", str(blank_scene), "--cascade", FIXTURE_XML,
                 "--checkpoint", str(train_run / "best.ckpt"),
                 "--out", str(out), "--json-out", str(json_out)])
    assert code == 0
    assert json.loads(json_out.read_text())["faces"] == []
    assert np.array_equal(load_ppm(out), load_ppm(blank_scene))


# -- drawing and classification helpers -----------------------------------------------


def test_draw_rectangle_stays_inside_box():
    image = np.zeros((20, 20, 3), np.uint8)
    draw_rectangle(image, 3, 2, 10, 8, (255, 0, 0))
    changed = np.argwhere((image != 0).any(axis=2))
    assert changed[:, 0].min() == 2 and changed[:, 0].max() == 9
    assert changed[:, 1].min() == 3 and changed[:, 1].max() == 12
    # interior untouched
    assert np.all(image[4:8, 5:11] == 0)


def test_draw_rectangle_clips_at_edges():
    image = np.zeros((10, 10, 3), np.uint8)
    draw_rectangle(image, -4, -4, 8, 8, (0, 255, 0))
    # the visible 4x4 quadrant is all border band; nothing painted beyond it
    assert np.all(image[0:4, 0:4] == (0, 255, 0))
    assert not image[4:, :].any() and not image[:, 4:].any()
    draw_rectangle(image, 8, 8, 20, 20, (0, 255, 0))
    assert np.all(image[8:, 8:] == (0, 255, 0))  # clipped corner


def test_draw_rectangle_fully_outside_is_noop():
    image = np.zeros((10, 10, 3), np.uint8)
    draw_rectangle(image, 50, 50, 5, 5, (255, 255, 255))
    assert not image.any()


def test_draw_rectangle_tiny_box_fills():
    image = np.zeros((10, 10, 3), np.uint8)
    draw_rectangle(image, 4, 4, 3, 3, (9, 9, 9))
    assert np.all(image[4:7, 4:7] == 9)


def test_classify_crop_rejects_outside_box(train_run):
    model = load_checkpoint(train_run / "best.ckpt")
    image = np.zeros((30, 30, 3), np.uint8)
    with pytest.raises(InputError):
        classify_crop(model, image, DetectionBox(40, 40, 10, 10, 1.0))


def test_classify_crop_returns_distribution(train_run):
    model = load_checkpoint(train_run / "best.ckpt")
    image = np.full((40, 40, 3), 90, np.uint8)
    klass, confidence = classify_crop(model, image, DetectionBox(5, 5, 24, 24, 1.0))
    assert klass in (0, 1, 2)
    assert 1.0 / 3.0 - 1e-9 <= confidence <= 1.0
