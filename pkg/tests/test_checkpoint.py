"""Checkpoint format: roundtrips, byte determinism, and corruption handling."""

import json
import struct

import numpy as np
import pytest

from maskdetect import tensor as T
from maskdetect.checkpoint import load_checkpoint, load_into, read_header, save_checkpoint
from maskdetect.errors import CheckpointError
from maskdetect.nn import BackboneConfig, HeadConfig, build_model, desk_backbone
from maskdetect.rng import SplitMix64


def _model(seed=0, units=32, layers=1):
    cfg = BackboneConfig(input_size=32, width_mult=0.125, stem_strides=(2, 1, 2))
    return build_model(cfg, HeadConfig(hidden_units=units, hidden_layers=layers), seed=seed)


def _x(seed, m):
    size = m.backbone_config.input_size
    return T.Tensor(SplitMix64(seed).normal(shape=(2, 3, size, size)).astype(np.float32))


def test_roundtrip_restores_everything(tmp_path):
    m = _model(seed=9)
    # make buffers non-trivial before saving
    m.features(_x(1, m), "train")
    m.set_trainable("backbone.", False)
    path = tmp_path / "model.ckpt"
    save_checkpoint(m, path)

    loaded = load_checkpoint(path)
    assert loaded.backbone_config == m.backbone_config
    assert loaded.head_config == m.head_config
    assert loaded.seed == m.seed
    for p, q in zip(m.parameters(), loaded.parameters()):
        assert p.name == q.name
        assert np.array_equal(p.data, q.data)
        assert p.trainable == q.trainable
    for (n1, b1), (n2, b2) in zip(m.buffers(), loaded.buffers()):
        assert n1 == n2
        assert np.array_equal(b1, b2)
    x = _x(2, m)
    assert np.array_equal(m.forward(x, "eval").data, loaded.forward(x, "eval").data)


def test_saved_bytes_are_deterministic(tmp_path):
    m = _model(seed=4)
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(m, p1)
    save_checkpoint(m, p2)
    assert p1.read_bytes() == p2.read_bytes()
    # an independently built identical model writes the same bytes too
    save_checkpoint(_model(seed=4), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_header_layout(tmp_path):
    m = _model(seed=1)
    path = tmp_path / "model.ckpt"
    save_checkpoint(m, path)
    raw = path.read_bytes()
    assert raw[:4] == b"MPC1"
    (hlen,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8 : 8 + hlen])
    assert header["format_version"] == 1
    kinds = {e["kind"] for e in header["entries"]}
    assert kinds == {"param", "buffer"}
    n_params = sum(1 for e in header["entries"] if e["kind"] == "param")
    assert n_params == len(m.parameters())
    # payload is exactly the f32 values, little endian, at the stated offsets
    payload = raw[8 + hlen :]
    first = header["entries"][0]
    count = int(np.prod(first["shape"]))
    vals = np.frombuffer(payload, "<f4", count=count, offset=first["offset"])
    assert np.array_equal(vals.reshape(first["shape"]), m.parameters()[0].data)
    assert read_header(path)["seed"] == 1


def test_load_into_moves_values_not_flags(tmp_path):
    src = _model(seed=2)
    src.set_trainable("backbone.", False)
    path = tmp_path / "m.ckpt"
    save_checkpoint(src, path)
    dst = _model(seed=3)
    assert not np.array_equal(dst.parameters()[0].data, src.parameters()[0].data)
    load_into(dst, path)
    for p, q in zip(dst.parameters(), src.parameters()):
        assert np.array_equal(p.data, q.data)
        assert p.trainable  # dst flags untouched


def test_load_into_rejects_architecture_mismatch(tmp_path):
    src = _model(seed=2, units=32, layers=1)
    path = tmp_path / "m.ckpt"
    save_checkpoint(src, path)
    wider = _model(seed=2, units=64, layers=1)
    with pytest.raises(CheckpointError, match="head.fc1.weight"):
        load_into(wider, path)
    deeper = _model(seed=2, units=32, layers=2)
    with pytest.raises(CheckpointError, match="fc2"):
        load_into(deeper, path)
    # mismatch must leave the target untouched
    before = [p.data.copy() for p in wider.parameters()]
    try:
        load_into(wider, path)
    except CheckpointError:
        pass
    assert all(np.array_equal(a, p.data) for a, p in zip(before, wider.parameters()))


def test_corruption_detection(tmp_path):
    m = _model(seed=5)
    path = tmp_path / "m.ckpt"
    save_checkpoint(m, path)
    raw = path.read_bytes()

    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(bad)

    bad.write_bytes(raw[:6])
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)

    bad.write_bytes(raw[:-8])  # truncated payload
    with pytest.raises(CheckpointError, match="payload"):
        load_checkpoint(bad)

    (hlen,) = struct.unpack("<I", raw[4:8])
    garbled = raw[:8] + b"{" * hlen + raw[8 + hlen :]
    bad.write_bytes(garbled)
    with pytest.raises(CheckpointError, match="JSON"):
        load_checkpoint(bad)

    header = json.loads(raw[8 : 8 + hlen])
    header["format_version"] = 99
    enc = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    bad.write_bytes(raw[:4] + struct.pack("<I", len(enc)) + enc + raw[8 + hlen :])
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(bad)

    missing = tmp_path / "nope.ckpt"
    with pytest.raises(CheckpointError, match="cannot read"):
        load_checkpoint(missing)


def test_training_state_survives_roundtrip(tmp_path):
    # simulate a phase boundary: frozen backbone, adapted head, shifted stats
    m = _model(seed=6)
    m.set_trainable("backbone.", False)
    rng = SplitMix64(7)
    x = _x(8, m)
    t = np.zeros((2, 3), dtype=np.float32)
    t[0, 0] = t[1, 2] = 1.0
    for step in range(3):
        loss = T.softmax_cross_entropy(
            m.forward_logits(x, "train", rng.derive("dropout", step)), T.Tensor(t)
        )
        loss.backward()
        for p in m.parameters():
            if p.trainable:
                p.data[...] -= 0.05 * p.grad
        m.zero_grad()
    path = tmp_path / "trained.ckpt"
    save_checkpoint(m, path)
    back = load_checkpoint(path)
    assert [p.trainable for p in back.parameters()] == [p.trainable for p in m.parameters()]
    xq = _x(9, m)
    assert np.array_equal(m.forward(xq, "eval").data, back.forward(xq, "eval").data)
