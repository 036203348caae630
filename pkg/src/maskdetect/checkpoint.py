"""Binary model checkpoints.

Layout: the 4 magic bytes ``MPC1``, a little-endian u32 byte length, a JSON
header of exactly that length, then a packed little-endian float32 payload.
The header records both architecture configs, the build seed, and a
manifest of every parameter and running-statistics buffer (name, kind,
shape, byte offset into the payload, trainable flag for parameters).  The
manifest order is the model's own stable parameter order, and the JSON is
dumped with sorted keys, so saving the same model state twice produces
byte-identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .nn import BackboneConfig, HeadConfig, Model

MAGIC = b"MPC1"
FORMAT_VERSION = 1


def _entry_count(shape) -> int:
    n = 1
    for s in shape:
        n *= int(s)
    return n


def save_checkpoint(model: Model, path) -> None:
    """Write the model's full state (weights, buffers, configs) to ``path``."""
    entries = []
    blobs = []
    offset = 0
    for p in model.parameters():
        arr = np.ascontiguousarray(p.data, dtype="<f4")
        entries.append({
            "name": p.name,
            "kind": "param",
            "shape": list(arr.shape),
            "dtype": "f32",
            "offset": offset,
            "trainable": bool(p.trainable),
        })
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    for name, buf in model.buffers():
        arr = np.ascontiguousarray(buf, dtype="<f4")
        entries.append({
            "name": name,
            "kind": "buffer",
            "shape": list(arr.shape),
            "dtype": "f32",
            "offset": offset,
        })
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = {
        "format_version": FORMAT_VERSION,
        "backbone": model.backbone_config.to_dict(),
        "head": model.head_config.to_dict(),
        "seed": model.seed,
        "entries": entries,
    }
    encoded = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(encoded)))
        f.write(encoded)
        for blob in blobs:
            f.write(blob)


def _read(path) -> tuple[dict, bytes]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"{path}: cannot read checkpoint: {e}") from e
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic bytes)")
    (hlen,) = struct.unpack("<I", raw[4:8])
    if 8 + hlen > len(raw):
        raise CheckpointError(f"{path}: truncated header (wants {hlen} bytes)")
    try:
        header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: header is not valid JSON: {e}") from e
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version!r}")
    for key in ("backbone", "head", "seed", "entries"):
        if key not in header:
            raise CheckpointError(f"{path}: header is missing {key!r}")
    payload = raw[8 + hlen :]
    names = [e["name"] for e in header["entries"]]
    if len(names) != len(set(names)):
        raise CheckpointError(f"{path}: duplicate entry names in manifest")
    total = 0
    for e in header["entries"]:
        count = _entry_count(e["shape"])
        end = e["offset"] + 4 * count
        if e["offset"] < 0 or end > len(payload):
            raise CheckpointError(
                f"{path}: entry {e['name']!r} spans bytes {e['offset']}..{end}, "
                f"payload has {len(payload)}"
            )
        total = max(total, end)
    if total != len(payload):
        raise CheckpointError(
            f"{path}: payload is {len(payload)} bytes, manifest accounts for {total}"
        )
    return header, payload


def read_header(path) -> dict:
    """Parse and validate just the JSON header (architecture, manifest)."""
    header, _ = _read(path)
    return header


def _extract(entry: dict, payload: bytes, path) -> np.ndarray:
    count = _entry_count(entry["shape"])
    arr = np.frombuffer(payload, dtype="<f4", count=count, offset=entry["offset"])
    return arr.reshape(entry["shape"]).astype(np.float32)


def load_into(model: Model, path, prefix: str | None = None) -> None:
    """Copy checkpoint values into an existing model.

    Every parameter and buffer must match by name and shape in both
    directions; any mismatch names the offender and nothing is modified.
    The model's own trainable flags are kept (values move, freeze state
    does not).  With ``prefix`` (e.g. ``"backbone."``) only names under
    that prefix take part, on both sides — the way a pretrained feature
    extractor is adopted under a differently shaped head.
    """
    header, payload = _read(path)
    by_name = {e["name"]: e for e in header["entries"]}
    targets = [(p.name, "param", p.data) for p in model.parameters()]
    targets += [(name, "buffer", buf) for name, buf in model.buffers()]
    if prefix is not None:
        by_name = {n: e for n, e in by_name.items() if n.startswith(prefix)}
        targets = [t for t in targets if t[0].startswith(prefix)]
        if not targets:
            raise CheckpointError(f"{path}: model has no entries under prefix {prefix!r}")

    model_names = {name for name, _, _ in targets}
    extra = sorted(set(by_name) - model_names)
    missing = sorted(model_names - set(by_name))
    if extra or missing:
        raise CheckpointError(
            f"{path}: state does not line up with the model"
            + (f"; checkpoint-only entries: {extra[:3]}" if extra else "")
            + (f"; model-only entries: {missing[:3]}" if missing else "")
        )
    staged = []
    for name, kind, dest in targets:
        entry = by_name[name]
        if entry["kind"] != kind:
            raise CheckpointError(f"{path}: entry {name!r} is a {entry['kind']}, expected {kind}")
        if tuple(entry["shape"]) != dest.shape:
            raise CheckpointError(
                f"{path}: entry {name!r} has shape {tuple(entry['shape'])}, "
                f"model wants {dest.shape}"
            )
        staged.append((dest, _extract(entry, payload, path)))
    for dest, values in staged:
        dest[...] = values


def load_checkpoint(path) -> Model:
    """Rebuild the saved model: architecture, weights, buffers and the
    trainable flags it was saved with."""
    header, payload = _read(path)
    try:
        backbone = BackboneConfig.from_dict(header["backbone"])
        head = HeadConfig.from_dict(header["head"])
    except (TypeError, ValueError) as e:
        raise CheckpointError(f"{path}: bad architecture config: {e}") from e
    model = Model(backbone, head, seed=int(header["seed"]))
    load_into(model, path)
    flags = {e["name"]: e.get("trainable", True) for e in header["entries"]
             if e["kind"] == "param"}
    for p in model.parameters():
        p.trainable = bool(flags[p.name])
    return model
