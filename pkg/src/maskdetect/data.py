"""Dataset handling: directory scanning, stratified splitting, the PPM
codec, resizing/normalization, augmentation, batching, and a synthetic
corpus generator for desk-scale experiments.

Images are plain numpy ``uint8`` arrays of shape ``(H, W, 3)`` in row-major
RGB ("ImageU8" below).  Everything stochastic draws from an explicit
:class:`~maskdetect.rng.SplitMix64` generator, so a corpus scan, a split,
an augmented epoch, or a synthetic dataset is a pure function of its seed.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import ConfigError, InputError, ParameterError, PPMError, UsageError
from .rng import SplitMix64
from .tensor import Tensor

__all__ = [
    "Label",
    "LABEL_NAMES",
    "SPLIT_NAMES",
    "Sample",
    "DatasetIndex",
    "AugmentConfig",
    "LAYOUTS",
    "scan_dataset",
    "split_dataset",
    "save_split_manifest",
    "load_split_manifest",
    "apply_split_manifest",
    "load_ppm",
    "save_ppm",
    "resize_bilinear",
    "normalize",
    "rotate_image",
    "zoom_image",
    "color_shift_image",
    "translate_image",
    "augment",
    "batches",
    "synth_dataset",
]


class Label(IntEnum):
    """The three face states the classifier distinguishes."""

    WITH_MASK = 0
    WITHOUT_MASK = 1
    INCORRECT_MASK = 2


LABEL_NAMES = ("with_mask", "without_mask", "incorrect_mask")
SPLIT_NAMES = ("train", "val", "test")

# Directory-name -> label mappings for the supported corpus layouts.  The
# "native" layout is what synth_dataset writes; "mfn" and "smfd" are
# importer mappings for the two public mask corpora (MFN carries no bare
# faces, SMFD no incorrectly-worn ones).  A mapped directory is scanned
# recursively, so sub-folders (e.g. the per-style variants under IMFD)
# inherit the parent label.
LAYOUTS: dict[str, dict[str, Label]] = {
    "native": {
        "with_mask": Label.WITH_MASK,
        "without_mask": Label.WITHOUT_MASK,
        "incorrect_mask": Label.INCORRECT_MASK,
    },
    "mfn": {
        "CMFD": Label.WITH_MASK,
        "IMFD": Label.INCORRECT_MASK,
    },
    "smfd": {
        "masked": Label.WITH_MASK,
        "unmasked": Label.WITHOUT_MASK,
    },
}


@dataclass
class Sample:
    """One image on disk with its label and (once split) its partition."""

    path: str
    label: Label
    split: str | None = None


@dataclass
class DatasetIndex:
    """An ordered list of samples plus the bookkeeping around it.

    ``seed`` and ``ratios`` are ``None`` until :func:`split_dataset` has
    assigned partitions.  ``warnings`` collects non-fatal scan findings
    (unknown subdirectories, empty classes).  ``source_counts`` holds the
    per-root, per-class tally from scanning.
    """

    samples: list[Sample] = field(default_factory=list)
    seed: int | None = None
    ratios: tuple[float, float, float] | None = None
    warnings: list[str] = field(default_factory=list)
    source_counts: dict[str, dict[str, int]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.samples)

    def samples_for(self, split: str | None) -> list[Sample]:
        """Samples in one partition (``None`` -> every sample)."""
        if split is None:
            return list(self.samples)
        return [s for s in self.samples if s.split == split]

    def class_counts(self, split: str | None = None) -> dict[str, int]:
        counts = {name: 0 for name in LABEL_NAMES}
        for s in self.samples_for(split):
            counts[LABEL_NAMES[s.label]] += 1
        return counts

    def split_counts(self) -> dict[str, dict[str, int]]:
        """Per-split class counts, e.g. ``{"train": {"with_mask": 8, ...}}``."""
        return {name: self.class_counts(name) for name in SPLIT_NAMES}


# ---------------------------------------------------------------------------
# scanning and splitting
# ---------------------------------------------------------------------------


def _collect_ppm(directory: str) -> list[str]:
    """All .ppm files under ``directory`` (recursive, sorted for determinism)."""
    found = []
    for dirpath, dirnames, filenames in os.walk(directory):
        dirnames.sort()
        for name in sorted(filenames):
            if name.lower().endswith(".ppm"):
                found.append(os.path.join(dirpath, name))
    return found


def scan_dataset(roots, layout="native") -> DatasetIndex:
    """Build an (unsplit) index from one or more corpus roots.

    ``layout`` is either a name from :data:`LAYOUTS` or an explicit
    ``{subdirectory_name: Label}`` mapping.  Unknown subdirectories under a
    root are reported in ``index.warnings`` rather than raising, so a stray
    folder cannot abort a scan.
    """
    if isinstance(roots, (str, os.PathLike)):
        roots = [roots]
    if isinstance(layout, str):
        try:
            layout_map = LAYOUTS[layout]
        except KeyError:
            raise ConfigError(
                f"unknown layout '{layout}'; expected one of {sorted(LAYOUTS)}"
            ) from None
    else:
        layout_map = dict(layout)
        for name, label in layout_map.items():
            if not isinstance(label, Label):
                raise ConfigError(f"layout entry '{name}' must map to a Label")

    index = DatasetIndex()
    for root in roots:
        root = os.fspath(root)
        if not os.path.isdir(root):
            raise InputError(f"dataset root is not a directory: {root}")
        per_class = {name: 0 for name in LABEL_NAMES}
        for entry in sorted(os.listdir(root)):
            full = os.path.join(root, entry)
            if not os.path.isdir(full):
                continue
            if entry not in layout_map:
                index.warnings.append(
                    f"{root}: unknown subdirectory '{entry}' ignored"
                )
                continue
            label = layout_map[entry]
            for path in _collect_ppm(full):
                index.samples.append(Sample(path=path, label=label))
                per_class[LABEL_NAMES[label]] += 1
        index.source_counts[root] = per_class
    return index


def split_dataset(
    index: DatasetIndex,
    ratios: tuple[float, float, float] = (0.70, 0.15, 0.15),
    seed: int = 0,
) -> DatasetIndex:
    """Assign train/val/test partitions, stratified per class.

    Within each class the samples are shuffled by a generator derived from
    ``seed`` and the class name; counts are the floor of each ratio with the
    remainder going to train.  The returned index lists samples in the same
    order as the input, only with ``split`` filled in.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ConfigError(f"ratios must be three non-negative numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"ratios must sum to 1, got {ratios} (sum {sum(ratios)})")

    out = DatasetIndex(
        samples=[Sample(s.path, s.label) for s in index.samples],
        seed=seed,
        ratios=ratios,
        warnings=list(index.warnings),
        source_counts={k: dict(v) for k, v in index.source_counts.items()},
    )
    root_rng = SplitMix64(seed)
    for label in Label:
        positions = [i for i, s in enumerate(out.samples) if s.label == label]
        if not positions:
            out.warnings.append(f"class '{LABEL_NAMES[label]}' has no samples")
            continue
        rng = root_rng.derive("split", LABEL_NAMES[label])
        rng.shuffle(positions)
        n = len(positions)
        n_train = math.floor(n * ratios[0])
        n_val = math.floor(n * ratios[1])
        n_test = math.floor(n * ratios[2])
        n_train += n - (n_train + n_val + n_test)  # remainder goes to train
        for k, pos in enumerate(positions):
            if k < n_train:
                out.samples[pos].split = "train"
            elif k < n_train + n_val:
                out.samples[pos].split = "val"
            else:
                out.samples[pos].split = "test"
    return out


def save_split_manifest(index: DatasetIndex, path: str) -> None:
    """Persist a split assignment as JSON {seed, ratios, splits}."""
    if index.ratios is None:
        raise UsageError("cannot save a manifest for an unsplit index")
    manifest = {
        "seed": index.seed,
        "ratios": list(index.ratios),
        "splits": {s.path: s.split for s in index.samples},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_split_manifest(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    for key in ("seed", "ratios", "splits"):
        if key not in manifest:
            raise ConfigError(f"split manifest missing key '{key}': {path}")
    return manifest


def apply_split_manifest(index: DatasetIndex, manifest) -> DatasetIndex:
    """Re-apply a saved split to a freshly scanned index.

    ``manifest`` may be a path or an already-loaded dict.  Every sample in
    the index must be present in the manifest.
    """
    if isinstance(manifest, (str, os.PathLike)):
        manifest = load_split_manifest(os.fspath(manifest))
    splits = manifest["splits"]
    out = DatasetIndex(
        samples=[Sample(s.path, s.label) for s in index.samples],
        seed=manifest["seed"],
        ratios=tuple(manifest["ratios"]),
        warnings=list(index.warnings),
        source_counts={k: dict(v) for k, v in index.source_counts.items()},
    )
    for s in out.samples:
        if s.path not in splits:
            raise InputError(f"sample not in split manifest: {s.path}")
        assigned = splits[s.path]
        if assigned not in SPLIT_NAMES:
            raise ConfigError(f"manifest assigns invalid split '{assigned}' to {s.path}")
        s.split = assigned
    return out


# ---------------------------------------------------------------------------
# PPM codec (binary P6, maxval 255)
# ---------------------------------------------------------------------------


def _check_image(image, name="image") -> np.ndarray:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise InputError(f"{name} must have shape (H, W, 3), got {image.shape}")
    if image.dtype != np.uint8:
        raise InputError(f"{name} must be uint8, got {image.dtype}")
    return image


def _next_token(buf: bytes, pos: int, path: str) -> tuple[bytes, int, int]:
    """Next header token after ``pos``, skipping whitespace and # comments.

    Returns (token, token_start_offset, offset_after_token).
    """
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c in b" \t\r\n\x0b\x0c":
            pos += 1
        elif c == b"#":
            while pos < n and buf[pos : pos + 1] not in b"\r\n":
                pos += 1
        else:
            break
    if pos >= n:
        raise PPMError(f"{path}: header ended early at byte {n}")
    start = pos
    while pos < n and buf[pos : pos + 1] not in b" \t\r\n\x0b\x0c":
        pos += 1
    return buf[start:pos], start, pos


def _int_token(buf: bytes, pos: int, what: str, path: str) -> tuple[int, int]:
    token, start, end = _next_token(buf, pos, path)
    if not token.isdigit():
        raise PPMError(f"{path}: expected {what} at byte {start}, got {token!r}")
    return int(token), end


def load_ppm(path: str) -> np.ndarray:
    """Decode a binary P6 portable pixmap into an (H, W, 3) uint8 array."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:2] != b"P6":
        raise PPMError(f"{path}: expected magic 'P6' at byte 0, got {buf[:2]!r}")
    width, pos = _int_token(buf, 2, "width", path)
    height, pos = _int_token(buf, pos, "height", path)
    maxval_tok, maxval_start, pos = _next_token(buf, pos, path)
    if not maxval_tok.isdigit():
        raise PPMError(f"{path}: expected maxval at byte {maxval_start}, got {maxval_tok!r}")
    if int(maxval_tok) != 255:
        raise PPMError(
            f"{path}: maxval must be 255, got {int(maxval_tok)} at byte {maxval_start}"
        )
    if width < 1 or height < 1:
        raise PPMError(f"{path}: invalid dimensions {width}x{height}")
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(buf) or buf[pos : pos + 1] not in b" \t\r\n":
        raise PPMError(f"{path}: expected whitespace before raster at byte {pos}")
    pos += 1
    need = width * height * 3
    raster = buf[pos : pos + need]
    if len(raster) < need:
        raise PPMError(
            f"{path}: raster truncated at byte {len(buf)} "
            f"(expected {need} bytes from byte {pos}, found {len(raster)})"
        )
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3).copy()


def save_ppm(image, path: str) -> None:
    """Write an (H, W, 3) uint8 array as a binary P6 file (bit-exact codec)."""
    image = _check_image(image)
    h, w = image.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(image).tobytes())


# ---------------------------------------------------------------------------
# resize / normalize
# ---------------------------------------------------------------------------


def _axis_coords(out_size: int, in_size: int):
    """Half-pixel-center source coordinates, edge-clamped; returns the two
    neighbor index arrays and the fractional weight of the second one."""
    scale = in_size / out_size
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, in_size - 1.0)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, in_size - 1)
    return i0, i1, src - i0


def resize_bilinear(image, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resize with half-pixel-center mapping src=(dst+0.5)*scale-0.5.

    Channels are interpolated independently; results are rounded half-up to
    8 bits.  Resizing to the input size reproduces the input exactly.
    """
    image = _check_image(image)
    if out_w < 1 or out_h < 1:
        raise ParameterError(f"output size must be >= 1, got {out_w}x{out_h}")
    in_h, in_w = image.shape[:2]
    y0, y1, wy = _axis_coords(out_h, in_h)
    x0, x1, wx = _axis_coords(out_w, in_w)
    img = image.astype(np.float64)
    top = img[y0][:, x0] * (1.0 - wx)[None, :, None] + img[y0][:, x1] * wx[None, :, None]
    bot = img[y1][:, x0] * (1.0 - wx)[None, :, None] + img[y1][:, x1] * wx[None, :, None]
    out = top * (1.0 - wy)[:, None, None] + bot * wy[:, None, None]
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def normalize(image) -> Tensor:
    """Map uint8 RGB to a float32 tensor in [-1, 1], channel-first [3, H, W]."""
    image = _check_image(image)
    chw = np.transpose(image, (2, 0, 1)).astype(np.float32)
    return Tensor(chw / np.float32(127.5) - np.float32(1.0))


# ---------------------------------------------------------------------------
# augmentation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AugmentConfig:
    """Magnitudes for the four training-time transforms.

    A zero magnitude (or a (1, 1) zoom range) disables that transform, so
    the all-zero config is the identity.
    """

    rotation_max_deg: float = 15.0
    zoom_range: tuple[float, float] = (0.9, 1.1)
    color_shift_max: float = 20.0
    translate_max_fraction: float = 0.10

    def __post_init__(self):
        if not 0.0 <= self.rotation_max_deg <= 45.0:
            raise ConfigError(
                f"rotation_max_deg must be in [0, 45], got {self.rotation_max_deg}"
            )
        lo, hi = self.zoom_range
        if not (0.5 <= lo <= hi <= 1.5):
            raise ConfigError(
                f"zoom_range must be ordered and within [0.5, 1.5], got {self.zoom_range}"
            )
        if self.color_shift_max < 0.0:
            raise ConfigError(
                f"color_shift_max must be >= 0, got {self.color_shift_max}"
            )
        if not 0.0 <= self.translate_max_fraction <= 0.3:
            raise ConfigError(
                "translate_max_fraction must be in [0, 0.3], "
                f"got {self.translate_max_fraction}"
            )

    @classmethod
    def identity(cls) -> "AugmentConfig":
        return cls(0.0, (1.0, 1.0), 0.0, 0.0)

    def to_dict(self) -> dict:
        return {
            "rotation_max_deg": self.rotation_max_deg,
            "zoom_range": list(self.zoom_range),
            "color_shift_max": self.color_shift_max,
            "translate_max_fraction": self.translate_max_fraction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentConfig":
        known = {
            "rotation_max_deg",
            "zoom_range",
            "color_shift_max",
            "translate_max_fraction",
        }
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown augment config keys: {sorted(unknown)}")
        kwargs = dict(d)
        if "zoom_range" in kwargs:
            kwargs["zoom_range"] = tuple(kwargs["zoom_range"])
        return cls(**kwargs)


def rotate_image(image, angle_deg: float) -> np.ndarray:
    """Rotate about the image center (bilinear, zero fill outside)."""
    image = _check_image(image)
    if angle_deg == 0.0:
        return image.copy()
    h, w = image.shape[:2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rad = math.radians(angle_deg)
    cos_a, sin_a = math.cos(rad), math.sin(rad)
    yy, xx = np.meshgrid(
        np.arange(h, dtype=np.float64) - cy,
        np.arange(w, dtype=np.float64) - cx,
        indexing="ij",
    )
    # inverse mapping: where does each output pixel come from
    sx = cx + cos_a * xx + sin_a * yy
    sy = cy - sin_a * xx + cos_a * yy
    return _sample_bilinear_zero(image, sy, sx)


def _sample_bilinear_zero(image: np.ndarray, sy: np.ndarray, sx: np.ndarray) -> np.ndarray:
    """Bilinear sample at float coords; anything outside the image reads 0.

    Implemented by sampling a one-pixel zero border, so partially outside
    coordinates blend toward zero instead of clamping to the edge.
    """
    h, w = image.shape[:2]
    padded = np.zeros((h + 2, w + 2, 3), dtype=np.float64)
    padded[1:-1, 1:-1] = image
    inside = (sy > -1.0) & (sy < h) & (sx > -1.0) & (sx < w)
    py = np.clip(sy + 1.0, 0.0, h)  # padded coords; neighbors stay in range
    px = np.clip(sx + 1.0, 0.0, w)
    y0 = np.floor(py).astype(np.int64)
    x0 = np.floor(px).astype(np.int64)
    wy = (py - y0)[..., None]
    wx = (px - x0)[..., None]
    p00 = padded[y0, x0]
    p01 = padded[y0, x0 + 1]
    p10 = padded[y0 + 1, x0]
    p11 = padded[y0 + 1, x0 + 1]
    out = (1 - wy) * ((1 - wx) * p00 + wx * p01) + wy * ((1 - wx) * p10 + wx * p11)
    out[~inside] = 0.0
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


def zoom_image(image, factor: float) -> np.ndarray:
    """Zoom by ``factor``: center-crop (>1) or zero-pad (<1), then resize back."""
    image = _check_image(image)
    if factor <= 0.0:
        raise ParameterError(f"zoom factor must be positive, got {factor}")
    if factor == 1.0:
        return image.copy()
    h, w = image.shape[:2]
    th = max(1, int(round(h / factor)))
    tw = max(1, int(round(w / factor)))
    if th <= h and tw <= w:
        oy, ox = (h - th) // 2, (w - tw) // 2
        region = image[oy : oy + th, ox : ox + tw]
    else:
        region = np.zeros((th, tw, 3), dtype=np.uint8)
        oy, ox = (th - h) // 2, (tw - w) // 2
        region[oy : oy + h, ox : ox + w] = image
    return resize_bilinear(region, w, h)


def color_shift_image(image, offsets) -> np.ndarray:
    """Add a per-channel offset, rounding half-up and clamping to [0, 255]."""
    image = _check_image(image)
    offsets = np.asarray(offsets, dtype=np.float64).reshape(3)
    shifted = image.astype(np.float64) + offsets[None, None, :]
    return np.clip(np.floor(shifted + 0.5), 0, 255).astype(np.uint8)


def translate_image(image, shift_y: int, shift_x: int) -> np.ndarray:
    """Shift by whole pixels with zero fill."""
    image = _check_image(image)
    h, w = image.shape[:2]
    shift_y, shift_x = int(shift_y), int(shift_x)
    out = np.zeros_like(image)
    if abs(shift_y) >= h or abs(shift_x) >= w:
        return out
    src_y = slice(max(0, -shift_y), min(h, h - shift_y))
    dst_y = slice(max(0, shift_y), min(h, h + shift_y))
    src_x = slice(max(0, -shift_x), min(w, w - shift_x))
    dst_x = slice(max(0, shift_x), min(w, w + shift_x))
    out[dst_y, dst_x] = image[src_y, src_x]
    return out


def augment(image, config: AugmentConfig, rng: SplitMix64) -> np.ndarray:
    """Apply the four transforms in fixed order rotate -> zoom -> color ->
    translate, drawing each parameter uniformly from its configured range.

    Disabled transforms draw nothing, so a config stays reproducible no
    matter which magnitudes are zero.
    """
    image = _check_image(image)
    if rng is None:
        raise UsageError("augment requires a random generator")
    out = image
    if config.rotation_max_deg > 0.0:
        angle = rng.uniform(-config.rotation_max_deg, config.rotation_max_deg)
        out = rotate_image(out, angle)
    lo, hi = config.zoom_range
    if (lo, hi) != (1.0, 1.0):
        out = zoom_image(out, rng.uniform(lo, hi))
    if config.color_shift_max > 0.0:
        offsets = rng.uniform(-config.color_shift_max, config.color_shift_max, shape=3)
        out = color_shift_image(out, offsets)
    if config.translate_max_fraction > 0.0:
        f = config.translate_max_fraction
        dy = int(round(rng.uniform(-f, f) * image.shape[0]))
        dx = int(round(rng.uniform(-f, f) * image.shape[1]))
        out = translate_image(out, dy, dx)
    return out.copy() if out is image else out


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------


def batches(
    index: DatasetIndex,
    split: str,
    batch_size: int,
    shuffle: bool,
    augment_config: AugmentConfig | None = None,
    rng: SplitMix64 | None = None,
    *,
    image_size: int,
    epoch: int = 0,
):
    """Stream (images, one-hot targets) batch pairs over one epoch.

    Every sample of ``split`` appears exactly once per epoch; the final
    partial batch is emitted.  Images are loaded, resized to
    ``image_size`` if needed, optionally augmented (training split only),
    and normalized; targets are [N, 3] one-hot rows.

    Shuffling and per-sample augmentation randomness are derived from
    ``rng`` together with ``epoch`` and the sample path, so an epoch's
    batches depend only on (seed, epoch) regardless of consumption order.
    """
    if split not in SPLIT_NAMES:
        raise ParameterError(f"split must be one of {SPLIT_NAMES}, got '{split}'")
    if batch_size < 1:
        raise ParameterError(f"batch_size must be >= 1, got {batch_size}")
    if image_size < 1:
        raise ParameterError(f"image_size must be >= 1, got {image_size}")
    if augment_config is not None and split != "train":
        raise UsageError(f"augmentation is train-only, requested on '{split}'")
    if (shuffle or augment_config is not None) and rng is None:
        raise UsageError("shuffle/augmentation require a random generator")
    samples = index.samples_for(split)
    return _batch_stream(
        samples, batch_size, shuffle, augment_config, rng, image_size, epoch
    )


def _batch_stream(samples, batch_size, shuffle, augment_config, rng, image_size, epoch):
    order = list(range(len(samples)))
    if shuffle:
        rng.derive("order", epoch).shuffle(order)
    for start in range(0, len(order), batch_size):
        chunk = [samples[i] for i in order[start : start + batch_size]]
        xs = np.empty((len(chunk), 3, image_size, image_size), dtype=np.float32)
        ys = np.zeros((len(chunk), 3), dtype=np.float32)
        for row, sample in enumerate(chunk):
            image = load_ppm(sample.path)
            if image.shape[:2] != (image_size, image_size):
                image = resize_bilinear(image, image_size, image_size)
            if augment_config is not None:
                sample_rng = rng.derive("augment", epoch, sample.path)
                image = augment(image, augment_config, sample_rng)
            xs[row] = normalize(image).data
            ys[row, int(sample.label)] = 1.0
        yield Tensor(xs), Tensor(ys)


# ---------------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------------

# fraction of the face-disc height the band covers, measured downward from
# the disc center: a full lower-half band, no band, or the lower half of
# the lower half (a band at half height)
_BAND_SPANS = {
    Label.WITH_MASK: (0.0, 1.0),
    Label.WITHOUT_MASK: None,
    Label.INCORRECT_MASK: (0.5, 1.0),
}


def _synth_image(size: int, label: Label, rng: SplitMix64) -> np.ndarray:
    """One procedural face: a skin-tone disc with eyes on a dark background,
    plus a bright band over (part of) the lower half depending on the label."""
    s = float(size)
    canvas = np.empty((size, size, 3), dtype=np.float64)
    canvas[:] = rng.uniform(10.0, 60.0, shape=3)[None, None, :]

    cy = s / 2.0 + rng.uniform(-0.02, 0.02) * s
    cx = s / 2.0 + rng.uniform(-0.02, 0.02) * s
    radius = s * rng.uniform(0.32, 0.38)
    yy, xx = np.meshgrid(np.arange(size, dtype=np.float64),
                         np.arange(size, dtype=np.float64), indexing="ij")
    disc = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2

    face = np.array([
        rng.uniform(185.0, 215.0),
        rng.uniform(140.0, 170.0),
        rng.uniform(105.0, 135.0),
    ])
    canvas[disc] = face[None, :]

    eye_r = radius * 0.14
    eye_dy, eye_dx = -0.35 * radius, 0.42 * radius
    eye_color = rng.uniform(25.0, 55.0)
    for side in (-1.0, 1.0):
        eye = (yy - (cy + eye_dy)) ** 2 + (xx - (cx + side * eye_dx)) ** 2 <= eye_r**2
        canvas[eye & disc] = eye_color

    span = _BAND_SPANS[label]
    if span is not None:
        band_color = np.array([
            rng.uniform(150.0, 190.0),
            rng.uniform(175.0, 215.0),
            rng.uniform(205.0, 240.0),
        ])
        top = cy + span[0] * radius
        bottom = cy + span[1] * radius
        band = disc & (yy >= top) & (yy <= bottom)
        canvas[band] = band_color[None, :]

    canvas += rng.uniform(-6.0, 6.0, shape=(size, size, 3))
    return np.clip(np.floor(canvas + 0.5), 0, 255).astype(np.uint8)


def synth_dataset(n_per_class: int, image_size: int, seed: int, out_dir) -> DatasetIndex:
    """Write a three-class synthetic corpus in the native layout and return
    its (unsplit) index.  The corpus is a pure function of the arguments:
    the same seed always produces bit-identical files."""
    if n_per_class < 1:
        raise ParameterError(f"n_per_class must be >= 1, got {n_per_class}")
    if image_size < 16:
        raise ParameterError(f"image_size must be >= 16, got {image_size}")
    out_dir = os.fspath(out_dir)
    root_rng = SplitMix64(seed)
    for label in Label:
        class_name = LABEL_NAMES[label]
        class_dir = os.path.join(out_dir, class_name)
        os.makedirs(class_dir, exist_ok=True)
        for i in range(n_per_class):
            rng = root_rng.derive("synth", class_name, i)
            image = _synth_image(image_size, label, rng)
            save_ppm(image, os.path.join(class_dir, f"{class_name}_{i:05d}.ppm"))
    return scan_dataset(out_dir)
