"""Classical face localization: Haar features over integral images,
evaluated by a staged cascade across a sliding-window scale pyramid.

Cascades are not trained here; they arrive through the legacy XML importer
(stump subset) or the native JSON format.  All integral-image arithmetic is
exact 64-bit integer math, so feature values carry no floating-point error
until the final variance normalization.
"""

from __future__ import annotations

import json
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .errors import CascadeFormatError, InputError, ParameterError

IOU_GROUPING_THRESHOLD = 0.3


# -- pixels and integral tables ---------------------------------------------------


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """RGB u8 [H,W,3] -> u8 luma, round(0.299 R + 0.587 G + 0.114 B)."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise InputError(f"expected [H,W,3] RGB image, got shape {image.shape}")
    r = image[:, :, 0].astype(np.float64)
    g = image[:, :, 1].astype(np.float64)
    b = image[:, :, 2].astype(np.float64)
    return np.floor(0.299 * r + 0.587 * g + 0.114 * b + 0.5).astype(np.uint8)


class IntegralImage:
    """Cumulative sum tables over a grayscale image.

    ``table[y][x]`` holds the exact integer sum of pixels in rows [0,y) and
    columns [0,x); ``squared_table`` does the same over squared pixels.
    Both carry a leading zero row and column, so lookups never branch.
    """

    __slots__ = ("width", "height", "table", "squared_table")

    def __init__(self, gray: np.ndarray):
        if gray.ndim != 2 or gray.size == 0:
            raise InputError(f"integral image needs a non-empty 2-D image, got {gray.shape}")
        px = gray.astype(np.int64)
        h, w = px.shape
        self.height, self.width = h, w
        self.table = np.zeros((h + 1, w + 1), dtype=np.int64)
        self.table[1:, 1:] = px.cumsum(axis=0).cumsum(axis=1)
        self.squared_table = np.zeros((h + 1, w + 1), dtype=np.int64)
        self.squared_table[1:, 1:] = (px * px).cumsum(axis=0).cumsum(axis=1)

    def rect_sum(self, x: int, y: int, w: int, h: int, squared: bool = False) -> int:
        if x < 0 or y < 0 or w < 1 or h < 1 or x + w > self.width or y + h > self.height:
            raise InputError(
                f"rect (x={x}, y={y}, w={w}, h={h}) outside {self.width}x{self.height} image"
            )
        t = self.squared_table if squared else self.table
        return int(t[y + h, x + w] - t[y, x + w] - t[y + h, x] + t[y, x])


def integral_image(gray: np.ndarray) -> IntegralImage:
    return IntegralImage(gray)


def rect_sum(ii: IntegralImage, rect) -> int:
    """Four-lookup sum of the pixels inside ``rect`` = (x, y, w, h)."""
    x, y, w, h = rect
    return ii.rect_sum(x, y, w, h)


# -- cascade structure ---------------------------------------------------------------


@dataclass(frozen=True)
class HaarRect:
    x: int
    y: int
    w: int
    h: int
    weight: float


@dataclass(frozen=True)
class HaarFeature:
    rects: tuple


@dataclass(frozen=True)
class WeakClassifier:
    feature: HaarFeature
    threshold: float
    left_value: float
    right_value: float


@dataclass(frozen=True)
class Stage:
    weak_classifiers: tuple
    stage_threshold: float


@dataclass(frozen=True)
class Cascade:
    base_width: int
    base_height: int
    stages: tuple

    def validate(self) -> None:
        if self.base_width < 1 or self.base_height < 1:
            raise CascadeFormatError(
                f"base window {self.base_width}x{self.base_height} must be positive"
            )
        for i, stage in enumerate(self.stages):
            for j, wc in enumerate(stage.weak_classifiers):
                rects = wc.feature.rects
                if not 2 <= len(rects) <= 3:
                    raise CascadeFormatError(
                        f"stages[{i}].weak_classifiers[{j}]: features use 2 or 3 "
                        f"rectangles, got {len(rects)}"
                    )
                for r in rects:
                    if r.w < 1 or r.h < 1 or r.x < 0 or r.y < 0 \
                            or r.x + r.w > self.base_width or r.y + r.h > self.base_height:
                        raise CascadeFormatError(
                            f"stages[{i}].weak_classifiers[{j}]: rect "
                            f"({r.x},{r.y},{r.w},{r.h}) outside the "
                            f"{self.base_width}x{self.base_height} base window"
                        )


class DetectionBox(NamedTuple):
    x: int
    y: int
    w: int
    h: int
    score: float


class WindowResult(NamedTuple):
    accept: bool
    score: float


@dataclass(frozen=True)
class DetectParams:
    scale_factor: float = 1.1
    step: int = 2
    min_size: int = 24
    min_neighbors: int = 3


# -- window evaluation ------------------------------------------------------------------


def _scale_rects(cascade: Cascade, scale: float) -> list:
    """Per-stage scaled rect geometry with area-renormalized weights.

    Each rect's corner and size round to integers; its weight is multiplied
    by (ideal scaled area) / (rounded area) so rounding does not tilt the
    balance between a feature's rectangles.
    """
    scaled = []
    for stage in cascade.stages:
        stage_rects = []
        for wc in stage.weak_classifiers:
            rects = []
            for r in wc.feature.rects:
                rx = int(round(r.x * scale))
                ry = int(round(r.y * scale))
                rw = max(1, int(round(r.w * scale)))
                rh = max(1, int(round(r.h * scale)))
                weight = r.weight * (r.w * r.h * scale * scale) / (rw * rh)
                rects.append((rx, ry, rw, rh, weight))
            stage_rects.append((tuple(rects), wc.threshold, wc.left_value, wc.right_value))
        scaled.append((tuple(stage_rects), stage.stage_threshold))
    return scaled


def _eval_scaled(ii: IntegralImage, scaled_stages: list, x: int, y: int,
                 win_w: int, win_h: int) -> WindowResult:
    area = win_w * win_h
    total = ii.rect_sum(x, y, win_w, win_h)
    total_sq = ii.rect_sum(x, y, win_w, win_h, squared=True)
    mean = total / area
    variance = total_sq / area - mean * mean
    std = math.sqrt(variance) if variance > 0 else 1.0
    norm = std * area

    margin = 0.0
    for stage_rects, stage_threshold in scaled_stages:
        stage_sum = 0.0
        for rects, threshold, left, right in stage_rects:
            value = 0.0
            for rx, ry, rw, rh, weight in rects:
                value += weight * ii.rect_sum(x + rx, y + ry, rw, rh)
            stage_sum += left if value / norm < threshold else right
        margin = stage_sum - stage_threshold
        if margin < 0:
            return WindowResult(False, margin)
    return WindowResult(True, margin)


def eval_window(ii: IntegralImage, cascade: Cascade, origin, scale: float) -> WindowResult:
    """Run the cascade on one window.

    The window top-left corner is ``origin``; its size is the base window
    scaled by ``scale`` and rounded.  Feature values are divided by the
    window's std (flat windows count as std 1) times its area before the
    stump comparison.  Evaluation stops at the first failing stage; an
    empty cascade accepts with score 0.  The score is the final evaluated
    stage's sum minus that stage's threshold.
    """
    if scale <= 0:
        raise ParameterError(f"scale must be positive, got {scale}")
    x, y = origin
    win_w = max(1, int(round(cascade.base_width * scale)))
    win_h = max(1, int(round(cascade.base_height * scale)))
    if x < 0 or y < 0 or x + win_w > ii.width or y + win_h > ii.height:
        raise InputError(
            f"window (x={x}, y={y}, w={win_w}, h={win_h}) outside "
            f"{ii.width}x{ii.height} image"
        )
    return _eval_scaled(ii, _scale_rects(cascade, scale), x, y, win_w, win_h)


# -- scanning and grouping -----------------------------------------------------------------


def iou(a, b) -> float:
    """Intersection-over-union of two (x, y, w, h) boxes."""
    ax, ay, aw, ah = a[:4]
    bx, by, bw, bh = b[:4]
    ix = max(0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def group_boxes(boxes: list, min_neighbors: int) -> list:
    """Greedy clustering of raw windows into detections.

    Boxes are taken in their deterministic scan order; each joins the
    first existing cluster it overlaps (IoU above 0.3) or starts a new
    one.  Clusters smaller than ``min_neighbors`` are dropped.  The
    cluster's box is the member mean (clamped so rounding cannot leave the
    members' span) and its score is the best member score.
    """
    clusters: list[list[DetectionBox]] = []
    for box in boxes:
        for cluster in clusters:
            if any(iou(box, member) > IOU_GROUPING_THRESHOLD for member in cluster):
                cluster.append(box)
                break
        else:
            clusters.append([box])
    grouped = []
    for cluster in clusters:
        if len(cluster) < max(1, min_neighbors):
            continue
        n = len(cluster)
        x = int(round(sum(b.x for b in cluster) / n))
        y = int(round(sum(b.y for b in cluster) / n))
        w = int(round(sum(b.w for b in cluster) / n))
        h = int(round(sum(b.h for b in cluster) / n))
        right = max(b.x + b.w for b in cluster)
        bottom = max(b.y + b.h for b in cluster)
        w = min(w, right - x)
        h = min(h, bottom - y)
        grouped.append(DetectionBox(x, y, w, h, max(b.score for b in cluster)))
    return grouped


def detect(gray: np.ndarray, cascade: Cascade, params: Optional[DetectParams] = None) -> list:
    """Scan a scale pyramid and return grouped detections.

    Scales start with windows ``min_size`` wide (never below the base
    window) and multiply by ``scale_factor`` until the window no longer
    fits.  The scan raster uses a constant ``step`` at every scale, so
    shifting image content by a multiple of ``step`` shifts detections
    identically.  Output is sorted by descending score.
    """
    params = params or DetectParams()
    if params.scale_factor <= 1.0:
        raise ParameterError(f"scale_factor must exceed 1, got {params.scale_factor}")
    if params.step < 1:
        raise ParameterError(f"step must be >= 1, got {params.step}")
    if params.min_size < 1:
        raise ParameterError(f"min_size must be >= 1, got {params.min_size}")
    if gray.ndim != 2:
        raise InputError(f"detect needs a 2-D grayscale image, got shape {gray.shape}")
    cascade.validate()

    ii = integral_image(gray)
    h, w = gray.shape
    raw = []
    scale = max(1.0, params.min_size / cascade.base_width)
    while True:
        win_w = max(1, int(round(cascade.base_width * scale)))
        win_h = max(1, int(round(cascade.base_height * scale)))
        if win_w > w or win_h > h:
            break
        scaled_stages = _scale_rects(cascade, scale)
        for y in range(0, h - win_h + 1, params.step):
            for x in range(0, w - win_w + 1, params.step):
                result = _eval_scaled(ii, scaled_stages, x, y, win_w, win_h)
                if result.accept:
                    raw.append(DetectionBox(x, y, win_w, win_h, result.score))
        scale *= params.scale_factor

    grouped = group_boxes(raw, params.min_neighbors)
    grouped.sort(key=lambda b: (-b.score, b.y, b.x, b.w, b.h))
    return grouped


# -- legacy XML import -----------------------------------------------------------------------


def _xml_text(elem, path: str) -> str:
    if elem is None or elem.text is None:
        raise CascadeFormatError(f"{path}: missing value")
    return elem.text.strip()


def _xml_float(elem, path: str) -> float:
    text = _xml_text(elem, path)
    try:
        return float(text)
    except ValueError as e:
        raise CascadeFormatError(f"{path}: {text!r} is not a number") from e


def load_cascade_xml(path) -> Cascade:
    """Import a stump-based cascade from the legacy XML schema.

    Only the stump subset is supported: one node per tree, no tilted
    features.  Anything deeper or tilted is rejected explicitly, with the
    element path of the offending node.
    """
    path = Path(path)
    try:
        root = ET.parse(path).getroot()
    except (OSError, ET.ParseError) as e:
        raise CascadeFormatError(f"{path}: cannot parse XML: {e}") from e
    if root.tag != "opencv_storage":
        raise CascadeFormatError(f"{path}: /: root element is {root.tag!r}, "
                                 "expected 'opencv_storage'")
    children = list(root)
    if len(children) != 1:
        raise CascadeFormatError(f"{path}: /opencv_storage: expected exactly one cascade "
                                 f"element, found {len(children)}")
    casc = children[0]
    base = f"/opencv_storage/{casc.tag}"

    size_text = _xml_text(casc.find("size"), f"{base}/size")
    parts = size_text.split()
    if len(parts) != 2 or not all(p.lstrip("-").isdigit() for p in parts):
        raise CascadeFormatError(f"{base}/size: expected 'width height', got {size_text!r}")
    base_w, base_h = int(parts[0]), int(parts[1])
    if base_w < 1 or base_h < 1:
        raise CascadeFormatError(f"{base}/size: window {base_w}x{base_h} must be positive")

    stages_elem = casc.find("stages")
    if stages_elem is None:
        raise CascadeFormatError(f"{base}/stages: missing")
    stages = []
    for i, stage_elem in enumerate(stages_elem.findall("_")):
        spath = f"{base}/stages/_[{i}]"
        trees = stage_elem.find("trees")
        if trees is None:
            raise CascadeFormatError(f"{spath}/trees: missing")
        weak = []
        for j, tree in enumerate(trees.findall("_")):
            tpath = f"{spath}/trees/_[{j}]"
            nodes = tree.findall("_")
            if len(nodes) != 1:
                raise CascadeFormatError(
                    f"{tpath}: tree has {len(nodes)} nodes; only depth-1 stumps are supported"
                )
            node = nodes[0]
            npath = f"{tpath}/_[0]"
            if node.find("left_node") is not None or node.find("right_node") is not None:
                raise CascadeFormatError(
                    f"{npath}: branch nodes are not supported, only stumps"
                )
            feature = node.find("feature")
            if feature is None:
                raise CascadeFormatError(f"{npath}/feature: missing")
            tilted = feature.find("tilted")
            if tilted is not None and _xml_text(tilted, f"{npath}/feature/tilted") not in ("0",):
                raise CascadeFormatError(
                    f"{npath}/feature/tilted: tilted features are not supported"
                )
            rects_elem = feature.find("rects")
            if rects_elem is None:
                raise CascadeFormatError(f"{npath}/feature/rects: missing")
            rects = []
            for k, rect_elem in enumerate(rects_elem.findall("_")):
                rpath = f"{npath}/feature/rects/_[{k}]"
                fields = _xml_text(rect_elem, rpath).split()
                if len(fields) != 5:
                    raise CascadeFormatError(
                        f"{rpath}: expected 'x y w h weight', got {rect_elem.text!r}"
                    )
                try:
                    x, y, rw, rh = (int(v) for v in fields[:4])
                    weight = float(fields[4])
                except ValueError as e:
                    raise CascadeFormatError(f"{rpath}: bad rect values {fields!r}") from e
                if x < 0 or y < 0 or rw < 1 or rh < 1 or x + rw > base_w or y + rh > base_h:
                    raise CascadeFormatError(
                        f"{rpath}: rect ({x},{y},{rw},{rh}) outside the "
                        f"{base_w}x{base_h} base window"
                    )
                rects.append(HaarRect(x, y, rw, rh, weight))
            if not 2 <= len(rects) <= 3:
                raise CascadeFormatError(
                    f"{npath}/feature/rects: {len(rects)} rects, expected 2 or 3"
                )
            weak.append(WeakClassifier(
                HaarFeature(tuple(rects)),
                _xml_float(node.find("threshold"), f"{npath}/threshold"),
                _xml_float(node.find("left_val"), f"{npath}/left_val"),
                _xml_float(node.find("right_val"), f"{npath}/right_val"),
            ))
        stages.append(Stage(tuple(weak),
                            _xml_float(stage_elem.find("stage_threshold"),
                                       f"{spath}/stage_threshold")))
    return Cascade(base_w, base_h, tuple(stages))


# -- native JSON format ------------------------------------------------------------------------


def save_cascade_json(cascade: Cascade, path) -> None:
    """Write the documented JSON schema (see ``load_cascade_json``)."""
    cascade.validate()
    doc = {
        "base_window": [cascade.base_width, cascade.base_height],
        "stages": [
            {
                "stage_threshold": stage.stage_threshold,
                "weak_classifiers": [
                    {
                        "feature": {
                            "rects": [
                                {"x": r.x, "y": r.y, "w": r.w, "h": r.h, "weight": r.weight}
                                for r in wc.feature.rects
                            ]
                        },
                        "threshold": wc.threshold,
                        "left_value": wc.left_value,
                        "right_value": wc.right_value,
                    }
                    for wc in stage.weak_classifiers
                ],
            }
            for stage in cascade.stages
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _want(obj, key, kind, pointer: str, file):
    if not isinstance(obj, dict) or key not in obj:
        raise CascadeFormatError(f"{file}: {pointer}/{key}: missing required field")
    value = obj[key]
    if kind == "number":
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise CascadeFormatError(f"{file}: {pointer}/{key}: expected a number")
    elif kind == "int":
        if not isinstance(value, int) or isinstance(value, bool):
            raise CascadeFormatError(f"{file}: {pointer}/{key}: expected an integer")
    elif kind == "list":
        if not isinstance(value, list):
            raise CascadeFormatError(f"{file}: {pointer}/{key}: expected a list")
    elif kind == "object":
        if not isinstance(value, dict):
            raise CascadeFormatError(f"{file}: {pointer}/{key}: expected an object")
    return value


def load_cascade_json(path) -> Cascade:
    """Load the native JSON cascade format.

    Schema: an object with "base_window": [w, h] and "stages": a list of
    {"stage_threshold": number, "weak_classifiers": [{"feature":
    {"rects": [{"x","y","w","h","weight"}, ...2 or 3]}, "threshold",
    "left_value", "right_value"}]}.  Violations are reported by JSON
    pointer.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise CascadeFormatError(f"{path}: cannot read: {e}") from e
    except json.JSONDecodeError as e:
        raise CascadeFormatError(f"{path}: not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise CascadeFormatError(f"{path}: /: expected a JSON object")

    window = _want(doc, "base_window", "list", "", path)
    if len(window) != 2 or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 1
                                   for v in window):
        raise CascadeFormatError(f"{path}: /base_window: expected [width, height] of "
                                 "positive integers")
    base_w, base_h = window

    stages = []
    for i, stage_doc in enumerate(_want(doc, "stages", "list", "", path)):
        sp = f"/stages/{i}"
        if not isinstance(stage_doc, dict):
            raise CascadeFormatError(f"{path}: {sp}: expected an object")
        threshold = _want(stage_doc, "stage_threshold", "number", sp, path)
        weak = []
        for j, wc_doc in enumerate(_want(stage_doc, "weak_classifiers", "list", sp, path)):
            wp = f"{sp}/weak_classifiers/{j}"
            if not isinstance(wc_doc, dict):
                raise CascadeFormatError(f"{path}: {wp}: expected an object")
            feature = _want(wc_doc, "feature", "object", wp, path)
            rects_doc = _want(feature, "rects", "list", f"{wp}/feature", path)
            if not 2 <= len(rects_doc) <= 3:
                raise CascadeFormatError(
                    f"{path}: {wp}/feature/rects: {len(rects_doc)} rects, expected 2 or 3"
                )
            rects = []
            for k, rect_doc in enumerate(rects_doc):
                rp = f"{wp}/feature/rects/{k}"
                if not isinstance(rect_doc, dict):
                    raise CascadeFormatError(f"{path}: {rp}: expected an object")
                x = _want(rect_doc, "x", "int", rp, path)
                y = _want(rect_doc, "y", "int", rp, path)
                rw = _want(rect_doc, "w", "int", rp, path)
                rh = _want(rect_doc, "h", "int", rp, path)
                weight = _want(rect_doc, "weight", "number", rp, path)
                if x < 0 or y < 0 or rw < 1 or rh < 1 or x + rw > base_w or y + rh > base_h:
                    raise CascadeFormatError(
                        f"{path}: {rp}: rect ({x},{y},{rw},{rh}) outside the "
                        f"{base_w}x{base_h} base window"
                    )
                rects.append(HaarRect(x, y, rw, rh, float(weight)))
            weak.append(WeakClassifier(
                HaarFeature(tuple(rects)),
                float(_want(wc_doc, "threshold", "number", wp, path)),
                float(_want(wc_doc, "left_value", "number", wp, path)),
                float(_want(wc_doc, "right_value", "number", wp, path)),
            ))
        stages.append(Stage(tuple(weak), float(threshold)))
    return Cascade(base_w, base_h, tuple(stages))
