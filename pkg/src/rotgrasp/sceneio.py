"""Scene and plan file formats (JSON) and their loaders/savers.

Scene files carry meters and degrees only; angles are normalized to
[0, 180) on load (with a warning when the file was out of range). Floats
are serialized with full repr precision and keys are sorted, so identical
data always produces identical bytes.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .cloud import CameraModel, PointCloud
from .detect import Anchor, Detection, RawPredictionGrid, assign_class_ids
from .planner import PlanResult
from .rotgeom import RotatedBox2D

SCHEMA_VERSION = 1


class SceneIOError(Exception):
    """Base for scene/plan file problems; message carries file context."""


class SceneParseError(SceneIOError):
    """The file is not valid JSON."""


class SceneSchemaError(SceneIOError):
    """The JSON parses but violates the scene schema."""


class SceneUnitError(SceneIOError):
    """The file declares units other than meters."""


@dataclass(frozen=True)
class SceneData:
    """In-memory form of a scene file."""

    cloud: PointCloud
    detections: tuple[Detection, ...]
    camera: CameraModel
    raw_grid: RawPredictionGrid | None = None
    seed: int | None = None


def _require(cond: bool, path: str, msg: str) -> None:
    if not cond:
        raise SceneSchemaError(f"{path}: {msg}")


def _get(doc: dict, key: str, path: str):
    _require(key in doc, path, f"missing required key {key!r}")
    return doc[key]


def _load_box(raw, path: str) -> RotatedBox2D:
    _require(isinstance(raw, list) and len(raw) == 5, path, "box must be [cx, cy, w, h, theta]")
    cx, cy, w, h, theta = (float(v) for v in raw)
    if not 0.0 <= theta < 180.0:
        warnings.warn(f"{path}: angle {theta} out of [0, 180), normalizing")
    return RotatedBox2D(cx, cy, w, h, theta)


def load_scene(path: str) -> SceneData:
    """Parse and validate a scene file.

    Raises SceneParseError (bad JSON, with line/column), SceneSchemaError
    (missing or malformed fields, with a JSON path) or SceneUnitError.
    """
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise SceneParseError(
                f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
            ) from exc
    _require(isinstance(doc, dict), "$", "scene file must be a JSON object")
    _require("schema_version" in doc, "$", "missing schema_version")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise SceneSchemaError(f"$.schema_version: unsupported version {doc['schema_version']!r}")

    meta = _get(doc, "meta", "$")
    units = _get(meta, "units", "$.meta")
    if units != "m":
        raise SceneUnitError(f"$.meta.units: expected 'm', got {units!r}")
    seed = meta.get("seed")

    cam_doc = _get(doc, "camera", "$")
    try:
        camera = CameraModel(
            fx=float(_get(cam_doc, "fx", "$.camera")),
            fy=float(_get(cam_doc, "fy", "$.camera")),
            cx=float(_get(cam_doc, "cx", "$.camera")),
            cy=float(_get(cam_doc, "cy", "$.camera")),
            width=int(_get(cam_doc, "width", "$.camera")),
            height=int(_get(cam_doc, "height", "$.camera")),
        )
    except ValueError as exc:
        raise SceneSchemaError(f"$.camera: {exc}") from exc

    cloud_doc = _get(doc, "cloud", "$")
    points = np.asarray(_get(cloud_doc, "points", "$.cloud"), dtype=float)
    if points.size == 0:
        points = points.reshape(0, 3)
    _require(points.ndim == 2 and points.shape[1] == 3, "$.cloud.points", "must be an array of [x, y, z]")
    pixels = None
    if cloud_doc.get("pixels") is not None:
        pixels = np.asarray(cloud_doc["pixels"])
        if pixels.size == 0:
            pixels = pixels.reshape(0, 2)
        _require(
            pixels.ndim == 2 and pixels.shape[1] == 2 and pixels.shape[0] == points.shape[0],
            "$.cloud.pixels",
            "must be an array of [u, v] matching points",
        )
    try:
        cloud = PointCloud(points, pixels)
    except ValueError as exc:
        raise SceneSchemaError(f"$.cloud: {exc}") from exc

    det_docs = doc.get("detections", [])
    _require(isinstance(det_docs, list), "$.detections", "must be a list")
    names = []
    parsed = []
    for i, d in enumerate(det_docs):
        p = f"$.detections[{i}]"
        name = _get(d, "class", p)
        score = float(_get(d, "score", p))
        box = _load_box(_get(d, "box", p), f"{p}.box")
        _require(0.0 <= score <= 1.0, p, f"score {score} out of [0, 1]")
        names.append(name)
        parsed.append((name, score, box))
    ids = assign_class_ids(names)
    try:
        detections = tuple(
            Detection(ids[name], name, score, box) for name, score, box in parsed
        )
    except ValueError as exc:
        raise SceneSchemaError(f"$.detections: {exc}") from exc

    raw_grid = None
    if doc.get("raw_grid") is not None:
        g = doc["raw_grid"]
        p = "$.raw_grid"
        shape = _get(g, "shape", p)
        _require(isinstance(shape, list) and len(shape) == 4, f"{p}.shape", "must be [gh, gw, na, ch]")
        anchors_doc = _get(g, "anchors", p)
        try:
            anchors = tuple(Anchor(float(a[0]), float(a[1]), float(a[2])) for a in anchors_doc)
        except (ValueError, TypeError, IndexError) as exc:
            raise SceneSchemaError(f"{p}.anchors: {exc}") from exc
        values = np.asarray(_get(g, "values", p), dtype=float)
        expected = int(np.prod(shape))
        _require(values.size == expected, f"{p}.values", f"expected {expected} values, got {values.size}")
        try:
            raw_grid = RawPredictionGrid(
                values.reshape(shape),
                stride=float(_get(g, "stride", p)),
                anchors=anchors,
                class_names=tuple(g.get("class_names", ())),
            )
        except ValueError as exc:
            raise SceneSchemaError(f"{p}: {exc}") from exc

    return SceneData(cloud, detections, camera, raw_grid, seed)


def _dump(path: str, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, sort_keys=True, indent=1)
        f.write("\n")


def save_scene(
    path: str,
    cloud: PointCloud,
    detections=(),
    camera: CameraModel | None = None,
    seed: int | None = None,
    raw_grid: RawPredictionGrid | None = None,
) -> None:
    """Write a scene file; byte-stable for identical inputs."""
    if camera is None:
        raise SceneSchemaError("save_scene needs a camera")
    doc = {
        "schema_version": SCHEMA_VERSION,
        "meta": {"units": "m", "seed": seed},
        "camera": {
            "fx": camera.fx,
            "fy": camera.fy,
            "cx": camera.cx,
            "cy": camera.cy,
            "width": camera.width,
            "height": camera.height,
        },
        "cloud": {
            "points": [[float(x), float(y), float(z)] for x, y, z in cloud.points],
            "pixels": (
                [[int(u), int(v)] for u, v in cloud.pixel_index] if cloud.organized else None
            ),
        },
        "detections": [
            {
                "class": d.class_name,
                "score": d.score,
                "box": [d.box.cx, d.box.cy, d.box.w, d.box.h, d.box.theta],
            }
            for d in detections
        ],
    }
    if raw_grid is not None:
        doc["raw_grid"] = {
            "shape": list(raw_grid.values.shape),
            "stride": raw_grid.stride,
            "anchors": [[a.w, a.h, a.theta] for a in raw_grid.anchors],
            "class_names": list(raw_grid.class_names),
            "values": [float(v) for v in raw_grid.values.ravel()],
        }
    _dump(path, doc)


def save_plan(path: str, result: PlanResult) -> None:
    """Write a plan file for a PlanResult; byte-stable for identical results."""
    if result.kind == "grasp":
        g = result.grasp
        payload = {
            "type": "grasp",
            "position": list(g.position),
            "closing_dir": list(g.closing_dir),
            "approach": list(g.approach),
            "opening_m": g.opening,
            "target": g.target_id,
        }
    elif result.kind == "push":
        p = result.push
        payload = {
            "type": "push",
            "start": list(p.start),
            "end": list(p.end),
            "direction": list(p.direction),
        }
    else:
        payload = {"type": "none", "reason": result.reason}
    _dump(
        path,
        {
            "schema_version": SCHEMA_VERSION,
            "mode": result.mode,
            "result": payload,
            "trace": list(result.trace),
        },
    )
