"""Equirectangular panoramas: pixel/direction mapping, gnomonic crops, crop selection.

Pixel ``(x, y)`` of a ``W x H`` equirectangular frame (``W = 2H``) has its
centre at azimuth ``180 - 360 (x + 0.5) / W`` and elevation
``90 - 180 (y + 0.5) / H`` degrees, so the image centre looks at the front and
the left half of the image holds positive (leftward) azimuths.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .ambisonics import Direction

QUADRANTS = ("left-back", "left-front", "right-front", "right-back")
# (lower, upper] in degrees, same order as QUADRANTS
QUADRANT_BOUNDS = ((90.0, 180.0), (0.0, 90.0), (-90.0, 0.0), (-180.0, -90.0))
FALLBACK_ELEVATION = 45.0
# random fallbacks keep this far (deg) from quadrant edges
FALLBACK_MARGIN = 0.5


@dataclass(frozen=True)
class EquirectFrame:
    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim == 2:
            arr = np.repeat(arr[:, :, np.newaxis], 3, axis=2)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected an RGB image, got shape {arr.shape}")
        h, w = arr.shape[:2]
        if h == 0 or w != 2 * h:
            raise ValueError(f"equirectangular frames need width = 2 * height, got {w}x{h}")
        object.__setattr__(self, "pixels", arr.astype(np.uint8, copy=False))

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def height(self):
        return self.pixels.shape[0]


@dataclass(frozen=True)
class Detection:
    bbox: tuple
    center: tuple
    label: str = ""
    confidence: float = 1.0

    def validate(self, width, height):
        x, y, w, h = self.bbox
        cx, cy = self.center
        if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > width or y + h > height:
            raise ValueError(f"bbox {self.bbox} lies outside the {width}x{height} frame")
        if not (x <= cx <= x + w and y <= cy <= y + h):
            raise ValueError(f"center {self.center} lies outside bbox {self.bbox}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class Crop:
    center: Direction
    fov: float = 90.0
    out_size: int = 112
    provenance: str = "detected"
    label: str | None = None

    def __post_init__(self):
        if not 0.0 < self.fov < 180.0:
            raise ValueError(f"fov must be in (0, 180) degrees, got {self.fov}")
        if int(self.out_size) <= 0:
            raise ValueError("out_size must be positive")
        if self.provenance not in ("detected", "random-fallback"):
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def to_dict(self):
        az, el = self.center.to_degrees()
        return {
            "azimuth_deg": az,
            "elevation_deg": el,
            "fov": float(self.fov),
            "out_size": int(self.out_size),
            "provenance": self.provenance,
            "label": self.label,
        }


def _check_inside(x, y, width, height):
    if not (np.all((x >= 0) & (x < width)) and np.all((y >= 0) & (y < height))):
        raise ValueError(f"pixel ({x}, {y}) outside the {width}x{height} frame")


def pixel_to_angles(x, y, width, height):
    """Vectorised pixel -> (azimuth, elevation) in degrees."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_inside(x, y, width, height)
    return 180.0 - 360.0 * (x + 0.5) / width, 90.0 - 180.0 * (y + 0.5) / height


def angles_to_pixel(azimuth, elevation, width, height):
    """Inverse of :func:`pixel_to_angles` (continuous, unwrapped coordinates)."""
    azimuth = np.asarray(azimuth, dtype=np.float64)
    elevation = np.asarray(elevation, dtype=np.float64)
    return (180.0 - azimuth) * width / 360.0 - 0.5, (90.0 - elevation) * height / 180.0 - 0.5


def pixel_to_direction(point, width, height):
    az, el = pixel_to_angles(point[0], point[1], width, height)
    return Direction.from_degrees(float(az), float(el))


def direction_to_pixel(d, width, height):
    az, el = d.to_degrees()
    x, y = angles_to_pixel(az, el, width, height)
    return float(x), float(y)


def crop_rays(crop):
    """Unit (x, y, z) viewing rays for every output pixel, ``(S, S, 3)``."""
    n = int(crop.out_size)
    half = np.tan(np.deg2rad(crop.fov) / 2.0)
    coords = (2.0 * (np.arange(n) + 0.5) / n - 1.0) * half
    u = coords[np.newaxis, :]  # rightwards
    v = -coords[:, np.newaxis]  # upwards
    az, el = crop.center.azimuth, crop.center.elevation
    forward = crop.center.unit_vector()
    right = np.array([np.sin(az), -np.cos(az), 0.0])
    up = np.array([-np.cos(az) * np.sin(el), -np.sin(az) * np.sin(el), np.cos(el)])
    rays = forward + u[..., np.newaxis] * right + v[..., np.newaxis] * up
    return rays / np.linalg.norm(rays, axis=-1, keepdims=True)


def rays_to_angles(rays):
    az = np.rad2deg(np.arctan2(rays[..., 1], rays[..., 0]))
    el = np.rad2deg(np.arcsin(np.clip(rays[..., 2], -1.0, 1.0)))
    return az, el


def sample_bilinear(pixels, x, y):
    """Bilinear lookup, wrapping horizontally and clamping vertically."""
    h, w = pixels.shape[:2]
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = (x - x0)[..., np.newaxis]
    fy = (y - y0)[..., np.newaxis]
    x0 = x0.astype(np.int64) % w
    x1 = (x0 + 1) % w
    y0 = y0.astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    img = pixels.astype(np.float64)
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def gnomonic_crop(frame, crop):
    """Rectilinear ``out_size x out_size`` view of ``frame`` centred on ``crop``."""
    az, el = rays_to_angles(crop_rays(crop))
    x, y = angles_to_pixel(az, el, frame.width, frame.height)
    out = sample_bilinear(frame.pixels, x, y)
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


def quadrant_of(azimuth_deg):
    """Index into :data:`QUADRANTS`; intervals are closed at their upper end."""
    a = float(Direction.from_degrees(azimuth_deg).to_degrees()[0])
    if a > 90.0:
        return 0
    if a > 0.0:
        return 1
    if a > -90.0:
        return 2
    return 3


def _fov_for(det, width, height, fov, fov_mode):
    if fov_mode == "fixed":
        return fov
    if fov_mode == "bbox":
        _, _, w, h = det.bbox
        extent = max(360.0 * w / width, 180.0 * h / height)
        return float(np.clip(1.25 * extent, 20.0, 150.0))
    raise ValueError(f"fov_mode must be 'fixed' or 'bbox', got {fov_mode!r}")


def _detected_crop(det, width, height, fov, fov_mode, out_size):
    return Crop(
        pixel_to_direction(det.center, width, height),
        _fov_for(det, width, height, fov, fov_mode),
        out_size,
        "detected",
        det.label,
    )


def _random_crop(rng, lo, hi, fov, out_size):
    az = rng.uniform(lo, hi)
    el = rng.uniform(-FALLBACK_ELEVATION, FALLBACK_ELEVATION)
    return Crop(Direction.from_degrees(az, el), fov, out_size, "random-fallback")


def select_crop_avc(detections, frame_size, seed=None, fov=90.0, fov_mode="fixed", out_size=112):
    """One crop: a uniformly chosen detection, or a random direction if none.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    width, height = frame_size
    rng = np.random.default_rng(seed)
    if detections:
        det = detections[int(rng.integers(len(detections)))]
        return _detected_crop(det, width, height, fov, fov_mode, out_size)
    return _random_crop(rng, -180.0, 180.0, fov, out_size)


def select_crops_avsa(detections, frame_size, seed=None, fov=90.0, fov_mode="fixed", out_size=112):
    """Four crops, one per azimuth quadrant, in :data:`QUADRANTS` order."""
    width, height = frame_size
    rng = np.random.default_rng(seed)
    buckets = [[] for _ in QUADRANTS]
    for det in detections:
        az, _ = pixel_to_angles(det.center[0], det.center[1], width, height)
        buckets[quadrant_of(float(az))].append(det)
    crops = []
    for (lo, hi), bucket in zip(QUADRANT_BOUNDS, buckets):
        if bucket:
            det = bucket[int(rng.integers(len(bucket)))]
            crops.append(_detected_crop(det, width, height, fov, fov_mode, out_size))
        else:
            crops.append(_random_crop(rng, lo + FALLBACK_MARGIN, hi - FALLBACK_MARGIN, fov, out_size))
    return crops


def parse_detections(payload):
    """Validate a detections document; returns ``((width, height), [Detection])``."""
    try:
        frame = payload["frame"]
        width, height = int(frame["width"]), int(frame["height"])
        objects = payload.get("objects", [])
        dets = [
            Detection(
                tuple(float(v) for v in obj["bbox"]),
                tuple(float(v) for v in obj["center"]),
                str(obj.get("label", "")),
                float(obj.get("confidence", 1.0)),
            )
            for obj in objects
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed detections document: {exc}") from exc
    if width <= 0 or height <= 0:
        raise ValueError("frame size must be positive")
    for det in dets:
        if len(det.bbox) != 4 or len(det.center) != 2:
            raise ValueError("bbox needs 4 numbers and center 2")
        det.validate(width, height)
    return (width, height), dets


def load_detections(path):
    with open(path, encoding="utf-8") as fh:
        return parse_detections(json.load(fh))


def read_png(path):
    from PIL import Image

    with Image.open(path) as img:
        return EquirectFrame(np.asarray(img.convert("RGB")))


def write_png(path, pixels):
    from PIL import Image

    Image.fromarray(np.asarray(pixels, dtype=np.uint8)).save(path, format="PNG")
