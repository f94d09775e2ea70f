import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from avspatial.ambisonics import Direction
from avspatial.geometry import (
    QUADRANTS,
    Crop,
    Detection,
    EquirectFrame,
    angles_to_pixel,
    crop_rays,
    direction_to_pixel,
    gnomonic_crop,
    parse_detections,
    pixel_to_angles,
    pixel_to_direction,
    quadrant_of,
    rays_to_angles,
    select_crop_avc,
    select_crops_avsa,
)

W, H = 720, 360


def det_at(x, y, label=""):
    return Detection((max(x - 5, 0), max(y - 5, 0), 10, 10), (x, y), label)


def smooth_frame(width=W, height=H):
    # periodic in azimuth, smooth in elevation
    az, el = pixel_to_angles(*np.meshgrid(np.arange(width), np.arange(height)), width, height)
    a, e = np.deg2rad(az), np.deg2rad(el)
    r = 127.5 + 100 * np.cos(a) * np.cos(e)
    g = 127.5 + 100 * np.sin(a) * np.cos(e)
    b = 127.5 + 100 * np.sin(e)
    return EquirectFrame(np.stack([r, g, b], axis=-1).round().astype(np.uint8))


def test_pixel_centre_convention():
    az, el = pixel_to_angles(0, 0, W, H)
    assert az == pytest.approx(180 - 360 * 0.5 / W) and el == pytest.approx(90 - 180 * 0.5 / H)
    az, el = pixel_to_angles(W / 2 - 0.5, H / 2 - 0.5, W, H)
    assert az == pytest.approx(0.0, abs=1e-12) and el == pytest.approx(0.0, abs=1e-12)
    # left half of the image looks left
    assert pixel_to_angles(W / 4, H / 2, W, H)[0] > 0
    with pytest.raises(ValueError):
        pixel_to_angles(W, 0, W, H)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, W - 1), st.floats(0, H - 1))
def test_pixel_round_trip(x, y):
    d = pixel_to_direction((x, y), W, H)
    x2, y2 = direction_to_pixel(d, W, H)
    # azimuth wraps; compare on the circle
    dx = (x2 - x + W / 2) % W - W / 2
    assert abs(dx) <= 0.5 and abs(y2 - y) <= 0.5


def test_angles_to_pixel_inverts():
    x = np.linspace(0, W - 1, 37)
    y = np.linspace(0, H - 1, 37)
    x2, y2 = angles_to_pixel(*pixel_to_angles(x, y, W, H), W, H)
    np.testing.assert_allclose(x2, x, atol=1e-9)
    np.testing.assert_allclose(y2, y, atol=1e-9)


def test_frame_validation():
    with pytest.raises(ValueError):
        EquirectFrame(np.zeros((10, 30, 3)))
    with pytest.raises(ValueError):
        EquirectFrame(np.zeros((10, 20, 4)))
    assert EquirectFrame(np.zeros((10, 20))).pixels.shape == (10, 20, 3)


def test_crop_validation():
    for fov in (0.0, 180.0, -5.0):
        with pytest.raises(ValueError):
            Crop(Direction(0, 0), fov=fov)
    with pytest.raises(ValueError):
        Crop(Direction(0, 0), provenance="guess")


def test_crop_rays_geometry():
    crop = Crop(Direction.from_degrees(40, 20), fov=90, out_size=101)
    rays = crop_rays(crop)
    np.testing.assert_allclose(np.linalg.norm(rays, axis=-1), 1.0)
    np.testing.assert_allclose(rays[50, 50], crop.center.unit_vector(), atol=1e-12)
    # centre column follows the crop meridian
    az, _ = rays_to_angles(rays[:, 50])
    np.testing.assert_allclose(az, 40.0, atol=1e-9)
    # left edge of the image looks further left (larger azimuth)
    assert rays_to_angles(rays[50, 0])[0] > 40 > rays_to_angles(rays[50, -1])[0]
    # top row looks up
    assert rays_to_angles(rays[0, 50])[1] > 20 > rays_to_angles(rays[-1, 50])[1]
    # corner-to-centre half angle matches fov / 2 along the axes
    edge = np.rad2deg(np.arccos(np.clip(rays[50, 0] @ rays[50, 50], -1, 1)))
    half_px = 0.5 * (1 - 1 / 101) * 2
    assert edge == pytest.approx(np.rad2deg(np.arctan(half_px)), abs=1e-6)


def test_dot_at_front_lands_in_crop_centre():
    pixels = np.zeros((H, W, 3), np.uint8)
    cx, cy = W // 2, H // 2
    pixels[cy - 2 : cy + 3, cx - 2 : cx + 3] = (255, 0, 0)
    frame = EquirectFrame(pixels)
    crop = Crop(pixel_to_direction((cx, cy), W, H), fov=30, out_size=63)
    out = gnomonic_crop(frame, crop)
    assert tuple(out[31, 31]) == (255, 0, 0)
    assert out[:5].max() == 0 and out[-5:].max() == 0


@pytest.mark.parametrize("az,el", [(0, 0), (137, -20), (-60, 35), (179, 10)])
def test_crop_centre_pixel_matches_frame(az, el):
    frame = smooth_frame()
    crop = Crop(Direction.from_degrees(az, el), fov=60, out_size=41)
    out = gnomonic_crop(frame, crop).astype(int)
    x, y = direction_to_pixel(crop.center, W, H)
    ref = frame.pixels[int(round(y)), int(round(x)) % W].astype(int)
    assert np.abs(out[20, 20] - ref).max() <= 2


def test_seam_continuity():
    frame = smooth_frame()
    out = gnomonic_crop(frame, Crop(Direction.from_degrees(180, 0), fov=90, out_size=112)).astype(int)
    # smooth source: neighbouring output pixels differ by a few levels at most
    assert np.abs(np.diff(out, axis=1)).max() <= 4
    assert np.abs(np.diff(out, axis=0)).max() <= 4


def test_great_circle_through_centre_is_straight():
    # draw a tilted great circle through the crop centre
    centre = Direction.from_degrees(30, 10)
    f = centre.unit_vector()
    other = Direction.from_degrees(95, 60).unit_vector()
    normal = np.cross(f, other)
    normal /= np.linalg.norm(normal)
    az, el = pixel_to_angles(*np.meshgrid(np.arange(2 * 1000), np.arange(1000)), 2000, 1000)
    a, e = np.deg2rad(az), np.deg2rad(el)
    p = np.stack([np.cos(a) * np.cos(e), np.sin(a) * np.cos(e), np.sin(e)], axis=-1)
    on_line = np.abs(p @ normal) < np.sin(np.deg2rad(0.15))
    pixels = np.where(on_line, 255, 0).astype(np.uint8)
    out = gnomonic_crop(EquirectFrame(pixels), Crop(centre, fov=90, out_size=201))
    ys, xs = np.nonzero(out[..., 0] > 64)
    assert len(xs) > 150
    pts = np.stack([xs, ys], axis=1).astype(float)
    pts -= pts.mean(axis=0)
    _, s, vt = np.linalg.svd(pts, full_matrices=False)
    residual = np.abs(pts @ vt[1])
    assert residual.max() < 1.5
    # and it passes through the centre pixel
    assert out[100, 100, 0] > 64


def test_quadrants():
    assert QUADRANTS == ("left-back", "left-front", "right-front", "right-back")
    cases = {135: 0, 45: 1, -45: 2, -135: 3, 180: 0, 90: 1, 0: 2, -90: 3, -179.9: 3, 0.1: 1}
    for az, q in cases.items():
        assert quadrant_of(az) == q, az


def test_avc_uniform_over_detections():
    dets = [det_at(100, 180, "a"), det_at(300, 100, "b"), det_at(500, 200, "c"), det_at(650, 300, "d")]
    rng = np.random.default_rng(7)
    counts = {d.label: 0 for d in dets}
    for _ in range(1000):
        counts[select_crop_avc(dets, (W, H), seed=rng).label] += 1
    assert all(200 <= c <= 300 for c in counts.values()), counts
    assert chisquare(list(counts.values())).pvalue > 1e-3


def test_avc_deterministic_and_fallback():
    dets = [det_at(100, 180), det_at(300, 100)]
    a = [select_crop_avc(dets, (W, H), seed=s).center for s in range(20)]
    b = [select_crop_avc(dets, (W, H), seed=s).center for s in range(20)]
    assert a == b
    for s in range(50):
        crop = select_crop_avc([], (W, H), seed=s)
        assert crop.provenance == "random-fallback"
        assert abs(crop.center.to_degrees()[1]) <= 45.0


def test_avc_detected_crop_points_at_detection():
    crop = select_crop_avc([det_at(180, 90, "cat")], (W, H), seed=0)
    az, el = crop.center.to_degrees()
    assert az == pytest.approx(180 - 360 * 180.5 / W) and el == pytest.approx(90 - 180 * 90.5 / H)
    assert crop.label == "cat" and crop.provenance == "detected"
    assert crop.to_dict()["fov"] == 90.0


def test_avsa_one_crop_per_quadrant():
    # detections in left-front and right-back only
    dets = [det_at(270, 180, "lf"), det_at(650, 180, "rb")]
    for seed in range(30):
        crops = select_crops_avsa(dets, (W, H), seed=seed)
        assert len(crops) == 4
        assert [quadrant_of(c.center.to_degrees()[0]) for c in crops] == [0, 1, 2, 3]
        assert [c.provenance for c in crops] == ["random-fallback", "detected", "random-fallback", "detected"]
        for c in crops:
            assert abs(c.center.to_degrees()[1]) <= 45.0 or c.provenance == "detected"
        az = [c.center.to_degrees()[0] for c in crops]
        gaps = [abs((a - b + 180) % 360 - 180) for i, a in enumerate(az) for b in az[i + 1 :]]
        assert min(gaps) >= 1.0


def test_avsa_all_quadrants_detected():
    dets = [det_at(x, 180, str(i)) for i, x in enumerate((90, 270, 450, 630))]
    crops = select_crops_avsa(dets, (W, H), seed=3)
    assert [c.label for c in crops] == ["0", "1", "2", "3"]


def test_bbox_fov_mode():
    det = Detection((100, 100, 72, 36), (136, 118))
    crop = select_crop_avc([det], (W, H), seed=0, fov_mode="bbox")
    assert crop.fov == pytest.approx(1.25 * 36.0)
    with pytest.raises(ValueError):
        select_crop_avc([det], (W, H), seed=0, fov_mode="auto")


def test_parse_detections():
    doc = {"frame": {"width": W, "height": H}, "objects": [{"bbox": [10, 10, 20, 20], "center": [20, 20], "label": "x", "confidence": 0.5}]}
    size, dets = parse_detections(doc)
    assert size == (W, H) and dets[0].label == "x" and dets[0].confidence == 0.5
    assert parse_detections({"frame": {"width": W, "height": H}})[1] == []
    bad = [
        {},
        {"frame": {"width": W}},
        {"frame": {"width": W, "height": H}, "objects": [{"bbox": [0, 0, 10, 10]}]},
        {"frame": {"width": W, "height": H}, "objects": [{"bbox": [W - 5, 0, 10, 10], "center": [W - 1, 1]}]},
        {"frame": {"width": W, "height": H}, "objects": [{"bbox": [0, 0, 10, 10], "center": [50, 5]}]},
        {"frame": {"width": W, "height": H}, "objects": [{"bbox": [0, 0, 10], "center": [5, 5]}]},
        {"frame": {"width": W, "height": H}, "objects": [{"bbox": [0, 0, 10, 10], "center": [5, 5], "confidence": 2}]},
    ]
    for doc in bad:
        with pytest.raises(ValueError):
            parse_detections(doc)
