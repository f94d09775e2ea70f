import json
import subprocess
import sys

import numpy as np
import pytest

from avspatial import __version__
from avspatial.ambisonics import (
    Direction,
    RotationAngles,
    beamform,
    encode_source,
    rotate,
    rotation_matrix,
    synthesize_scene,
)
from avspatial.audio_io import read_wav, write_wav
from avspatial.avsf import read_avsf
from avspatial.cli import main, scene_from_json
from avspatial.geometry import write_png

from conftest import SR, noise


@pytest.fixture
def plane_wav(tmp_path):
    path = tmp_path / "plane.wav"
    write_wav(path, encode_source(noise(SR, 3), Direction.from_degrees(30, 10)).samples, SR)
    return path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_console_script_runs():
    proc = subprocess.run([sys.executable, "-m", "avspatial.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "synth-scene" in proc.stdout


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["validate", "x.wav", "--bogus"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 2


def test_pipeline_matches_library(tmp_path, capsys):
    scene = {
        "sample_rate": SR,
        "duration": 0.25,
        "seed": 4,
        "diffuse_gain": 0.3,
        "sources": [
            {"azimuth": 40, "elevation": 15, "signal": "noise"},
            {"azimuth": -100, "elevation": 0, "signal": "sine", "frequency": 440, "gain": 0.5},
        ],
    }
    (tmp_path / "scene.json").write_text(json.dumps(scene))
    wav, rot, mono = (tmp_path / n for n in ("s.wav", "r.wav", "m.wav"))
    assert run(["synth-scene", tmp_path / "scene.json", wav, "--subtype", "float64"], capsys)[0] == 0
    assert run(["rotate", wav, rot, "--yaw", 25, "--pitch", -10, "--roll", 5, "--subtype", "float64"], capsys)[0] == 0
    assert run(["beamform", rot, mono, "--azimuth", 65, "--elevation", 5, "--subtype", "float64"], capsys)[0] == 0

    x = synthesize_scene(scene_from_json(scene))
    x = rotate(x, rotation_matrix(RotationAngles.from_degrees(25, -10, 5)))
    y = beamform(x, Direction.from_degrees(65, 5))
    rate, got = read_wav(mono)
    assert rate == SR
    np.testing.assert_allclose(got[0], y, atol=1e-9)


def test_synth_seed_override(tmp_path, capsys):
    (tmp_path / "scene.json").write_text(json.dumps({"duration": 0.1, "sources": [{"azimuth": 0}]}))
    for seed in (1, 1, 2):
        run(["synth-scene", tmp_path / "scene.json", tmp_path / f"s{seed}.wav", "--seed", seed], capsys)
    a = read_wav(tmp_path / "s1.wav")[1]
    b = read_wav(tmp_path / "s2.wav")[1]
    assert a.shape == (4, 2400) and not np.allclose(a, b)


def test_synth_bad_scene(tmp_path, capsys):
    (tmp_path / "bad.json").write_text("{not json")
    code, _, err = run(["synth-scene", tmp_path / "bad.json", tmp_path / "o.wav"], capsys)
    assert code == 2 and "malformed JSON" in err
    (tmp_path / "bad2.json").write_text(json.dumps({"sources": [{"signal": "chirp"}]}))
    assert run(["synth-scene", tmp_path / "bad2.json", tmp_path / "o.wav"], capsys)[0] == 2
    (tmp_path / "bad3.json").write_text(json.dumps({"sources": [{"elevation": 120}]}))
    assert run(["synth-scene", tmp_path / "bad3.json", tmp_path / "o.wav"], capsys)[0] == 2
    assert run(["synth-scene", tmp_path / "missing.json", tmp_path / "o.wav"], capsys)[0] == 2


def test_stereo_command(tmp_path, plane_wav, capsys):
    out = tmp_path / "st.wav"
    assert run(["stereo", plane_wav, out, "--azimuth", 30, "--elevation", 10], capsys)[0] == 0
    _, lr = read_wav(out)
    np.testing.assert_allclose(lr[0], lr[1], atol=1e-6)


@pytest.mark.parametrize("fmt,shape", [("foa", (7, 100, 128)), ("stereo", (5, 100, 128)), ("mono", (1, 100, 128))])
def test_features_command(tmp_path, plane_wav, capsys, fmt, shape):
    out = tmp_path / f"{fmt}.avsf"
    assert run(["features", plane_wav, out, "--format", fmt], capsys)[0] == 0
    t = read_avsf(out)
    assert t.data.shape == shape
    assert t.meta["hop_length"] == 240 and t.meta["n_mels"] == 128


def test_features_from_stereo_file(tmp_path, capsys):
    write_wav(tmp_path / "lr.wav", np.stack([noise(SR, 1), noise(SR, 2)]), SR)
    assert run(["features", tmp_path / "lr.wav", tmp_path / "o.avsf", "--format", "stereo"], capsys)[0] == 0
    code, _, err = run(["features", tmp_path / "lr.wav", tmp_path / "o.avsf", "--format", "foa"], capsys)
    assert code == 2 and "4-channel" in err


def test_features_bad_mel_count(tmp_path, plane_wav, capsys):
    assert run(["features", plane_wav, tmp_path / "o.avsf", "--mels", 400], capsys)[0] == 2


def test_validate_command(tmp_path, plane_wav, capsys):
    code, out, _ = run(["validate", plane_wav], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["passed"] and doc["energy_ratio"] == pytest.approx(1.0, abs=1e-6)
    s = noise(SR, 9)
    write_wav(tmp_path / "w.wav", np.stack([s, 0 * s, 0 * s, 0 * s]), SR)
    code, out, _ = run(["validate", tmp_path / "w.wav"], capsys)
    assert code == 1 and json.loads(out)["energy_ratio"] == 0.0
    write_wav(tmp_path / "z.wav", np.zeros((4, 100)), SR)
    code, out, _ = run(["validate", tmp_path / "z.wav"], capsys)
    assert code == 1 and json.loads(out)["energy_ratio"] is None


def test_validate_input_errors(tmp_path, plane_wav, capsys):
    (tmp_path / "junk.wav").write_bytes(b"junk")
    code, _, err = run(["validate", tmp_path / "junk.wav"], capsys)
    assert code == 2 and "cannot read audio file" in err
    assert run(["validate", tmp_path / "nope.wav"], capsys)[0] == 2
    assert run(["validate", plane_wav, "--tau", 1.5], capsys)[0] == 2
    (tmp_path / "map.json").write_text("[0, 1,")
    assert run(["validate", plane_wav, "--remap", tmp_path / "map.json"], capsys)[0] == 2
    (tmp_path / "map2.json").write_text("[0, 1]")
    assert run(["validate", plane_wav, "--remap", tmp_path / "map2.json"], capsys)[0] == 2


def test_scan_command(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    for i in range(3):
        write_wav(corpus / f"ok{i}.wav", encode_source(noise(SR // 4, i), Direction(0.5 * i, 0.1)).samples, SR)
    s = noise(SR // 4, 7)
    write_wav(corpus / "bad.wav", np.stack([s, s, s, s]), SR)
    report, passes = tmp_path / "r.json", tmp_path / "p.txt"
    code, out, _ = run(["scan", corpus, "-o", report, "--pass-list", passes, "--jobs", 2], capsys)
    assert code == 0 and out == ""
    doc = json.loads(report.read_text())
    assert doc["pass_fraction"] == 0.75 and doc["n_files"] == 4
    assert passes.read_text().split() == ["ok0.wav", "ok1.wav", "ok2.wav"]
    code, out, _ = run(["scan", corpus], capsys)
    assert json.loads(out) == doc
    (tmp_path / "empty").mkdir()
    assert run(["scan", tmp_path / "empty"], capsys)[0] == 2
    assert run(["scan", tmp_path / "missing"], capsys)[0] == 2


def _frame_and_detections(tmp_path):
    rng = np.random.default_rng(0)
    pixels = rng.integers(0, 256, (90, 180, 3), dtype=np.uint8)
    write_png(tmp_path / "pano.png", pixels)
    doc = {
        "frame": {"width": 180, "height": 90},
        "objects": [{"bbox": [40, 30, 20, 20], "center": [50, 40], "label": "dog", "confidence": 0.9}],
    }
    (tmp_path / "det.json").write_text(json.dumps(doc))
    return tmp_path / "pano.png", tmp_path / "det.json"


def test_crops_command_deterministic(tmp_path, capsys):
    frame, det = _frame_and_detections(tmp_path)
    for out in ("a", "b"):
        code = run(["crops", frame, det, "--mode", "avsa", "--seed", 3, "--size", 33, "--out-dir", tmp_path / out], capsys)[0]
        assert code == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert len(names) == 8
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    sidecars = [json.loads((tmp_path / "a" / f"pano_avsa_{k}.json").read_text()) for k in range(4)]
    assert [s["quadrant"] for s in sidecars] == ["left-back", "left-front", "right-front", "right-back"]
    assert sidecars[1]["provenance"] == "detected" and sidecars[1]["label"] == "dog"


def test_crops_command_errors(tmp_path, capsys):
    frame, det = _frame_and_detections(tmp_path)
    (tmp_path / "bad.json").write_text("[")
    assert run(["crops", frame, tmp_path / "bad.json"], capsys)[0] == 2
    (tmp_path / "wrong.json").write_text(json.dumps({"frame": {"width": 200, "height": 100}}))
    assert run(["crops", frame, tmp_path / "wrong.json"], capsys)[0] == 2
    (tmp_path / "notpng.png").write_bytes(b"nope")
    assert run(["crops", tmp_path / "notpng.png", det], capsys)[0] == 2
    code = run(["crops", frame, det, "--out-dir", tmp_path / "o"], capsys)[0]
    assert code == 0 and sorted(p.name for p in (tmp_path / "o").iterdir()) == ["pano_avc_0.json", "pano_avc_0.png"]


def test_align_demo_command(tmp_path, capsys):
    argv = ["align-demo", "--clips", 8, "--crops", 2, "--epochs", 50, "--embed-dim", 16]
    code, out, _ = run(argv, capsys)
    doc = json.loads(out)
    assert code == 0 and len(doc["loss_curve"]) == 50
    assert doc["chance_level"] == 1 / 16
    assert doc["loss_curve"][-1] < doc["loss_curve"][0]
    run(argv + ["-o", tmp_path / "r.json"], capsys)
    assert (tmp_path / "r.json").read_text() == out
    assert run(["align-demo", "--clips", 1], capsys)[0] == 2


def test_cli_reference_is_current():
    from pathlib import Path

    from avspatial.cli import render_docs

    doc = Path(__file__).resolve().parent.parent / "docs" / "cli.md"
    assert doc.read_text(encoding="utf-8") == render_docs(), "regenerate docs/cli.md from render_docs()"


def test_synth_wav_source_relative_to_scene(tmp_path, capsys):
    sub = tmp_path / "scenes"
    sub.mkdir()
    voice = noise(2400, 5) * 0.1
    write_wav(sub / "voice.wav", voice, SR, subtype="float64")
    scene = {"n_samples": 2400, "sources": [{"azimuth": 90, "signal": "wav", "path": "voice.wav"}]}
    (sub / "scene.json").write_text(json.dumps(scene))
    out = tmp_path / "out.wav"
    assert run(["synth-scene", sub / "scene.json", out, "--subtype", "float64"], capsys)[0] == 0
    np.testing.assert_allclose(read_wav(out)[1][0], voice, atol=1e-12)
    np.testing.assert_allclose(read_wav(out)[1][1], voice, atol=1e-12)
    scene["sources"][0]["path"] = "missing.wav"
    (sub / "scene.json").write_text(json.dumps(scene))
    assert run(["synth-scene", sub / "scene.json", out], capsys)[0] == 2
