"""Command-line entry point: ``avspatial <subcommand> ...``.

Angles on the command line are degrees. Exit codes: 0 success, 1 a single
``validate`` run whose file fails the test, 2 usage or input errors.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .alignment import SyntheticPairs, toy_train
from .ambisonics import (
    Direction,
    FoaSignal,
    RotationAngles,
    SceneSpec,
    beamform,
    extract_stereo,
    rotate,
    rotation_matrix,
    synthesize_scene,
)
from .audio_io import load_remap, read_wav, write_wav
from .avsf import VERSION as AVSF_VERSION
from .avsf import write_avsf
from .features import StftConfig, foa_features, mel_filterbank, mono_features, stereo_features
from .geometry import (
    QUADRANTS,
    gnomonic_crop,
    load_detections,
    read_png,
    select_crop_avc,
    select_crops_avsa,
    write_png,
)
from .validity import REPORT_VERSION, ValidityConfig, scan_corpus, validity_test

logger = logging.getLogger("avspatial")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

ALIGN_REPORT_VERSION = 1


class CliError(Exception):
    """Bad input detected after argument parsing; maps to exit code 2."""


def _dump(payload):
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise CliError(f"malformed JSON in {path}: {exc}") from exc
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from exc


def _read_audio(path, remap_path=None, channels=None):
    remap = None
    if remap_path is not None:
        try:
            remap = load_remap(remap_path)
        except json.JSONDecodeError as exc:
            raise CliError(f"malformed JSON in {remap_path}: {exc}") from exc
        except OSError as exc:
            raise CliError(f"cannot read {remap_path}: {exc.strerror}") from exc
    try:
        rate, samples = read_wav(path, remap)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read audio file {path}: {exc}") from exc
    if channels is not None and samples.shape[0] not in channels:
        raise CliError(f"{path}: expected {'/'.join(map(str, channels))} channels, got {samples.shape[0]}")
    return rate, samples


def _read_foa(path, remap_path=None):
    rate, samples = _read_audio(path, remap_path, channels=(4,))
    return FoaSignal(rate, samples)


def _direction(args):
    return Direction.from_degrees(args.azimuth, args.elevation)


# -- synth-scene ----------------------------------------------------------------


def _source_signal(src, n_samples, sample_rate, index, seed, base_dir):
    kind = src.get("signal", "noise")
    gain = float(src.get("gain", 1.0))
    if kind == "noise":
        rng = np.random.default_rng([int(src.get("seed", seed)), index])
        return gain * rng.standard_normal(n_samples)
    if kind == "sine":
        t = np.arange(n_samples) / sample_rate
        return gain * np.sin(2 * np.pi * float(src["frequency"]) * t + float(src.get("phase", 0.0)))
    if kind == "wav":
        _, data = _read_audio(Path(base_dir) / src["path"], channels=(1,))
        return gain * data[0, :n_samples]
    raise CliError(f"source {index}: unknown signal type {kind!r}")


def scene_from_json(doc, seed=None, base_dir="."):
    """Build a :class:`SceneSpec` from the ``synth-scene`` JSON document.

    Keys: ``sample_rate`` (24000), ``duration`` seconds or ``n_samples``,
    ``diffuse_gain`` (0), ``diffuse_component_count`` (64), ``seed`` (0) and
    ``sources``: ``{"azimuth", "elevation", "signal": noise|sine|wav, ...}``
    with angles in degrees. Relative ``wav`` paths resolve against ``base_dir``.
    """
    try:
        sample_rate = float(doc.get("sample_rate", 24000))
        if "n_samples" in doc:
            n_samples = int(doc["n_samples"])
        else:
            n_samples = int(round(float(doc.get("duration", 1.0)) * sample_rate))
        seed = int(doc.get("seed", 0)) if seed is None else seed
        sources = []
        for i, src in enumerate(doc.get("sources", [])):
            d = Direction.from_degrees(float(src.get("azimuth", 0.0)), float(src.get("elevation", 0.0)))
            sources.append((d, _source_signal(src, n_samples, sample_rate, i, seed, base_dir)))
        return SceneSpec(
            sources,
            sample_rate,
            float(doc.get("diffuse_gain", 0.0)),
            int(doc.get("diffuse_component_count", 64)),
            seed,
            n_samples,
        )
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise CliError(f"invalid scene description: {exc}") from exc


def cmd_synth_scene(args):
    spec = scene_from_json(_read_json(args.spec), args.seed, Path(args.spec).parent)
    scene = synthesize_scene(spec)
    write_wav(args.output, scene.samples, scene.sample_rate, args.subtype)
    return EXIT_OK


# -- signal transforms ----------------------------------------------------------


def cmd_rotate(args):
    x = _read_foa(args.input, args.remap)
    q = rotation_matrix(RotationAngles.from_degrees(args.yaw, args.pitch, args.roll))
    write_wav(args.output, rotate(x, q).samples, x.sample_rate, args.subtype)
    return EXIT_OK


def cmd_beamform(args):
    x = _read_foa(args.input, args.remap)
    write_wav(args.output, beamform(x, _direction(args)), x.sample_rate, args.subtype)
    return EXIT_OK


def cmd_stereo(args):
    x = _read_foa(args.input, args.remap)
    write_wav(args.output, extract_stereo(x, _direction(args)), x.sample_rate, args.subtype)
    return EXIT_OK


# -- features -------------------------------------------------------------------


def cmd_features(args):
    rate, samples = _read_audio(args.input, args.remap, channels=(1, 2, 4))
    cfg = StftConfig(args.window, args.hop, args.fft)
    try:
        fb = mel_filterbank(rate, cfg.fft_size, args.mels)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    look = _direction(args)
    n_ch = samples.shape[0]
    if args.format == "foa":
        if n_ch != 4:
            raise CliError("--format foa needs a 4-channel input")
        tensor = foa_features(FoaSignal(rate, samples), cfg, fb)
    elif args.format == "stereo":
        if n_ch == 4:
            samples = extract_stereo(FoaSignal(rate, samples), look)
        elif n_ch != 2:
            raise CliError("--format stereo needs a 2- or 4-channel input")
        tensor = stereo_features(samples, cfg, fb, rate)
    else:
        if n_ch == 4:
            samples = beamform(FoaSignal(rate, samples), look)
        elif n_ch != 1:
            raise CliError("--format mono needs a 1- or 4-channel input")
        tensor = mono_features(samples, cfg, fb, rate)
    tensor.meta.update(
        {
            "window_length": cfg.window_length,
            "hop_length": cfg.hop_length,
            "fft_size": cfg.fft_size,
            "n_mels": int(args.mels),
        }
    )
    write_avsf(args.output, tensor)
    return EXIT_OK


# -- validity -------------------------------------------------------------------


def _validity_config(args):
    try:
        return ValidityConfig(args.tau, args.cutoff)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def cmd_validate(args):
    cfg = _validity_config(args)
    x = _read_foa(args.input, args.remap)
    try:
        result = validity_test(x, cfg)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    payload = {"path": str(args.input), "config": {"tau": cfg.tau, "cutoff": cfg.cutoff}, **result.to_dict()}
    sys.stdout.write(_dump(payload))
    return EXIT_OK if result.passed else EXIT_FAILED


def cmd_scan(args):
    cfg = _validity_config(args)
    remap = None
    if args.remap is not None:
        try:
            remap = load_remap(args.remap)
        except (OSError, ValueError) as exc:
            raise CliError(f"bad remap table {args.remap}: {exc}") from exc
    if not Path(args.directory).exists():
        raise CliError(f"{args.directory} does not exist")
    try:
        report = scan_corpus(args.directory, cfg, remap, args.jobs, args.count_errors)
    except (FileNotFoundError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    if args.output:
        report.write(args.output)
    else:
        sys.stdout.write(report.to_json())
    if args.pass_list:
        report.write_pass_list(args.pass_list)
    return EXIT_OK


# -- crops ----------------------------------------------------------------------


def cmd_crops(args):
    try:
        frame = read_png(args.frame)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot use {args.frame} as an equirectangular frame: {exc}") from exc
    try:
        (width, height), detections = load_detections(args.detections)
    except json.JSONDecodeError as exc:
        raise CliError(f"malformed JSON in {args.detections}: {exc}") from exc
    except OSError as exc:
        raise CliError(f"cannot read {args.detections}: {exc.strerror}") from exc
    except ValueError as exc:
        raise CliError(f"{args.detections}: {exc}") from exc
    if (width, height) != (frame.width, frame.height):
        raise CliError(
            f"detections are for a {width}x{height} frame but {args.frame} is {frame.width}x{frame.height}"
        )
    opts = dict(fov=args.fov, fov_mode=args.fov_mode, out_size=args.size)
    try:
        if args.mode == "avc":
            crops = [select_crop_avc(detections, (width, height), args.seed, **opts)]
        else:
            crops = select_crops_avsa(detections, (width, height), args.seed, **opts)
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.frame).stem
    for k, crop in enumerate(crops):
        name = f"{stem}_{args.mode}_{k}"
        write_png(out_dir / f"{name}.png", gnomonic_crop(frame, crop))
        sidecar = {"index": k, "mode": args.mode, "seed": args.seed, "source": Path(args.frame).name, **crop.to_dict()}
        if args.mode == "avsa":
            sidecar["quadrant"] = QUADRANTS[k]
        (out_dir / f"{name}.json").write_text(_dump(sidecar), encoding="utf-8")
    return EXIT_OK


# -- align-demo -----------------------------------------------------------------


def align_demo_report(mode, clips, crops, latent, noise, epochs, lr, temperature, seed, shuffle, embed_dim):
    if mode == "avc":
        crops = 1
    world = SyntheticPairs(latent_dim=latent, noise=noise, world_seed=seed)
    audio, video = world.sample(clips, crops, seed + 1, shuffle=shuffle)
    heldout = world.sample(clips, crops, seed + 2, shuffle=shuffle)
    result = toy_train(
        audio,
        video,
        mode=mode,
        epochs=epochs,
        lr=lr,
        seed=seed,
        temperature=temperature,
        embed_dim=embed_dim,
        heldout=heldout,
    )
    return {
        "version": ALIGN_REPORT_VERSION,
        "config": {
            "mode": mode,
            "clips": clips,
            "crops": crops,
            "latent_dim": latent,
            "noise": noise,
            "epochs": epochs,
            "lr": lr,
            "temperature": temperature,
            "embed_dim": embed_dim,
            "shuffled": shuffle,
        },
        "seed": seed,
        "chance_level": 1.0 / (clips * crops),
        "loss_curve": [float(v) for v in result.loss_curve],
        "train_accuracy": result.train_accuracy,
        "retrieval_accuracy": result.heldout_accuracy,
    }


def cmd_align_demo(args):
    if args.clips < 2 or args.epochs < 0 or args.temperature <= 0:
        raise CliError("need --clips >= 2, --epochs >= 0 and --temperature > 0")
    report = align_demo_report(
        args.mode,
        args.clips,
        args.crops,
        args.latent,
        args.noise,
        args.epochs,
        args.lr,
        args.temperature,
        args.seed,
        args.shuffle,
        args.embed_dim,
    )
    text = _dump(report)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------


def _add_subtype(p):
    p.add_argument(
        "--subtype",
        choices=("float32", "int16", "float64"),
        default="float32",
        help="output WAV sample format (default float32)",
    )


def _add_remap(p):
    p.add_argument("--remap", metavar="MAP.json", help="JSON array of source channel indices applied at load")


def _add_look(p, what):
    p.add_argument("--azimuth", type=float, default=0.0, help=f"{what} azimuth in degrees, left positive")
    p.add_argument("--elevation", type=float, default=0.0, help=f"{what} elevation in degrees, up positive")


def _add_validity(p):
    p.add_argument("--tau", type=float, default=0.1, help="allowed |E_xyz/E_w - 1| (default 0.1)")
    p.add_argument("--cutoff", type=float, default=4000.0, help="low-pass cutoff in Hz (default 4000)")
    _add_remap(p)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="avspatial",
        description="Ambisonics and 360-degree video tools for audio-visual spatial alignment.",
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"avspatial {__version__} (AVSF v{AVSF_VERSION}, validity report v{REPORT_VERSION}, "
        f"align report v{ALIGN_REPORT_VERSION})",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("synth-scene", help="render a JSON scene description to an FOA WAV")
    p.add_argument("spec", help="scene JSON")
    p.add_argument("output", help="output FOA WAV")
    p.add_argument("--seed", type=int, help="override the scene seed")
    _add_subtype(p)
    p.set_defaults(func=cmd_synth_scene)

    p = sub.add_parser("rotate", help="rotate the sound field of an FOA WAV")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--yaw", type=float, default=0.0, help="degrees, positive turns sources left")
    p.add_argument("--pitch", type=float, default=0.0, help="degrees, positive tilts the front down")
    p.add_argument("--roll", type=float, default=0.0, help="degrees")
    _add_remap(p)
    _add_subtype(p)
    p.set_defaults(func=cmd_rotate)

    p = sub.add_parser("beamform", help="steer a first-order beam and write a mono WAV")
    p.add_argument("input")
    p.add_argument("output")
    _add_look(p, "beam")
    _add_remap(p)
    _add_subtype(p)
    p.set_defaults(func=cmd_beamform)

    p = sub.add_parser("stereo", help="left/right beams around a crop centre")
    p.add_argument("input")
    p.add_argument("output")
    _add_look(p, "crop centre")
    _add_remap(p)
    _add_subtype(p)
    p.set_defaults(func=cmd_stereo)

    p = sub.add_parser("features", help="extract a feature tensor to an AVSF file")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--format", choices=("foa", "stereo", "mono"), default="foa")
    _add_look(p, "crop centre (stereo/mono from FOA input)")
    p.add_argument("--window", type=int, default=504, help="window length in samples (default 504 = 21 ms)")
    p.add_argument("--hop", type=int, default=240, help="hop length in samples (default 240 = 10 ms)")
    p.add_argument("--fft", type=int, default=512, help="FFT size (default 512)")
    p.add_argument("--mels", type=int, default=128, help="mel bands (default 128)")
    _add_remap(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("validate", help="energy-ratio test of one FOA file, JSON to stdout")
    p.add_argument("input")
    _add_validity(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("scan", help="energy-ratio test of every WAV in a directory")
    p.add_argument("directory")
    p.add_argument("-o", "--output", help="report JSON (default stdout)")
    p.add_argument("--pass-list", help="write passing paths, one per line")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers")
    p.add_argument("--count-errors", action="store_true", help="count unreadable files as failures")
    _add_validity(p)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("crops", help="select and render crops from an equirectangular frame")
    p.add_argument("frame", help="equirectangular PNG")
    p.add_argument("detections", help="detections JSON")
    p.add_argument("--mode", choices=("avc", "avsa"), default="avc")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fov", type=float, default=90.0, help="field of view in degrees (default 90)")
    p.add_argument("--fov-mode", choices=("fixed", "bbox"), default="fixed")
    p.add_argument("--size", type=int, default=112, help="output crop size in pixels (default 112)")
    p.add_argument("--out-dir", default=".", help="directory for crop PNGs and sidecars")
    p.set_defaults(func=cmd_crops)

    p = sub.add_parser("align-demo", help="train the toy aligner on synthetic pairs")
    p.add_argument("-o", "--output", help="report JSON (default stdout)")
    p.add_argument("--mode", choices=("avc", "avsa"), default="avsa")
    p.add_argument("--clips", type=int, default=32)
    p.add_argument("--crops", type=int, default=4)
    p.add_argument("--latent", type=int, default=8)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--lr", type=float, default=1.0)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--embed-dim", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shuffle", action="store_true", help="break the audio/video pairing (chance baseline)")
    p.set_defaults(func=cmd_align_demo)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"avspatial {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def render_docs():
    """Markdown reference of every subcommand's ``--help``."""
    old = os.environ.get("COLUMNS")
    os.environ["COLUMNS"] = "100"
    try:
        parser = build_parser()
        return _render(parser)
    finally:
        if old is None:
            del os.environ["COLUMNS"]
        else:
            os.environ["COLUMNS"] = old


def _render(parser):
    parts = ["# avspatial command reference\n", "```text\n" + parser.format_help() + "```\n"]
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for name, p in sub.choices.items():
        parts.append(f"\n## {name}\n\n```text\n{p.format_help()}```\n")
    return "".join(parts)


if __name__ == "__main__":
    sys.exit(main())
