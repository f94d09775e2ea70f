"""Ambisonic-format validity test and corpus scanning.

A well-formed FOA recording of uncorrelated sources and diffuse sound has as
much energy in the three dipoles as in the omni channel, so a file passes when
``|E_xyz / E_w - 1| <= tau``. Energies are band-limited by summing STFT power
over bins whose centre frequency lies below ``cutoff``.
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_batch, check_multichannel
from .ambisonics import FoaSignal
from .audio_io import read_wav
from .features import GUARD_EPS, StftConfig, stft

logger = logging.getLogger(__name__)

REPORT_SCHEMA = "avspatial.validity-report"
REPORT_VERSION = 1
AUDIO_SUFFIXES = (".wav",)


@dataclass(frozen=True)
class ValidityConfig:
    tau: float = 0.1
    cutoff: float = 4000.0

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must be in (0, 1), got {self.tau}")
        if not self.cutoff > 0.0:
            raise ValueError(f"cutoff must be positive, got {self.cutoff}")


@dataclass(frozen=True)
class ValidityResult:
    energy_ratio: float
    passed: bool
    e_w: float
    e_xyz: float

    def to_dict(self):
        out = asdict(self)
        if not math.isfinite(self.energy_ratio):
            out["energy_ratio"] = None
        return out


def band_energies(samples, sample_rate, cutoff, cfg=None):
    """``(E_w, E_xyz)`` over STFT bins with centre frequency below ``cutoff``."""
    cfg = cfg or StftConfig()
    x = check_multichannel(samples, n_channels=4, name="FOA samples")
    if not 0.0 < cutoff < sample_rate / 2.0:
        raise ValueError(f"cutoff {cutoff} Hz must lie in (0, Nyquist={sample_rate / 2})")
    if x.shape[1] < cfg.hop_length:
        x = np.pad(x, ((0, 0), (0, cfg.hop_length - x.shape[1])))
    spec = stft(x, cfg, sample_rate)
    keep = spec.bin_frequencies() < cutoff
    per_channel = spec.power()[:, :, keep].sum(axis=(1, 2))
    return float(per_channel[0]), float(per_channel[1:].sum())


def validity_test(x, cfg=None):
    """Energy-ratio test on a :class:`~avspatial.ambisonics.FoaSignal`."""
    cfg = cfg or ValidityConfig()
    e_w, e_xyz = band_energies(x.samples, x.sample_rate, cfg.cutoff)
    if e_w < GUARD_EPS:
        return ValidityResult(math.inf, False, e_w, e_xyz)
    ratio = e_xyz / e_w
    return ValidityResult(ratio, bool(abs(ratio - 1.0) <= cfg.tau), e_w, e_xyz)


@dataclass
class CorpusReport:
    entries: list
    pass_fraction: float
    n_files: int
    n_passed: int
    n_errors: int
    config: ValidityConfig
    root: str | None = None

    def passed_paths(self):
        return [e["path"] for e in self.entries if e.get("passed")]

    def to_dict(self):
        return {
            "schema": REPORT_SCHEMA,
            "version": REPORT_VERSION,
            "config": asdict(self.config),
            "n_files": self.n_files,
            "n_passed": self.n_passed,
            "n_errors": self.n_errors,
            "pass_fraction": self.pass_fraction,
            "files": self.entries,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    def write_pass_list(self, path):
        lines = self.passed_paths()
        Path(path).write_text("".join(p + "\n" for p in lines), encoding="utf-8")


def _collect(paths):
    """Expand directories into sorted audio files; returns (files, root)."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    files = []
    root = None
    for p in map(Path, paths):
        if p.is_dir():
            root = p if root is None else root
            files.extend(f for f in p.rglob("*") if f.suffix.lower() in AUDIO_SUFFIXES and f.is_file())
        else:
            files.append(p)
    return sorted(set(files)), (root if len(paths) == 1 else None)


def _check_file(path, cfg, remap):
    try:
        rate, samples = read_wav(path, remap)
        if samples.shape[0] != 4:
            raise ValueError(f"expected 4 channels after remap, got {samples.shape[0]}")
        return validity_test(FoaSignal(rate, samples), cfg), None
    except Exception as exc:  # report, don't abort the scan
        logger.warning("cannot validate %s: %s", path, exc)
        return None, f"{type(exc).__name__}: {exc}"


def scan_corpus(paths, cfg=None, remap=None, jobs=1, count_errors=False):
    """Validate every WAV file under ``paths``.

    Unreadable files become ``error`` entries. They are left out of the
    ``pass_fraction`` denominator unless ``count_errors`` is set, in which
    case they count as failures. Entry order follows sorted paths whatever
    ``jobs`` is.
    """
    cfg = cfg or ValidityConfig()
    files, root = _collect(paths)
    if not files:
        raise FileNotFoundError(f"no audio files found in {paths}")
    with ThreadPoolExecutor(max_workers=max(1, int(jobs))) as pool:
        outcomes = list(pool.map(lambda f: _check_file(f, cfg, remap), files))

    entries = []
    n_passed = n_errors = 0
    for path, (result, error) in zip(files, outcomes):
        name = path.relative_to(root).as_posix() if root is not None else str(path)
        if error is not None:
            n_errors += 1
            entries.append({"path": name, "error": error, "passed": False})
            continue
        n_passed += result.passed
        entries.append({"path": name, **result.to_dict()})
    denominator = len(files) if count_errors else len(files) - n_errors
    if denominator == 0:
        raise ValueError("no valid FOA files found")
    return CorpusReport(
        entries,
        n_passed / denominator,
        len(files),
        n_passed,
        n_errors,
        cfg,
        None if root is None else str(root),
    )


class AmbisonicValidityChecker(BaseEstimator):
    """Classifier-style wrapper: ``predict`` gives pass/fail per FOA clip.

    Parameters
    ----------
    tau : float
        Allowed deviation of the dipole/omni energy ratio from 1.
    cutoff : float
        Upper frequency in Hz of the bins entering the energies.
    sample_rate : float
        Sample rate of the clips passed to ``predict``.
    """

    def __init__(self, tau=0.1, cutoff=4000.0, sample_rate=24000.0):
        self.tau = tau
        self.cutoff = cutoff
        self.sample_rate = sample_rate

    def fit(self, X=None, y=None):
        self.config_ = ValidityConfig(self.tau, self.cutoff)
        return self

    def score_samples(self, X):
        """Energy ratio ``E_xyz / E_w`` per clip (``inf`` for silence)."""
        check_is_fitted(self, "config_")
        arr, single = check_batch(X, 4)
        ratios = []
        for item in arr:
            e_w, e_xyz = band_energies(item, self.sample_rate, self.config_.cutoff)
            ratios.append(math.inf if e_w < GUARD_EPS else e_xyz / e_w)
        ratios = np.array(ratios)
        return ratios[0] if single else ratios

    def predict(self, X):
        ratios = self.score_samples(X)
        return np.abs(ratios - 1.0) <= self.config_.tau
