"""Spectral and spatial feature extraction.

Framing
-------
Frame ``t`` is centred on sample ``t * hop + hop // 2``; the signal is
zero-padded on both sides so every frame is complete. The frame count is
therefore ``ceil(n_samples / hop)``, which gives exactly 100 frames for one
second at 24 kHz with the default 10 ms hop. Each 504-sample (21 ms)
periodic Hann frame is zero-padded into a 512-point FFT.

Mel scale is Slaney's (linear below 1 kHz, logarithmic above) with
area-normalised triangular filters. Log-mel energies are natural-log power.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import get_window
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_batch, check_multichannel, check_positive
from .ambisonics import FoaSignal

LOG_EPS = 1e-10
GUARD_EPS = 1e-12

FOA_CHANNELS = (
    "logmel-W",
    "logmel-Y",
    "logmel-Z",
    "logmel-X",
    "intensity-x",
    "intensity-y",
    "intensity-z",
)
STEREO_CHANNELS = ("logmel-L", "logmel-R", "ICLD", "IPD-cos", "IPD-sin")
MONO_CHANNELS = ("logmel",)


@dataclass(frozen=True)
class StftConfig:
    window_length: int = 504
    hop_length: int = 240
    fft_size: int = 512
    window: str = "hann"

    def __post_init__(self):
        for name in ("window_length", "hop_length", "fft_size"):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.hop_length <= self.window_length <= self.fft_size:
            raise ValueError("need hop_length <= window_length <= fft_size")
        if self.window != "hann":
            raise ValueError("only the Hann window is supported")

    @property
    def n_bins(self):
        return self.fft_size // 2 + 1

    def n_frames(self, n_samples):
        return -(-int(n_samples) // self.hop_length)


@dataclass(frozen=True)
class ComplexSpectrogram:
    """``data`` is ``(channels, frames, bins)`` complex."""

    data: np.ndarray = field(repr=False)
    sample_rate: float
    config: StftConfig

    @property
    def n_channels(self):
        return self.data.shape[0]

    @property
    def n_frames(self):
        return self.data.shape[1]

    def bin_frequencies(self):
        return np.arange(self.config.n_bins) * self.sample_rate / self.config.fft_size

    def power(self):
        return self.data.real**2 + self.data.imag**2


@dataclass(frozen=True)
class FeatureTensor:
    """Real features shaped ``(channels, frames, bands)`` plus channel tags."""

    data: np.ndarray = field(repr=False)
    channels: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise ValueError(f"feature tensor must be 3-D, got shape {arr.shape}")
        if len(self.channels) != arr.shape[0]:
            raise ValueError("one channel tag is needed per channel")
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def shape(self):
        return self.data.shape


def hz_to_mel(f):
    """Slaney mel scale."""
    f = np.asarray(f, dtype=np.float64)
    f_sp = 200.0 / 3
    min_log_hz = 1000.0
    min_log_mel = min_log_hz / f_sp
    logstep = np.log(6.4) / 27.0
    mel = f / f_sp
    return np.where(f >= min_log_hz, min_log_mel + np.log(np.maximum(f, min_log_hz) / min_log_hz) / logstep, mel)


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    f_sp = 200.0 / 3
    min_log_hz = 1000.0
    min_log_mel = min_log_hz / f_sp
    logstep = np.log(6.4) / 27.0
    return np.where(m >= min_log_mel, min_log_hz * np.exp(logstep * (m - min_log_mel)), f_sp * m)


def mel_filterbank(sample_rate=24000.0, fft_size=512, n_mels=128, f_min=0.0, f_max=None):
    """Slaney-style ``(n_mels, fft_size // 2 + 1)`` triangular filterbank.

    Rows are area-normalised (each triangle scaled by ``2 / bandwidth``).
    Raises if any band ends up without a positive weight.
    """
    check_positive(sample_rate, "sample_rate")
    if f_max is None:
        f_max = sample_rate / 2.0
    if not 0.0 <= f_min < f_max <= sample_rate / 2.0:
        raise ValueError("need 0 <= f_min < f_max <= Nyquist")
    fft_freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    mel_pts = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    widths = np.diff(mel_pts)
    ramps = mel_pts[:, np.newaxis] - fft_freqs[np.newaxis, :]
    lower = -ramps[:-2] / widths[:-1, np.newaxis]
    upper = ramps[2:] / widths[1:, np.newaxis]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    weights *= (2.0 / (mel_pts[2:] - mel_pts[:-2]))[:, np.newaxis]
    empty = np.flatnonzero(weights.max(axis=1) <= 0)
    if empty.size:
        raise ValueError(
            f"mel bands {empty.tolist()} have no FFT bin; use fewer bands or a larger FFT"
        )
    return weights


def stft(signal, cfg=None, sample_rate=24000.0):
    """Centre-padded STFT of a ``(channels, n)`` or 1-D signal."""
    cfg = cfg or StftConfig()
    x = check_multichannel(signal, name="signal")
    n = x.shape[1]
    if n < cfg.hop_length:
        raise ValueError(f"signal has {n} samples, fewer than one hop ({cfg.hop_length})")
    n_frames = cfg.n_frames(n)
    left = cfg.window_length // 2 - cfg.hop_length // 2
    total = (n_frames - 1) * cfg.hop_length + cfg.window_length
    padded = np.zeros((x.shape[0], total))
    padded[:, left : left + n] = x
    idx = np.arange(cfg.window_length)[np.newaxis, :] + cfg.hop_length * np.arange(n_frames)[:, np.newaxis]
    frames = padded[:, idx] * get_window("hann", cfg.window_length, fftbins=True)
    data = np.fft.rfft(frames, n=cfg.fft_size, axis=-1)
    return ComplexSpectrogram(data, float(sample_rate), cfg)


def _check_fb(spec, fb):
    fb = np.asarray(fb, dtype=np.float64)
    if fb.ndim != 2 or fb.shape[1] != spec.data.shape[-1]:
        raise ValueError(f"filterbank shape {fb.shape} does not match {spec.data.shape[-1]} bins")
    return fb


def log_mel(spec, fb, channels=None):
    """``log(fb @ |X|^2 + 1e-10)`` per channel."""
    fb = _check_fb(spec, fb)
    energies = spec.power() @ fb.T
    if channels is None:
        channels = tuple(f"logmel-{i}" for i in range(spec.n_channels))
    return FeatureTensor(np.log(energies + LOG_EPS), channels)


def intensity_terms(spec):
    """Unnormalised intensity ``2 Re(w* [x, y, z])`` and total bin energy.

    Returns ``(numerator, energy)`` shaped ``(3, frames, bins)`` and
    ``(frames, bins)``.
    """
    if spec.n_channels != 4:
        raise ValueError(f"intensity needs 4 FOA channels, got {spec.n_channels}")
    w, y, z, x = spec.data
    numerator = 2.0 * np.real(np.conj(w)[np.newaxis] * np.stack([x, y, z]))
    energy = spec.power().sum(axis=0)
    return numerator, energy


def _guarded_ratio(num, den):
    safe = den >= GUARD_EPS
    out = np.zeros(np.broadcast_shapes(num.shape, den.shape))
    np.divide(num, den, out=out, where=np.broadcast_to(safe, out.shape))
    return out


def active_intensity(spec):
    """Normalised active intensity per bin, ``(3, frames, bins)`` in (x, y, z) order."""
    numerator, energy = intensity_terms(spec)
    return _guarded_ratio(numerator, energy[np.newaxis])


def aggregate_intensity_mel(numerator, energy, fb):
    """Ratio-of-sums mel aggregation; ``|result| <= 1`` per band."""
    fb = np.asarray(fb, dtype=np.float64)
    numerator = np.asarray(numerator, dtype=np.float64)
    energy = np.asarray(energy, dtype=np.float64)
    if numerator.shape[1:] != energy.shape or energy.shape[-1] != fb.shape[1]:
        raise ValueError("numerator, energy and filterbank shapes do not match")
    band_num = numerator @ fb.T
    band_den = energy @ fb.T
    data = _guarded_ratio(band_num, band_den[np.newaxis])
    return FeatureTensor(data, FOA_CHANNELS[4:])


def foa_features(x, cfg=None, fb=None):
    """Seven-channel FOA stack: log-mel W, Y, Z, X then intensity x, y, z."""
    cfg = cfg or StftConfig()
    if not isinstance(x, FoaSignal):
        x = FoaSignal(24000.0, x)
    samples, sample_rate = x.samples, x.sample_rate
    if fb is None:
        fb = mel_filterbank(sample_rate, cfg.fft_size)
    spec = stft(samples, cfg, sample_rate)
    mel = log_mel(spec, fb)
    numerator, energy = intensity_terms(spec)
    iv = aggregate_intensity_mel(numerator, energy, fb)
    return FeatureTensor(
        np.concatenate([mel.data, iv.data]),
        FOA_CHANNELS,
        {"sample_rate": float(sample_rate), "format": "foa"},
    )


def _check_stereo(spec):
    if spec.n_channels != 2:
        raise ValueError(f"expected 2 channels (L, R), got {spec.n_channels}")
    return spec.data[0], spec.data[1]


def icld(spec):
    """Inter-channel level difference ``2 log|l| - 2 log|r|`` per bin."""
    left, right = _check_stereo(spec)
    return 2.0 * np.log(np.abs(left) + LOG_EPS) - 2.0 * np.log(np.abs(right) + LOG_EPS)


def ipd(spec):
    """``(2, frames, bins)`` cos/sin of the L-R phase difference.

    Bins where either channel is below 1e-12 in magnitude get (1, 0).
    """
    left, right = _check_stereo(spec)
    cross = left * np.conj(right)
    mag = np.abs(left) * np.abs(right)
    active = (np.abs(left) >= GUARD_EPS) & (np.abs(right) >= GUARD_EPS)
    cos = np.ones(cross.shape)
    sin = np.zeros(cross.shape)
    np.divide(cross.real, mag, out=cos, where=active)
    np.divide(cross.imag, mag, out=sin, where=active)
    return np.stack([cos, sin])


def _weighted_band_mean(values, weights, fb, default):
    num = (values * weights) @ fb.T
    den = weights @ fb.T
    out = np.full(np.broadcast_shapes(num.shape, den.shape), float(default))
    np.divide(num, den, out=out, where=den >= GUARD_EPS)
    return out


def stereo_features(y, cfg=None, fb=None, sample_rate=24000.0):
    """Five-channel stereo stack: log-mel L, R, ICLD, IPD cos, IPD sin.

    ICLD and IPD are averaged per mel band, each bin weighted by the
    filterbank times its total stereo energy.
    """
    cfg = cfg or StftConfig()
    samples = check_multichannel(y, n_channels=2, name="stereo samples")
    if fb is None:
        fb = mel_filterbank(sample_rate, cfg.fft_size)
    spec = stft(samples, cfg, sample_rate)
    fb = _check_fb(spec, fb)
    mel = log_mel(spec, fb)
    weights = spec.power().sum(axis=0)
    level = _weighted_band_mean(icld(spec), weights, fb, 0.0)
    phase = ipd(spec)
    cos = _weighted_band_mean(phase[0], weights, fb, 1.0)
    sin = _weighted_band_mean(phase[1], weights, fb, 0.0)
    return FeatureTensor(
        np.concatenate([mel.data, np.stack([level, cos, sin])]),
        STEREO_CHANNELS,
        {"sample_rate": float(sample_rate), "format": "stereo"},
    )


def mono_features(s, cfg=None, fb=None, sample_rate=24000.0):
    """Single-channel log-mel, e.g. of a beamformed signal."""
    cfg = cfg or StftConfig()
    samples = check_multichannel(s, n_channels=1, name="mono samples")
    if fb is None:
        fb = mel_filterbank(sample_rate, cfg.fft_size)
    spec = stft(samples, cfg, sample_rate)
    mel = log_mel(spec, fb, MONO_CHANNELS)
    return FeatureTensor(mel.data, MONO_CHANNELS, {"sample_rate": float(sample_rate), "format": "mono"})


class _SpectralFeatures(TransformerMixin, BaseEstimator):
    n_input_channels = None

    def __init__(self, sample_rate=24000.0, window_length=504, hop_length=240, fft_size=512, n_mels=128):
        self.sample_rate = sample_rate
        self.window_length = window_length
        self.hop_length = hop_length
        self.fft_size = fft_size
        self.n_mels = n_mels

    def fit(self, X=None, y=None):
        self.config_ = StftConfig(self.window_length, self.hop_length, self.fft_size)
        self.filterbank_ = mel_filterbank(self.sample_rate, self.fft_size, self.n_mels)
        return self

    def _extract(self, item):
        raise NotImplementedError

    def transform(self, X):
        """Map ``(n_items, channels, n_samples)`` to ``(n_items, C, frames, n_mels)``."""
        check_is_fitted(self, "filterbank_")
        arr, single = check_batch(X, self.n_input_channels)
        out = np.stack([self._extract(item).data for item in arr])
        return out[0] if single else out


class FoaFeatureExtractor(_SpectralFeatures):
    """Log-mel plus mel-aggregated intensity-vector features from FOA clips."""

    n_input_channels = 4

    def _extract(self, item):
        return foa_features(FoaSignal(self.sample_rate, item), self.config_, self.filterbank_)


class StereoFeatureExtractor(_SpectralFeatures):
    """Log-mel, ICLD and IPD features from (L, R) clips."""

    n_input_channels = 2

    def _extract(self, item):
        return stereo_features(item, self.config_, self.filterbank_, self.sample_rate)


class LogMelExtractor(_SpectralFeatures):
    n_input_channels = 1

    def _extract(self, item):
        return mono_features(item, self.config_, self.filterbank_, self.sample_rate)
