"""WAV reading/writing with optional channel remapping.

Files are stored channel-last as usual; in memory everything is
``(channels, n_samples)`` float64. FOA files on disk are ACN (W, Y, Z, X).
"""

import json
from pathlib import Path

import numpy as np
from scipy.io import wavfile

SUBTYPES = ("float32", "int16", "float64")


def load_remap(path):
    """Read a JSON channel-remap table: a list of source channel indices."""
    with open(path, encoding="utf-8") as fh:
        table = json.load(fh)
    if not isinstance(table, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in table):
        raise ValueError(f"{path}: remap table must be a JSON array of integers")
    return table


def apply_remap(samples, remap):
    """Pick and reorder channels; output channel ``k`` is input ``remap[k]``."""
    if remap is None:
        return samples
    n_in = samples.shape[0]
    bad = [i for i in remap if not 0 <= i < n_in]
    if bad:
        raise ValueError(f"remap indices {bad} out of range for {n_in} channels")
    return samples[list(remap)]


def read_wav(path, remap=None):
    """Return ``(sample_rate, samples)`` with samples ``(channels, n)`` in [-1, 1]."""
    rate, data = wavfile.read(path)
    data = np.atleast_2d(data.T) if data.ndim == 2 else data[np.newaxis, :]
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    else:
        samples = data.astype(np.float64)
    return int(rate), apply_remap(samples, remap)


def write_wav(path, samples, sample_rate, subtype="float32"):
    """Write ``(channels, n)`` or 1-D samples as 32-bit float or 16-bit PCM.

    ``float64`` is also accepted for lossless intermediate files.
    """
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if subtype == "float32":
        out = arr.T.astype("<f4")
    elif subtype == "float64":
        out = arr.T.astype("<f8")
    elif subtype == "int16":
        out = np.clip(np.round(arr.T * 32768.0), -32768, 32767).astype("<i2")
    else:
        raise ValueError(f"subtype must be one of {SUBTYPES}, got {subtype!r}")
    wavfile.write(Path(path), int(sample_rate), np.ascontiguousarray(out))
