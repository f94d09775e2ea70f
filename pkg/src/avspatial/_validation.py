"""Input validation helpers shared by the functional API and the estimators."""

import numpy as np


def check_signal(signal, name="signal"):
    """Return a 1-D float64 copy of ``signal``, rejecting empty or non-finite input."""
    arr = np.asarray(signal, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_multichannel(samples, n_channels=None, name="samples"):
    """Return a ``(channels, n)`` float64 array.

    A 1-D input is promoted to a single channel. ``n_channels`` pins the
    expected channel count.
    """
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be (channels, samples), got shape {arr.shape}")
    if n_channels is not None and arr.shape[0] != n_channels:
        raise ValueError(f"{name} must have {n_channels} channels, got {arr.shape[0]}")
    if arr.shape[1] == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_batch(X, n_channels, name="X"):
    """Coerce ``X`` to a finite ``(n_items, channels, n)`` array.

    Accepts a single ``(channels, n)`` item as well; the second return value
    tells the caller whether to squeeze the batch axis back out. For mono
    input, 1-D is a single signal and 2-D is a batch of signals.
    """
    arr = np.asarray(X, dtype=np.float64)
    if n_channels == 1 and arr.ndim in (1, 2):
        single = arr.ndim == 1
        arr = arr.reshape(-1, 1, arr.shape[-1])
    else:
        single = arr.ndim == 2
        if single:
            arr = arr[np.newaxis]
    if arr.ndim != 3 or arr.shape[1] != n_channels:
        raise ValueError(
            f"{name} must have shape (n_items, {n_channels}, n_samples) "
            f"or ({n_channels}, n_samples), got {np.shape(X)}"
        )
    if arr.shape[2] == 0:
        raise ValueError(f"{name} has zero-length items")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr, single


def check_positive(value, name):
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be positive and finite, got {value!r}")
    return value
