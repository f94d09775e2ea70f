"""First-order Ambisonics: encoding, scene synthesis, rotation and beamforming.

Signals are ambiX: ACN channel order (W, Y, Z, X) with SN3D normalisation.
Directions use azimuth counter-clockwise from the front (left = +90 deg) and
elevation positive upwards. The Cartesian frame is x = front, y = left,
z = up, so the dipole channels Y, Z, X carry the y, z, x components of the
unit direction-of-arrival vector.

Rotation convention
-------------------
``rotation_matrix`` builds an *active* rotation of the sound field::

    R = Rz(yaw) @ Ry(pitch) @ Rx(roll)

    Rz(a) = [[cos a, -sin a, 0], [sin a, cos a, 0], [0, 0, 1]]
    Ry(b) = [[cos b, 0, sin b], [0, 1, 0], [-sin b, 0, cos b]]
    Rx(c) = [[1, 0, 0], [0, cos c, -sin c], [0, sin c, cos c]]

acting on (x, y, z) and re-expressed in the (Y, Z, X) channel basis. A
positive yaw moves a source to the left; a positive pitch tilts the front
downwards. Aligning the field with a look direction (theta0, phi0) is the
*listener* rotation with yaw theta0 and pitch -phi0, which is the transpose
of the field rotation with those angles; ``align_to_crop`` applies it.
"""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_batch, check_multichannel, check_positive, check_signal

__all__ = [
    "Direction",
    "FoaGainVector",
    "FoaSignal",
    "RotationAngles",
    "FoaRotation",
    "SceneSpec",
    "encode_direction",
    "encode_source",
    "fibonacci_sphere",
    "synthesize_scene",
    "rotation_matrix",
    "rotate",
    "align_to_crop",
    "beamform",
    "extract_stereo",
    "FoaRotator",
    "CropAligner",
    "Beamformer",
    "StereoExtractor",
]

CHANNELS = ("W", "Y", "Z", "X")

# (x, y, z) -> (Y, Z, X) channel order
_XYZ_TO_CHANNEL = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])


def _wrap_angle(angle):
    """Map an angle in radians into (-pi, pi]."""
    wrapped = np.pi - np.mod(np.pi - angle, 2.0 * np.pi)
    return float(wrapped)


@dataclass(frozen=True)
class Direction:
    """Azimuth/elevation pair in radians."""

    azimuth: float
    elevation: float = 0.0

    def __post_init__(self):
        az = float(self.azimuth)
        el = float(self.elevation)
        if not (np.isfinite(az) and np.isfinite(el)):
            raise ValueError("direction angles must be finite")
        if abs(el) > np.pi / 2:
            raise ValueError(f"elevation {el!r} outside [-pi/2, pi/2]")
        object.__setattr__(self, "azimuth", _wrap_angle(az))
        object.__setattr__(self, "elevation", el)

    @classmethod
    def from_degrees(cls, azimuth, elevation=0.0):
        return cls(np.deg2rad(azimuth), np.deg2rad(elevation))

    @classmethod
    def from_vector(cls, vec):
        """Direction of a Cartesian (x, y, z) vector; the norm is ignored."""
        x, y, z = (float(v) for v in vec)
        norm = np.sqrt(x * x + y * y + z * z)
        if norm == 0.0:
            raise ValueError("zero vector has no direction")
        el = float(np.arcsin(np.clip(z / norm, -1.0, 1.0)))
        return cls(float(np.arctan2(y, x)), el)

    def to_degrees(self):
        return float(np.rad2deg(self.azimuth)), float(np.rad2deg(self.elevation))

    def unit_vector(self):
        """Cartesian unit vector (x, y, z)."""
        ce = np.cos(self.elevation)
        return np.array(
            [np.cos(self.azimuth) * ce, np.sin(self.azimuth) * ce, np.sin(self.elevation)]
        )


FRONT = Direction(0.0, 0.0)


@dataclass(frozen=True)
class FoaGainVector:
    w: float
    y: float
    z: float
    x: float

    def as_array(self):
        return np.array([self.w, self.y, self.z, self.x])


@dataclass(frozen=True)
class FoaSignal:
    """Four-channel ambiX buffer, ``samples`` shaped ``(4, n)``."""

    sample_rate: float
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        check_positive(self.sample_rate, "sample_rate")
        arr = check_multichannel(self.samples, n_channels=4, name="FOA samples")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @property
    def n_samples(self):
        return self.samples.shape[1]

    @property
    def w(self):
        return self.samples[0]

    def energy(self):
        """Total energy summed over all four channels."""
        return float(np.sum(self.samples**2))


@dataclass(frozen=True)
class RotationAngles:
    yaw: float = 0.0
    pitch: float = 0.0
    roll: float = 0.0

    def __post_init__(self):
        if not all(np.isfinite([self.yaw, self.pitch, self.roll])):
            raise ValueError("rotation angles must be finite")

    @classmethod
    def from_degrees(cls, yaw=0.0, pitch=0.0, roll=0.0):
        return cls(*np.deg2rad([yaw, pitch, roll]))


@dataclass(frozen=True)
class FoaRotation:
    """4x4 FOA rotation; W passes through, the 3x3 block acts on (Y, Z, X)."""

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"rotation matrix must be 4x4, got {m.shape}")
        if m[0, 0] != 1.0 or np.any(m[0, 1:] != 0.0) or np.any(m[1:, 0] != 0.0):
            raise ValueError("rotation must leave the W channel untouched")
        block = m[1:, 1:]
        if not np.allclose(block.T @ block, np.eye(3), atol=1e-12):
            raise ValueError("rotation block is not orthonormal")
        if abs(np.linalg.det(block) - 1.0) > 1e-12:
            raise ValueError("rotation block is not proper (det != +1)")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def block(self):
        return self.matrix[1:, 1:]

    def cartesian(self):
        """The same rotation acting on (x, y, z) vectors."""
        return _XYZ_TO_CHANNEL.T @ self.block @ _XYZ_TO_CHANNEL

    def inverse(self):
        return FoaRotation(self.matrix.T)

    def apply_to_direction(self, d):
        return Direction.from_vector(self.cartesian() @ d.unit_vector())

    def __matmul__(self, other):
        return FoaRotation(self.matrix @ other.matrix)


@dataclass(frozen=True)
class SceneSpec:
    """Plane-wave sources plus an isotropic diffuse field.

    ``sources`` is a sequence of ``(Direction, mono_signal)`` pairs.
    ``n_samples`` is only needed when there are no sources.
    """

    sources: tuple = ()
    sample_rate: float = 24000.0
    diffuse_gain: float = 0.0
    diffuse_component_count: int = 64
    seed: int = 0
    n_samples: int | None = None

    def __post_init__(self):
        check_positive(self.sample_rate, "sample_rate")
        if not np.isfinite(self.diffuse_gain) or self.diffuse_gain < 0:
            raise ValueError("diffuse_gain must be >= 0")
        if int(self.diffuse_component_count) < 1:
            raise ValueError("diffuse_component_count must be >= 1")
        object.__setattr__(self, "sources", tuple(self.sources))
        lengths = {len(np.asarray(s)) for _, s in self.sources}
        if len(lengths) > 1:
            raise ValueError(f"source signals have mismatched lengths {sorted(lengths)}")
        if lengths:
            (n,) = lengths
            if self.n_samples is not None and self.n_samples != n:
                raise ValueError(f"n_samples={self.n_samples} but sources have {n} samples")
            object.__setattr__(self, "n_samples", n)
        elif self.n_samples is None or self.n_samples < 1:
            raise ValueError("n_samples is required when the scene has no sources")


def encode_direction(d):
    """Directional response ``[1, sin az cos el, sin el, cos az cos el]``."""
    ce = np.cos(d.elevation)
    return FoaGainVector(
        1.0,
        float(np.sin(d.azimuth) * ce),
        float(np.sin(d.elevation)),
        float(np.cos(d.azimuth) * ce),
    )


def encode_source(signal, d, sample_rate=24000.0):
    """Encode a mono signal as a plane wave arriving from ``d``."""
    s = check_signal(signal)
    gains = encode_direction(d).as_array()
    return FoaSignal(sample_rate, gains[:, np.newaxis] * s[np.newaxis, :])


def fibonacci_sphere(n):
    """``n`` near-uniform directions on the sphere (golden-angle spiral)."""
    k = np.arange(n, dtype=np.float64)
    z = 1.0 - (2.0 * k + 1.0) / n
    golden = np.pi * (3.0 - np.sqrt(5.0))
    az = k * golden
    return [Direction(float(a), float(np.arcsin(zz))) for a, zz in zip(az, z)]


def synthesize_scene(spec):
    """Sum of plane-wave sources and a seeded diffuse noise field.

    The diffuse part is ``diffuse_component_count`` independent unit-variance
    Gaussian noise plane waves on a Fibonacci lattice, each scaled by
    ``diffuse_gain / sqrt(count)`` so the diffuse W power equals
    ``diffuse_gain**2``.
    """
    n = spec.n_samples
    out = np.zeros((4, n))
    for direction, signal in spec.sources:
        out += encode_source(signal, direction, spec.sample_rate).samples
    if spec.diffuse_gain > 0:
        count = int(spec.diffuse_component_count)
        rng = np.random.default_rng(spec.seed)
        noise = rng.standard_normal((count, n))
        gains = np.stack([encode_direction(d).as_array() for d in fibonacci_sphere(count)])
        scale = spec.diffuse_gain / np.sqrt(count)
        out += scale * (gains.T @ noise)
    return FoaSignal(spec.sample_rate, out)


def rotation_matrix(angles):
    """Active yaw-pitch-roll rotation ``Rz(yaw) Ry(pitch) Rx(roll)`` of the field."""
    ca, sa = np.cos(angles.yaw), np.sin(angles.yaw)
    cb, sb = np.cos(angles.pitch), np.sin(angles.pitch)
    cc, sc = np.cos(angles.roll), np.sin(angles.roll)
    rz = np.array([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cc, -sc], [0.0, sc, cc]])
    block = _XYZ_TO_CHANNEL @ (rz @ ry @ rx) @ _XYZ_TO_CHANNEL.T
    m = np.eye(4)
    m[1:, 1:] = block
    return FoaRotation(m)


def rotate(x, q):
    out = np.empty_like(x.samples)
    # W is copied rather than multiplied so it stays bit-identical.
    out[0] = x.samples[0]
    out[1:] = q.block @ x.samples[1:]
    return FoaSignal(x.sample_rate, out)


def crop_alignment(crop):
    """Rotation that brings the look direction ``crop`` to the front."""
    return rotation_matrix(RotationAngles(crop.azimuth, -crop.elevation, 0.0)).inverse()


def align_to_crop(x, crop):
    return rotate(x, crop_alignment(crop))


def beamform(x, d):
    """``u(d)^T x(n)``: a first-order beam with W weight 1 steered at ``d``."""
    return encode_direction(d).as_array() @ x.samples


_STEREO_GAINS = np.stack(
    [encode_direction(Direction(np.pi / 2)).as_array(), encode_direction(Direction(-np.pi / 2)).as_array()]
)


def extract_stereo(x, crop=FRONT):
    """Left/right beams at +-90 deg around ``crop``; returns ``(2, n)`` (L, R)."""
    return (_STEREO_GAINS @ crop_alignment(crop).matrix) @ x.samples


# -- scikit-learn style wrappers ---------------------------------------------
# Each accepts (n_items, 4, n_samples) arrays or a single (4, n_samples) item.


def _direction_param(azimuth, elevation):
    return Direction.from_degrees(azimuth, elevation)


class FoaRotator(TransformerMixin, BaseEstimator):
    """Rotate FOA signals by fixed yaw/pitch/roll angles given in degrees."""

    def __init__(self, yaw=0.0, pitch=0.0, roll=0.0):
        self.yaw = yaw
        self.pitch = pitch
        self.roll = roll

    def fit(self, X=None, y=None):
        self.rotation_ = rotation_matrix(RotationAngles.from_degrees(self.yaw, self.pitch, self.roll))
        return self

    def transform(self, X):
        check_is_fitted(self, "rotation_")
        arr, single = check_batch(X, 4)
        out = np.empty_like(arr)
        out[:, 0] = arr[:, 0]
        out[:, 1:] = np.einsum("ij,njt->nit", self.rotation_.block, arr[:, 1:])
        return out[0] if single else out


class CropAligner(FoaRotator):
    """Rotate FOA signals so the look direction (degrees) becomes the front."""

    def __init__(self, azimuth=0.0, elevation=0.0):
        self.azimuth = azimuth
        self.elevation = elevation

    def fit(self, X=None, y=None):
        self.rotation_ = crop_alignment(_direction_param(self.azimuth, self.elevation))
        return self


class Beamformer(TransformerMixin, BaseEstimator):
    """Steer a first-order beam towards (azimuth, elevation) in degrees."""

    def __init__(self, azimuth=0.0, elevation=0.0):
        self.azimuth = azimuth
        self.elevation = elevation

    def fit(self, X=None, y=None):
        self.weights_ = encode_direction(_direction_param(self.azimuth, self.elevation)).as_array()
        return self

    def transform(self, X):
        check_is_fitted(self, "weights_")
        arr, single = check_batch(X, 4)
        out = np.einsum("c,nct->nt", self.weights_, arr)
        return out[0] if single else out


class StereoExtractor(TransformerMixin, BaseEstimator):
    """Left/right stereo pair around a crop centre given in degrees."""

    def __init__(self, azimuth=0.0, elevation=0.0):
        self.azimuth = azimuth
        self.elevation = elevation

    def fit(self, X=None, y=None):
        crop = _direction_param(self.azimuth, self.elevation)
        self.gains_ = _STEREO_GAINS @ crop_alignment(crop).matrix
        return self

    def transform(self, X):
        check_is_fitted(self, "gains_")
        arr, single = check_batch(X, 4)
        out = np.einsum("sc,nct->nst", self.gains_, arr)
        return out[0] if single else out
