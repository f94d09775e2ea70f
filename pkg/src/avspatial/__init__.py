"""Spatial audio and 360-degree video tools for audio-visual alignment learning."""

__version__ = "0.1.0"

from .alignment import (
    ContrastiveAligner,
    avc_targets,
    avsa_targets,
    backprop_to_embeddings,
    contrastive_loss,
    cosine_similarity_matrix,
    retrieval_accuracy,
    toy_train,
)
from .ambisonics import (
    Beamformer,
    CropAligner,
    Direction,
    FoaRotation,
    FoaRotator,
    FoaSignal,
    RotationAngles,
    SceneSpec,
    StereoExtractor,
    align_to_crop,
    beamform,
    encode_direction,
    encode_source,
    extract_stereo,
    rotate,
    rotation_matrix,
    synthesize_scene,
)
from .features import (
    FoaFeatureExtractor,
    LogMelExtractor,
    StereoFeatureExtractor,
    StftConfig,
    foa_features,
    mel_filterbank,
    stereo_features,
    stft,
)
from .validity import AmbisonicValidityChecker, ValidityConfig, scan_corpus, validity_test

__all__ = [
    "AmbisonicValidityChecker",
    "Beamformer",
    "ContrastiveAligner",
    "CropAligner",
    "Direction",
    "FoaFeatureExtractor",
    "FoaRotation",
    "FoaRotator",
    "FoaSignal",
    "LogMelExtractor",
    "RotationAngles",
    "SceneSpec",
    "StereoExtractor",
    "StereoFeatureExtractor",
    "StftConfig",
    "ValidityConfig",
    "align_to_crop",
    "avc_targets",
    "avsa_targets",
    "backprop_to_embeddings",
    "beamform",
    "contrastive_loss",
    "cosine_similarity_matrix",
    "encode_direction",
    "encode_source",
    "extract_stereo",
    "foa_features",
    "mel_filterbank",
    "retrieval_accuracy",
    "rotate",
    "rotation_matrix",
    "scan_corpus",
    "stereo_features",
    "stft",
    "synthesize_scene",
    "toy_train",
    "validity_test",
]
