"""Contrastive audio-visual alignment: similarities, targets, loss and gradients.

Embedding batches are ``(N, K, D)`` arrays: ``N`` clips, ``K`` crops per clip
(1 for correspondence, 4 for spatial alignment) and ``D`` features. They are
flattened clip-major, crop-minor, so flat row ``i * K + k`` is crop ``k`` of
clip ``i``. Every target mask and similarity index relies on that order.

The toy trainer replaces the deep encoders with linear heads, and the
audio-to-video / video-to-audio translation networks with linear maps. The
similarity, target and loss machinery is the real thing.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

logger = logging.getLogger(__name__)

NORM_EPS = 1e-12
MODES = ("avc", "avsa")


class TrainingDivergedError(FloatingPointError):
    def __init__(self, epoch, loss):
        super().__init__(f"loss became non-finite ({loss}) at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


def flatten(batch):
    """``(N, K, D)`` or ``(M, D)`` -> ``(N*K, D)`` float64."""
    arr = np.asarray(batch, dtype=np.float64)
    if arr.ndim == 3:
        return arr.reshape(-1, arr.shape[-1])
    if arr.ndim != 2:
        raise ValueError(f"embedding batch must be 2-D or 3-D, got shape {arr.shape}")
    return arr


def _unit_rows(x):
    norms = np.linalg.norm(x, axis=1)
    ok = norms >= NORM_EPS
    unit = np.zeros_like(x)
    unit[ok] = x[ok] / norms[ok, np.newaxis]
    return unit, norms, ok


def cosine_similarity_matrix(predicted, target):
    """``S[r, c] = cos(predicted_r, target_c)``; rows with zero norm give 0."""
    p = flatten(predicted)
    t = flatten(target)
    if p.shape[1] != t.shape[1]:
        raise ValueError(f"embedding dimensions differ: {p.shape[1]} vs {t.shape[1]}")
    p_hat, _, _ = _unit_rows(p)
    t_hat, _, _ = _unit_rows(t)
    return np.clip(p_hat @ t_hat.T, -1.0, 1.0)


def avc_targets(n_clips):
    """Positives only where audio and crop come from the same clip."""
    if n_clips < 1:
        raise ValueError("need at least one clip")
    return np.eye(n_clips, dtype=np.int8)


def avsa_targets(n_clips, n_crops=4):
    """Positives only for the same clip *and* the same crop.

    Same-clip, different-crop pairs are negatives, which under the
    clip-major flattening leaves the identity.
    """
    if n_clips < 1 or n_crops < 1:
        raise ValueError("need at least one clip and one crop")
    return np.eye(n_clips * n_crops, dtype=np.int8)


def _log_softmax(logits):
    peak = np.max(logits, axis=1, keepdims=True)
    shifted = logits - peak
    return shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))


def contrastive_loss(similarity, targets, temperature=1.0):
    """Row-wise cross-entropy of ``softmax(S / temperature)`` against ``targets``.

    Returns ``(loss, dloss_dS)``. The loss is the mean over rows of the
    negative log-probability of each row's positive column.
    """
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    s = np.asarray(similarity, dtype=np.float64)
    m = np.asarray(targets, dtype=np.float64)
    if s.shape != m.shape or s.ndim != 2:
        raise ValueError(f"similarity {s.shape} and targets {m.shape} must be equal 2-D shapes")
    if not np.all(m.sum(axis=1) == 1):
        raise ValueError("each target row needs exactly one positive")
    rows = s.shape[0]
    log_p = _log_softmax(s / temperature)
    loss = -float(np.sum(log_p[m == 1])) / rows
    grad = (np.exp(log_p) - m) / (temperature * rows)
    return loss, grad


def backprop_to_embeddings(grad_similarity, predicted, target):
    """Chain ``dL/dS`` through the cosine similarity to both embedding sets.

    Returns ``(dL/dpredicted, dL/dtarget)`` flattened to ``(rows, D)``. Rows
    with (near) zero norm get zero gradient and trigger a warning.
    """
    g = np.asarray(grad_similarity, dtype=np.float64)
    p = flatten(predicted)
    t = flatten(target)
    if g.shape != (p.shape[0], t.shape[0]):
        raise ValueError(f"gradient shape {g.shape} does not match {p.shape[0]}x{t.shape[0]}")
    p_hat, p_norm, p_ok = _unit_rows(p)
    t_hat, t_norm, t_ok = _unit_rows(t)
    if not (p_ok.all() and t_ok.all()):
        warnings.warn(
            f"zero-norm embeddings (predicted rows {np.flatnonzero(~p_ok).tolist()}, "
            f"target rows {np.flatnonzero(~t_ok).tolist()}); their gradient is zeroed",
            RuntimeWarning,
            stacklevel=2,
        )

    def through_norm(g_hat, unit, norms, ok):
        # d(x/|x|)/dx = (I - u u^T) / |x|
        radial = np.sum(g_hat * unit, axis=1, keepdims=True)
        out = np.zeros_like(g_hat)
        out[ok] = (g_hat[ok] - radial[ok] * unit[ok]) / norms[ok, np.newaxis]
        return out

    d_p = through_norm(g @ t_hat, p_hat, p_norm, p_ok)
    d_t = through_norm(g.T @ p_hat, t_hat, t_norm, t_ok)
    return d_p, d_t


def retrieval_accuracy(similarity, targets):
    """Fraction of rows whose arg-max column is the positive.

    Ties resolve to the lowest column index, so a tied row only counts when
    that index is its positive.
    """
    s = np.asarray(similarity)
    m = np.asarray(targets)
    if s.shape != m.shape:
        raise ValueError("similarity and targets must have the same shape")
    return float(np.mean(np.argmax(s, axis=1) == np.argmax(m, axis=1)))


# -- synthetic data and the toy trainer -----------------------------------------


@dataclass
class SyntheticPairs:
    """Paired audio/video features driven by a shared latent direction code.

    Each (clip, crop) draws a unit latent vector; audio and video features are
    fixed random linear read-outs of it plus Gaussian noise. The read-outs are
    fixed by ``world_seed`` so train and held-out sets come from one world.
    """

    latent_dim: int = 8
    audio_dim: int = 32
    video_dim: int = 32
    noise: float = 0.05
    world_seed: int = 0
    audio_mixing: np.ndarray = field(init=False, repr=False)
    video_mixing: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.world_seed)
        self.audio_mixing = rng.standard_normal((self.latent_dim, self.audio_dim))
        self.video_mixing = rng.standard_normal((self.latent_dim, self.video_dim))

    def sample(self, n_clips, n_crops, seed, shuffle=False):
        """Return ``(audio, video)`` shaped ``(N, K, audio_dim)``/``(N, K, video_dim)``.

        ``shuffle`` breaks the pairing by permuting the video items.
        """
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((n_clips * n_crops, self.latent_dim))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        audio = z @ self.audio_mixing + self.noise * rng.standard_normal((len(z), self.audio_dim))
        video = z @ self.video_mixing + self.noise * rng.standard_normal((len(z), self.video_dim))
        if shuffle:
            video = video[rng.permutation(len(video))]
        return (
            audio.reshape(n_clips, n_crops, self.audio_dim),
            video.reshape(n_clips, n_crops, self.video_dim),
        )


@dataclass
class ToyHeads:
    """Linear heads and translation maps.

    ``audio_head``/``video_head`` project features to target embeddings.
    In AVSA mode ``a2v``/``v2a`` translate target embeddings into the other
    modality's predicted embeddings; in AVC mode they are ``None`` and each
    modality's target doubles as the other's prediction.
    """

    audio_head: np.ndarray
    video_head: np.ndarray
    a2v: np.ndarray | None = None
    v2a: np.ndarray | None = None

    @classmethod
    def init(cls, audio_dim, video_dim, embed_dim, mode, rng):
        heads = cls(
            rng.standard_normal((audio_dim, embed_dim)) / np.sqrt(audio_dim),
            rng.standard_normal((video_dim, embed_dim)) / np.sqrt(video_dim),
        )
        if mode == "avsa":
            heads.a2v = np.eye(embed_dim) + rng.standard_normal((embed_dim, embed_dim)) / np.sqrt(embed_dim)
            heads.v2a = np.eye(embed_dim) + rng.standard_normal((embed_dim, embed_dim)) / np.sqrt(embed_dim)
        return heads

    def params(self):
        return {k: v for k, v in vars(self).items() if v is not None}

    def forward(self, audio, video):
        """Return ``(pred_audio, target_audio, pred_video, target_video)``."""
        a_tgt = flatten(audio) @ self.audio_head
        v_tgt = flatten(video) @ self.video_head
        if self.a2v is None:
            return v_tgt, a_tgt, a_tgt, v_tgt
        return v_tgt @ self.v2a, a_tgt, a_tgt @ self.a2v, v_tgt


def symmetric_loss(heads, audio, video, targets, temperature=1.0):
    """Mean of the audio-side and video-side contrastive losses, with gradients.

    Returns ``(loss, grads)`` where ``grads`` maps parameter names to arrays.
    """
    a = flatten(audio)
    v = flatten(video)
    a_pred, a_tgt, v_pred, v_tgt = heads.forward(a, v)
    loss_a, g_sa = contrastive_loss(cosine_similarity_matrix(a_pred, a_tgt), targets, temperature)
    loss_v, g_sv = contrastive_loss(cosine_similarity_matrix(v_pred, v_tgt), targets, temperature)
    d_a_pred, d_a_tgt = backprop_to_embeddings(0.5 * g_sa, a_pred, a_tgt)
    d_v_pred, d_v_tgt = backprop_to_embeddings(0.5 * g_sv, v_pred, v_tgt)

    grads = {}
    if heads.a2v is None:
        d_a = d_a_tgt + d_v_pred
        d_v = d_v_tgt + d_a_pred
    else:
        a_tgt_raw = a @ heads.audio_head
        v_tgt_raw = v @ heads.video_head
        grads["v2a"] = v_tgt_raw.T @ d_a_pred
        grads["a2v"] = a_tgt_raw.T @ d_v_pred
        d_a = d_a_tgt + d_v_pred @ heads.a2v.T
        d_v = d_v_tgt + d_a_pred @ heads.v2a.T
    grads["audio_head"] = a.T @ d_a
    grads["video_head"] = v.T @ d_v
    return 0.5 * (loss_a + loss_v), grads


def evaluate(heads, audio, video, targets):
    """Mean retrieval accuracy of the audio-side and video-side similarities."""
    a_pred, a_tgt, v_pred, v_tgt = heads.forward(audio, video)
    acc_a = retrieval_accuracy(cosine_similarity_matrix(a_pred, a_tgt), targets)
    acc_v = retrieval_accuracy(cosine_similarity_matrix(v_pred, v_tgt), targets)
    return 0.5 * (acc_a + acc_v)


def _targets_for(mode, n_clips, n_crops):
    if mode == "avc":
        if n_crops != 1:
            raise ValueError("AVC mode uses one crop per clip")
        return avc_targets(n_clips)
    if mode == "avsa":
        return avsa_targets(n_clips, n_crops)
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


@dataclass
class TrainResult:
    heads: ToyHeads
    loss_curve: list
    train_accuracy: float
    heldout_accuracy: float | None = None


def toy_train(
    audio,
    video,
    mode="avsa",
    epochs=500,
    lr=1.0,
    seed=0,
    temperature=1.0,
    embed_dim=128,
    heldout=None,
):
    """Full-batch gradient descent on the symmetric contrastive loss.

    ``audio``/``video`` are ``(N, K, F)`` paired features. ``heldout`` is an
    optional ``(audio, video)`` pair scored after training. Raises
    :class:`TrainingDivergedError` if the loss stops being finite.
    """
    audio = np.asarray(audio, dtype=np.float64)
    video = np.asarray(video, dtype=np.float64)
    if audio.ndim != 3 or video.ndim != 3 or audio.shape[:2] != video.shape[:2]:
        raise ValueError("audio and video must be (N, K, F) with matching N and K")
    n_clips, n_crops = audio.shape[:2]
    if n_clips < 2:
        raise ValueError("contrastive training needs at least two clips")
    targets = _targets_for(mode, n_clips, n_crops)
    rng = np.random.default_rng(seed)
    heads = ToyHeads.init(audio.shape[2], video.shape[2], embed_dim, mode, rng)

    curve = []
    for epoch in range(epochs):
        loss, grads = symmetric_loss(heads, audio, video, targets, temperature)
        if not np.isfinite(loss):
            raise TrainingDivergedError(epoch, loss)
        curve.append(loss)
        for name, g in grads.items():
            setattr(heads, name, getattr(heads, name) - lr * g)
        if epoch % 100 == 0:
            logger.debug("epoch %d loss %.6f", epoch, loss)

    train_acc = evaluate(heads, audio, video, targets)
    held = None
    if heldout is not None:
        h_audio, h_video = (np.asarray(x, dtype=np.float64) for x in heldout)
        held = evaluate(heads, h_audio, h_video, _targets_for(mode, *h_audio.shape[:2]))
    return TrainResult(heads, curve, train_acc, held)


class ContrastiveAligner(BaseEstimator):
    """Toy audio-visual aligner with a scikit-learn interface.

    ``fit(X, y)`` takes paired audio features ``X`` and video features ``y``,
    both ``(n_clips, n_crops, n_features)``; ``score`` returns retrieval
    accuracy and ``transform`` maps audio features to target embeddings.

    Parameters
    ----------
    mode : {"avc", "avsa"}
    epochs : int
    lr : float
        Gradient-descent step size.
    temperature : float
        Softmax temperature on the cosine similarities; 1 gives the plain
        cross-entropy on raw cosines.
    embed_dim : int
    random_state : int
    """

    def __init__(self, mode="avsa", epochs=500, lr=1.0, temperature=1.0, embed_dim=128, random_state=0):
        self.mode = mode
        self.epochs = epochs
        self.lr = lr
        self.temperature = temperature
        self.embed_dim = embed_dim
        self.random_state = random_state

    def fit(self, X, y):
        result = toy_train(
            X,
            y,
            mode=self.mode,
            epochs=self.epochs,
            lr=self.lr,
            seed=self.random_state,
            temperature=self.temperature,
            embed_dim=self.embed_dim,
        )
        self.heads_ = result.heads
        self.loss_curve_ = result.loss_curve
        return self

    def transform(self, X):
        check_is_fitted(self, "heads_")
        X = np.asarray(X, dtype=np.float64)
        out = flatten(X) @ self.heads_.audio_head
        return out.reshape(*X.shape[:-1], -1)

    def similarity(self, X, y):
        """Audio-side similarity matrix (predicted vs target audio)."""
        check_is_fitted(self, "heads_")
        a_pred, a_tgt, _, _ = self.heads_.forward(X, y)
        return cosine_similarity_matrix(a_pred, a_tgt)

    def score(self, X, y):
        check_is_fitted(self, "heads_")
        X = np.asarray(X)
        return evaluate(self.heads_, X, y, _targets_for(self.mode, *X.shape[:2]))
