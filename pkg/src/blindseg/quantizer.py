"""
Vector quantization of MFCC frames with a k-means++ codebook.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .audio_features import FrameSequence


class InsufficientPointsError(ValueError):
    pass


@dataclass
class Codebook:
    centroids: np.ndarray
    inertia: float
    seed: int = 0
    history: list = field(default_factory=list, repr=False)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


@dataclass
class CategoricalSequence:
    symbols: np.ndarray
    utterance_id: str = ""
    hop_ms: float = 10.0
    n_symbols: int = 8

    def __len__(self):
        return len(self.symbols)

    def one_hot(self) -> np.ndarray:
        return np.eye(self.n_symbols)[np.asarray(self.symbols, dtype=int)]


def sample_frames(corpus, n: int = 10000, seed: int = 0) -> np.ndarray:
    """Draw ``n`` frames uniformly without replacement from a list of FrameSequence.

    If the corpus holds fewer than ``n`` frames, all of them are returned.
    """
    mats = [np.asarray(f.frames if isinstance(f, FrameSequence) else f) for f in corpus]
    mats = [m for m in mats if m.shape[0] > 0]
    if not mats:
        raise ValueError("empty corpus: no frames to sample")
    pool = np.concatenate(mats, axis=0)
    if pool.shape[0] <= n:
        return pool.copy()
    rng = np.random.default_rng(seed)
    idx = rng.choice(pool.shape[0], size=n, replace=False)
    return pool[np.sort(idx)]


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    # exact differences, not the |x|^2 - 2xc + |c|^2 expansion, so zero distances stay zero
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)


def assign(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Nearest centroid per row; ``argmin`` breaks ties toward the lowest index."""
    return np.argmin(_sq_dists(x, centroids), axis=1)


def inertia(x: np.ndarray, centroids: np.ndarray) -> float:
    return float(_sq_dists(x, centroids).min(axis=1).sum())


def kmeans_plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # every point already coincides with a center
            i = rng.integers(n)
        else:
            i = rng.choice(n, p=d2 / total)
        centers.append(x[i])
        d2 = np.minimum(d2, ((x - x[i]) ** 2).sum(axis=1))
    return np.array(centers, dtype=np.float64)


def lloyd(x: np.ndarray, centroids: np.ndarray, max_iter: int = 300):
    """
    Run Lloyd iterations until the assignment stops changing.

    Empty clusters are re-seeded to the point farthest from its current
    centroid. Returns ``(centroids, labels, inertia_history)`` where the
    history holds the cost after every assignment step.
    """
    centroids = centroids.copy()
    labels = None
    history = []
    for _ in range(max_iter):
        d = _sq_dists(x, centroids)
        new_labels = np.argmin(d, axis=1)
        history.append(float(d[np.arange(len(x)), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(centroids.shape[0]):
            members = labels == j
            if members.any():
                centroids[j] = x[members].mean(axis=0)
        counts = np.bincount(labels, minlength=centroids.shape[0])
        for j in np.flatnonzero(counts == 0):
            own = ((x - centroids[labels]) ** 2).sum(axis=1)
            far = int(np.argmax(own))
            counts[labels[far]] -= 1
            labels[far] = j
            counts[j] = 1
            centroids[j] = x[far]
    return centroids, labels, history


def fit_codebook(sample: np.ndarray, k: int = 8, n_init: int = 10, seed: int = 0,
                 max_iter: int = 300) -> Codebook:
    """Best-of-``n_init`` k-means++ clustering.

    Each run ``r`` seeds its own generator from ``(seed, r)`` so the result
    does not depend on run order.
    """
    x = np.asarray(sample, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < k:
        raise InsufficientPointsError(f"need at least k={k} points, got {x.shape[0]}")
    if np.unique(x, axis=0).shape[0] < k:
        raise InsufficientPointsError("insufficient distinct points for k clusters")

    best = None
    for run in range(n_init):
        rng = np.random.default_rng([seed, run])
        centroids, _, history = lloyd(x, kmeans_plusplus(x, k, rng), max_iter=max_iter)
        cost = inertia(x, centroids)
        if best is None or cost < best.inertia:
            best = Codebook(centroids=centroids, inertia=cost, seed=seed, history=history)
    return best


def quantize(codebook: Codebook, frames: FrameSequence) -> CategoricalSequence:
    x = np.asarray(frames.frames, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != codebook.dim:
        raise ValueError(
            f"dimension mismatch: frames have {x.shape[-1]} columns, codebook {codebook.dim}")
    return CategoricalSequence(symbols=assign(x, codebook.centroids),
                               utterance_id=frames.utterance_id,
                               hop_ms=frames.hop_ms, n_symbols=codebook.k)


def save_codebook(path, codebook: Codebook) -> None:
    with open(path, "w") as f:
        f.write(f"k {codebook.k}\nd {codebook.dim}\nseed {codebook.seed}\n")
        f.write(f"inertia {codebook.inertia!r}\n")
        for row in codebook.centroids:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_codebook(path) -> Codebook:
    with open(path) as f:
        lines = [ln.split() for ln in f if ln.strip()]
    header = {ln[0]: ln[1] for ln in lines[:4]}
    k, d = int(header["k"]), int(header["d"])
    rows = np.array([[float(v) for v in ln] for ln in lines[4:4 + k]])
    if rows.shape != (k, d):
        raise ValueError(f"{path}: expected {k}x{d} centroids, got {rows.shape}")
    return Codebook(centroids=rows, inertia=float(header["inertia"]), seed=int(header["seed"]))
