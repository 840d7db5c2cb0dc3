"""
Boundary hypotheses from prediction-error peaks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PREFIX_FRAMES = 7


@dataclass
class ErrorSignal:
    values: np.ndarray
    hop_ms: float = 10.0
    utterance_id: str = ""

    def __len__(self):
        return len(self.values)


@dataclass
class BoundarySet:
    """Sorted boundary positions.

    ``frames`` holds integer frame indices for hypotheses; ``seconds`` holds
    times in seconds. Either may be derived from the other through ``hop_ms``.
    """
    seconds: np.ndarray
    frames: np.ndarray | None = None
    kind: str = "hypothesis"
    utterance_id: str = ""

    def __post_init__(self):
        self.seconds = np.asarray(self.seconds, dtype=np.float64)
        if self.frames is not None:
            self.frames = np.asarray(self.frames, dtype=np.int64)
        if len(self.seconds) and (np.any(np.diff(self.seconds) <= 0) or self.seconds[0] < 0):
            raise ValueError("boundaries must be nonnegative and strictly increasing")

    def __len__(self):
        return len(self.seconds)


def zero_prefix(error: ErrorSignal, n: int = PREFIX_FRAMES) -> ErrorSignal:
    values = np.array(error.values, dtype=np.float64)
    values[:n] = 0.0
    return ErrorSignal(values=values, hop_ms=error.hop_ms, utterance_id=error.utterance_id)


def local_maxima(values) -> list[int]:
    """First index of every plateau that is strictly higher than both its neighbours.

    The first and last samples have a missing neighbour and are never maxima.
    """
    v = np.asarray(values, dtype=np.float64)
    peaks = []
    i, n = 1, len(v)
    while i < n - 1:
        if v[i] > v[i - 1]:
            j = i
            while j + 1 < n and v[j + 1] == v[i]:
                j += 1
            if j + 1 < n and v[j + 1] < v[i]:
                peaks.append(i)
            i = j + 1
        else:
            i += 1
    return peaks


def detect_peaks(values, delta: float, reset: str = "local") -> np.ndarray:
    """
    Indices of local maxima that rise more than ``delta`` above the previous minimum.

    With ``reset="local"`` the previous minimum is the lowest value since the
    preceding local maximum, i.e. the valley just before the peak. With
    ``reset="emit"`` it is the lowest value since the last *accepted* peak, so
    a rejected peak does not reset the reference.

    Only ``"local"`` guarantees that raising ``delta`` yields a subset of the
    boundaries.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if reset not in ("local", "emit"):
        raise ValueError(f"unknown reset mode {reset!r}")
    v = np.asarray(values, dtype=np.float64)
    out = []
    start = 0
    for p in local_maxima(v):
        accepted = v[p] - v[start:p + 1].min() > delta
        if accepted:
            out.append(p)
        if accepted or reset == "local":
            start = p + 1
    return np.asarray(out, dtype=np.int64)


def detect_boundaries(error: ErrorSignal, delta: float, reset: str = "local") -> BoundarySet:
    frames = detect_peaks(error.values, delta, reset=reset)
    return BoundarySet(seconds=frames * error.hop_ms / 1000.0, frames=frames,
                       utterance_id=error.utterance_id)


def periodic_boundaries(n_frames: int, hop_ms: float = 10.0, period_ms: float = 5.0,
                        utterance_id: str = "") -> BoundarySet:
    """Boundaries every ``period_ms`` strictly inside an utterance of ``n_frames`` hops."""
    if period_ms <= 0:
        raise ValueError("period_ms must be positive")
    duration_ms = n_frames * hop_ms
    # integer multiples avoid accumulating float error from repeated addition
    k = np.arange(1, int(np.ceil(duration_ms / period_ms)) + 1)
    ms = k * period_ms
    ms = ms[ms < duration_ms - 1e-9]
    return BoundarySet(seconds=ms / 1000.0, utterance_id=utterance_id)


def boundaries_to_seconds(b: BoundarySet, hop_ms: float) -> BoundarySet:
    if b.frames is None:
        raise ValueError("boundary set has no frame indices")
    return BoundarySet(seconds=b.frames * hop_ms / 1000.0, frames=b.frames,
                       kind=b.kind, utterance_id=b.utterance_id)


def seconds_to_frames(seconds, hop_ms: float) -> np.ndarray:
    return np.rint(np.asarray(seconds) * 1000.0 / hop_ms).astype(np.int64)


def write_boundaries(path, b: BoundarySet, with_frames: bool = False) -> None:
    with open(path, "w") as f:
        for i, s in enumerate(b.seconds):
            if with_frames and b.frames is not None:
                f.write(f"{s:.6f} {int(b.frames[i])}\n")
            else:
                f.write(f"{s:.6f}\n")


def read_boundaries(path, kind: str = "hypothesis") -> BoundarySet:
    seconds, frames = [], []
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            seconds.append(float(parts[0]))
            if len(parts) > 1:
                frames.append(int(parts[1]))
    return BoundarySet(seconds=seconds, frames=frames if frames and len(frames) == len(seconds) else None,
                       kind=kind)
