"""
Audio loading and MFCC front-end.

Frames are 13-dimensional: 12 mel-cepstral coefficients followed by the log
energy of the windowed frame. Framing uses no padding, so the trailing
partial window is dropped.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct, rfft


class AudioError(Exception):
    """Base class for audio loading failures."""


class UnreadableAudioError(AudioError):
    pass


class UnsupportedChannelsError(AudioError):
    pass


class UnsupportedEncodingError(AudioError):
    pass


class UtteranceTooShortError(ValueError):
    pass


@dataclass(frozen=True)
class AudioSignal:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class MfccConfig:
    window_ms: float = 25.0
    hop_ms: float = 10.0
    n_cepstra: int = 12
    include_energy: bool = True
    n_mel_filters: int = 26
    pre_emphasis: float = 0.97
    log_floor: float = 1e-10
    n_fft: int = 512

    def __post_init__(self):
        if self.hop_ms > self.window_ms:
            raise ValueError("hop_ms must not exceed window_ms")
        if self.n_cepstra >= self.n_mel_filters:
            raise ValueError("n_cepstra must be smaller than n_mel_filters")

    @property
    def dim(self) -> int:
        return self.n_cepstra + int(self.include_energy)


@dataclass
class FrameSequence:
    frames: np.ndarray
    hop_ms: float = 10.0
    utterance_id: str = ""

    def __len__(self):
        return self.frames.shape[0]


def load_audio(path) -> AudioSignal:
    """Read a 16-bit PCM mono WAV file, scaling samples by 1/32768."""
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except FileNotFoundError as exc:
        raise UnreadableAudioError(f"cannot open {path}: {exc}") from exc
    except wave.Error as exc:
        # the wave module only understands integer PCM; anything else lands here
        if "unknown format" in str(exc):
            raise UnsupportedEncodingError(f"{path}: unsupported encoding ({exc})") from exc
        raise UnreadableAudioError(f"{path}: {exc}") from exc
    except (EOFError, OSError) as exc:
        raise UnreadableAudioError(f"{path}: {exc}") from exc

    if n_channels != 1:
        raise UnsupportedChannelsError(f"{path}: unsupported channel count {n_channels}")
    if width != 2:
        raise UnsupportedEncodingError(f"{path}: unsupported encoding ({8 * width}-bit samples)")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioSignal(samples=samples, sample_rate=rate)


def write_wav(path, signal: AudioSignal) -> None:
    """Write a signal as 16-bit PCM mono, clipping to the representable range."""
    ints = np.clip(np.round(np.asarray(signal.samples) * 32768.0), -32768, 32767)
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(signal.sample_rate)
        wf.writeframes(ints.astype("<i2").tobytes())


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, n_fft: int, sample_rate: int,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular filters on the mel scale, shape (n_filters, n_fft // 2 + 1)."""
    if fmax is None:
        fmax = sample_rate / 2.0
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_filters + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lower) / (center - lower)
    falling = (upper - freqs) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def frame_signal(samples: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    n_frames = 1 + (len(samples) - frame_len) // hop
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    return samples[idx]


def compute_mfcc(signal: AudioSignal, config: MfccConfig = MfccConfig(),
                 utterance_id: str = "") -> FrameSequence:
    """
    Compute static MFCC frames.

    Frame ``t`` covers samples ``[t*hop, t*hop + window)``. Columns 0..11 hold
    the orthonormal DCT-II coefficients 1..12 of the log mel energies; the
    last column holds ``log(sum(windowed_frame**2))`` floored at
    ``config.log_floor``.
    """
    sr = signal.sample_rate
    frame_len = int(round(config.window_ms * sr / 1000.0))
    hop = int(round(config.hop_ms * sr / 1000.0))
    x = np.asarray(signal.samples, dtype=np.float64)
    if len(x) < frame_len:
        raise UtteranceTooShortError(
            f"utterance too short: {len(x)} samples < window of {frame_len}")
    n_fft = max(config.n_fft, 1 << (frame_len - 1).bit_length())

    emphasized = np.append(x[:1], x[1:] - config.pre_emphasis * x[:-1])
    frames = frame_signal(emphasized, frame_len, hop) * np.hamming(frame_len)

    power = np.abs(rfft(frames, n=n_fft, axis=1)) ** 2 / n_fft
    fbank = mel_filterbank(config.n_mel_filters, n_fft, sr)
    log_mel = np.log(np.maximum(power @ fbank.T, config.log_floor))
    cepstra = dct(log_mel, type=2, norm="ortho", axis=1)[:, 1:config.n_cepstra + 1]

    if config.include_energy:
        energy = np.log(np.maximum(np.sum(frames ** 2, axis=1), config.log_floor))
        cepstra = np.column_stack([cepstra, energy])
    return FrameSequence(frames=cepstra, hop_ms=config.hop_ms, utterance_id=utterance_id)


def save_frames_csv(path, frames: FrameSequence) -> None:
    np.savetxt(path, frames.frames, delimiter=",", fmt="%.10g")


def load_frames_csv(path, hop_ms: float = 10.0, utterance_id: str = "") -> FrameSequence:
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    return FrameSequence(frames=data, hop_ms=hop_ms, utterance_id=utterance_id)
