import math

import numpy as np
import pytest

from blindseg.audio_features import (AudioSignal, MfccConfig, UnreadableAudioError,
                                     UnsupportedChannelsError, UnsupportedEncodingError,
                                     UtteranceTooShortError, compute_mfcc, load_audio,
                                     load_frames_csv, save_frames_csv, write_wav)

from conftest import write_pcm


def reference_mfcc(x, sr, window=400, hop=160, n_fft=512, n_filt=26, n_cep=12,
                   preemph=0.97, floor=1e-10):
    """Loop-based MFCC written independently of the library path (explicit DFT and DCT sums)."""
    y = [x[0]] + [x[n] - preemph * x[n - 1] for n in range(1, len(x))]
    y = np.array(y)
    ham = np.array([0.54 - 0.46 * math.cos(2 * math.pi * n / (window - 1)) for n in range(window)])
    n_bins = n_fft // 2 + 1
    k = np.arange(n_bins)[:, None]
    n = np.arange(window)[None, :]
    dft = np.exp(-2j * np.pi * k * n / n_fft)

    def mel(f):
        return 2595 * math.log10(1 + f / 700)

    def imel(m):
        return 700 * (10 ** (m / 2595) - 1)

    lo, hi = mel(0), mel(sr / 2)
    edges = [imel(lo + (hi - lo) * i / (n_filt + 1)) for i in range(n_filt + 2)]
    fb = np.zeros((n_filt, n_bins))
    for m in range(n_filt):
        a, c, b = edges[m], edges[m + 1], edges[m + 2]
        for j in range(n_bins):
            f = j * sr / n_fft
            if a <= f <= c:
                fb[m, j] = (f - a) / (c - a)
            elif c < f <= b:
                fb[m, j] = (b - f) / (b - c)
    out = []
    for t in range((len(x) - window) // hop + 1):
        seg = y[t * hop:t * hop + window] * ham
        spec = np.abs(dft @ seg) ** 2 / n_fft
        logmel = [math.log(max(float(fb[m] @ spec), floor)) for m in range(n_filt)]
        ceps = []
        for q in range(1, n_cep + 1):
            s = sum(logmel[m] * math.cos(math.pi * q * (2 * m + 1) / (2 * n_filt)) for m in range(n_filt))
            ceps.append(s * math.sqrt(2.0 / n_filt))
        ceps.append(math.log(max(float(seg @ seg), floor)))
        out.append(ceps)
    return np.array(out)


def test_load_silence(tmp_path):
    write_pcm(tmp_path / "s.wav", np.zeros(16000))
    sig = load_audio(tmp_path / "s.wav")
    assert sig.sample_rate == 16000
    assert len(sig.samples) == 16000
    assert np.all(sig.samples == 0.0)


def test_load_rejects_stereo(tmp_path):
    write_pcm(tmp_path / "st.wav", np.zeros((100, 2)), channels=2)
    with pytest.raises(UnsupportedChannelsError, match="unsupported channel count"):
        load_audio(tmp_path / "st.wav")


def test_load_rejects_8bit(tmp_path):
    write_pcm(tmp_path / "u8.wav", np.full(100, 128), width=1)
    with pytest.raises(UnsupportedEncodingError):
        load_audio(tmp_path / "u8.wav")


def test_load_rejects_float_wav(tmp_path):
    import struct
    data = struct.pack("<4f", 0.0, 0.1, -0.1, 0.0)
    fmt = struct.pack("<HHIIHH", 3, 1, 16000, 64000, 4, 32)
    riff = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(data)) + data
    (tmp_path / "f.wav").write_bytes(b"RIFF" + struct.pack("<I", len(riff)) + riff)
    with pytest.raises(UnsupportedEncodingError):
        load_audio(tmp_path / "f.wav")


def test_load_missing_and_garbage(tmp_path):
    with pytest.raises(UnreadableAudioError):
        load_audio(tmp_path / "nope.wav")
    (tmp_path / "junk.wav").write_bytes(b"not a wav file at all")
    with pytest.raises(UnreadableAudioError):
        load_audio(tmp_path / "junk.wav")


def test_load_sine_fixture(tmp_path):
    t = np.arange(16000) / 16000
    exact = np.sin(2 * np.pi * 440 * t)
    write_pcm(tmp_path / "sine.wav", np.clip(np.round(exact * 32768), -32768, 32767))
    sig = load_audio(tmp_path / "sine.wav")
    assert np.max(np.abs(sig.samples - exact)) <= 1 / 32768 + 1e-12


def test_write_wav_roundtrip(tmp_path):
    x = np.linspace(-0.5, 0.5, 321)
    write_wav(tmp_path / "r.wav", AudioSignal(x, 8000))
    back = load_audio(tmp_path / "r.wav")
    assert back.sample_rate == 8000
    assert np.max(np.abs(back.samples - x)) <= 0.5 / 32768 + 1e-12


def test_frame_count_one_second():
    fs = compute_mfcc(AudioSignal(np.zeros(16000), 16000))
    assert fs.frames.shape == (98, 13)
    assert fs.hop_ms == 10.0


def test_constant_zero_signal_gives_identical_frames():
    fs = compute_mfcc(AudioSignal(np.zeros(8000), 16000))
    assert np.all(np.isfinite(fs.frames))
    assert np.all(fs.frames == fs.frames[0])


def test_too_short():
    with pytest.raises(UtteranceTooShortError, match="utterance too short"):
        compute_mfcc(AudioSignal(np.zeros(399), 16000))


def test_matches_reference_pipeline_on_tone():
    t = np.arange(4000) / 16000
    x = 0.5 * np.sin(2 * np.pi * 440 * t)
    ours = compute_mfcc(AudioSignal(x, 16000)).frames
    ref = reference_mfcc(x, 16000)
    assert ours.shape == ref.shape
    assert np.max(np.abs(ours - ref)) < 1e-3


def test_matches_reference_on_noise(rng):
    x = 0.1 * rng.standard_normal(2400)
    ours = compute_mfcc(AudioSignal(x, 16000)).frames
    assert np.max(np.abs(ours - reference_mfcc(x, 16000))) < 1e-3


def test_time_shift_by_one_hop(rng):
    x = 0.2 * rng.standard_normal(16000)
    a = compute_mfcc(AudioSignal(x, 16000)).frames
    b = compute_mfcc(AudioSignal(x[160:], 16000)).frames
    # frame 0 of the shifted signal differs only through the pre-emphasis of its first sample
    assert np.max(np.abs(a[2:2 + len(b) - 1] - b[1:])) < 1e-9


def test_deterministic(rng):
    x = rng.uniform(-1, 1, 5000)
    a = compute_mfcc(AudioSignal(x, 16000)).frames
    b = compute_mfcc(AudioSignal(x.copy(), 16000)).frames
    assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize("kind", ["silence", "tone", "noise", "clipped"])
def test_dimension_always_13(kind, rng):
    n = 3000
    x = {"silence": np.zeros(n), "tone": np.sin(np.arange(n) * 0.3),
         "noise": rng.uniform(-1, 1, n), "clipped": np.sign(np.sin(np.arange(n) * 0.01))}[kind]
    frames = compute_mfcc(AudioSignal(x, 16000)).frames
    assert frames.shape[1] == 13
    assert np.all(np.isfinite(frames))


def test_config_validation():
    with pytest.raises(ValueError):
        MfccConfig(window_ms=10, hop_ms=20)
    assert MfccConfig().dim == 13


def test_frames_csv_roundtrip(tmp_path, rng):
    fs = compute_mfcc(AudioSignal(rng.uniform(-1, 1, 2000), 16000))
    save_frames_csv(tmp_path / "f.csv", fs)
    back = load_frames_csv(tmp_path / "f.csv")
    np.testing.assert_allclose(back.frames, fs.frames, rtol=1e-9)
