import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blindseg.segmenter import (BoundarySet, ErrorSignal, boundaries_to_seconds, detect_boundaries,
                                detect_peaks, local_maxima, periodic_boundaries, read_boundaries,
                                seconds_to_frames, write_boundaries, zero_prefix)

from oracles import brute_peaks


def test_zero_prefix_exactly_seven():
    e = zero_prefix(ErrorSignal(np.full(9, 5.0)))
    assert list(e.values) == [0, 0, 0, 0, 0, 0, 0, 5, 5]


def test_zero_prefix_short_signal_and_copy():
    src = ErrorSignal(np.ones(4), utterance_id="a")
    e = zero_prefix(src)
    assert np.all(e.values == 0) and e.utterance_id == "a"
    assert np.all(src.values == 1)


def test_single_peak_above_threshold():
    b = detect_boundaries(ErrorSignal(np.array([0, 1, 0, 2, 0.0])), delta=1.5)
    assert list(b.frames) == [3]
    assert b.seconds[0] == pytest.approx(0.03)


def test_monotone_signal_has_no_peaks():
    assert len(detect_peaks(np.arange(20.0), 0.0)) == 0
    assert len(detect_peaks(np.arange(20.0)[::-1], 0.0)) == 0
    assert len(detect_peaks(np.ones(10), 0.0)) == 0


def test_plateau_reported_at_first_frame():
    assert local_maxima([0, 2, 2, 2, 1]) == [1]
    assert local_maxima([0, 2, 2, 3, 1]) == [3]
    # plateau running into the end has no falling edge
    assert local_maxima([0, 2, 2]) == []


def test_strict_threshold():
    assert list(detect_peaks([0, 1.0, 0], 1.0)) == []
    assert list(detect_peaks([0, 1.0, 0], 0.999)) == [1]


def test_negative_delta_and_bad_reset():
    with pytest.raises(ValueError):
        detect_peaks([0, 1, 0], -0.1)
    with pytest.raises(ValueError):
        detect_peaks([0, 1, 0], 0.1, reset="never")


def test_matches_brute_force_on_random_signals():
    rng = np.random.default_rng(0)
    for _ in range(500):
        n = int(rng.integers(1, 60))
        # coarse values so that plateaus and equal neighbours occur
        v = rng.integers(0, 6, n).astype(float) * 0.5
        delta = float(rng.choice([0.0, 0.25, 0.5, 1.0, 1.5, 2.2]))
        assert list(detect_peaks(v, delta)) == brute_peaks(v, delta)


def test_emit_reset_is_not_monotone():
    # with the reference minimum reset only at accepted peaks, raising delta can swap peaks
    v = [0, 2, 1.5, 3, 0]
    assert list(detect_peaks(v, 1.8, reset="emit")) == [1]
    assert list(detect_peaks(v, 2.5, reset="emit")) == [3]
    assert list(detect_peaks(v, 1.8)) == [1]
    assert list(detect_peaks(v, 2.5)) == []


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 5, allow_nan=False), max_size=50),
       st.floats(0, 3), st.floats(0, 3))
def test_raising_delta_gives_subset(values, d1, d2):
    lo, hi = sorted((d1, d2))
    assert set(detect_peaks(values, hi)) <= set(detect_peaks(values, lo))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-20, 20), max_size=50), st.integers(0, 12), st.integers(-64, 64))
def test_shift_and_power_of_two_scale_invariance(ints, d, shift):
    # quarter-integer values keep every sum and product exact in floating point
    v = np.array(ints, dtype=float) / 4
    delta = d / 4
    base = list(detect_peaks(v, delta))
    assert list(detect_peaks(v + shift, delta)) == base
    assert list(detect_peaks(v * 8, delta * 8)) == base


def test_no_adjacent_boundaries(rng):
    for _ in range(100):
        p = detect_peaks(rng.random(80), 0.0)
        assert np.all(np.diff(p) >= 2)


def test_periodic_one_second_at_50ms():
    b = periodic_boundaries(n_frames=100, hop_ms=10, period_ms=50)
    assert len(b) == 19
    assert b.seconds[0] == pytest.approx(0.05) and b.seconds[-1] == pytest.approx(0.95)


def test_periodic_5ms():
    b = periodic_boundaries(n_frames=100, hop_ms=10, period_ms=5)
    assert len(b) == 199
    with pytest.raises(ValueError):
        periodic_boundaries(10, period_ms=0)


def test_boundary_set_validation():
    with pytest.raises(ValueError):
        BoundarySet(seconds=[0.2, 0.1])
    with pytest.raises(ValueError):
        BoundarySet(seconds=[-0.1, 0.1])
    with pytest.raises(ValueError):
        BoundarySet(seconds=[0.1, 0.1])


def test_frame_second_conversions():
    b = BoundarySet(seconds=[0.07, 0.12], frames=[7, 12])
    assert list(boundaries_to_seconds(b, 10.0).seconds) == pytest.approx([0.07, 0.12])
    assert list(seconds_to_frames([0.07, 0.12, 0.4], 10.0)) == [7, 12, 40]
    with pytest.raises(ValueError):
        boundaries_to_seconds(BoundarySet(seconds=[0.1]), 10.0)


def test_boundary_file_roundtrip(tmp_path):
    b = BoundarySet(seconds=[0.07, 0.12, 1.5], frames=[7, 12, 150])
    write_boundaries(tmp_path / "b.txt", b, with_frames=True)
    assert (tmp_path / "b.txt").read_text().splitlines()[0] == "0.070000 7"
    back = read_boundaries(tmp_path / "b.txt")
    assert list(back.frames) == [7, 12, 150]
    assert np.allclose(back.seconds, b.seconds)
    write_boundaries(tmp_path / "s.txt", b)
    assert read_boundaries(tmp_path / "s.txt").frames is None
