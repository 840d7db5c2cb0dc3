import numpy as np
import pytest

from blindseg.corpus_io import (CorpusError, PhnFormatError, SplitSpec, SynthSpec, corpus_kind,
                                discover, load_utterance, parse_phn, read_manifest, read_phn,
                                read_synth_utterance, split_corpus, synth_corpus, write_phn,
                                write_synth_corpus)
from blindseg.segmenter import BoundarySet

from conftest import write_pcm


def test_parse_phn_basic():
    gold, labels = parse_phn("0 1600 h#\n1600 3200 sh\n".splitlines(), 16000)
    assert list(gold.seconds) == [0.0, 0.1, 0.2]
    assert labels == ["h#", "sh"]
    assert gold.kind == "gold"


def test_parse_phn_overlap_reports_line():
    with pytest.raises(PhnFormatError, match="overlap") as exc:
        parse_phn(["0 100 a", "90 200 b"], 16000, source="x.phn")
    assert exc.value.line_no == 2
    assert str(exc.value).startswith("x.phn:2:")


@pytest.mark.parametrize("text,line", [("0 100 a\n120 200 b", 2), ("0 100", 1), ("0 x a", 1),
                                       ("0 100 a\n100 100 b", 2)])
def test_parse_phn_errors(text, line):
    with pytest.raises(PhnFormatError) as exc:
        parse_phn(text.splitlines(), 16000)
    assert exc.value.line_no == line


def test_parse_phn_skips_blank_lines_and_empty_file():
    gold, labels = parse_phn(["", "0 80 a", "  ", "80 160 b"], 16000)
    assert len(gold) == 3 and labels == ["a", "b"]
    empty, none = parse_phn([], 16000)
    assert len(empty) == 0 and none == []


def test_phn_roundtrip(tmp_path):
    lines = ["0 2260 h#", "2260 4070 sh", "4070 5265 iy", "5265 7040 h#"]
    gold, labels = parse_phn(lines, 16000)
    write_phn(tmp_path / "a.phn", gold, labels)
    assert (tmp_path / "a.phn").read_text().splitlines() == lines
    back, back_labels = read_phn(tmp_path / "a.phn")
    assert np.array_equal(back.seconds, gold.seconds) and back_labels == labels
    with pytest.raises(ValueError):
        write_phn(tmp_path / "b.phn", gold, labels[:-1])


def make_tree(root, ids, n=4000):
    for uid in ids:
        p = root / f"{uid}.wav"
        p.parent.mkdir(parents=True, exist_ok=True)
        write_pcm(p, np.zeros(n))
        p.with_suffix(".phn").write_text(f"0 2000 h#\n2000 {n} aa\n")


def test_discover_and_load(tmp_path):
    make_tree(tmp_path, ["train/dr1/s1/sa1", "test/dr2/s2/sx3"])
    (tmp_path / "train" / "orphan.wav").write_bytes(b"")
    assert discover(tmp_path) == ["test/dr2/s2/sx3", "train/dr1/s1/sa1"]
    u = load_utterance(tmp_path, "train/dr1/s1/sa1")
    assert list(u.gold.seconds) == [0.0, 0.125, 0.25]
    assert u.duration == pytest.approx(0.25)
    with pytest.raises(CorpusError):
        discover(tmp_path / "missing")


def test_load_rejects_annotation_past_audio(tmp_path):
    make_tree(tmp_path, ["train/u"], n=1000)
    (tmp_path / "train" / "u.phn").write_text("0 2000 a\n")
    with pytest.raises(CorpusError, match="after the audio"):
        load_utterance(tmp_path, "train/u")


def test_split_ninety_ten_reproducible():
    ids = [f"train/u{i:03d}" for i in range(100)]
    a = split_corpus(ids, val_fraction=0.1, seed=3, test_fraction=0.0)
    b = split_corpus(ids, val_fraction=0.1, seed=3, test_fraction=0.0)
    assert (len(a.train), len(a.validation), len(a.test)) == (90, 10, 0)
    assert a == b
    assert split_corpus(ids, val_fraction=0.1, seed=4, test_fraction=0.0).validation != a.validation


def test_split_uses_declared_test_directory():
    ids = [f"train/u{i:03d}" for i in range(100)] + [f"test/t{i}" for i in range(7)]
    s = split_corpus(ids, val_fraction=0.1, seed=0)
    assert (len(s.train), len(s.validation), len(s.test)) == (90, 10, 7)
    assert all(u.startswith("test/") for u in s.test)
    assert set(s.validation) <= {f"train/u{i:03d}" for i in range(100)}
    assert s.fit == sorted(s.train + s.validation)


def test_split_without_test_directory_draws_test_ids():
    ids = [f"u{i:03d}" for i in range(50)]
    s = split_corpus(ids, val_fraction=0.1, seed=0, test_fraction=0.2)
    assert len(s.test) == 10 and len(s.validation) == 4 and len(s.train) == 36
    assert sorted(s.train + s.validation + s.test) == ids


def test_split_errors():
    with pytest.raises(CorpusError):
        split_corpus([])
    with pytest.raises(ValueError):
        SplitSpec(train=["a"], validation=["a"], test=[])


def test_synth_single_segment_has_no_interior_boundary():
    u = synth_corpus(SynthSpec(n_utts=1, n_test=0, min_segments=1, max_segments=1))[0]
    assert len(u.gold) == 0


def test_synth_fixed_lengths():
    u = synth_corpus(SynthSpec(n_utts=1, n_test=0, min_segments=10, max_segments=10, min_len=8, max_len=8))[0]
    assert list(u.gold_frames) == [8, 16, 24, 32, 40, 48, 56, 64, 72]
    assert u.n_frames == 80
    assert np.allclose(u.gold.seconds, np.arange(8, 80, 8) / 100)


def test_synth_gold_recoverable_from_plan():
    for u in synth_corpus(SynthSpec(n_utts=20, n_test=5, seed=2)):
        lengths = [n for _, n in u.plan]
        assert list(u.gold_frames) == list(np.cumsum(lengths)[:-1])
        assert all(a[0] != b[0] for a, b in zip(u.plan, u.plan[1:]))
        assert u.n_frames == sum(lengths)


def test_synth_deterministic_and_split_layout():
    a = synth_corpus(SynthSpec(n_utts=12, n_test=4, seed=5))
    b = synth_corpus(SynthSpec(n_utts=12, n_test=4, seed=5))
    assert [u.id for u in a] == [u.id for u in b]
    assert all(np.array_equal(x.features.symbols, y.features.symbols) for x, y in zip(a, b))
    assert sum(u.id.startswith("test/") for u in a) == 4


def test_synth_categorical_segments_follow_their_state():
    spec = SynthSpec(n_utts=30, n_test=0, seed=1)
    hits = total = 0
    for u in synth_corpus(spec):
        pos = 0
        for state, n in u.plan:
            seg = u.features.symbols[pos:pos + n]
            hits += np.isin(seg, [2 * state, 2 * state + 1]).sum()
            total += n
            pos += n
    # dominant pair carries 0.9 + 0.1 * 2/8 of the mass
    assert abs(hits / total - 0.925) < 0.02


def test_synth_spec_validation():
    with pytest.raises(ValueError):
        SynthSpec(kind="audio")
    with pytest.raises(ValueError):
        SynthSpec(min_segments=5, max_segments=2)
    with pytest.raises(ValueError):
        SynthSpec(n_utts=3, n_test=4)


@pytest.mark.parametrize("kind", ["categorical", "frames"])
def test_synth_corpus_file_roundtrip(tmp_path, kind):
    spec = SynthSpec(n_utts=3, n_test=1, kind=kind, dim=4, seed=0)
    utts = synth_corpus(spec)
    write_synth_corpus(tmp_path, utts, spec)
    meta, ids = read_manifest(tmp_path)
    assert ids == [u.id for u in utts] and meta["kind"] == kind
    assert corpus_kind(tmp_path) == kind
    for u in utts:
        feats, gold = read_synth_utterance(tmp_path, u.id, meta)
        assert np.allclose(gold.seconds, u.gold.seconds)
        assert list(gold.frames) == list(u.gold_frames)
        if kind == "categorical":
            assert np.array_equal(feats.symbols, u.features.symbols)
        else:
            assert np.allclose(feats.frames, u.features.frames, rtol=1e-9)


def test_corpus_kind_audio_and_missing(tmp_path):
    assert corpus_kind(tmp_path) == "audio"
    with pytest.raises(CorpusError):
        corpus_kind(tmp_path / "nope")
    with pytest.raises(CorpusError):
        read_manifest(tmp_path)


def test_boundaryset_from_gold_is_sorted():
    gold, _ = parse_phn(["0 5 a", "5 9 b"], 16000)
    assert isinstance(gold, BoundarySet) and np.all(np.diff(gold.seconds) > 0)
