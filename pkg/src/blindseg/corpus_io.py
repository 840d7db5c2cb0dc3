"""
Corpus access: TIMIT-style ``.wav``/``.phn`` trees, splits, and synthetic corpora.

A corpus root holds ``train/`` and ``test/`` subtrees. Utterance ids are
paths relative to the root without extension, e.g. ``test/dr1/faks0/sa1``.

Synthetic corpora use the same layout but store features directly:
``<id>.sym`` (one symbol per line) or ``<id>.csv`` (one frame per line),
plus ``<id>.bnd`` gold boundary files in seconds. A ``manifest.txt`` at the
root records the kind and hop and lists every id with its split.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_features import AudioSignal, FrameSequence, load_audio
from .quantizer import CategoricalSequence
from .segmenter import BoundarySet, read_boundaries, write_boundaries

MANIFEST = "manifest.txt"


class CorpusError(Exception):
    pass


class PhnFormatError(CorpusError):
    def __init__(self, path, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.line_no = line_no


@dataclass
class Utterance:
    id: str
    audio: AudioSignal | None
    gold: BoundarySet
    phone_labels: list = field(default_factory=list)

    @property
    def duration(self) -> float:
        return self.audio.duration if self.audio is not None else float(self.gold.seconds[-1])


@dataclass
class SplitSpec:
    train: list
    validation: list
    test: list
    seed: int = 0

    def __post_init__(self):
        a, b, c = set(self.train), set(self.validation), set(self.test)
        if a & b or a & c or b & c:
            raise ValueError("split sets must be pairwise disjoint")

    @property
    def fit(self) -> list:
        """Everything used to estimate model parameters: train plus validation."""
        return sorted(self.train + self.validation)


# ---------------------------------------------------------------------------
# TIMIT phone annotations

def parse_phn(lines, sample_rate: int, source="<phn>"):
    """Parse ``start end label`` lines into boundary times and labels."""
    starts, ends, labels = [], [], []
    for no, raw in enumerate(lines, start=1):
        parts = raw.split()
        if not parts:
            continue
        if len(parts) < 3:
            raise PhnFormatError(source, no, f"expected 'start end label', got {raw.strip()!r}")
        try:
            s, e = int(parts[0]), int(parts[1])
        except ValueError:
            raise PhnFormatError(source, no, f"non-integer sample index in {raw.strip()!r}") from None
        if e <= s:
            raise PhnFormatError(source, no, f"empty or reversed segment {s}..{e}")
        if ends and s != ends[-1]:
            kind = "overlap" if s < ends[-1] else "gap"
            raise PhnFormatError(source, no, f"non-contiguous segments ({kind} at sample {s}, "
                                             f"previous end {ends[-1]})")
        starts.append(s)
        ends.append(e)
        labels.append(" ".join(parts[2:]))
    if not starts:
        return BoundarySet(seconds=[], kind="gold"), []
    samples = np.array(starts + [ends[-1]], dtype=np.float64)
    return BoundarySet(seconds=samples / sample_rate, kind="gold"), labels


def read_phn(path, sample_rate: int = 16000):
    with open(path) as f:
        return parse_phn(f, sample_rate, source=path)


def write_phn(path, gold: BoundarySet, labels, sample_rate: int = 16000) -> None:
    samples = np.rint(gold.seconds * sample_rate).astype(np.int64)
    if len(labels) != len(samples) - 1:
        raise ValueError("need exactly one label per segment")
    with open(path, "w") as f:
        for s, e, lab in zip(samples[:-1], samples[1:], labels):
            f.write(f"{s} {e} {lab}\n")


def discover(root) -> list[str]:
    """Utterance ids under a TIMIT-style root: every ``.wav`` with a sibling ``.phn``."""
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"corpus root {root} does not exist")
    ids = []
    for wav in sorted(root.rglob("*")):
        if wav.suffix.lower() == ".wav" and (wav.with_suffix(".phn").exists()
                                             or wav.with_suffix(".PHN").exists()):
            ids.append(wav.relative_to(root).with_suffix("").as_posix())
    return ids


def utterance_file(root: Path, uid: str, ext: str) -> Path:
    for cand in (ext, ext.upper()):
        p = root / f"{uid}{cand}"
        if p.exists():
            return p
    raise CorpusError(f"missing {ext} file for utterance {uid} under {root}")


def load_utterance(root, uid: str) -> Utterance:
    root = Path(root)
    audio = load_audio(utterance_file(root, uid, ".wav"))
    gold, labels = read_phn(utterance_file(root, uid, ".phn"), audio.sample_rate)
    gold.utterance_id = uid
    if len(gold) and gold.seconds[-1] > audio.duration + 1e-9:
        raise CorpusError(f"{uid}: annotation ends after the audio ({gold.seconds[-1]:.4f} s > "
                          f"{audio.duration:.4f} s)")
    return Utterance(id=uid, audio=audio, gold=gold, phone_labels=labels)


def is_test_id(uid: str) -> bool:
    return uid.split("/", 1)[0].lower() == "test"


def split_corpus(ids, val_fraction: float = 0.1, seed: int = 0,
                 test_fraction: float = 0.2) -> SplitSpec:
    """
    Train/validation/test split.

    Ids under a top-level ``test`` directory form the test set. If there are
    none, ``test_fraction`` of the ids are drawn at random instead. The
    validation set is drawn from the remaining training ids.
    """
    ids = sorted(set(ids))
    if not ids:
        raise CorpusError("empty corpus: nothing to split")
    rng = np.random.default_rng([seed, 7])
    test = [u for u in ids if is_test_id(u)]
    train = [u for u in ids if not is_test_id(u)]
    if not test:
        n_test = int(round(test_fraction * len(ids)))
        picked = set(rng.choice(len(train), size=n_test, replace=False).tolist())
        test = [u for i, u in enumerate(train) if i in picked]
        train = [u for i, u in enumerate(train) if i not in picked]
    n_val = int(round(val_fraction * len(train)))
    picked = set(rng.choice(len(train), size=n_val, replace=False).tolist()) if n_val else set()
    val = [u for i, u in enumerate(train) if i in picked]
    train = [u for i, u in enumerate(train) if i not in picked]
    return SplitSpec(train=train, validation=val, test=test, seed=seed)


# ---------------------------------------------------------------------------
# synthetic corpora

@dataclass
class SynthSpec:
    n_utts: int = 250
    n_test: int = 50
    min_segments: int = 10
    max_segments: int = 20
    min_len: int = 4
    max_len: int = 15
    kind: str = "categorical"   # or "frames"
    n_symbols: int = 8
    n_states: int = 4           # distinct segment "phones"
    concentration: float = 0.9  # categorical: mass on each state's dominant symbols
    dim: int = 13
    spread: float = 3.0         # frames: distance scale between state means
    noise: float = 1.0
    hop_ms: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("categorical", "frames"):
            raise ValueError(f"unknown synthetic kind {self.kind!r}")
        if not (1 <= self.min_segments <= self.max_segments):
            raise ValueError("need 1 <= min_segments <= max_segments")
        if not (1 <= self.min_len <= self.max_len):
            raise ValueError("need 1 <= min_len <= max_len")
        if not (0 <= self.n_test <= self.n_utts):
            raise ValueError("n_test must lie in [0, n_utts]")
        if self.n_states < 2:
            raise ValueError("need at least two segment states")


@dataclass
class SynthUtterance:
    id: str
    features: object            # CategoricalSequence or FrameSequence
    gold: BoundarySet           # interior joins, seconds
    gold_frames: np.ndarray
    plan: list                  # (state, length) per segment

    @property
    def n_frames(self) -> int:
        return len(self.features)

    @property
    def duration(self) -> float:
        return self.n_frames * self.features.hop_ms / 1000.0


def _state_models(spec: SynthSpec, rng: np.random.Generator):
    if spec.kind == "categorical":
        # state s puts most of its mass on symbols 2s and 2s+1 (mod n_symbols), so with
        # n_states <= n_symbols / 2 the dominant symbols of different states are disjoint
        dists = np.full((spec.n_states, spec.n_symbols), (1 - spec.concentration) / spec.n_symbols)
        for s in range(spec.n_states):
            pair = [(2 * s) % spec.n_symbols, (2 * s + 1) % spec.n_symbols]
            dists[s, pair] += spec.concentration / 2
        return dists
    return rng.normal(scale=spec.spread, size=(spec.n_states, spec.dim))


def synth_corpus(spec: SynthSpec) -> list[SynthUtterance]:
    """Piecewise-stationary utterances with gold boundaries at the segment joins.

    Consecutive segments always use different states. The first ``n_test``
    utterances get ids under ``test/``, the rest under ``train/``.
    """
    rng = np.random.default_rng(spec.seed)
    models = _state_models(spec, rng)
    out = []
    width = len(str(spec.n_utts))
    for u in range(spec.n_utts):
        n_seg = int(rng.integers(spec.min_segments, spec.max_segments + 1))
        plan, prev = [], -1
        for _ in range(n_seg):
            state = int(rng.integers(spec.n_states - (prev >= 0)))
            if prev >= 0 and state >= prev:
                state += 1
            plan.append((state, int(rng.integers(spec.min_len, spec.max_len + 1))))
            prev = state
        lengths = np.array([n for _, n in plan])
        joins = np.cumsum(lengths)[:-1]
        split = "test" if u < spec.n_test else "train"
        uid = f"{split}/utt{u:0{width}d}"
        if spec.kind == "categorical":
            symbols = np.concatenate([rng.choice(spec.n_symbols, size=n, p=models[s]) for s, n in plan])
            feats = CategoricalSequence(symbols=symbols, utterance_id=uid, hop_ms=spec.hop_ms,
                                        n_symbols=spec.n_symbols)
        else:
            frames = np.concatenate([models[s] + spec.noise * rng.normal(size=(n, spec.dim))
                                     for s, n in plan])
            feats = FrameSequence(frames=frames, hop_ms=spec.hop_ms, utterance_id=uid)
        gold = BoundarySet(seconds=joins * spec.hop_ms / 1000.0, frames=joins, kind="gold",
                           utterance_id=uid)
        out.append(SynthUtterance(id=uid, features=feats, gold=gold, gold_frames=joins, plan=plan))
    return out


def write_synth_corpus(root, utts: list[SynthUtterance], spec: SynthSpec) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / MANIFEST, "w") as f:
        f.write(f"# kind={spec.kind} hop_ms={spec.hop_ms:g} n_symbols={spec.n_symbols} seed={spec.seed}\n")
        for u in utts:
            f.write(f"{u.id}\n")
    for u in utts:
        base = root / u.id
        base.parent.mkdir(parents=True, exist_ok=True)
        if spec.kind == "categorical":
            np.savetxt(f"{base}.sym", u.features.symbols, fmt="%d")
        else:
            np.savetxt(f"{base}.csv", u.features.frames, delimiter=",", fmt="%.10g")
        write_boundaries(f"{base}.bnd", u.gold, with_frames=True)


def read_manifest(root) -> tuple[dict, list[str]]:
    path = Path(root) / MANIFEST
    if not path.exists():
        raise CorpusError(f"{path} not found")
    meta, ids = {}, []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line.startswith("#"):
                for tok in line[1:].split():
                    k, _, v = tok.partition("=")
                    meta[k] = v
            elif line:
                ids.append(line)
    return meta, ids


def corpus_kind(root) -> str:
    """``"categorical"`` or ``"frames"`` for synthetic corpora, ``"audio"`` otherwise."""
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"corpus root {root} does not exist")
    if (root / MANIFEST).exists():
        return read_manifest(root)[0].get("kind", "categorical")
    return "audio"


def read_synth_utterance(root, uid: str, meta: dict):
    base = Path(root) / uid
    hop = float(meta.get("hop_ms", 10.0))
    if meta.get("kind", "categorical") == "categorical":
        symbols = np.loadtxt(f"{base}.sym", dtype=np.int64, ndmin=1)
        feats = CategoricalSequence(symbols=symbols, utterance_id=uid, hop_ms=hop,
                                    n_symbols=int(meta.get("n_symbols", 8)))
    else:
        feats = FrameSequence(frames=np.loadtxt(f"{base}.csv", delimiter=",", ndmin=2),
                              hop_ms=hop, utterance_id=uid)
    gold = read_boundaries(f"{base}.bnd", kind="gold")
    gold.utterance_id = uid
    return feats, gold
