"""
Pipeline stages behind the command line: prepare, train, segment, evaluate, sweep.

All artifacts live under ``corpus.workdir``::

    split.json  utterances.json  codebook.txt  features.npz  symbols.npz
    model/markov.txt | model/rnn.json, model/report.csv
    boundaries/<utt>.txt   errors/<utt>.csv   reports/*.csv|*.txt|*.png
"""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import corpus_io
from .audio_features import FrameSequence, compute_mfcc
from .config import ConfigError, PipelineConfig, parse_grid
from .corpus_io import CorpusError
from .evaluator import (compute_metrics, aggregate, match_boundaries, sweep_threshold,
                        trim_gold, REPORT_COLUMNS)
from .markov import fit_markov, load_markov, markov_error, save_markov
from .neural import (NetworkConfig, load_network, nn_error_signal, save_network,
                     train_predictor)
from .quantizer import (CategoricalSequence, fit_codebook, quantize,
                        sample_frames, save_codebook)
from .segmenter import (BoundarySet, ErrorSignal, detect_boundaries, periodic_boundaries,
                        read_boundaries, write_boundaries, zero_prefix)

log = logging.getLogger("blindseg")


def subseed(seed: int, name: str) -> int:
    """Deterministic per-stage seed derived from the global one."""
    return int.from_bytes(hashlib.sha256(f"{seed}:{name}".encode()).digest()[:4], "little")


@dataclass
class Workspace:
    root: Path

    def __post_init__(self):
        self.root = Path(self.root)

    def path(self, *parts) -> Path:
        return self.root.joinpath(*parts)

    def require(self, *parts) -> Path:
        p = self.path(*parts)
        if not p.exists():
            raise CorpusError(f"missing artifact {p}; run the earlier pipeline stage first")
        return p

    def read_stamp(self, name: str) -> str | None:
        p = self.path("stamps", name)
        return p.read_text().strip() if p.exists() else None

    def write_stamp(self, name: str, digest: str) -> None:
        self.path("stamps").mkdir(parents=True, exist_ok=True)
        self.path("stamps", name).write_text(digest + "\n")


def _save_arrays(path: Path, arrays: dict) -> None:
    np.savez(path, **arrays)


def _load_arrays(path: Path) -> dict:
    with np.load(path) as data:
        return {k: data[k] for k in data.files}


def _input_files(root: Path, kind: str, ids) -> list[Path]:
    exts = {"audio": (".wav", ".phn"), "categorical": (".sym", ".bnd"), "frames": (".csv", ".bnd")}[kind]
    files = []
    for uid in ids:
        for ext in exts:
            p = root / f"{uid}{ext}"
            files.append(p if p.exists() else root / f"{uid}{ext.upper()}")
    return files


def _hash_inputs(files, extra: str) -> str:
    h = hashlib.sha256(extra.encode())
    for p in files:
        h.update(str(p).encode())
        with open(p, "rb") as f:
            for block in iter(lambda: f.read(1 << 20), b""):
                h.update(block)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# prepare

def prepare(cfg: PipelineConfig, force: bool = False) -> dict:
    """Features, codebook and symbol sequences for every utterance; skipped when up to date."""
    if not cfg.corpus.root:
        raise ConfigError("corpus.root is not set")
    root = Path(cfg.corpus.root)
    kind = corpus_io.corpus_kind(root)
    ws = Workspace(cfg.corpus.workdir)
    if kind == "audio":
        ids, meta = corpus_io.discover(root), {}
    else:
        meta, ids = corpus_io.read_manifest(root)
    if not ids:
        raise CorpusError(f"no utterances found under {root}")

    seed = cfg.pipeline.seed
    digest = _hash_inputs(_input_files(root, kind, ids),
                          kind + cfg.section_hash("corpus", "mfcc", "quantizer", "pipeline"))
    outputs = ["split.json", "utterances.json", "symbols.npz"]
    if (not force and ws.read_stamp("prepare") == digest
            and all(ws.path(o).exists() for o in outputs)):
        log.info("prepare: artifacts up to date, nothing to do")
        return {"skipped": True, "n_utts": len(ids), "kind": kind}

    ws.root.mkdir(parents=True, exist_ok=True)
    split = corpus_io.split_corpus(ids, cfg.corpus.val_fraction, seed, cfg.corpus.test_fraction)
    features, symbols, info = {}, {}, {}
    if kind == "audio":
        mcfg = cfg.mfcc.to_mfcc_config()
        for uid in ids:
            utt = corpus_io.load_utterance(root, uid)
            try:
                feats = compute_mfcc(utt.audio, mcfg, utterance_id=uid)
            except ValueError as exc:
                raise CorpusError(f"{uid}: {exc}") from None
            features[uid] = feats.frames
            info[uid] = {"n_frames": len(feats), "duration": utt.audio.duration, "hop_ms": mcfg.hop_ms,
                         "sample_rate": utt.audio.sample_rate}
    else:
        for uid in ids:
            feats, _ = corpus_io.read_synth_utterance(root, uid, meta)
            if kind == "frames":
                features[uid] = feats.frames
            else:
                symbols[uid] = np.asarray(feats.symbols, dtype=np.int64)
            info[uid] = {"n_frames": len(feats), "duration": len(feats) * feats.hop_ms / 1000.0,
                         "hop_ms": feats.hop_ms}

    n_symbols = int(meta.get("n_symbols", cfg.quantizer.k))
    if features:
        sample = sample_frames([features[u] for u in split.fit], n=cfg.quantizer.sample,
                               seed=subseed(seed, "sample"))
        codebook = fit_codebook(sample, k=cfg.quantizer.k, n_init=cfg.quantizer.n_init,
                                seed=subseed(seed, "kmeans"))
        save_codebook(ws.path("codebook.txt"), codebook)
        for uid, frames in features.items():
            symbols[uid] = quantize(codebook, FrameSequence(frames=frames)).symbols.astype(np.int64)
        _save_arrays(ws.path("features.npz"), features)
        n_symbols = codebook.k
        log.info("prepare: codebook fitted on %d frames, inertia %.4g", len(sample), codebook.inertia)
    elif ws.path("features.npz").exists():
        ws.path("features.npz").unlink()

    bad = [u for u, s in symbols.items() if len(s) and (s.min() < 0 or s.max() >= n_symbols)]
    if bad:
        raise CorpusError(f"symbols outside 0..{n_symbols - 1} in {bad[:3]}")
    _save_arrays(ws.path("symbols.npz"), symbols)
    ws.path("split.json").write_text(json.dumps(
        {"train": split.train, "validation": split.validation, "test": split.test, "seed": seed},
        indent=1) + "\n")
    ws.path("utterances.json").write_text(json.dumps(
        {"kind": kind, "n_symbols": n_symbols, "utterances": info}, indent=1, sort_keys=True) + "\n")
    ws.write_stamp("prepare", digest)
    log.info("prepare: %d utterances (%d train, %d validation, %d test)",
             len(ids), len(split.train), len(split.validation), len(split.test))
    return {"skipped": False, "n_utts": len(ids), "kind": kind}


def _load_split(ws: Workspace) -> corpus_io.SplitSpec:
    d = json.loads(ws.require("split.json").read_text())
    return corpus_io.SplitSpec(train=d["train"], validation=d["validation"], test=d["test"], seed=d["seed"])


def _load_info(ws: Workspace) -> dict:
    return json.loads(ws.require("utterances.json").read_text())


# ---------------------------------------------------------------------------
# train

def _network_config(cfg: PipelineConfig, n_symbols: int, dim: int) -> NetworkConfig:
    m = cfg.model
    common = dict(n_layers=m.n_layers, dropout_p=m.dropout_p, bptt_len=m.bptt_len, lr=m.lr, rho=m.rho,
                  eps=m.eps, max_epochs=m.max_epochs, patience=m.patience,
                  seed=subseed(cfg.pipeline.seed, "network"))
    if m.kind == "rnn-cat":
        return NetworkConfig.for_categorical(n_symbols, hidden_dim=m.hidden_dim or 40,
                                             skip_prob=m.skip_prob, **common)
    return NetworkConfig.for_continuous(dim, hidden_dim=m.hidden_dim or 20,
                                        standardize=m.standardize, **common)


def _model_path(ws: Workspace, kind: str) -> Path:
    return ws.path("model", "markov.txt" if kind == "markov" else "rnn.json")


def train(cfg: PipelineConfig, force: bool = False) -> dict:
    ws = Workspace(cfg.corpus.workdir)
    split, info = _load_split(ws), _load_info(ws)
    digest = hashlib.sha256(((ws.read_stamp("prepare") or "")
                             + cfg.section_hash("model", "pipeline")).encode()).hexdigest()
    model_path = _model_path(ws, cfg.model.kind)
    if not force and ws.read_stamp("train") == digest and model_path.exists():
        log.info("train: model up to date, nothing to do")
        return {"skipped": True, "model": str(model_path)}

    ws.path("model").mkdir(parents=True, exist_ok=True)
    symbols = _load_arrays(ws.require("symbols.npz"))
    n_symbols = info["n_symbols"]
    if cfg.model.kind == "markov":
        model = fit_markov([symbols[u] for u in split.fit], order=cfg.model.order,
                           alpha=cfg.model.alpha, n_symbols=n_symbols)
        save_markov(model_path, model)
        log.info("train: lag model of order %d on %d utterances", model.order, len(split.fit))
    else:
        if cfg.model.kind == "rnn-cat":
            data = symbols
        else:
            if not ws.path("features.npz").exists():
                raise ConfigError("rnn-mfcc needs continuous features; this corpus only has symbols")
            data = _load_arrays(ws.path("features.npz"))
        if not split.validation:
            raise ConfigError("recurrent models need a validation set; raise corpus.val_fraction")
        dim = next(iter(data.values())).shape[1] if cfg.model.kind == "rnn-mfcc" else n_symbols
        ncfg = _network_config(cfg, n_symbols, dim)
        net, report = train_predictor([data[u] for u in split.train], [data[u] for u in split.validation],
                                      ncfg, log=log.info)
        save_network(model_path, net)
        report.write_csv(ws.path("model", "report.csv"))
    ws.write_stamp("train", digest)
    return {"skipped": False, "model": str(model_path)}


# ---------------------------------------------------------------------------
# segment / evaluate

def error_signals(cfg: PipelineConfig, ids=None) -> list[ErrorSignal]:
    """Prefix-zeroed prediction error for the given (default: test) utterances."""
    ws = Workspace(cfg.corpus.workdir)
    split, info = _load_split(ws), _load_info(ws)
    ids = split.test if ids is None else ids
    model_path = _model_path(ws, cfg.model.kind)
    if not model_path.exists():
        raise CorpusError(f"missing model {model_path}; run train first")
    symbols = _load_arrays(ws.require("symbols.npz"))
    out = []
    if cfg.model.kind == "markov":
        model = load_markov(model_path)
        if model.n_symbols != info["n_symbols"]:
            raise ConfigError("checkpoint symbol count does not match the prepared features")
        for uid in ids:
            hop = info["utterances"][uid]["hop_ms"]
            seq = CategoricalSequence(symbols=symbols[uid], utterance_id=uid, hop_ms=hop,
                                      n_symbols=model.n_symbols)
            out.append(markov_error(model, seq))
    else:
        net = load_network(model_path)
        data = symbols if cfg.model.kind == "rnn-cat" else _load_arrays(ws.require("features.npz"))
        for uid in ids:
            x = data[uid]
            width = net.config.input_dim
            if (net.config.categorical and (x.ndim != 1 or info["n_symbols"] != width)) or \
                    (not net.config.categorical and (x.ndim != 2 or x.shape[1] != width)):
                raise ConfigError(f"checkpoint input width {width} does not match features of {uid}")
            out.append(nn_error_signal(net, x, utterance_id=uid,
                                       hop_ms=info["utterances"][uid]["hop_ms"]))
    return [zero_prefix(e, cfg.segment.prefix_frames) for e in out]


def _clear(directory: Path, pattern: str) -> None:
    if directory.exists():
        for p in sorted(directory.rglob(pattern)):
            p.unlink()


def segment(cfg: PipelineConfig, delta: float | None = None, dump_errors: bool = False,
            plot: int = 0) -> dict:
    ws = Workspace(cfg.corpus.workdir)
    delta = cfg.segment.delta if delta is None else delta
    errors = error_signals(cfg)
    bdir, edir = ws.path("boundaries"), ws.path("errors")
    _clear(bdir, "*.txt")
    if dump_errors:
        _clear(edir, "*.csv")
    counts = {}
    golds = _gold_sets(cfg, [e.utterance_id for e in errors])[0] if plot else None
    for i, err in enumerate(errors):
        b = detect_boundaries(err, delta, reset=cfg.segment.reset)
        target = bdir / f"{err.utterance_id}.txt"
        target.parent.mkdir(parents=True, exist_ok=True)
        write_boundaries(target, b, with_frames=True)
        counts[err.utterance_id] = len(b)
        if dump_errors:
            target = edir / f"{err.utterance_id}.csv"
            target.parent.mkdir(parents=True, exist_ok=True)
            np.savetxt(target, err.values, fmt="%.8f")
        if i < plot:
            from .plotting import plot_error_profile
            target = ws.path("figures", "errors", f"{err.utterance_id}.png")
            target.parent.mkdir(parents=True, exist_ok=True)
            plot_error_profile(err, golds[i].seconds, target, hyp_seconds=b.seconds)
    log.info("segment: %d utterances, %d boundaries at delta=%g", len(counts), sum(counts.values()), delta)
    return {"delta": delta, "counts": counts}


def _speech_span(labels, gold: BoundarySet, silence: set):
    start, end = gold.seconds[0], gold.seconds[-1]
    if labels and labels[0] in silence and len(gold) > 1:
        start = gold.seconds[1]
    if labels and labels[-1] in silence and len(gold) > 1:
        end = gold.seconds[-2]
    return start, end


def _gold_sets(cfg: PipelineConfig, ids):
    """Gold boundaries (after the configured trimming) plus the speech span per utterance."""
    root = Path(cfg.corpus.root)
    kind = corpus_io.corpus_kind(root)
    info = _load_info(Workspace(cfg.corpus.workdir))["utterances"]
    meta = corpus_io.read_manifest(root)[0] if kind != "audio" else {}
    silence = {s.strip() for s in cfg.evaluate.silence_labels.split(",") if s.strip()}
    golds, spans = [], []
    for uid in ids:
        duration = info[uid]["duration"]
        labels = []
        if kind == "audio":
            gold, labels = corpus_io.read_phn(corpus_io.utterance_file(root, uid, ".phn"),
                                              info[uid]["sample_rate"])
        else:
            gold = corpus_io.read_synth_utterance(root, uid, meta)[1]
        span = (0.0, duration)
        if cfg.evaluate.trim_silence and labels:
            span = _speech_span(labels, gold, silence)
            s = gold.seconds
            gold = BoundarySet(seconds=s[(s >= span[0] - 1e-9) & (s <= span[1] + 1e-9)], kind="gold")
        gold = trim_gold(gold, duration, cfg.evaluate.drop_initial, cfg.evaluate.drop_final)
        gold.utterance_id = uid
        golds.append(gold)
        spans.append(span)
    return golds, spans


def _restrict(b: BoundarySet, span, tolerance_ms: float) -> BoundarySet:
    lo, hi = span[0] - tolerance_ms / 1000.0, span[1] + tolerance_ms / 1000.0
    keep = (b.seconds >= lo) & (b.seconds <= hi)
    return BoundarySet(seconds=b.seconds[keep], utterance_id=b.utterance_id)


def _periodic_sets(cfg: PipelineConfig, ids, period_ms: float) -> list[BoundarySet]:
    info = _load_info(Workspace(cfg.corpus.workdir))["utterances"]
    out = []
    for uid in ids:
        hop = info[uid]["hop_ms"]
        # the period grid runs over the real duration, which need not be a whole number of hops
        out.append(periodic_boundaries(info[uid]["duration"] * 1000.0 / hop, hop, period_ms, uid))
    return out


def _score(cfg, golds, hyps, spans, mode):
    tol = cfg.evaluate.tolerance_ms
    if cfg.evaluate.trim_silence:
        hyps = [_restrict(h, s, tol) for h, s in zip(hyps, spans)]
    pooled = aggregate(match_boundaries(g, h, tol, mode) for g, h in zip(golds, hyps))
    return pooled, compute_metrics(pooled)


def _write_reports(ws: Workspace, stem: str, header: list, rows: list) -> None:
    ws.path("reports").mkdir(parents=True, exist_ok=True)
    with open(ws.path("reports", f"{stem}.csv"), "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(row) + "\n")
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    with open(ws.path("reports", f"{stem}.txt"), "w") as f:
        f.write("  ".join(h.rjust(w) for h, w in zip(header, widths)) + "\n")
        f.write("  ".join("-" * w for w in widths) + "\n")
        for row in rows:
            f.write("  ".join(v.rjust(w) for v, w in zip(row, widths)) + "\n")


def _pct_cells(report) -> list[str]:
    pct = report.as_percent()
    return [f"{pct[c]:.1f}" for c in REPORT_COLUMNS]


def evaluate(cfg: PipelineConfig, boundaries_dir=None, periodic_ms: float | None = None) -> dict:
    """Pooled scores of boundary files (or of the periodic baseline) in each configured mode."""
    ws = Workspace(cfg.corpus.workdir)
    ids = _load_split(ws).test
    golds, spans = _gold_sets(cfg, ids)
    if periodic_ms is not None:
        hyps = _periodic_sets(cfg, ids, periodic_ms)
        system, stem = f"periodic-{periodic_ms:g}ms", "evaluation_periodic"
    else:
        bdir = Path(boundaries_dir) if boundaries_dir else ws.path("boundaries")
        hyps = []
        for uid in ids:
            p = bdir / f"{uid}.txt"
            if not p.exists():
                raise CorpusError(f"missing hypothesis file {p}")
            hyps.append(read_boundaries(p))
        system, stem = cfg.model.kind, "evaluation"
    results, rows = {}, []
    for mode in cfg.eval_modes():
        pooled, report = _score(cfg, golds, hyps, spans, mode)
        results[mode] = (pooled, report)
        rows.append([system, mode, f"{cfg.evaluate.tolerance_ms:g}", str(pooled.n_gold),
                     str(pooled.n_hyp), str(pooled.n_hit)] + _pct_cells(report))
    _write_reports(ws, stem, ["system", "mode", "tolerance_ms", "n_gold", "n_hyp", "n_hit",
                              *REPORT_COLUMNS], rows)
    return results


def sweep(cfg: PipelineConfig, periodic: bool = False, plot: bool = True) -> dict:
    """Threshold sweep per evaluation mode, optionally with the periodic baseline's period sweep."""
    ws = Workspace(cfg.corpus.workdir)
    deltas = sorted(parse_grid(cfg.segment.deltas))
    if not deltas:
        raise ConfigError("segment.deltas is empty")
    errors = error_signals(cfg)
    ids = [e.utterance_id for e in errors]
    golds, spans = _gold_sets(cfg, ids)
    curves, results = {}, {}
    for mode in cfg.eval_modes():
        if cfg.evaluate.trim_silence:
            rows = []
            for d in deltas:
                hyps = [detect_boundaries(e, d, reset=cfg.segment.reset) for e in errors]
                pooled, report = _score(cfg, golds, hyps, spans, mode)
                rows.append((d, report, pooled))
        else:
            rows = sweep_threshold(errors, golds, deltas, cfg.evaluate.tolerance_ms, mode,
                                   reset=cfg.segment.reset)
        results[mode] = rows
        _write_reports(ws, f"sweep_{mode}", ["delta", *REPORT_COLUMNS],
                       [[f"{d:g}"] + _pct_cells(r) for d, r, _ in rows])
        curves[f"{cfg.model.kind} ({mode})"] = [r for _, r, _ in rows]
        if periodic:
            prow = []
            for period in sorted(parse_grid(cfg.segment.periods)):
                pooled, report = _score(cfg, golds, _periodic_sets(cfg, ids, period), spans, mode)
                prow.append((period, report, pooled))
            results[f"periodic-{mode}"] = prow
            _write_reports(ws, f"sweep_periodic_{mode}", ["period_ms", *REPORT_COLUMNS],
                           [[f"{p:g}"] + _pct_cells(r) for p, r, _ in prow])
            curves[f"periodic ({mode})"] = [r for _, r, _ in prow]
    if plot:
        from .plotting import plot_pr_curves
        plot_pr_curves(curves, ws.path("reports", "sweep_pr.png"))
    best = {m: max(rows, key=lambda r: r[1].f_score) for m, rows in results.items()}
    for m, (d, r, _) in best.items():
        log.info("sweep[%s]: best F %.1f at %g (R-value %.1f)", m, 100 * r.f_score, d, 100 * r.r_value)
    return results


def synth(out, spec: corpus_io.SynthSpec, overwrite: bool = False) -> list:
    out = Path(out)
    if out.exists() and any(out.iterdir()):
        if not overwrite:
            raise CorpusError(f"{out} exists and is not empty (use --overwrite)")
        shutil.rmtree(out)
    utts = corpus_io.synth_corpus(spec)
    corpus_io.write_synth_corpus(out, utts, spec)
    log.info("synth: wrote %d %s utterances to %s", len(utts), spec.kind, out)
    return utts
