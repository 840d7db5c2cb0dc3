"""
Declarative pipeline configuration (INI ``key = value`` sections).

An empty file yields the reference configuration: 13-dim MFCCs at a 10 ms
hop, an 8-symbol codebook from 10,000 sampled frames, an order-6 lag model,
20 ms cropped tolerance windows.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
import json
from dataclasses import dataclass, field, fields

from .audio_features import MfccConfig


class ConfigError(ValueError):
    pass


@dataclass
class CorpusSection:
    root: str = ""
    workdir: str = "work"
    val_fraction: float = 0.1
    test_fraction: float = 0.2


@dataclass
class MfccSection:
    window_ms: float = 25.0
    hop_ms: float = 10.0
    n_cepstra: int = 12
    include_energy: bool = True
    n_mel_filters: int = 26
    pre_emphasis: float = 0.97
    log_floor: float = 1e-10

    def to_mfcc_config(self) -> MfccConfig:
        return MfccConfig(**dataclasses.asdict(self))


@dataclass
class QuantizerSection:
    k: int = 8
    n_init: int = 10
    sample: int = 10000


@dataclass
class ModelSection:
    kind: str = "markov"        # markov | rnn-cat | rnn-mfcc
    order: int = 6
    alpha: float = 1.0
    hidden_dim: int = 0         # 0 selects 40 for rnn-cat, 20 for rnn-mfcc
    n_layers: int = 2
    dropout_p: float = 0.2
    skip_prob: float = 0.8
    bptt_len: int = 64
    lr: float = 1e-3
    rho: float = 0.9
    eps: float = 1e-8
    max_epochs: int = 50
    patience: int = 5
    standardize: bool = False


@dataclass
class SegmentSection:
    delta: float = 0.5
    deltas: str = "0:2:0.05"    # start:stop:step (inclusive) or comma list
    prefix_frames: int = 7
    reset: str = "local"        # local | emit
    period_ms: float = 5.0
    periods: str = "5,10,20,30,40,50,60,70,80,90,100,120,150,200"


@dataclass
class EvaluateSection:
    modes: str = "cropped,overlapping"
    tolerance_ms: float = 20.0
    drop_initial: bool = False
    drop_final: bool = False
    trim_silence: bool = False
    silence_labels: str = "h#"


@dataclass
class PipelineSection:
    seed: int = 0


@dataclass
class PipelineConfig:
    corpus: CorpusSection = field(default_factory=CorpusSection)
    mfcc: MfccSection = field(default_factory=MfccSection)
    quantizer: QuantizerSection = field(default_factory=QuantizerSection)
    model: ModelSection = field(default_factory=ModelSection)
    segment: SegmentSection = field(default_factory=SegmentSection)
    evaluate: EvaluateSection = field(default_factory=EvaluateSection)
    pipeline: PipelineSection = field(default_factory=PipelineSection)

    def section_hash(self, *names: str) -> str:
        payload = {n: dataclasses.asdict(getattr(self, n)) for n in names}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def validate(self) -> "PipelineConfig":
        if self.model.kind not in ("markov", "rnn-cat", "rnn-mfcc"):
            raise ConfigError(f"model.kind must be markov, rnn-cat or rnn-mfcc, not {self.model.kind!r}")
        if self.segment.reset not in ("local", "emit"):
            raise ConfigError(f"segment.reset must be local or emit, not {self.segment.reset!r}")
        for m in self.eval_modes():
            if m not in ("cropped", "overlapping"):
                raise ConfigError(f"unknown evaluation mode {m!r}")
        if self.segment.delta < 0:
            raise ConfigError("segment.delta must be nonnegative")
        try:
            self.mfcc.to_mfcc_config()
        except ValueError as exc:
            raise ConfigError(f"[mfcc] {exc}") from None
        return self

    def eval_modes(self) -> list[str]:
        return [m.strip() for m in self.evaluate.modes.split(",") if m.strip()]


def _coerce(value: str, typ, where: str):
    typ = {"float": float, "int": int, "bool": bool, "str": str}.get(typ, typ)
    try:
        if typ is bool:
            low = value.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        return typ(value.strip())
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {value!r} as {typ.__name__}") from None


def apply_setting(cfg: PipelineConfig, section: str, key: str, value: str) -> None:
    sec = getattr(cfg, section, None)
    if sec is None or not dataclasses.is_dataclass(sec):
        raise ConfigError(f"unknown config section [{section}]")
    types = {f.name: f.type for f in fields(sec)}
    if key not in types:
        raise ConfigError(f"unknown key {key!r} in [{section}]")
    setattr(sec, key, _coerce(value, types[key], f"{section}.{key}"))


def load_config(path=None, overrides=()) -> PipelineConfig:
    """Read an INI file (optional) and apply ``section.key=value`` overrides."""
    cfg = PipelineConfig()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as f:
                parser.read_file(f)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for section in parser.sections():
            for key, value in parser.items(section):
                apply_setting(cfg, section, key, value)
    for item in overrides:
        lhs, sep, value = item.partition("=")
        section, dot, key = lhs.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        apply_setting(cfg, section, key, value)
    return cfg.validate()


def dump_config(cfg: PipelineConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    for f in fields(cfg):
        sec = getattr(cfg, f.name)
        parser[f.name] = {k: str(v).lower() if isinstance(v, bool) else str(v)
                          for k, v in dataclasses.asdict(sec).items()}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def parse_grid(text: str) -> list[float]:
    """``"a:b:step"`` (inclusive of ``b`` up to rounding) or ``"x,y,z"``."""
    text = text.strip()
    if ":" in text:
        try:
            start, stop, step = (float(p) for p in text.split(":"))
        except ValueError:
            raise ConfigError(f"bad range {text!r}; expected start:stop:step") from None
        if step <= 0:
            raise ConfigError("range step must be positive")
        n = int(round((stop - start) / step)) + 1
        return [round(start + i * step, 10) for i in range(max(n, 0))]
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"bad list {text!r}") from None
