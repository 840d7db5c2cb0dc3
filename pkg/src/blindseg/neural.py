"""
Stacked LSTM next-frame predictor in plain numpy.

Two flavours share the same machinery:

* categorical: one-hot inputs, softmax head, cross-entropy loss;
* continuous: MFCC inputs, linear head, mean squared error.

Training uses truncated backpropagation through time over chunks of
``bptt_len`` steps (hidden state carried across chunks, gradients not) and
RMSProp updates. Gate layout inside every weight matrix is ``[i, f, g, o]``.
"""

from __future__ import annotations

import copy
import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .segmenter import ErrorSignal

LOG_FLOOR = 1e-12
CHECKPOINT_FORMAT = "blindseg-lstm"
CHECKPOINT_VERSION = 1


class DivergenceError(RuntimeError):
    """Raised when activations, losses or gradients stop being finite."""


@dataclass
class NetworkConfig:
    input_dim: int = 8
    hidden_dim: int = 40
    n_layers: int = 2
    output_dim: int = 8
    head: str = "softmax"
    dropout_p: float = 0.2
    skip_prob: float = 0.8
    bptt_len: int = 64
    lr: float = 1e-3
    rho: float = 0.9
    eps: float = 1e-8
    seed: int = 0
    max_epochs: int = 50
    patience: int = 5
    standardize: bool = False

    def __post_init__(self):
        if self.head not in ("softmax", "linear"):
            raise ValueError(f"unknown head {self.head!r}")
        if not 0 <= self.dropout_p < 1:
            raise ValueError("dropout_p must lie in [0, 1)")
        if not 0 <= self.skip_prob <= 1:
            raise ValueError("skip_prob must lie in [0, 1]")
        if min(self.hidden_dim, self.input_dim, self.output_dim, self.n_layers, self.bptt_len) < 1:
            raise ValueError("dimensions, layer count and bptt_len must be positive")

    @property
    def categorical(self) -> bool:
        return self.head == "softmax"

    @classmethod
    def for_categorical(cls, n_symbols: int = 8, **kw) -> "NetworkConfig":
        return cls(input_dim=n_symbols, output_dim=n_symbols, hidden_dim=kw.pop("hidden_dim", 40),
                   head="softmax", **kw)

    @classmethod
    def for_continuous(cls, dim: int = 13, **kw) -> "NetworkConfig":
        kw.setdefault("skip_prob", 0.0)
        return cls(input_dim=dim, output_dim=dim, hidden_dim=kw.pop("hidden_dim", 20),
                   head="linear", **kw)


@dataclass
class LstmNetwork:
    config: NetworkConfig
    params: dict
    cache: dict = field(default_factory=dict)
    norm_mean: np.ndarray | None = None
    norm_std: np.ndarray | None = None

    def param_names(self) -> list[str]:
        return list(self.params)

    def copy(self) -> "LstmNetwork":
        return copy.deepcopy(self)


@dataclass
class TrainingReport:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    backprop_fraction: list = field(default_factory=list)
    initial_train_loss: float = math.nan
    initial_val_loss: float = math.nan
    best_epoch: int = 0
    stopped_epoch: int = 0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss", "backprop_fraction"])
            w.writerow([0, f"{self.initial_train_loss:.8f}", f"{self.initial_val_loss:.8f}", ""])
            for e, (tr, va, bf) in enumerate(zip(self.train_loss, self.val_loss,
                                                 self.backprop_fraction), start=1):
                w.writerow([e, f"{tr:.8f}", f"{va:.8f}", f"{bf:.6f}"])


# ---------------------------------------------------------------------------
# parameters

def init_network(config: NetworkConfig, seed: int | None = None) -> LstmNetwork:
    """Uniform weights in ``[-1/sqrt(H), 1/sqrt(H)]``, zero biases except forget gates at 1."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    H = config.hidden_dim
    s = 1.0 / math.sqrt(H)
    params = {}
    for layer in range(config.n_layers):
        n_in = config.input_dim if layer == 0 else H
        params[f"W{layer}"] = rng.uniform(-s, s, size=(4 * H, n_in + H))
        b = np.zeros(4 * H)
        b[H:2 * H] = 1.0
        params[f"b{layer}"] = b
    params["Wy"] = rng.uniform(-s, s, size=(config.output_dim, H))
    params["by"] = np.zeros(config.output_dim)
    return LstmNetwork(config=config, params=params,
                       cache={k: np.zeros_like(v) for k, v in params.items()})


def zero_state(net: LstmNetwork):
    H = net.config.hidden_dim
    return [(np.zeros(H), np.zeros(H)) for _ in range(net.config.n_layers)]


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


# ---------------------------------------------------------------------------
# forward / backward

def _forward(net: LstmNetwork, inputs: np.ndarray, state=None, dropout_masks=None):
    """Run the stack and keep everything the backward pass needs."""
    cfg = net.config
    H = cfg.hidden_dim
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != cfg.input_dim:
        raise ValueError(f"dimension mismatch: expected (T, {cfg.input_dim}) inputs, got {x.shape}")
    T = x.shape[0]
    state = zero_state(net) if state is None else state
    layers = []
    new_state = []
    layer_in = x
    for layer in range(cfg.n_layers):
        W, b = net.params[f"W{layer}"], net.params[f"b{layer}"]
        n_in = layer_in.shape[1]
        Wx, Wh = W[:, :n_in], W[:, n_in:]
        proj = layer_in @ Wx.T + b
        h_prev, c_prev = state[layer]
        hs = np.empty((T, H)); cs = np.empty((T, H)); gates = np.empty((T, 4 * H))
        h0, c0 = h_prev, c_prev
        for t in range(T):
            z = proj[t] + Wh @ h_prev
            a = np.empty(4 * H)
            a[:2 * H] = _sigmoid(z[:2 * H])
            a[2 * H:3 * H] = np.tanh(z[2 * H:3 * H])
            a[3 * H:] = _sigmoid(z[3 * H:])
            c_prev = a[H:2 * H] * c_prev + a[:H] * a[2 * H:3 * H]
            h_prev = a[3 * H:] * np.tanh(c_prev)
            gates[t] = a; cs[t] = c_prev; hs[t] = h_prev
        new_state.append((h_prev, c_prev))
        out = hs if dropout_masks is None else hs * dropout_masks[layer]
        layers.append({"input": layer_in, "h": hs, "c": cs, "gates": gates, "h0": h0, "c0": c0,
                       "n_in": n_in})
        layer_in = out
    logits = layer_in @ net.params["Wy"].T + net.params["by"]
    if not np.all(np.isfinite(logits)):
        raise DivergenceError("non-finite activation in forward pass")
    return logits, {"layers": layers, "top": layer_in}, new_state


def _dropout_masks(net: LstmNetwork, T: int, rng: np.random.Generator):
    p = net.config.dropout_p
    if p == 0:
        return None
    keep = 1.0 - p
    return [(rng.random((T, net.config.hidden_dim)) < keep) / keep
            for _ in range(net.config.n_layers)]


def _head_output(net: LstmNetwork, logits):
    return _softmax(logits) if net.config.categorical else logits


def forward(net: LstmNetwork, inputs, mode: str = "eval", rng: np.random.Generator | None = None,
            state=None) -> np.ndarray:
    """
    Outputs for every step; row ``t`` is the prediction for step ``t + 1``.

    ``mode="train"`` applies inverted dropout to each LSTM layer's output
    using ``rng``; ``mode="eval"`` is deterministic.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    x = np.asarray(inputs, dtype=np.float64)
    masks = None
    if mode == "train":
        masks = _dropout_masks(net, x.shape[0], rng if rng is not None else np.random.default_rng())
    logits, _, _ = _forward(net, x, state=state, dropout_masks=masks)
    return _head_output(net, logits)


def loss_categorical(predicted, target: int) -> float:
    return -math.log(max(float(predicted[target]), LOG_FLOOR))


def loss_mse(predicted, target) -> float:
    p, t = np.asarray(predicted, dtype=np.float64), np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {t.shape}")
    return float(np.sum((t - p) ** 2) / p.size)


def _step_losses(net: LstmNetwork, logits, targets):
    """Per-step losses and their gradients w.r.t. the head's pre-activation."""
    if net.config.categorical:
        tgt = np.asarray(targets, dtype=np.intp)
        logp = _log_softmax(logits)
        rows = np.arange(len(tgt))
        losses = -logp[rows, tgt]
        dlogits = np.exp(logp)
        dlogits[rows, tgt] -= 1.0
    else:
        tgt = np.asarray(targets, dtype=np.float64)
        d = logits.shape[1]
        diff = logits - tgt
        losses = np.sum(diff ** 2, axis=1) / d
        dlogits = 2.0 * diff / d
    return losses, dlogits


def bptt_gradients(net: LstmNetwork, inputs, targets, loss_mask=None, state=None,
                   dropout_masks=None):
    """
    Gradients of the summed masked loss over one chunk.

    ``targets[t]`` is what output ``t`` should predict. Steps whose mask is
    false add no loss but still advance the recurrent state. ``state`` is the
    incoming ``[(h, c), ...]`` per layer and is treated as a constant.

    Returns ``(total_loss, grads, final_state)``.
    """
    x = np.asarray(inputs, dtype=np.float64)
    T = x.shape[0]
    mask = np.ones(T, dtype=bool) if loss_mask is None else np.asarray(loss_mask, dtype=bool)
    if len(mask) != T:
        raise ValueError("loss_mask length must match the number of steps")
    logits, cache, new_state = _forward(net, x, state=state, dropout_masks=dropout_masks)
    losses, dlogits = _step_losses(net, logits, targets)
    w = mask.astype(np.float64)
    total = float(np.sum(losses * w))
    dlogits = dlogits * w[:, None]

    grads = {k: np.zeros_like(v) for k, v in net.params.items()}
    grads["Wy"] = dlogits.T @ cache["top"]
    grads["by"] = dlogits.sum(axis=0)
    d_out = dlogits @ net.params["Wy"]

    H = net.config.hidden_dim
    for layer in reversed(range(net.config.n_layers)):
        lc = cache["layers"][layer]
        if dropout_masks is not None:
            d_out = d_out * dropout_masks[layer]
        W = net.params[f"W{layer}"]
        n_in = lc["n_in"]
        Wh = W[:, n_in:]
        gates, cs, hs = lc["gates"], lc["c"], lc["h"]
        dz_all = np.empty((T, 4 * H))
        dh_next = np.zeros(H)
        dc_next = np.zeros(H)
        for t in reversed(range(T)):
            i, f, g, o = gates[t, :H], gates[t, H:2 * H], gates[t, 2 * H:3 * H], gates[t, 3 * H:]
            c = cs[t]
            c_prev = cs[t - 1] if t > 0 else lc["c0"]
            tc = np.tanh(c)
            dh = d_out[t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz = dz_all[t]
            dz[:H] = dc * g * i * (1.0 - i)
            dz[H:2 * H] = dc * c_prev * f * (1.0 - f)
            dz[2 * H:3 * H] = dc * i * (1.0 - g * g)
            dz[3 * H:] = dh * tc * o * (1.0 - o)
            dh_next = Wh.T @ dz
            dc_next = dc * f
        h_prev_seq = np.vstack([lc["h0"][None, :], hs[:-1]])
        grads[f"W{layer}"] = np.hstack([dz_all.T @ lc["input"], dz_all.T @ h_prev_seq])
        grads[f"b{layer}"] = dz_all.sum(axis=0)
        d_out = dz_all @ W[:, :n_in]

    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for {k}")
    return total, grads, new_state


def rmsprop_step(net: LstmNetwork, grads: dict, lr: float, rho: float = 0.9,
                 eps: float = 1e-8) -> LstmNetwork:
    """In-place RMSProp update; returns ``net`` for chaining."""
    for k, g in grads.items():
        cache = net.cache.setdefault(k, np.zeros_like(g))
        if cache.shape != g.shape:
            raise ValueError(f"optimizer state shape mismatch for {k}")
        cache *= rho
        cache += (1.0 - rho) * g * g
        update = lr * g / (np.sqrt(cache) + eps)
        if not np.all(np.isfinite(update)):
            raise DivergenceError(f"non-finite update for {k}")
        net.params[k] -= update
    return net


# ---------------------------------------------------------------------------
# training

def make_skip_mask(symbols, skip_prob: float = 0.8, seed=None) -> np.ndarray:
    """
    Loss flags for the targets ``x_1 .. x_{T-1}``.

    A target that differs from its predecessor is always kept; a repeat is
    kept with probability ``1 - skip_prob``. ``seed`` may be an int or a
    ``numpy.random.Generator``.
    """
    s = np.asarray(symbols)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    change = s[1:] != s[:-1]
    keep_repeat = rng.random(len(change)) >= skip_prob
    return change | keep_repeat


def _as_inputs(net: LstmNetwork, seq) -> np.ndarray:
    if net.config.categorical:
        return np.eye(net.config.input_dim)[np.asarray(seq, dtype=np.intp)]
    x = np.asarray(seq, dtype=np.float64)
    if net.norm_mean is not None:
        x = (x - net.norm_mean) / net.norm_std
    return x


def _sequence_loss(net: LstmNetwork, seq, mask=None) -> tuple[float, int]:
    """Summed eval-mode loss over a whole sequence, and the number of scored steps."""
    if len(seq) < 2:
        return 0.0, 0
    x = _as_inputs(net, seq)
    targets = np.asarray(seq[1:]) if net.config.categorical else x[1:]
    logits, _, _ = _forward(net, x[:-1])
    losses, _ = _step_losses(net, logits, targets)
    if mask is not None:
        losses = losses[mask]
    return float(losses.sum()), len(losses)


def mean_loss(net: LstmNetwork, sequences) -> float:
    total, n = 0.0, 0
    for seq in sequences:
        s, k = _sequence_loss(net, seq)
        total += s
        n += k
    return total / max(n, 1)


def _train_epoch(net: LstmNetwork, sequences, rng: np.random.Generator):
    cfg = net.config
    order = rng.permutation(len(sequences))
    total, scored, seen = 0.0, 0, 0
    for idx in order:
        seq = sequences[idx]
        if len(seq) < 2:
            continue
        x = _as_inputs(net, seq)
        if cfg.categorical:
            targets = np.asarray(seq[1:], dtype=np.intp)
            mask = make_skip_mask(seq, cfg.skip_prob, rng)
        else:
            targets = x[1:]
            mask = np.ones(len(seq) - 1, dtype=bool)
        inputs = x[:-1]
        state = None
        for start in range(0, len(inputs), cfg.bptt_len):
            stop = start + cfg.bptt_len
            chunk_mask = mask[start:stop]
            masks = _dropout_masks(net, len(chunk_mask), rng)
            loss, grads, state = bptt_gradients(net, inputs[start:stop], targets[start:stop],
                                                 chunk_mask, state=state, dropout_masks=masks)
            if not math.isfinite(loss):
                raise DivergenceError("non-finite training loss")
            n_scored = int(chunk_mask.sum())
            if n_scored:
                rmsprop_step(net, grads, cfg.lr, cfg.rho, cfg.eps)
            total += loss
            scored += n_scored
            seen += len(chunk_mask)
    return total / max(scored, 1), scored / max(seen, 1)


def train_predictor(train, val, config: NetworkConfig, log=None):
    """
    Fit a network with early stopping on validation loss.

    ``train`` and ``val`` are lists of symbol arrays (categorical) or
    ``T x d`` frame matrices (continuous). Returns ``(network, report)``
    where the network carries the best-validation parameters.
    """
    train = [np.asarray(s) for s in train]
    val = [np.asarray(s) for s in val]
    if not train or not val:
        raise ValueError("training and validation sets must be nonempty")
    net = init_network(config)
    if config.standardize and not config.categorical:
        stacked = np.concatenate(train, axis=0)
        net.norm_mean = stacked.mean(axis=0)
        net.norm_std = np.where(stacked.std(axis=0) > 0, stacked.std(axis=0), 1.0)

    rng = np.random.default_rng([config.seed, 1])
    report = TrainingReport(initial_train_loss=mean_loss(net, train),
                            initial_val_loss=mean_loss(net, val))
    best = net.copy()
    best_val = report.initial_val_loss
    since_best = 0
    for epoch in range(1, config.max_epochs + 1):
        tr, frac = _train_epoch(net, train, rng)
        va = mean_loss(net, val)
        if not math.isfinite(va):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
        report.train_loss.append(tr)
        report.val_loss.append(va)
        report.backprop_fraction.append(frac)
        report.stopped_epoch = epoch
        if log is not None:
            log(f"epoch {epoch}: train {tr:.5f} val {va:.5f} backprop {frac:.3f}")
        if va < best_val:
            best_val, best, since_best = va, net.copy(), 0
            report.best_epoch = epoch
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    return best, report


def nn_error_signal(net: LstmNetwork, sequence, utterance_id: str = "",
                    hop_ms: float = 10.0) -> ErrorSignal:
    """
    Per-frame prediction error in eval mode.

    ``E(t)`` compares the output after reading ``x_0 .. x_{t-1}`` with
    ``x_t``: cross-entropy for the categorical head, mean squared error for
    the linear head. ``E(0) = 0``.
    """
    seq = np.asarray(sequence)
    values = np.zeros(len(seq))
    if len(seq) >= 2:
        x = _as_inputs(net, seq)
        out = forward(net, x[:-1], mode="eval")
        if net.config.categorical:
            p = out[np.arange(len(seq) - 1), seq[1:].astype(np.intp)]
            values[1:] = -np.log(np.maximum(p, LOG_FLOOR))
        else:
            values[1:] = np.sum((x[1:] - out) ** 2, axis=1) / x.shape[1]
    return ErrorSignal(values=values, hop_ms=hop_ms, utterance_id=utterance_id)


# ---------------------------------------------------------------------------
# persistence

def save_network(path, net: LstmNetwork) -> None:
    names = net.param_names()
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(net.config),
        "shapes": {k: list(net.params[k].shape) for k in names},
        "order": names,
        "params": [repr(float(v)) for k in names for v in net.params[k].ravel()],
    }
    if net.norm_mean is not None:
        doc["norm_mean"] = [repr(float(v)) for v in net.norm_mean]
        doc["norm_std"] = [repr(float(v)) for v in net.norm_std]
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def load_network(path) -> LstmNetwork:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version {CHECKPOINT_VERSION} {CHECKPOINT_FORMAT} checkpoint")
    config = NetworkConfig(**doc["config"])
    flat = np.array([float(v) for v in doc["params"]])
    params, pos = {}, 0
    for k in doc["order"]:
        shape = tuple(doc["shapes"][k])
        n = int(np.prod(shape))
        params[k] = flat[pos:pos + n].reshape(shape)
        pos += n
    net = LstmNetwork(config=config, params=params,
                      cache={k: np.zeros_like(v) for k, v in params.items()})
    if "norm_mean" in doc:
        net.norm_mean = np.array([float(v) for v in doc["norm_mean"]])
        net.norm_std = np.array([float(v) for v in doc["norm_std"]])
    return net
