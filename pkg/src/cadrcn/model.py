"""Recurrent capsule network for relation classification.

Each candidate pair cuts its sentence into five segments.  Every segment is
embedded (word vector concatenated with entity-type vector), encoded by its
own LSTM stack into a 128-wide input capsule, and the five input capsules are
routed by agreement onto one output capsule per relation class.  The length
of an output capsule is the class score.
"""

from __future__ import annotations

import json
import logging
import time
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tape, Tensor
from .dataset import LABELS, RelationInstance, RelationLabel, split_segments
from .text import ENTITY_TYPES

log = logging.getLogger(__name__)

TYPE_TAGS = ("none",) + ENTITY_TYPES
UNK = "<unk>"
N_SEGMENTS = 5

HEAD_MODES = ("capsule", "softmax")
ENCODER_MODES = ("uni_bi", "all_bi")


@dataclass
class ModelConfig:
    word_dim: int = 128
    type_dim: int = 128
    bi_hidden: int = 64
    uni_hidden: int = 128
    capsule_dim: int = 64
    num_classes: int = 6
    routing_iters: int = 4
    batch_size: int = 128
    epochs: int = 12
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m_plus: float = 0.9
    m_minus: float = 0.1
    loss_lambda: float = 0.5
    head_mode: str = "capsule"
    encoder_mode: str = "uni_bi"
    loss_reduction: str = "sum"
    init_scale: float = 0.08
    seed: int = 0
    embedding_file: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("word_dim", "type_dim", "bi_hidden", "uni_hidden", "capsule_dim", "num_classes",
                     "batch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.routing_iters < 1:
            raise ValueError(f"routing_iters must be >= 1, got {self.routing_iters}")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if not 0.0 <= self.m_minus < self.m_plus <= 1.0:
            raise ValueError(f"need 0 <= m_minus < m_plus <= 1, got {self.m_minus}, {self.m_plus}")
        if self.head_mode not in HEAD_MODES:
            raise ValueError(f"head_mode must be one of {HEAD_MODES}")
        if self.encoder_mode not in ENCODER_MODES:
            raise ValueError(f"encoder_mode must be one of {ENCODER_MODES}")
        if self.loss_reduction not in ("sum", "mean"):
            raise ValueError("loss_reduction must be 'sum' or 'mean'")
        if self.encoder_mode == "uni_bi" and 2 * self.bi_hidden != self.uni_hidden:
            raise ValueError(
                f"input capsules need equal widths: 2 * bi_hidden ({2 * self.bi_hidden}) != uni_hidden "
                f"({self.uni_hidden})"
            )

    @property
    def capsule_in(self) -> int:
        return 2 * self.bi_hidden

    @property
    def adam(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**raw)


class Vocab:
    def __init__(self, tokens: Iterable[str] = ()):
        self.itos = [UNK]
        self.stoi = {UNK: 0}
        for tok in tokens:
            if tok not in self.stoi:
                self.stoi[tok] = len(self.itos)
                self.itos.append(tok)
        self.oov_count = 0

    @classmethod
    def build(cls, instances: Iterable[RelationInstance]) -> "Vocab":
        counts = Counter(tok for inst in instances for tok in inst.tokens)
        return cls(sorted(counts))

    def __len__(self):
        return len(self.itos)

    def lookup(self, tokens: Sequence[str]) -> np.ndarray:
        ids = np.fromiter((self.stoi.get(t, 0) for t in tokens), dtype=np.intp, count=len(tokens))
        self.oov_count += int(np.count_nonzero(ids == 0))
        return ids


@dataclass
class CapsuleOutput:
    v: Tensor  # (B, classes, capsule_dim)
    lengths: Tensor  # (B, classes)
    coupling: np.ndarray  # (B, inputs, classes), from the final routing iteration


@dataclass
class Prediction:
    label: RelationLabel
    scores: np.ndarray


def squash(s) -> Tensor:
    """Shrink vectors along the last axis to length |s|^2 / (1 + |s|^2)."""
    sq = ad.sq_norm(s, axis=-1, keepdims=True)
    n = ad.l2_norm(s, axis=-1, keepdims=True)
    return ad.mul(s, ad.div(n, ad.add(sq, 1.0)))


def route(u_hat, iters: int) -> CapsuleOutput:
    """Dynamic routing by agreement.

    ``u_hat`` has shape (B, inputs, classes, dim).  Logits start at zero and
    gradients flow through every iteration.
    """
    B, n_in, n_out, _ = u_hat.shape
    logits: Tensor = Tensor(np.zeros((B, n_in, n_out)))
    for it in range(iters):
        c = ad.softmax(logits, axis=2)
        s = ad.tsum(ad.mul(ad.reshape(c, (B, n_in, n_out, 1)), u_hat), axis=1)
        v = squash(s)
        if it < iters - 1:
            agree = ad.tsum(ad.mul(u_hat, ad.reshape(v, (B, 1, n_out, v.shape[-1]))), axis=-1)
            logits = ad.add(logits, agree)
    return CapsuleOutput(v, ad.l2_norm(v, axis=-1), c.data)


def capsule_forward(u: Sequence, weights: Sequence, iters: int) -> CapsuleOutput:
    """Predictions ``W_ij u_i`` for every input i, class j, then routing.

    ``weights[i]`` has shape (classes, capsule_dim, input_width).
    """
    preds = []
    for ui, Wi in zip(u, weights):
        ui = ad.as_tensor(ui)
        n_out, dim, width = Wi.shape
        flat = ad.reshape(Wi, (n_out * dim, width))
        preds.append(ad.reshape(ad.affine(ui, flat), (ui.shape[0], n_out, dim)))
    return route(ad.stack(preds, axis=1), iters)


def margin_loss(
    lengths,
    labels: Sequence[int],
    m_plus: float = 0.9,
    m_minus: float = 0.1,
    lam: float = 0.5,
    reduction: str = "sum",
) -> Tensor:
    """Per-class hinge on capsule lengths, summed over classes (and the batch)."""
    if isinstance(lengths, CapsuleOutput):
        lengths = lengths.lengths
    lengths = ad.as_tensor(lengths)
    if lengths.ndim == 1:
        lengths = ad.reshape(lengths, (1, lengths.shape[0]))
    onehot = np.zeros(lengths.shape)
    onehot[np.arange(lengths.shape[0]), np.asarray(labels, dtype=np.intp)] = 1.0
    present = ad.relu(ad.sub(m_plus, lengths))
    absent = ad.relu(ad.sub(lengths, m_minus))
    per = ad.add(ad.mul(onehot, ad.mul(present, present)), ad.mul(lam * (1.0 - onehot), ad.mul(absent, absent)))
    total = ad.tsum(per)
    if reduction == "mean":
        total = ad.scale(total, 1.0 / lengths.shape[0])
    return total


def cross_entropy(logits, labels: Sequence[int], reduction: str = "sum") -> Tensor:
    logp = ad.log_softmax(logits, axis=-1)
    onehot = np.zeros(logp.shape)
    onehot[np.arange(logp.shape[0]), np.asarray(labels, dtype=np.intp)] = 1.0
    total = ad.scale(ad.tsum(ad.mul(onehot, logp)), -1.0)
    if reduction == "mean":
        total = ad.scale(total, 1.0 / logp.shape[0])
    return total


# ---------------------------------------------------------------------------
# LSTM


def lstm_step(x_proj, h, c, U) -> tuple[Tensor, Tensor]:
    """One LSTM update given the precomputed input projection ``W e_t + b``.

    Gate blocks are stacked in the order input, forget, candidate, output.
    ``h``/``c`` may be ``None`` for the zero initial state.
    """
    H = U.shape[1]
    gates = x_proj if h is None else ad.add(x_proj, ad.affine(h, U))
    i = ad.sigmoid(gates[:, 0:H])
    f = ad.sigmoid(gates[:, H : 2 * H])
    c_tilde = ad.tanh(gates[:, 2 * H : 3 * H])
    o = ad.sigmoid(gates[:, 3 * H : 4 * H])
    c_new = ad.mul(i, c_tilde) if c is None else ad.add(ad.mul(f, c), ad.mul(i, c_tilde))
    h_new = ad.mul(o, ad.tanh(c_new))
    return h_new, c_new


def run_lstm(embed_step: Callable[[int], Tensor], lengths: np.ndarray, W, U, b) -> Tensor:
    """Masked left-to-right LSTM over a padded batch; returns each row's final h.

    ``embed_step(t)`` yields the (B, input_dim) inputs at position t.  Rows
    shorter than t keep their state; a zero-length row stays at h = 0.
    """
    B = lengths.shape[0]
    H = U.shape[1]
    T = int(lengths.max()) if B else 0
    h = c = None
    for t in range(T):
        x_proj = ad.affine(embed_step(t), W, b)
        h_new, c_new = lstm_step(x_proj, h, c, U)
        live = lengths > t
        if live.all():
            h, c = h_new, c_new
            continue
        m = live.astype(float)[:, None]
        if h is None:
            h, c = ad.mul(h_new, m), ad.mul(c_new, m)
        else:
            h = ad.add(h, ad.mul(ad.sub(h_new, h), m))
            c = ad.add(c, ad.mul(ad.sub(c_new, c), m))
    if h is None:
        return Tensor(np.zeros((B, H)))
    return h


def lstm_encode(e, direction: str, fwd=None, bwd=None) -> Tensor:
    """Encode one segment of embedded tokens ``e`` (T, d) into a single vector.

    ``fwd``/``bwd`` are (W, U, b) triples.  forward -> final h of the
    left-to-right pass; backward -> h at position 0 of the right-to-left pass;
    bidirectional -> their concatenation.  An empty segment gives zeros.
    """
    e = ad.as_tensor(e)
    T = e.shape[0]
    lengths = np.array([T], dtype=np.intp)

    def run(params, reverse):
        W, U, b = params
        order = range(T - 1, -1, -1) if reverse else range(T)
        order = list(order)
        return ad.reshape(run_lstm(lambda t: e[order[t] : order[t] + 1], lengths, W, U, b), (U.shape[1],))

    if direction == "forward":
        return run(fwd, False)
    if direction == "backward":
        return run(bwd, True)
    if direction == "bidirectional":
        return ad.concat([run(fwd, False), run(bwd, True)])
    raise ValueError(f"unknown direction {direction!r}")


@dataclass
class _Segment:
    words: np.ndarray  # (B, T) padded token ids
    tags: np.ndarray
    lengths: np.ndarray
    rwords: np.ndarray  # per-row reversed, left aligned
    rtags: np.ndarray


def _pad(rows: list[np.ndarray], reverse: bool) -> np.ndarray:
    T = max((len(r) for r in rows), default=0)
    out = np.zeros((len(rows), T), dtype=np.intp)
    for k, r in enumerate(rows):
        if len(r):
            out[k, : len(r)] = r[::-1] if reverse else r
    return out


@dataclass
class Encoded:
    """Token and tag ids of one instance, cut into five segments."""

    words: tuple[np.ndarray, ...]
    tags: tuple[np.ndarray, ...]


def _collate(items: Sequence[Encoded]) -> list[_Segment]:
    segs = []
    for k in range(N_SEGMENTS):
        w = [it.words[k] for it in items]
        t = [it.tags[k] for it in items]
        segs.append(
            _Segment(
                _pad(w, False), _pad(t, False), np.array([len(x) for x in w], dtype=np.intp), _pad(w, True),
                _pad(t, True),
            )
        )
    return segs


def _segment_directions(encoder_mode: str) -> tuple[str, ...]:
    if encoder_mode == "all_bi":
        return ("bi",) * N_SEGMENTS
    return ("fwd", "bi", "bi", "bi", "bwd")


class RCN:
    """Parameters and forward computation of the recurrent capsule network."""

    def __init__(self, config: ModelConfig, vocab: Vocab):
        self.config = config
        self.vocab = vocab
        self.params: dict[str, Parameter] = {}
        rng = np.random.default_rng(config.seed)
        a = config.init_scale

        def new(name, shape):
            self.params[name] = Parameter(rng.uniform(-a, a, size=shape), name=name)

        cfg = config
        new("embed.word", (len(vocab), cfg.word_dim))
        new("embed.type", (len(TYPE_TAGS), cfg.type_dim))
        d_in = cfg.word_dim + cfg.type_dim
        for k, direction in enumerate(_segment_directions(cfg.encoder_mode), start=1):
            runs = {"fwd": [("fwd", cfg.uni_hidden)], "bwd": [("bwd", cfg.uni_hidden)],
                    "bi": [("fwd", cfg.bi_hidden), ("bwd", cfg.bi_hidden)]}[direction]
            for tag, H in runs:
                prefix = f"seg{k}.{tag}"
                new(f"{prefix}.W", (4 * H, d_in))
                new(f"{prefix}.U", (4 * H, H))
                new(f"{prefix}.b", (4 * H,))
        if cfg.head_mode == "capsule":
            for k in range(1, N_SEGMENTS + 1):
                new(f"capsule.W{k}", (cfg.num_classes, cfg.capsule_dim, cfg.capsule_in))
        else:
            new("softmax.W", (cfg.num_classes, N_SEGMENTS * cfg.capsule_in))
            new("softmax.b", (cfg.num_classes,))
        if cfg.embedding_file:
            self.load_embeddings(cfg.embedding_file)

    # -- data -----------------------------------------------------------

    def encode(self, inst: RelationInstance) -> Encoded:
        ids = self.vocab.lookup(inst.tokens)
        tags = np.fromiter((TYPE_TAGS.index(t) for t in inst.type_tags), dtype=np.intp, count=len(inst.type_tags))
        ranges = split_segments(inst).ranges
        return Encoded(tuple(ids[a:b] for a, b in ranges), tuple(tags[a:b] for a, b in ranges))

    def load_embeddings(self, path: str | Path) -> int:
        """Overwrite word rows from a word2vec-style text file; returns rows loaded."""
        table = self.params["embed.word"].data
        loaded = 0
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                parts = line.rstrip().split()
                if len(parts) != table.shape[1] + 1:
                    continue
                row = self.vocab.stoi.get(parts[0])
                if row is not None:
                    table[row] = np.array(parts[1:], dtype=float)
                    loaded += 1
        log.info("loaded %d pretrained word vectors from %s", loaded, path)
        return loaded

    def embed(self, tokens: Sequence[str], tags: Sequence[str]) -> Tensor:
        """Per-token word vector concatenated with entity-type vector, shape (T, d_x + d_d)."""
        if len(tokens) != len(tags):
            raise ValueError(f"{len(tags)} tags for {len(tokens)} tokens")
        ids = self.vocab.lookup(tokens)
        tag_ids = np.array([TYPE_TAGS.index(t) for t in tags], dtype=np.intp)
        return ad.concat([ad.gather(self.params["embed.word"], ids), ad.gather(self.params["embed.type"], tag_ids)])

    def encode_instance(self, inst: RelationInstance) -> list[Tensor]:
        """The five input capsules of one instance, each a vector of width 2 * bi_hidden."""
        return [ad.reshape(u, (u.shape[1],)) for u in self.encode_segments(_collate([self.encode(inst)]))]

    def predict_one(self, inst: RelationInstance) -> Prediction:
        return self.predict([inst])[0]

    # -- forward --------------------------------------------------------

    def _embed_fn(self, words: np.ndarray, tags: np.ndarray) -> Callable[[int], Tensor]:
        Wx, Wd = self.params["embed.word"], self.params["embed.type"]

        def step(t):
            return ad.concat([ad.gather(Wx, words[:, t]), ad.gather(Wd, tags[:, t])], axis=-1)

        return step

    def _lstm(self, prefix: str, seg: _Segment, reverse: bool) -> Tensor:
        p = self.params
        if reverse:
            fn = self._embed_fn(seg.rwords, seg.rtags)
        else:
            fn = self._embed_fn(seg.words, seg.tags)
        return run_lstm(fn, seg.lengths, p[f"{prefix}.W"], p[f"{prefix}.U"], p[f"{prefix}.b"])

    def encode_segments(self, segs: list[_Segment]) -> list[Tensor]:
        """Five (B, 128) input capsules."""
        out = []
        for k, (seg, direction) in enumerate(zip(segs, _segment_directions(self.config.encoder_mode)), start=1):
            if direction == "fwd":
                out.append(self._lstm(f"seg{k}.fwd", seg, reverse=False))
            elif direction == "bwd":
                out.append(self._lstm(f"seg{k}.bwd", seg, reverse=True))
            else:
                fwd = self._lstm(f"seg{k}.fwd", seg, reverse=False)
                bwd = self._lstm(f"seg{k}.bwd", seg, reverse=True)
                out.append(ad.concat([fwd, bwd], axis=-1))
        return out

    def forward(self, items: Sequence[Encoded]):
        u = self.encode_segments(_collate(items))
        if self.config.head_mode == "capsule":
            weights = [self.params[f"capsule.W{k}"] for k in range(1, N_SEGMENTS + 1)]
            return capsule_forward(u, weights, self.config.routing_iters)
        return ad.affine(ad.concat(u, axis=-1), self.params["softmax.W"], self.params["softmax.b"])

    def loss(self, out, labels: Sequence[int]) -> Tensor:
        cfg = self.config
        if cfg.head_mode == "capsule":
            return margin_loss(out, labels, cfg.m_plus, cfg.m_minus, cfg.loss_lambda, cfg.loss_reduction)
        return cross_entropy(out, labels, cfg.loss_reduction)

    def scores(self, out) -> np.ndarray:
        if self.config.head_mode == "capsule":
            return out.lengths.data
        z = np.exp(out.data - out.data.max(axis=-1, keepdims=True))
        return z / z.sum(axis=-1, keepdims=True)

    def predict(self, instances: Sequence[RelationInstance], batch_size: int | None = None) -> list[Prediction]:
        """Argmax over class scores; ties resolve to the lowest class index."""
        bs = batch_size or self.config.batch_size
        encoded = [self.encode(inst) for inst in instances]
        preds: list[Prediction] = []
        for start in range(0, len(encoded), bs):
            scores = self.scores(self.forward(encoded[start : start + bs]))
            for row in scores:
                preds.append(Prediction(RelationLabel(int(np.argmax(row))), row.copy()))
        return preds

    # -- persistence ----------------------------------------------------

    def save(self, path: str | Path) -> None:
        from .checkpoint import save_checkpoint

        save_checkpoint(path, self.params, self.config.to_dict(), vocab=self.vocab.itos)

    @classmethod
    def load(cls, path: str | Path) -> "RCN":
        from .checkpoint import load_checkpoint

        params, config, extra = load_checkpoint(path)
        cfg = ModelConfig.from_dict({**config, "embedding_file": None})
        model = cls(cfg, Vocab(extra["vocab"][1:]))
        for name, p in model.params.items():
            if name not in params:
                raise ValueError(f"checkpoint {path} lacks parameter {name}")
            if params[name].shape != p.shape:
                raise ValueError(f"checkpoint parameter {name} has shape {params[name].shape}, expected {p.shape}")
            p.data[...] = params[name]
        return model


# ---------------------------------------------------------------------------
# training


@dataclass
class EpochLog:
    epoch: int
    loss: float
    train_f1: float
    dev_f1: float | None
    seconds: float

    def to_record(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    model: RCN
    history: list[EpochLog] = field(default_factory=list)


def train(
    train_set: Sequence[RelationInstance],
    config: ModelConfig,
    dev_set: Sequence[RelationInstance] | None = None,
    log_path: str | Path | None = None,
    checkpoint_path: str | Path | None = None,
    checkpoint_every_epoch: bool = False,
    vocab: Vocab | None = None,
) -> TrainResult:
    """Mini-batch Adam on the margin loss (cross-entropy for the softmax head)."""
    from .metrics import evaluate_relations

    if not train_set:
        raise ValueError("training set is empty")
    if any(inst.label is None for inst in train_set):
        raise ValueError("every training instance needs a label")
    model = RCN(config, vocab or Vocab.build(train_set))
    params = list(model.params.values())
    encoded = [model.encode(inst) for inst in train_set]
    labels = np.array([int(inst.label) for inst in train_set], dtype=np.intp)
    rng = np.random.default_rng(config.seed + 1)
    result = TrainResult(model)
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, config.epochs + 1):
            t0 = time.perf_counter()
            order = rng.permutation(len(encoded))
            total = 0.0
            predicted = np.empty(len(encoded), dtype=np.intp)
            for start in range(0, len(order), config.batch_size):
                idx = order[start : start + config.batch_size]
                with Tape() as tape:
                    out = model.forward([encoded[i] for i in idx])
                    loss = model.loss(out, labels[idx])
                    tape.backward(loss)
                ad.adam_step(params, **config.adam)
                ad.zero_grad(params)
                total += loss.item()
                predicted[idx] = np.argmax(model.scores(out), axis=-1)
            train_f1 = evaluate_relations(predicted, labels).micro_f1
            dev_f1 = None
            if dev_set:
                dev_pred = [p.label for p in model.predict(dev_set)]
                dev_f1 = evaluate_relations(dev_pred, [i.label for i in dev_set]).micro_f1
            entry = EpochLog(epoch, total, train_f1, dev_f1, time.perf_counter() - t0)
            result.history.append(entry)
            log.info("epoch %d loss %.4f train_f1 %.4f dev_f1 %s", epoch, total, train_f1, dev_f1)
            if log_fh:
                rec = entry.to_record()
                rec.pop("seconds")
                log_fh.write(json.dumps(rec) + "\n")
                log_fh.flush()
            if checkpoint_path and checkpoint_every_epoch:
                model.save(Path(checkpoint_path).with_suffix(f".epoch{epoch}.json"))
    finally:
        if log_fh:
            log_fh.close()
    if checkpoint_path:
        model.save(checkpoint_path)
    return result
