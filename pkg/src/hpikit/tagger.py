"""Word-level topic labeler for HPI narratives.

Pipeline: hybrid token embedding (word-table row concatenated with the final
states of a character BiLSTM over the word's characters), a contextual BiLSTM
over the token sequence, an affine scorer with one tanh hidden layer producing
per-label emission scores, and a linear-chain CRF for sequence-level training
and decoding. Training uses Adam with per-epoch learning-rate decay, inverted
dropout on the embedding and contextual layers, global-norm gradient clipping,
and early stopping on dev support-weighted F1.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .checkpoint import load_arrays, save_arrays
from .corpus import LabeledDocument, N_LABELS
from .crf import CrfParams, sequence_nll, viterbi
from .embeddings import CharVocab, EmbeddingTable, Vocab, build_vocab, load_embeddings
from .neuralnet import Adam, Affine, BiLstm, ParamTensor, clip_global_norm, dropout

WORD_MODES = ("pretrained-frozen", "pretrained-finetuned", "learned-from-scratch")


class TaggerError(ValueError):
    """Invalid model configuration, input, or checkpoint."""


@dataclass
class ModelConfig:
    """Architecture sizes and feature switches (values are layer widths)."""

    word_dim: int = 100
    char_dim: int = 25
    char_hidden: int = 25
    ctx_hidden: int = 100
    scorer_hidden: int = 64
    use_char: bool = True
    word_mode: str = "learned-from-scratch"
    dropout_embed: bool = True
    dropout_hidden: bool = True

    def __post_init__(self):
        for name in ("word_dim", "char_dim", "char_hidden", "ctx_hidden", "scorer_hidden"):
            if getattr(self, name) < 1:
                raise TaggerError(f"{name} must be >= 1")
        if self.word_mode not in WORD_MODES:
            raise TaggerError(f"word_mode must be one of {WORD_MODES}, got {self.word_mode!r}")

    @property
    def embed_dim(self) -> int:
        return self.word_dim + (2 * self.char_hidden if self.use_char else 0)


@dataclass
class TrainConfig:
    """Optimization regime."""

    lr: float = 0.001
    decay: float = 0.9
    dropout: float = 0.5
    batch: int = 20
    max_epochs: int = 20
    patience: int = 3
    seed: int = 0
    clip_norm: float = 5.0
    min_improvement: float = 1e-6

    def __post_init__(self):
        if min(self.lr, self.decay, self.batch, self.max_epochs, self.patience, self.clip_norm) <= 0:
            raise TaggerError("lr, decay, batch, max_epochs, patience, clip_norm must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise TaggerError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.patience >= self.max_epochs:
            raise TaggerError("patience must be smaller than max_epochs")


class TaggerModel:
    """Assembled model; construct through build_tagger."""

    def __init__(self, vocab: Vocab, char_vocab: CharVocab, config: ModelConfig, seed: int):
        self.vocab = vocab
        self.char_vocab = char_vocab
        self.config = config
        rng = np.random.default_rng(seed)
        cfg = config

        self.word_table = ParamTensor(
            "word_table", rng.uniform(-0.5 / cfg.word_dim, 0.5 / cfg.word_dim, size=(len(vocab), cfg.word_dim))
        )
        if cfg.use_char:
            self.char_table = ParamTensor(
                "char_table",
                rng.uniform(-0.5 / cfg.char_dim, 0.5 / cfg.char_dim, size=(len(char_vocab), cfg.char_dim)),
            )
            self.char_bilstm = BiLstm("char_bilstm", cfg.char_dim, cfg.char_hidden, rng)
        else:
            self.char_table = None
            self.char_bilstm = None
        self.ctx_bilstm = BiLstm("ctx_bilstm", cfg.embed_dim, cfg.ctx_hidden, rng)
        self.scorer_hidden = Affine("scorer_hidden", 2 * cfg.ctx_hidden, cfg.scorer_hidden, rng)
        self.scorer_out = Affine("scorer_out", cfg.scorer_hidden, N_LABELS, rng)

        self.crf_t = ParamTensor("crf.transitions", np.zeros((N_LABELS, N_LABELS)))
        self.crf_begin = ParamTensor("crf.begin", np.zeros(N_LABELS))
        self.crf_end = ParamTensor("crf.end", np.zeros(N_LABELS))
        # shares the buffers above, so optimizer updates are visible here
        self.crf = CrfParams(self.crf_t.value, self.crf_begin.value, self.crf_end.value)

    def all_params(self) -> list[ParamTensor]:
        params = [self.word_table]
        if self.config.use_char:
            params.append(self.char_table)
            params.extend(self.char_bilstm.params())
        params.extend(self.ctx_bilstm.params())
        params.extend(self.scorer_hidden.params())
        params.extend(self.scorer_out.params())
        params.extend([self.crf_t, self.crf_begin, self.crf_end])
        return params

    def trainable_params(self) -> list[ParamTensor]:
        params = self.all_params()
        if self.config.word_mode == "pretrained-frozen":
            params = [p for p in params if p is not self.word_table]
        return params

    def set_pretrained_words(self, table: EmbeddingTable):
        if table.matrix.shape != self.word_table.value.shape:
            raise TaggerError(
                f"pretrained table shape {table.matrix.shape} does not match "
                f"word table {self.word_table.value.shape}"
            )
        self.word_table.value[:] = table.matrix

    # -- forward / backward ------------------------------------------------

    def embed_tokens(self, words: list[str]):
        """Hybrid embedding for each word: word-table row, plus (when char
        features are on) the concatenated final states of the char BiLSTM."""
        word_ids = self.vocab.encode(words)
        t = self.word_table.value[word_ids]
        if not self.config.use_char:
            return t, (word_ids, None)
        h = self.config.char_hidden
        char_parts = []
        char_caches = []
        for word in words:
            char_ids = self.char_vocab.encode(word)
            if len(char_ids) == 0:
                char_parts.append(np.zeros(2 * h))
                char_caches.append(None)
                continue
            x = self.char_table.value[char_ids]
            out, cache = self.char_bilstm.forward(x)
            char_parts.append(np.concatenate([out[-1, :h], out[0, h:]]))
            char_caches.append((char_ids, cache, len(char_ids)))
        e = np.concatenate([t, np.stack(char_parts)], axis=1)
        return e, (word_ids, char_caches)

    def _embed_backward(self, cache, d_e):
        word_ids, char_caches = cache
        d_w = self.config.word_dim
        np.add.at(self.word_table.grad, word_ids, d_e[:, :d_w])
        if not self.config.use_char:
            return
        h = self.config.char_hidden
        d_c = d_e[:, d_w:]
        for i, entry in enumerate(char_caches):
            if entry is None:
                continue
            char_ids, bilstm_cache, length = entry
            d_out = np.zeros((length, 2 * h))
            d_out[-1, :h] = d_c[i, :h]
            d_out[0, h:] += d_c[i, h:]
            dx = self.char_bilstm.backward(bilstm_cache, d_out)
            np.add.at(self.char_table.grad, char_ids, dx)

    def forward(self, words: list[str], train: bool = False, rng=None, drop_rate: float = 0.0):
        """Emission scores (m, N_LABELS) for a token sequence."""
        if not words:
            raise TaggerError("cannot score an empty document")
        cfg = self.config
        e, embed_cache = self.embed_tokens(words)
        rate_e = drop_rate if (train and cfg.dropout_embed) else 0.0
        rate_h = drop_rate if (train and cfg.dropout_hidden) else 0.0
        e_drop, mask_e = dropout(e, rate_e, train=train, rng=rng)
        h, ctx_cache = self.ctx_bilstm.forward(e_drop)
        h_drop, mask_h = dropout(h, rate_h, train=train, rng=rng)
        z1, lin1_cache = self.scorer_hidden.forward(h_drop)
        a = np.tanh(z1)
        emissions, lin2_cache = self.scorer_out.forward(a)
        cache = (embed_cache, mask_e, ctx_cache, mask_h, lin1_cache, a, lin2_cache)
        return emissions, cache

    def backward(self, cache, d_emissions):
        embed_cache, mask_e, ctx_cache, mask_h, lin1_cache, a, lin2_cache = cache
        d_a = self.scorer_out.backward(lin2_cache, d_emissions)
        d_z1 = d_a * (1.0 - a * a)
        d_h = self.scorer_hidden.backward(lin1_cache, d_z1) * mask_h
        d_e = self.ctx_bilstm.backward(ctx_cache, d_h) * mask_e
        self._embed_backward(embed_cache, d_e)

    def sequence_loss(self, words, labels, train: bool = False, rng=None, drop_rate: float = 0.0) -> float:
        """CRF negative log-likelihood of one document; accumulates gradients
        into every parameter."""
        emissions, cache = self.forward(words, train=train, rng=rng, drop_rate=drop_rate)
        loss, grads = sequence_nll(self.crf, emissions, labels)
        self.crf_t.grad += grads.d_transitions
        self.crf_begin.grad += grads.d_begin
        self.crf_end.grad += grads.d_end
        self.backward(cache, grads.d_emissions)
        return loss

    def predict(self, words: list[str]) -> np.ndarray:
        """Viterbi label sequence; deterministic, dropout off."""
        if not words:
            return np.zeros(0, dtype=np.int64)
        emissions, _ = self.forward(words)
        labels, _ = viterbi(self.crf, emissions)
        return labels

    # -- state -------------------------------------------------------------

    def snapshot(self) -> dict:
        return {p.name: p.value.copy() for p in self.all_params()}

    def restore(self, state: dict):
        for p in self.all_params():
            p.value[:] = state[p.name]


def build_tagger(vocab: Vocab, char_vocab: CharVocab, config: ModelConfig, seed: int = 0) -> TaggerModel:
    return TaggerModel(vocab, char_vocab, config, seed)


def vocab_from_docs(docs: list[LabeledDocument], min_count: int = 1) -> tuple[Vocab, CharVocab]:
    """Word and character vocabularies over a document collection."""
    sequences = [d.token_texts() for d in docs]
    vocab = build_vocab(sequences, min_count=min_count)
    char_vocab = CharVocab.from_tokens(t for seq in sequences for t in seq)
    return vocab, char_vocab


# -- evaluation --------------------------------------------------------------


@dataclass
class EvalReport:
    """Token-level metrics. Confusion rows are predicted labels, columns are
    true labels; support is the true-token count per label."""

    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    accuracy: float
    macro_f1: float
    weighted_f1: float
    n_tokens: int


def _safe_div(num, den):
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def score_predictions(golds, preds) -> EvalReport:
    """Metrics from aligned gold/predicted label sequences."""
    confusion = np.zeros((N_LABELS, N_LABELS), dtype=np.int64)
    for g, p in zip(golds, preds, strict=True):
        g = np.asarray(g, dtype=np.int64)
        p = np.asarray(p, dtype=np.int64)
        if g.shape != p.shape:
            raise TaggerError(f"gold length {g.shape} vs predicted {p.shape}")
        np.add.at(confusion, (p, g), 1)

    tp = np.diag(confusion).astype(np.float64)
    pred_count = confusion.sum(axis=1)
    support = confusion.sum(axis=0)
    precision = _safe_div(tp, pred_count)
    recall = _safe_div(tp, support)
    f1 = _safe_div(2 * precision * recall, precision + recall)
    total = int(confusion.sum())
    accuracy = float(tp.sum() / total) if total else 0.0
    weighted = float((f1 * support).sum() / support.sum()) if total else 0.0
    return EvalReport(
        confusion=confusion,
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        accuracy=accuracy,
        macro_f1=float(f1.mean()),
        weighted_f1=weighted,
        n_tokens=total,
    )


def evaluate(model: TaggerModel, docs: list[LabeledDocument]) -> EvalReport:
    golds = [d.labels for d in docs]
    preds = [model.predict(d.token_texts()) for d in docs]
    return score_predictions(golds, preds)


# -- training ----------------------------------------------------------------


@dataclass
class EpochLog:
    epoch: int
    mean_train_loss: float
    dev_weighted_f1: float
    lr: float


@dataclass
class TrainHistory:
    epochs: list[EpochLog] = field(default_factory=list)
    best_epoch: int = -1
    best_dev_f1: float = float("nan")
    stopped_early: bool = False
    diverged: bool = False


def train(model: TaggerModel, config: TrainConfig, train_docs, dev_docs) -> TrainHistory:
    """Mini-batch Adam on summed per-document CRF loss.

    One rng (from config.seed) drives both the epoch shuffles and dropout.
    After each epoch the dev support-weighted F1 decides early stopping with
    the configured patience; the best-scoring parameters are restored at the
    end. A non-finite batch loss aborts training and keeps the last best
    checkpoint.
    """
    if not train_docs or not dev_docs:
        raise TaggerError("train and dev document lists must be non-empty")
    rng = np.random.default_rng(config.seed)
    opt = Adam(model.trainable_params(), lr=config.lr, decay=config.decay)
    history = TrainHistory()
    best_state = model.snapshot()
    best_f1 = -math.inf
    since_best = 0

    for epoch in range(config.max_epochs):
        order = rng.permutation(len(train_docs))
        lr_epoch = opt.lr_at_epoch(epoch)
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch):
            opt.zero_grad()
            batch_loss = 0.0
            for j in order[start : start + config.batch]:
                doc = train_docs[j]
                batch_loss += model.sequence_loss(
                    doc.token_texts(), doc.labels, train=True, rng=rng, drop_rate=config.dropout
                )
            if not math.isfinite(batch_loss):
                history.diverged = True
                model.restore(best_state)
                return history
            clip_global_norm(opt.params, config.clip_norm)
            opt.step(lr=lr_epoch)
            epoch_loss += batch_loss

        dev_f1 = evaluate(model, dev_docs).weighted_f1
        history.epochs.append(EpochLog(epoch, epoch_loss / len(train_docs), dev_f1, lr_epoch))
        if dev_f1 > best_f1 + config.min_improvement:
            best_f1 = dev_f1
            best_state = model.snapshot()
            history.best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                history.stopped_early = True
                break

    model.restore(best_state)
    history.best_dev_f1 = best_f1 if history.best_epoch >= 0 else float("nan")
    return history


# -- checkpointing -----------------------------------------------------------

_CHECKPOINT_KIND = "hpikit-tagger"


def save_tagger(path: str | Path, model: TaggerModel):
    meta = {
        "kind": _CHECKPOINT_KIND,
        "model": asdict(model.config),
        "vocab": list(model.vocab.tokens),
        "char_vocab": list(model.char_vocab.chars),
    }
    save_arrays(path, {p.name: p.value for p in model.all_params()}, meta)


def load_tagger(path: str | Path) -> TaggerModel:
    arrays, meta = load_arrays(path)
    if meta.get("kind") != _CHECKPOINT_KIND:
        raise TaggerError(f"{path}: not a tagger checkpoint")
    config = ModelConfig(**meta["model"])
    tokens = tuple(meta["vocab"])
    vocab = Vocab(id_of={t: i for i, t in enumerate(tokens)}, tokens=tokens)
    chars = tuple(meta["char_vocab"])
    char_vocab = CharVocab(id_of={c: i for i, c in enumerate(chars)}, chars=chars)
    model = build_tagger(vocab, char_vocab, config, seed=0)
    for p in model.all_params():
        if p.name not in arrays:
            raise TaggerError(f"{path}: missing array {p.name!r}")
        if arrays[p.name].shape != p.value.shape:
            raise TaggerError(f"{path}: array {p.name!r} has shape {arrays[p.name].shape}, expected {p.value.shape}")
        p.value[:] = arrays[p.name]
    return model


# -- ablations ----------------------------------------------------------------


@dataclass
class AblationSpec:
    """One grid row: architecture switches plus an optional vector file."""

    name: str
    use_char: bool
    word_mode: str
    embeddings_path: str | None = None


@dataclass
class AblationRow:
    name: str
    use_char: bool
    word_mode: str
    status: str  # "ok" or "skipped: <reason>"
    dev_f1: float
    best_epoch: int
    n_epochs: int


def ablation_run(
    specs: list[AblationSpec],
    train_docs,
    dev_docs,
    model_config: ModelConfig,
    train_config: TrainConfig,
) -> list[AblationRow]:
    """Train one model per spec with a shared seed and data split.

    A pretrained row whose vector file is missing is reported as skipped and
    the run continues.
    """
    vocab, char_vocab = vocab_from_docs(train_docs)
    rows = []
    for spec in specs:
        cfg = replace(model_config, use_char=spec.use_char, word_mode=spec.word_mode)
        table = None
        if spec.word_mode != "learned-from-scratch":
            if not spec.embeddings_path or not Path(spec.embeddings_path).exists():
                rows.append(
                    AblationRow(spec.name, spec.use_char, spec.word_mode,
                                f"skipped: missing embeddings file {spec.embeddings_path!r}",
                                float("nan"), -1, 0)
                )
                continue
            table, _ = load_embeddings(spec.embeddings_path, vocab, seed=train_config.seed)
            cfg = replace(cfg, word_dim=table.d)
        model = build_tagger(vocab, char_vocab, cfg, seed=train_config.seed)
        if table is not None:
            model.set_pretrained_words(table)
        history = train(model, train_config, train_docs, dev_docs)
        rows.append(
            AblationRow(
                spec.name, spec.use_char, spec.word_mode, "ok",
                history.best_dev_f1, history.best_epoch, len(history.epochs),
            )
        )
    return rows


def ablation_csv(rows: list[AblationRow]) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["name", "use_char", "word_mode", "status", "dev_f1", "best_epoch", "n_epochs"])
    for r in rows:
        writer.writerow([r.name, r.use_char, r.word_mode, r.status, repr(r.dev_f1), r.best_epoch, r.n_epochs])
    return out.getvalue()
