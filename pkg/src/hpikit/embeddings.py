"""Word and character vocabularies, word2vec pretraining, vector file I/O.

Pretraining implements CBOW and skip-gram with negative sampling on plain
numpy arrays, single-threaded and seeded so runs are bit-reproducible. The
vector file format is the plain text one: a "count dim" header line, then
one "word v1 ... vd" line per word.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"


class EmbeddingsError(ValueError):
    """Bad vocabulary input, training parameters, or vector file."""


@dataclass
class Vocab:
    """Dense token -> id mapping with ids 0 and 1 reserved for PAD and UNK."""

    id_of: dict[str, int]
    tokens: tuple[str, ...]  # inverse mapping, tokens[i] has id i

    def __len__(self) -> int:
        return len(self.tokens)

    def id(self, token: str) -> int:
        return self.id_of.get(token, UNK_ID)

    def encode(self, tokens) -> np.ndarray:
        return np.array([self.id(t) for t in tokens], dtype=np.int64)


def build_vocab(corpus, min_count: int = 1) -> Vocab:
    """Vocabulary over token sequences, keeping tokens seen >= min_count times.

    Ids are assigned by frequency descending, ties broken lexicographically,
    starting after the reserved PAD/UNK slots. An empty corpus yields a
    vocabulary holding only PAD and UNK.
    """
    if min_count < 1:
        raise EmbeddingsError(f"min_count must be >= 1, got {min_count}")
    counts = Counter()
    for seq in corpus:
        counts.update(seq)
    kept = sorted(
        (t for t, c in counts.items() if c >= min_count),
        key=lambda t: (-counts[t], t),
    )
    tokens = (PAD_TOKEN, UNK_TOKEN, *kept)
    return Vocab(id_of={t: i for i, t in enumerate(tokens)}, tokens=tokens)


@dataclass
class CharVocab:
    """Character -> id mapping with PAD/UNK reserved, printable ASCII base."""

    id_of: dict[str, int]
    chars: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.chars)

    def id(self, ch: str) -> int:
        return self.id_of.get(ch, UNK_ID)

    def encode(self, word: str) -> np.ndarray:
        return np.array([self.id(ch) for ch in word], dtype=np.int64)

    @classmethod
    def default(cls) -> "CharVocab":
        return cls.from_tokens([])

    @classmethod
    def from_tokens(cls, tokens) -> "CharVocab":
        """Printable ASCII plus any other characters seen, codepoint order."""
        seen = {ch for tok in tokens for ch in tok}
        base = {chr(c) for c in range(32, 127)}
        chars = (PAD_TOKEN, UNK_TOKEN, *sorted(base | seen))
        return cls(id_of={c: i for i, c in enumerate(chars)}, chars=chars)


@dataclass
class EmbeddingTable:
    """|V| x d matrix of vectors, row i belonging to vocabulary id i."""

    matrix: np.ndarray
    d: int
    epoch_losses: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[1] != self.d:
            raise EmbeddingsError(f"matrix must be (|V|, {self.d}), got {self.matrix.shape}")
        if not np.all(np.isfinite(self.matrix)):
            raise EmbeddingsError("embedding table contains non-finite entries")


def _init_vectors(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """Classic word2vec input init: uniform in [-0.5/d, 0.5/d), PAD row zero."""
    mat = rng.uniform(-0.5 / d, 0.5 / d, size=(n, d))
    mat[PAD_ID] = 0.0
    return mat


def _negative_table(corpus_ids, n_vocab: int) -> np.ndarray:
    """Cumulative unigram^0.75 distribution over ids >= 1 for sampling."""
    counts = np.zeros(n_vocab)
    for seq in corpus_ids:
        np.add.at(counts, seq, 1.0)
    counts[PAD_ID] = 0.0
    weights = counts**0.75
    total = weights.sum()
    if total == 0.0:
        raise EmbeddingsError("corpus has no trainable tokens")
    return np.cumsum(weights / total)


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    ex = np.exp(x)
    return ex / (1.0 + ex)


def _softplus(x: float) -> float:
    """log(1 + exp(x)) without overflow; -log(sigmoid(-x))."""
    return float(np.log1p(np.exp(-abs(x))) + max(x, 0.0))


def train_word2vec(
    corpus,
    mode: str,
    d: int = 100,
    window: int = 5,
    negatives: int = 5,
    epochs: int = 5,
    seed: int = 0,
    vocab: Vocab | None = None,
    lr: float = 0.025,
) -> EmbeddingTable:
    """Train word vectors with negative sampling; deterministic given seed.

    corpus is an iterable of token sequences; the window is a fixed span of
    `window` positions on each side, clipped at sequence bounds and never
    crossing sequence boundaries. The learning rate decays linearly over all
    scheduled center positions. Per-epoch mean loss is recorded on the
    returned table for trend checks.
    """
    if mode not in ("cbow", "skipgram"):
        raise EmbeddingsError(f"mode must be cbow or skipgram, got {mode!r}")
    if d < 2:
        raise EmbeddingsError(f"dimension must be >= 2, got {d}")
    if window < 1:
        raise EmbeddingsError(f"window must be >= 1, got {window}")
    if negatives < 1:
        raise EmbeddingsError(f"negatives must be >= 1, got {negatives}")
    if epochs < 0:
        raise EmbeddingsError(f"epochs must be >= 0, got {epochs}")

    sequences = [list(seq) for seq in corpus]
    n_tokens = sum(len(s) for s in sequences)
    if n_tokens < window + 1:
        raise EmbeddingsError(f"corpus has {n_tokens} tokens, need at least window+1 = {window + 1}")
    if vocab is None:
        vocab = build_vocab(sequences)
    corpus_ids = [vocab.encode(seq) for seq in sequences]

    rng = np.random.default_rng(seed)
    vec_in = _init_vectors(rng, len(vocab), d)
    vec_out = np.zeros((len(vocab), d))
    if epochs == 0:
        return EmbeddingTable(vec_in, d)

    cumulative = _negative_table(corpus_ids, len(vocab))
    total_positions = n_tokens * epochs
    done = 0
    losses = []

    def sample_negative() -> int:
        return int(np.searchsorted(cumulative, rng.random(), side="right"))

    for _ in range(epochs):
        epoch_loss = 0.0
        n_examples = 0
        for seq in corpus_ids:
            m = len(seq)
            for t in range(m):
                step_lr = max(lr * (1.0 - done / total_positions), lr * 1e-4)
                done += 1
                lo, hi = max(0, t - window), min(m, t + window + 1)
                context = [seq[u] for u in range(lo, hi) if u != t]
                if not context:
                    continue
                if mode == "cbow":
                    ctx_ids = np.array(context)
                    v = vec_in[ctx_ids].mean(axis=0)
                    grad_v = np.zeros(d)
                    target = int(seq[t])
                    for k in range(negatives + 1):
                        if k == 0:
                            out_id, label = target, 1.0
                        else:
                            out_id = sample_negative()
                            if out_id == target:
                                continue
                            label = 0.0
                        score = float(v @ vec_out[out_id])
                        p = _sigmoid(score)
                        epoch_loss += _softplus(-score) if label == 1.0 else _softplus(score)
                        g = (label - p) * step_lr
                        grad_v += g * vec_out[out_id]
                        vec_out[out_id] += g * v
                    np.add.at(vec_in, ctx_ids, grad_v / len(ctx_ids))
                    n_examples += 1
                else:
                    center = int(seq[t])
                    v = vec_in[center]
                    for ctx in context:
                        grad_v = np.zeros(d)
                        target = int(ctx)
                        for k in range(negatives + 1):
                            if k == 0:
                                out_id, label = target, 1.0
                            else:
                                out_id = sample_negative()
                                if out_id == target:
                                    continue
                                label = 0.0
                            score = float(v @ vec_out[out_id])
                            p = _sigmoid(score)
                            epoch_loss += _softplus(-score) if label == 1.0 else _softplus(score)
                            g = (label - p) * step_lr
                            grad_v += g * vec_out[out_id]
                            vec_out[out_id] += g * v
                        vec_in[center] = v = v + grad_v
                        n_examples += 1
        losses.append(epoch_loss / max(n_examples, 1))

    return EmbeddingTable(vec_in, d, epoch_losses=losses)


@dataclass
class LoadStats:
    """Bookkeeping from reading a vector file against a vocabulary."""

    n_loaded: int = 0
    n_oov: int = 0  # vocab words missing from the file, randomly initialized
    n_skipped: int = 0  # file words absent from the vocab


def load_embeddings(path: str | Path, vocab: Vocab, seed: int = 0) -> tuple[EmbeddingTable, LoadStats]:
    """Read a text vector file, aligning rows to vocabulary ids.

    Vocab words missing from the file get rows drawn uniformly from
    [-0.5/d, 0.5/d) with the given seed (PAD stays zero); file words not in
    the vocab are skipped. Both counts are reported.
    """
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise EmbeddingsError(f"{path}: empty vector file")
    head = lines[0].split()
    if len(head) != 2:
        raise EmbeddingsError(f"{path}: line 1 must be 'count dim', got {lines[0]!r}")
    try:
        count, d = int(head[0]), int(head[1])
    except ValueError as exc:
        raise EmbeddingsError(f"{path}: line 1 must be 'count dim': {exc}") from exc
    if d < 1:
        raise EmbeddingsError(f"{path}: dimension must be positive, got {d}")

    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != count:
        raise EmbeddingsError(f"{path}: header says {count} words, file has {len(body)}")

    rng = np.random.default_rng(seed)
    matrix = _init_vectors(rng, len(vocab), d)
    stats = LoadStats()
    seen = np.zeros(len(vocab), dtype=bool)
    seen[PAD_ID] = True
    for i, line in enumerate(body, start=2):
        parts = line.rstrip("\n").split(" ")
        word, values = parts[0], parts[1:]
        if len(values) != d:
            raise EmbeddingsError(f"{path}: line {i} has {len(values)} values, expected {d}")
        wid = vocab.id_of.get(word)
        if wid is None:
            stats.n_skipped += 1
            continue
        try:
            matrix[wid] = [float(v) for v in values]
        except ValueError as exc:
            raise EmbeddingsError(f"{path}: line {i} has a non-numeric value: {exc}") from exc
        seen[wid] = True
        stats.n_loaded += 1
    stats.n_oov = int((~seen).sum())
    return EmbeddingTable(matrix, d), stats


def save_embeddings(path: str | Path, table: EmbeddingTable, vocab: Vocab):
    """Write the text vector format; float repr is exact, so save then load
    round-trips bit-identically for in-vocab words."""
    if table.matrix.shape[0] != len(vocab):
        raise EmbeddingsError(
            f"table has {table.matrix.shape[0]} rows, vocab has {len(vocab)} entries"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(vocab)} {table.d}\n")
        for i, word in enumerate(vocab.tokens):
            values = " ".join(repr(float(v)) for v in table.matrix[i])
            fh.write(f"{word} {values}\n")
