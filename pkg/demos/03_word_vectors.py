"""Train word vectors on a two-topic corpus and watch the topics separate.

Sentences about breathing share vocabulary, sentences about medication
likewise. After a few epochs of either training mode, words cluster with
their own topic: intra-topic cosine similarity clearly exceeds inter-topic.

Run with: python3 demos/03_word_vectors.py
"""

import tempfile
from pathlib import Path

import numpy as np

from hpikit.embeddings import build_vocab, load_embeddings, save_embeddings, train_word2vec

rng = np.random.default_rng(0)
breathing = ["dyspnea", "wheezing", "oxygen", "ventilation", "airway"]
medication = ["aspirin", "metoprolol", "dose", "tablet", "infusion"]

corpus = []
for _ in range(400):
    topic = breathing if rng.random() < 0.5 else medication
    corpus.append([topic[int(i)] for i in rng.integers(0, len(topic), 8)])

vocab = build_vocab(corpus)


def cosine(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def topic_gap(table):
    intra, inter = [], []
    for i, w1 in enumerate(breathing + medication):
        for w2 in (breathing + medication)[i + 1 :]:
            value = cosine(table.matrix[vocab.id(w1)], table.matrix[vocab.id(w2)])
            same = (w1 in breathing) == (w2 in breathing)
            (intra if same else inter).append(value)
    return float(np.mean(intra) - np.mean(inter))


for mode in ("cbow", "skipgram"):
    table = train_word2vec(corpus, mode, d=32, window=3, epochs=5, seed=1, vocab=vocab)
    losses = ", ".join(f"{v:.3f}" for v in table.epoch_losses)
    print(f"{mode:8s} per-epoch loss: {losses}")
    print(f"{mode:8s} intra-topic minus inter-topic cosine: {topic_gap(table):.3f}")
    print()

# vectors round-trip through the text format exactly
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "vectors.txt"
    save_embeddings(path, table, vocab)
    loaded, stats = load_embeddings(path, vocab, seed=1)
    assert np.array_equal(loaded.matrix, table.matrix)
    print(f"saved and reloaded {stats.n_loaded} vectors bit-exactly")
