"""Synthetic corpora with known structure, used to exercise the pipeline.

Three generators: a word-identity task (each word type carries a fixed
label, so any competent tagger should approach perfect F1), a suffix
morphology task (the label is determined by the final character and most
dev words are unseen in training, so only character-aware models can solve
it), and random multi-note patient records for recall property checks.
"""

from __future__ import annotations

import numpy as np

from .corpus import LabeledDocument, N_LABELS, NoteRecord, tokenize


def _doc_from_words(doc_id: str, words: list[str], labels: list[int]) -> LabeledDocument:
    text = " ".join(words)
    tokens = tokenize(text)
    assert len(tokens) == len(words), "generator words must each be a single token"
    return LabeledDocument(doc_id, tokens, np.array(labels, dtype=np.int64))


def separable_corpus(n_docs: int = 500, vocab_size: int = 60, doc_len=(5, 12), seed: int = 0):
    """Documents whose label is a fixed function of the word identity.

    Word k of the vocabulary always carries label k mod N_LABELS, so token
    label == word lookup and a word-embedding model can reach F1 near 1.
    """
    rng = np.random.default_rng(seed)
    words = [f"tok{k:03d}" for k in range(vocab_size)]
    docs = []
    for i in range(n_docs):
        n = int(rng.integers(doc_len[0], doc_len[1] + 1))
        ids = rng.integers(0, vocab_size, size=n)
        docs.append(
            _doc_from_words(
                f"sep{i:04d}",
                [words[k] for k in ids],
                [int(k) % N_LABELS for k in ids],
            )
        )
    return docs


_SUFFIXES = "abcdefghij"


def suffix_corpus(n_docs: int = 300, doc_len=(4, 9), stem_len=(4, 7), seed: int = 0):
    """Documents whose label is determined by the word's final character.

    Stems are random lowercase strings, drawn fresh for every word, so word
    identities barely repeat between documents; the suffix character (one of
    ten) fixes the label. A model without character features has almost
    nothing to learn from, while a character-aware one can read the rule.
    """
    rng = np.random.default_rng(seed)
    letters = "klmnopqrstuvwxyz"  # distinct from the suffix alphabet
    docs = []
    for i in range(n_docs):
        n = int(rng.integers(doc_len[0], doc_len[1] + 1))
        words, labels = [], []
        for _ in range(n):
            n_stem = int(rng.integers(stem_len[0], stem_len[1] + 1))
            stem = "".join(letters[j] for j in rng.integers(0, len(letters), size=n_stem))
            label = int(rng.integers(0, len(_SUFFIXES)))
            words.append(stem + _SUFFIXES[label])
            labels.append(label)
        docs.append(_doc_from_words(f"suf{i:04d}", words, labels))
    return docs


def random_patient_notes(
    phrases: list[str],
    n_subjects: int = 3,
    admissions_per_subject: int = 2,
    notes_per_admission: int = 2,
    phrase_range=(1, 4),
    seed: int = 0,
) -> list[NoteRecord]:
    """Random multi-note records: per admission, one discharge summary plus
    supporting notes, with texts drawn from the given phrase bank."""
    rng = np.random.default_rng(seed)

    def text():
        k = int(rng.integers(phrase_range[0], phrase_range[1] + 1))
        return ". ".join(phrases[j] for j in rng.integers(0, len(phrases), size=k))

    notes = []
    for s in range(n_subjects):
        sid = f"s{s}"
        for a in range(admissions_per_subject):
            hadm = f"{sid}-h{a}"
            for k in range(notes_per_admission):
                notes.append(
                    NoteRecord(f"{hadm}-n{k}", sid, hadm, "nursing", f"t{k}", text())
                )
            notes.append(
                NoteRecord(f"{hadm}-dis", sid, hadm, "discharge", "t9", text())
            )
    return notes
