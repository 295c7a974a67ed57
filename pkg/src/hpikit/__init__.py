"""Toolkit for discharge-note concept-recall analysis and HPI topic labeling.

Two halves:

* corpus / concepts / overlap: ingest clinical notes, split discharge
  summaries into sections, extract concept identifiers (CUIs) with a
  gazetteer, and measure how much of a discharge summary's concept
  content is recoverable from the rest of the record.
* embeddings / neuralnet / crf / tagger: word2vec pretraining and a
  word-level BiLSTM-CRF topic labeler for history-of-present-illness
  notes, with all numerics implemented on plain numpy arrays.
"""

__version__ = "0.1.0"

from . import checkpoint, concepts, corpus, crf, embeddings, neuralnet, overlap, synthetic, tagger

__all__ = [
    "checkpoint",
    "concepts",
    "corpus",
    "crf",
    "embeddings",
    "neuralnet",
    "overlap",
    "synthetic",
    "tagger",
    "__version__",
]
