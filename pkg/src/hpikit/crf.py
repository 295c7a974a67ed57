"""Linear-chain CRF: sequence scoring, exact log-partition, loss gradients
via forward-backward, and Viterbi decoding.

A sequence's global score is the begin score of its first label, plus the
per-position emission scores, plus the transition score of every adjacent
label pair, plus the end score of its last label. Normalizing the
exponentiated score over all label sequences gives the sequence probability;
the normalizer is computed by the forward recursion in log space (log-sum-exp
with max subtraction), never by enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class CrfParams:
    """transitions[i, j] scores label i followed by label j; begin and end
    score starting and finishing with a label."""

    transitions: np.ndarray  # (L, L)
    begin: np.ndarray  # (L,)
    end: np.ndarray  # (L,)

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        self.begin = np.asarray(self.begin, dtype=np.float64)
        self.end = np.asarray(self.end, dtype=np.float64)
        n = self.n_labels
        if self.transitions.shape != (n, n) or self.begin.shape != (n,) or self.end.shape != (n,):
            raise ValueError("inconsistent CRF parameter shapes")

    @property
    def n_labels(self) -> int:
        return self.begin.shape[0]

    @classmethod
    def zeros(cls, n_labels: int) -> "CrfParams":
        return cls(np.zeros((n_labels, n_labels)), np.zeros(n_labels), np.zeros(n_labels))


def _check_emissions(crf: CrfParams, emissions: np.ndarray) -> np.ndarray:
    emissions = np.asarray(emissions, dtype=np.float64)
    if emissions.ndim != 2 or emissions.shape[1] != crf.n_labels:
        raise ValueError(f"emissions must be (m, {crf.n_labels}), got {emissions.shape}")
    if emissions.shape[0] < 1:
        raise ValueError("emissions must cover at least one position")
    return emissions


def _lse(a: np.ndarray, axis: int | None = None):
    """log(sum(exp(a))) with max subtraction."""
    peak = np.max(a, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(a - peak), axis=axis, keepdims=True)) + peak
    return out.item() if axis is None else np.squeeze(out, axis=axis)


def sequence_score(crf: CrfParams, emissions: np.ndarray, labels) -> float:
    """Global score of one label sequence (left-to-right summation order)."""
    emissions = _check_emissions(crf, emissions)
    labels = np.asarray(labels, dtype=np.int64)
    m = emissions.shape[0]
    if labels.shape != (m,):
        raise ValueError(f"labels must have length {m}, got shape {labels.shape}")
    score = crf.begin[labels[0]]
    for t in range(m):
        score += emissions[t, labels[t]]
    for t in range(m - 1):
        score += crf.transitions[labels[t], labels[t + 1]]
    return float(score + crf.end[labels[-1]])


def _forward(crf: CrfParams, emissions: np.ndarray) -> np.ndarray:
    m = emissions.shape[0]
    alpha = np.empty_like(emissions)
    alpha[0] = crf.begin + emissions[0]
    for t in range(1, m):
        alpha[t] = _lse(alpha[t - 1][:, None] + crf.transitions, axis=0) + emissions[t]
    return alpha


def _backward(crf: CrfParams, emissions: np.ndarray) -> np.ndarray:
    m = emissions.shape[0]
    beta = np.empty_like(emissions)
    beta[m - 1] = crf.end
    for t in range(m - 2, -1, -1):
        beta[t] = _lse(crf.transitions + (emissions[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


def log_partition(crf: CrfParams, emissions: np.ndarray) -> float:
    """Log of the sum of exp(score) over all label sequences."""
    emissions = _check_emissions(crf, emissions)
    alpha = _forward(crf, emissions)
    return float(_lse(alpha[-1] + crf.end))


def position_marginals(crf: CrfParams, emissions: np.ndarray) -> np.ndarray:
    """(m, L) array of P(label at position t = y); each row sums to 1."""
    emissions = _check_emissions(crf, emissions)
    alpha = _forward(crf, emissions)
    beta = _backward(crf, emissions)
    log_z = _lse(alpha[-1] + crf.end)
    return np.exp(alpha + beta - log_z)


@dataclass
class CrfGradients:
    d_emissions: np.ndarray  # (m, L)
    d_transitions: np.ndarray  # (L, L)
    d_begin: np.ndarray  # (L,)
    d_end: np.ndarray  # (L,)


def sequence_nll(crf: CrfParams, emissions: np.ndarray, labels) -> tuple[float, CrfGradients]:
    """Negative log-probability of the true sequence, with exact gradients.

    loss = log_partition - sequence_score(labels), always >= 0. Gradients are
    marginal expectations minus true-sequence indicators, computed by
    forward-backward.
    """
    emissions = _check_emissions(crf, emissions)
    labels = np.asarray(labels, dtype=np.int64)
    m, n_labels = emissions.shape
    if labels.shape != (m,):
        raise ValueError(f"labels must have length {m}, got shape {labels.shape}")

    alpha = _forward(crf, emissions)
    beta = _backward(crf, emissions)
    log_z = float(_lse(alpha[-1] + crf.end))
    loss = log_z - sequence_score(crf, emissions, labels)

    d_emissions = np.exp(alpha + beta - log_z)
    d_emissions[np.arange(m), labels] -= 1.0

    d_transitions = np.zeros_like(crf.transitions)
    for t in range(m - 1):
        pairwise = np.exp(
            alpha[t][:, None] + crf.transitions + (emissions[t + 1] + beta[t + 1])[None, :] - log_z
        )
        d_transitions += pairwise
        d_transitions[labels[t], labels[t + 1]] -= 1.0

    d_begin = np.exp(alpha[0] + beta[0] - log_z)
    d_begin[labels[0]] -= 1.0
    d_end = np.exp(alpha[-1] + crf.end - log_z)
    d_end[labels[-1]] -= 1.0
    return loss, CrfGradients(d_emissions, d_transitions, d_begin, d_end)


def viterbi(crf: CrfParams, emissions: np.ndarray) -> tuple[np.ndarray, float]:
    """Highest-scoring label sequence and its score.

    Ties are broken toward the smallest label id at the earliest differing
    position: the DP runs back-to-front so the trace can pick labels
    front-to-back, and argmax returns the first (smallest) index on ties.
    The returned score is the decoded sequence re-scored by sequence_score,
    so it is comparable with scores of explicitly enumerated sequences.
    """
    emissions = _check_emissions(crf, emissions)
    m, n_labels = emissions.shape

    # best[t, i] = best score of a suffix starting at position t with label i
    best = np.empty_like(emissions)
    choice = np.zeros((m, n_labels), dtype=np.int64)
    best[m - 1] = emissions[m - 1] + crf.end
    for t in range(m - 2, -1, -1):
        options = crf.transitions + best[t + 1][None, :]
        choice[t] = np.argmax(options, axis=1)
        best[t] = emissions[t] + options[np.arange(n_labels), choice[t]]

    labels = np.zeros(m, dtype=np.int64)
    labels[0] = int(np.argmax(crf.begin + best[0]))
    for t in range(m - 1):
        labels[t + 1] = choice[t, labels[t]]
    return labels, sequence_score(crf, emissions, labels)
