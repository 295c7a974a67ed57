"""Gazetteer-based concept (CUI) extraction with longest-span subsumption."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .corpus import NoteRecord, tokenize

_WS_RUN = re.compile(r"\s+")


class GazetteerError(ValueError):
    """Malformed gazetteer file or entries."""


def normalize_phrase(phrase: str) -> str:
    """Lowercase and collapse whitespace runs to single spaces."""
    return _WS_RUN.sub(" ", phrase.strip()).lower()


@dataclass
class Gazetteer:
    """Mapping from normalized surface phrase to CUI string.

    max_phrase_len is the token count of the longest entry and bounds the
    n-gram size the extractor has to consider.
    """

    entries: dict[str, str]
    max_phrase_len: int

    @classmethod
    def from_pairs(cls, pairs) -> "Gazetteer":
        entries: dict[str, str] = {}
        max_len = 0
        for phrase, cui in pairs:
            norm = normalize_phrase(phrase)
            if not norm:
                raise GazetteerError("gazetteer phrase must be non-empty")
            if entries.get(norm, cui) != cui:
                raise GazetteerError(f"phrase {norm!r} mapped to both {entries[norm]} and {cui}")
            entries[norm] = cui
            max_len = max(max_len, len(tokenize(norm)))
        return cls(entries=entries, max_phrase_len=max_len)

    def __len__(self) -> int:
        return len(self.entries)


def load_gazetteer(path: str | Path) -> Gazetteer:
    """Read a `phrase<TAB>CUI` TSV file, one entry per line."""
    pairs = []
    for i, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 2 or not parts[1].strip():
            raise GazetteerError(f"{path}: line {i} is not 'phrase<TAB>CUI'")
        pairs.append((parts[0], parts[1].strip()))
    return Gazetteer.from_pairs(pairs)


def default_gazetteer() -> Gazetteer:
    """Sample clinical gazetteer shipped with the package (demo data, not UMLS)."""
    return load_gazetteer(Path(__file__).parent / "data" / "gazetteer.tsv")


@dataclass(frozen=True)
class ConceptSpan:
    """A matched concept with character offsets into the source text."""

    cui: str
    start: int
    end: int
    n_tokens: int


def extract_concepts(text: str, gaz: Gazetteer) -> list[ConceptSpan]:
    """Match every token n-gram (n <= max_phrase_len) against the gazetteer.

    A candidate's key is the source slice from the first token's start to the
    last token's end, lowercased with whitespace runs collapsed, so matching
    is invariant to case and to internal whitespace runs.
    """
    if not gaz.entries:
        raise GazetteerError("gazetteer must be non-empty")
    tokens = tokenize(text)
    spans = []
    for i in range(len(tokens)):
        for n in range(1, min(gaz.max_phrase_len, len(tokens) - i) + 1):
            start = tokens[i].start
            end = tokens[i + n - 1].end
            cui = gaz.entries.get(normalize_phrase(text[start:end]))
            if cui is not None:
                spans.append(ConceptSpan(cui, start, end, n))
    spans.sort(key=lambda s: (s.start, s.start - s.end, s.cui))
    return spans


def subsumption_filter(spans: list[ConceptSpan]) -> list[ConceptSpan]:
    """Keep only spans whose [start, end) interval is maximal.

    A span is dropped when its interval is strictly contained in another
    retained span's interval, or when it shares an interval with a retained
    span but has fewer tokens. Identical intervals are collapsed to the
    lexicographically smallest CUI.
    """
    if not spans:
        return []
    best_for_interval: dict[tuple[int, int], ConceptSpan] = {}
    for sp in spans:
        cur = best_for_interval.get((sp.start, sp.end))
        if cur is None or (-sp.n_tokens, sp.cui) < (-cur.n_tokens, cur.cui):
            best_for_interval[(sp.start, sp.end)] = sp

    # Sorted by (start asc, end desc), an interval is strictly contained in an
    # earlier one exactly when its end does not exceed the running max end.
    ordered = sorted(best_for_interval.values(), key=lambda s: (s.start, -s.end))
    kept = []
    max_end = None
    for sp in ordered:
        if max_end is None or sp.end > max_end:
            kept.append(sp)
            max_end = sp.end
    return kept


def cui_set(source: NoteRecord | str, gaz: Gazetteer) -> set[str]:
    """Distinct CUIs of the subsumption-filtered concept spans of a text."""
    text = source.text if isinstance(source, NoteRecord) else source
    return {sp.cui for sp in subsumption_filter(extract_concepts(text, gaz))}
