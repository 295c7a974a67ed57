"""Note ingestion, section splitting, tokenization, annotation parsing, splits."""

from __future__ import annotations

import csv
import json
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# The ten fixed topic categories, id order is load-bearing and must not change.
LABELS = (
    "Demographics",
    "DiagnosisHistory",
    "MedicationHistory",
    "ProcedureHistory",
    "Symptoms/Signs",
    "Vitals/Labs",
    "Procedures/Results",
    "Meds/Treatments",
    "PatientMovement",
    "Other",
)
LABEL_IDS = {name: i for i, name in enumerate(LABELS)}
OTHER_ID = LABEL_IDS["Other"]
N_LABELS = len(LABELS)

# Annotation files sometimes carry the short form of the movement category.
_LABEL_ALIASES = {"Movement": "PatientMovement"}

UNKNOWN_SECTION = "UNKNOWN"


class CorpusError(ValueError):
    """Malformed input notes, annotations, or header config."""


def label_id(name: str) -> int:
    """Map a category name to its stable id; unknown names are a hard error."""
    canonical = _LABEL_ALIASES.get(name, name)
    if canonical not in LABEL_IDS:
        raise CorpusError(f"unknown label name: {name!r}")
    return LABEL_IDS[canonical]


@dataclass
class NoteRecord:
    """One clinical note. hadm_id may be None for notes outside any admission."""

    note_id: str
    subject_id: str
    hadm_id: str | None
    category: str
    chart_time: str
    text: str
    hours_outside_icu: float | None = None

    def __post_init__(self):
        if not self.subject_id:
            raise CorpusError(f"note {self.note_id!r}: subject_id must be non-empty")
        if not self.text:
            raise CorpusError(f"note {self.note_id!r}: text must be non-empty")


def is_discharge(note: NoteRecord) -> bool:
    """Discharge-category notes, e.g. "discharge" or "Discharge summary"."""
    return note.category.strip().lower().startswith("discharge")


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int


@dataclass(frozen=True)
class Section:
    """One section of a note: header span [header_start, body_start), body
    span [body_start, body_end). The UNKNOWN section has an empty header span."""

    name: str
    header_start: int
    body_start: int
    body_end: int

    def header_text(self, text: str) -> str:
        return text[self.header_start : self.body_start]

    def body_raw(self, text: str) -> str:
        return text[self.body_start : self.body_end]

    def body_text(self, text: str) -> str:
        return self.body_raw(text).strip()


@dataclass
class SectionedSummary:
    source: NoteRecord
    sections: list[Section]

    def section_bodies(self, name: str) -> list[str]:
        """Stripped body text of every section with the given name, in order."""
        text = self.source.text
        return [s.body_text(text) for s in self.sections if s.name == name]


@dataclass(frozen=True)
class HeaderSpec:
    """A canonical section name and the pattern that recognizes its header line."""

    name: str
    pattern: re.Pattern


def compile_header(name: str, pattern: str | None = None) -> HeaderSpec:
    """Build a HeaderSpec; without an explicit pattern the name is matched
    literally at line start, followed by optional spaces and a colon."""
    if pattern is None:
        pattern = re.escape(name) + r"[ \t]*:"
    return HeaderSpec(name, re.compile(pattern, re.IGNORECASE | re.MULTILINE))


def load_headers(path: str | Path) -> list[HeaderSpec]:
    """Read the header config: one entry per line, either a bare section name
    or `name<TAB>regex`. Blank lines and lines starting with # are ignored."""
    headers = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "\t" in line:
            name, pattern = line.split("\t", 1)
            headers.append(compile_header(name.strip(), pattern.strip()))
        else:
            headers.append(compile_header(line))
    if not headers:
        raise CorpusError(f"header config {path} contains no patterns")
    return headers


def default_headers() -> list[HeaderSpec]:
    """Headers shipped with the package (discharge-summary section names)."""
    return load_headers(Path(__file__).parent / "data" / "headers.txt")


def split_sections(note: NoteRecord, headers: list[HeaderSpec]) -> SectionedSummary:
    """Split a note into sections at header lines.

    Header patterns are tried in config order at every line start; the first
    match claims the line. A section's body runs from the end of its header
    match to the start of the next header. Text before the first header (the
    whole note when nothing matches) becomes an UNKNOWN section with an empty
    header span. Header spans plus body spans tile the text exactly.
    """
    if not headers:
        raise CorpusError("headers must be non-empty")
    text = note.text
    line_starts = [0] + [m.end() for m in re.finditer(r"\n", text)]

    matches = []  # (header_start, header_end, name)
    last_end = 0
    for pos in line_starts:
        if pos < last_end or pos >= len(text):
            continue
        for spec in headers:
            m = spec.pattern.match(text, pos)
            if m and m.end() > m.start():
                matches.append((m.start(), m.end(), spec.name))
                last_end = m.end()
                break

    sections = []
    if not matches:
        sections.append(Section(UNKNOWN_SECTION, 0, 0, len(text)))
    else:
        first_start = matches[0][0]
        if first_start > 0:
            sections.append(Section(UNKNOWN_SECTION, 0, 0, first_start))
        for i, (hstart, hend, name) in enumerate(matches):
            body_end = matches[i + 1][0] if i + 1 < len(matches) else len(text)
            sections.append(Section(name, hstart, hend, body_end))
    return SectionedSummary(note, sections)


# A token is a maximal alphanumeric run or a single punctuation character.
_TOKEN_RE = re.compile(r"[^\W_]+|[^\w\s]|_")


def tokenize(text: str) -> list[Token]:
    """Offset-preserving tokenizer; whitespace never appears inside a token."""
    return [Token(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


@dataclass
class LabeledDocument:
    """Tokenized note where every token carries one topic label id."""

    doc_id: str
    tokens: list[Token]
    labels: np.ndarray  # int64, one id per token

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.tokens) != len(self.labels):
            raise CorpusError(f"doc {self.doc_id!r}: {len(self.tokens)} tokens vs {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= N_LABELS):
            raise CorpusError(f"doc {self.doc_id!r}: label id out of range")

    def token_texts(self) -> list[str]:
        return [t.text for t in self.tokens]


def parse_annotations(xml_source: str | Path, text: str, doc_id: str = "doc") -> LabeledDocument:
    """Turn a span-annotation XML file plus its raw text into a LabeledDocument.

    The XML carries `<span start=".." end=".." label=".."/>` elements with
    character offsets into `text`. A token takes the label of the span that
    contains its midpoint; when several spans contain it the later-starting
    span wins. Tokens covered by no span default to Other.
    """
    if isinstance(xml_source, Path) or not str(xml_source).lstrip().startswith("<"):
        xml_text = Path(xml_source).read_text(encoding="utf-8")
    else:
        xml_text = str(xml_source)
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise CorpusError(f"doc {doc_id!r}: bad annotation XML: {exc}") from exc

    spans = []  # (start, end, file order, label id)
    elements = [root] if root.tag == "span" else root.iter("span")
    for order, el in enumerate(elements):
        try:
            start, end = int(el.attrib["start"]), int(el.attrib["end"])
        except (KeyError, ValueError) as exc:
            raise CorpusError(f"doc {doc_id!r}: span needs integer start/end: {exc}") from exc
        if not (0 <= start < end <= len(text)):
            raise CorpusError(f"doc {doc_id!r}: span [{start},{end}) outside text of length {len(text)}")
        if "label" not in el.attrib:
            raise CorpusError(f"doc {doc_id!r}: span [{start},{end}) has no label attribute")
        spans.append((start, end, order, label_id(el.attrib["label"])))

    tokens = tokenize(text)
    labels = np.full(len(tokens), OTHER_ID, dtype=np.int64)
    for i, tok in enumerate(tokens):
        midpoint = (tok.start + tok.end) / 2.0
        best = None  # later-starting span wins, then later file order
        for start, end, order, lid in spans:
            if start <= midpoint < end and (best is None or (start, order) > best[:2]):
                best = (start, order, lid)
        if best is not None:
            labels[i] = best[2]
    return LabeledDocument(doc_id, tokens, labels)


def split_dataset(docs: list, seed: int) -> tuple[list, list, list]:
    """Deterministic 70/15/15 split: floor(0.7 n) train, floor(0.15 n) dev,
    remainder test."""
    n = len(docs)
    if n < 3:
        raise CorpusError(f"need at least 3 documents to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(np.floor(0.7 * n))
    n_dev = int(np.floor(0.15 * n))
    train = [docs[i] for i in order[:n_train]]
    dev = [docs[i] for i in order[n_train : n_train + n_dev]]
    test = [docs[i] for i in order[n_train + n_dev :]]
    return train, dev, test


_NOTE_FIELDS = ("subject_id", "hadm_id", "category", "chart_time", "text")


def _note_from_row(row: dict, index: int, source: str) -> NoteRecord:
    missing = [f for f in _NOTE_FIELDS if f not in row]
    if missing:
        raise CorpusError(f"{source}: record {index} missing fields {missing}")
    hadm = row["hadm_id"]
    hadm = str(hadm) if hadm not in (None, "") else None
    hours = row.get("hours_outside_icu")
    hours = float(hours) if hours not in (None, "") else None
    note_id = row.get("note_id")
    note_id = str(note_id) if note_id not in (None, "") else f"note{index:05d}"
    return NoteRecord(
        note_id=note_id,
        subject_id=str(row["subject_id"]),
        hadm_id=hadm,
        category=str(row["category"]),
        chart_time=str(row["chart_time"]),
        text=str(row["text"]),
        hours_outside_icu=hours,
    )


def load_notes(path: str | Path) -> list[NoteRecord]:
    """Load notes from CSV (DictReader) or JSON-lines, by file extension.

    Required fields: subject_id, hadm_id, category, chart_time, text.
    Optional: note_id (defaults to the row index), hours_outside_icu.
    """
    path = Path(path)
    notes = []
    if path.suffix.lower() == ".csv":
        with open(path, newline="", encoding="utf-8") as fh:
            for i, row in enumerate(csv.DictReader(fh)):
                notes.append(_note_from_row(row, i, str(path)))
    elif path.suffix.lower() in (".jsonl", ".json"):
        with open(path, encoding="utf-8") as fh:
            for i, line in enumerate(fh):
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusError(f"{path}: line {i + 1} is not valid JSON: {exc}") from exc
                notes.append(_note_from_row(row, i, str(path)))
    else:
        raise CorpusError(f"unsupported notes format {path.suffix!r} (use .csv or .jsonl)")
    return notes


def load_annotated_dir(path: str | Path) -> list[LabeledDocument]:
    """Load every .txt/.xml pair from a directory, sorted by file stem."""
    path = Path(path)
    if not path.is_dir():
        raise CorpusError(f"{path} is not a directory")
    docs = []
    for txt in sorted(path.glob("*.txt")):
        xml = txt.with_suffix(".xml")
        if not xml.exists():
            raise CorpusError(f"{txt} has no side-by-side annotation file {xml.name}")
        text = txt.read_text(encoding="utf-8")
        docs.append(parse_annotations(xml, text, doc_id=txt.stem))
    return docs
