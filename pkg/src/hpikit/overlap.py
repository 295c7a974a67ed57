"""Concept-recall of discharge summaries against the rest of the record.

The recall of one discharge summary is the fraction of its (filtered) CUIs
that also occur in the other notes of the same admission (by_admission) or
of the same patient (by_subject). Averaged over summaries this is the
ceiling any extractive method could reach.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .concepts import Gazetteer, cui_set
from .corpus import HeaderSpec, NoteRecord, is_discharge, split_sections

BY_ADMISSION = "by_admission"
BY_SUBJECT = "by_subject"
MODES = (BY_ADMISSION, BY_SUBJECT)

SCATTER_AXES = ("n_other_notes", "n_other_cuis", "hours_outside_icu")


class OverlapError(ValueError):
    """Invalid mode, covariate, or report input."""


def recall(discharge_cuis: set[str], other_cuis: set[str]) -> float:
    """|discharge & other| / |discharge|; vacuously 1.0 for an empty discharge set."""
    if not discharge_cuis:
        return 1.0
    return len(discharge_cuis & other_cuis) / len(discharge_cuis)


@dataclass(frozen=True)
class SummaryRecall:
    note_id: str
    recall: float
    n_discharge_cuis: int
    n_other_cuis: int
    n_other_notes: int
    hours_outside_icu: float | None = None

    @property
    def vacuous(self) -> bool:
        return self.n_discharge_cuis == 0


@dataclass
class RecallReport:
    mode: str
    per_summary: list[SummaryRecall]
    n_skipped_missing_hadm: int = 0

    @property
    def n_summaries(self) -> int:
        return len(self.per_summary)

    @property
    def n_vacuous(self) -> int:
        return sum(1 for s in self.per_summary if s.vacuous)

    @property
    def mean_recall(self) -> float:
        if not self.per_summary:
            return float("nan")
        return sum(s.recall for s in self.per_summary) / len(self.per_summary)

    @property
    def mean_recall_nonvacuous(self) -> float:
        values = [s.recall for s in self.per_summary if not s.vacuous]
        if not values:
            return float("nan")
        return sum(values) / len(values)

    def aggregates(self) -> dict:
        return {
            "mode": self.mode,
            "n_summaries": self.n_summaries,
            "n_skipped_missing_hadm": self.n_skipped_missing_hadm,
            "n_vacuous": self.n_vacuous,
            "mean_recall": self.mean_recall,
            "mean_recall_nonvacuous": self.mean_recall_nonvacuous,
        }


def _group_key(note: NoteRecord, mode: str) -> str | None:
    return note.hadm_id if mode == BY_ADMISSION else note.subject_id


def upper_bound_report(notes: list[NoteRecord], gaz: Gazetteer, mode: str) -> RecallReport:
    """Per-summary concept recall against non-discharge notes of the same
    admission (by_admission) or patient (by_subject).

    Discharge notes lacking hadm_id in by_admission mode are excluded and
    tallied in n_skipped_missing_hadm. Vacuous summaries (no CUIs at all)
    score 1.0 and are tallied so aggregates can be recomputed without them.
    """
    if mode not in MODES:
        raise OverlapError(f"mode must be one of {MODES}, got {mode!r}")
    if not any(is_discharge(n) for n in notes):
        raise OverlapError("notes contain no discharge-category note")

    cuis = [cui_set(n, gaz) for n in notes]
    groups: dict[str, list[int]] = {}
    for i, note in enumerate(notes):
        key = _group_key(note, mode)
        if key is not None and not is_discharge(note):
            groups.setdefault(key, []).append(i)

    per_summary = []
    skipped = 0
    for i, note in enumerate(notes):
        if not is_discharge(note):
            continue
        key = _group_key(note, mode)
        if key is None:
            skipped += 1
            continue
        other_idx = groups.get(key, [])
        other_cuis: set[str] = set()
        for j in other_idx:
            other_cuis |= cuis[j]
        per_summary.append(
            SummaryRecall(
                note_id=note.note_id,
                recall=recall(cuis[i], other_cuis),
                n_discharge_cuis=len(cuis[i]),
                n_other_cuis=len(other_cuis),
                n_other_notes=len(other_idx),
                hours_outside_icu=note.hours_outside_icu,
            )
        )
    return RecallReport(mode=mode, per_summary=per_summary, n_skipped_missing_hadm=skipped)


@dataclass
class SectionAggregate:
    section: str
    recalls: list[float] = field(default_factory=list)
    n_missing_section: int = 0

    @property
    def n_summaries(self) -> int:
        return len(self.recalls)

    @property
    def mean_recall(self) -> float:
        if not self.recalls:
            return float("nan")
        return sum(self.recalls) / len(self.recalls)


@dataclass
class GenderRecallResult:
    n_match: int = 0
    n_compared: int = 0
    n_unparseable: int = 0
    n_missing_structured: int = 0
    n_missing_section: int = 0

    @property
    def fraction(self) -> float:
        if self.n_compared == 0:
            return float("nan")
        return self.n_match / self.n_compared


@dataclass
class SectionRecallReport:
    sections: dict[str, SectionAggregate]
    sex: GenderRecallResult | None = None
    n_skipped_missing_hadm: int = 0


_SEX_VALUES = {"M": "M", "F": "F", "MALE": "M", "FEMALE": "F"}


def _parse_sex(value: str) -> str | None:
    words = value.strip().split()
    if not words:
        return None
    return _SEX_VALUES.get(words[0].strip(".,;:").upper())


def gender_recall(
    notes: list[NoteRecord],
    structured: dict[str, str],
    headers: list[HeaderSpec],
) -> GenderRecallResult:
    """Fraction of discharge summaries whose Sex section agrees with the
    structured record for the subject.

    Summaries without a Sex section are skipped (tallied); an unparseable or
    unmatched value counts as a mismatch and is tallied separately.
    """
    result = GenderRecallResult()
    for note in notes:
        if not is_discharge(note):
            continue
        bodies = split_sections(note, headers).section_bodies("Sex")
        if not bodies:
            result.n_missing_section += 1
            continue
        result.n_compared += 1
        noted = _parse_sex(bodies[0])
        if noted is None:
            result.n_unparseable += 1
            continue
        recorded = structured.get(note.subject_id)
        if recorded is None:
            result.n_missing_structured += 1
            continue
        if _parse_sex(recorded) == noted:
            result.n_match += 1
    return result


def section_recall_report(
    notes: list[NoteRecord],
    gaz: Gazetteer,
    headers: list[HeaderSpec],
    sections: list[str],
    structured_sex: dict[str, str] | None = None,
) -> SectionRecallReport:
    """Per-section mean concept recall of discharge summaries, compared to
    non-discharge notes of the same admission.

    A summary missing a requested section is skipped for that section. The
    Sex section is not scored by concept overlap: when requested it is
    checked against the structured record (requires structured_sex).
    """
    cui_sections = [s for s in sections if s != "Sex"]
    want_sex = "Sex" in sections

    other_by_hadm: dict[str, set[str]] = {}
    for note in notes:
        if not is_discharge(note) and note.hadm_id is not None:
            other_by_hadm.setdefault(note.hadm_id, set()).update(cui_set(note, gaz))

    aggregates = {name: SectionAggregate(name) for name in cui_sections}
    skipped = 0
    for note in notes:
        if not is_discharge(note):
            continue
        if note.hadm_id is None:
            skipped += 1
            continue
        summary = split_sections(note, headers)
        other_cuis = other_by_hadm.get(note.hadm_id, set())
        for name in cui_sections:
            bodies = summary.section_bodies(name)
            if not bodies:
                aggregates[name].n_missing_section += 1
                continue
            section_cuis: set[str] = set()
            for body in bodies:
                section_cuis |= cui_set(body, gaz)
            aggregates[name].recalls.append(recall(section_cuis, other_cuis))

    sex_result = None
    if want_sex and structured_sex is not None:
        sex_result = gender_recall(notes, structured_sex, headers)
    return SectionRecallReport(sections=aggregates, sex=sex_result, n_skipped_missing_hadm=skipped)


def scatter_data(report: RecallReport, x_axis: str) -> list[tuple[float, float]]:
    """One (x, recall) row per summary, in report order, no aggregation."""
    if x_axis not in SCATTER_AXES:
        raise OverlapError(f"x_axis must be one of {SCATTER_AXES}, got {x_axis!r}")
    rows = []
    for s in report.per_summary:
        x = getattr(s, x_axis)
        if x is None:
            raise OverlapError(f"covariate {x_axis} is not populated for summary {s.note_id!r}")
        rows.append((float(x), s.recall))
    return rows
