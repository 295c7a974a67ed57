"""How much of a discharge summary's concept content already exists in the
rest of the patient record? This demo builds a tiny three-patient corpus,
computes the per-summary concept recall upper bound, and shows why grouping
by subject can only raise it compared to grouping by admission.

Run with: python3 demos/02_recall_upper_bound.py
"""

from hpikit.concepts import default_gazetteer
from hpikit.corpus import NoteRecord
from hpikit.overlap import scatter_data, upper_bound_report

notes = [
    # admission h1: two of the three discharge concepts appear in earlier notes
    NoteRecord("d1", "s1", "h1", "Discharge summary", "t5", "head ache aspirin chest pain"),
    NoteRecord("n1a", "s1", "h1", "Nursing", "t1", "aspirin given", hours_outside_icu=3.0),
    NoteRecord("n1b", "s1", "h1", "Nursing", "t2", "head ache persists", hours_outside_icu=3.0),
    # admission h2: the nursing note shares nothing with the summary
    NoteRecord("d2", "s2", "h2", "Discharge summary", "t5", "chest pain"),
    NoteRecord("n2", "s2", "h2", "Nursing", "t1", "routine checks only", hours_outside_icu=10.0),
    # s2 had an earlier admission whose note does mention the concept
    NoteRecord("d2b", "s2", "h9", "Discharge summary", "t5", "fever"),
    NoteRecord("n2b", "s2", "h9", "Nursing", "t1", "chest pain and fever overnight", hours_outside_icu=1.0),
]

gaz = default_gazetteer()

for mode in ("by_admission", "by_subject"):
    report = upper_bound_report(notes, gaz, mode)
    print(f"== {mode} ==")
    for s in report.per_summary:
        print(
            f"  {s.note_id}: recall {s.recall:.3f} "
            f"({s.n_discharge_cuis} summary concepts, {s.n_other_notes} other notes)"
        )
    print(f"  mean recall {report.mean_recall:.3f}")
    print()

# d2's admission h2 never mentions chest pain, but the subject's other
# admission h9 does, so the subject-level bound is higher for d2.
adm = upper_bound_report(notes, gaz, "by_admission")
sub = upper_bound_report(notes, gaz, "by_subject")
d2_adm = next(s.recall for s in adm.per_summary if s.note_id == "d2")
d2_sub = next(s.recall for s in sub.per_summary if s.note_id == "d2")
print(f"d2 recall by admission {d2_adm:.3f} vs by subject {d2_sub:.3f}")
assert d2_sub >= d2_adm

print()
print("== covariates for plotting ==")
for x, y in scatter_data(adm, "n_other_notes"):
    print(f"  n_other_notes={x:.0f} recall={y:.3f}")
