"""Split a discharge note into sections and pull out its clinical concepts.

Run with: python3 demos/01_sections_and_concepts.py
"""

from hpikit.concepts import default_gazetteer, extract_concepts, subsumption_filter
from hpikit.corpus import NoteRecord, default_headers, split_sections, tokenize

note = NoteRecord(
    note_id="demo-note",
    subject_id="s-001",
    hadm_id="h-001",
    category="Discharge summary",
    chart_time="2130-04-12 10:00:00",
    text=(
        "Admission Date: 2130-04-10\n"
        "Sex: F\n"
        "Chief Complaint:\n"
        "head ache and nausea\n"
        "History of Present Illness:\n"
        "Patient is a 54 year old with chest pain radiating to the left arm,\n"
        "started on aspirin in the emergency department.\n"
        "Discharge Medications:\n"
        "aspirin 81 mg daily\n"
    ),
)

print("== sections ==")
summary = split_sections(note, default_headers())
for section in summary.sections:
    body = section.body_text(note.text)
    preview = body[:60].replace("\n", " / ")
    print(f"{section.name:35s} {preview}")

print()
print("== tokens of the HPI body ==")
hpi = summary.section_bodies("History of Present Illness")[0]
print([t.text for t in tokenize(hpi)][:14], "...")

print()
print("== concepts, before and after the maximal-span filter ==")
gaz = default_gazetteer()
spans = extract_concepts(note.text, gaz)
print(f"raw matches: {len(spans)}")
for s in spans[:8]:
    print(f"  {s.cui}  [{s.start:3d},{s.end:3d})  {note.text[s.start:s.end]!r}")

kept = subsumption_filter(spans)
print(f"after subsumption filter: {len(kept)}")
for s in kept:
    print(f"  {s.cui}  {note.text[s.start:s.end]!r}")

# "head ache" swallows "head" and "ache"; only the longest span survives
assert all(k.cui != "C0018670" for k in kept)
