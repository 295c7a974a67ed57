"""Command-line pipeline runner.

One executable with subcommands covering the whole pipeline: section
splitting, concept extraction, recall reporting, word-vector pretraining,
tagger training/evaluation/prediction, the ablation grid, and a run report.
Every command writes its outputs plus a run manifest (config snapshot, seed,
code version, input digests, timestamps) into a run directory, so results
can be audited and reproduced. Exit codes: 0 success, 1 validation error,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # 3.10 fallback
    import tomli as tomllib

from . import __version__, tagger
from .concepts import default_gazetteer, extract_concepts, load_gazetteer, subsumption_filter
from .corpus import (
    LABELS,
    default_headers,
    load_annotated_dir,
    load_headers,
    load_notes,
    split_dataset,
    split_sections,
    tokenize,
)
from .embeddings import build_vocab, load_embeddings, save_embeddings, train_word2vec
from .overlap import upper_bound_report
from .tagger import (
    AblationSpec,
    EvalReport,
    ModelConfig,
    TrainConfig,
    ablation_csv,
    ablation_run,
    build_tagger,
    evaluate,
    load_tagger,
    save_tagger,
    train,
    vocab_from_docs,
)

OUT_DIR_ENV = "HPIKIT_OUT_DIR"

COMMANDS = (
    "split-sections",
    "extract-cuis",
    "recall",
    "pretrain-embeddings",
    "train",
    "evaluate",
    "predict",
    "ablate",
    "report",
)


class CliError(Exception):
    """Validation problem; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(f"{self.prog}: error: {message}\n{self.format_usage().rstrip()}")


# -- small utilities ----------------------------------------------------------


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _digest_path(path: Path) -> str:
    """Content digest of a file, or of a directory's files by sorted name."""
    if path.is_dir():
        digest = hashlib.sha256()
        for child in sorted(p for p in path.rglob("*") if p.is_file()):
            digest.update(child.relative_to(path).as_posix().encode())
            digest.update(b":")
            digest.update(_sha256_file(child).encode())
            digest.update(b"\n")
        return digest.hexdigest()
    return _sha256_file(path)


def _write_json(path: Path, payload):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _require_path(raw: str | None, what: str, want_dir: bool = False) -> Path:
    if not raw:
        raise CliError(f"missing required input: {what}")
    path = Path(raw)
    if want_dir and not path.is_dir():
        raise CliError(f"{what} {path} is not a directory")
    if not want_dir and not path.is_file():
        raise CliError(f"{what} {path} does not exist")
    return path


def load_config_file(path: str | Path) -> dict:
    """Parse a JSON or TOML run config into a flat dict."""
    path = Path(path)
    if not path.is_file():
        raise CliError(f"config file {path} does not exist")
    raw = path.read_bytes()
    try:
        if path.suffix == ".json":
            parsed = json.loads(raw.decode("utf-8"))
        elif path.suffix == ".toml":
            parsed = tomllib.loads(raw.decode("utf-8"))
        else:
            raise CliError(f"config file {path} must end in .json or .toml")
    except (json.JSONDecodeError, tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise CliError(f"config file {path} is not parseable: {exc}") from exc
    if not isinstance(parsed, dict):
        raise CliError(f"config file {path} must hold a table of settings")
    return parsed


_TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)}
_MODEL_KEYS = {f.name for f in dataclasses.fields(ModelConfig)}


def _check_keys(config: dict, allowed: set, where: str):
    unknown = sorted(set(config) - allowed)
    if unknown:
        raise CliError(f"unknown config keys for {where}: {', '.join(unknown)}")


def _split_train_config(config: dict, seed: int) -> tuple[ModelConfig, TrainConfig]:
    try:
        model_cfg = ModelConfig(**{k: config[k] for k in _MODEL_KEYS if k in config})
        train_kwargs = {k: config[k] for k in _TRAIN_KEYS if k in config}
        train_kwargs["seed"] = seed
        train_cfg = TrainConfig(**train_kwargs)
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad training config: {exc}") from exc
    return model_cfg, train_cfg


def _metrics_dict(report: EvalReport) -> dict:
    per_label = [
        {
            "label": LABELS[i],
            "precision": float(report.precision[i]),
            "recall": float(report.recall[i]),
            "f1": float(report.f1[i]),
            "support": int(report.support[i]),
        }
        for i in range(len(LABELS))
    ]
    return {
        "accuracy": report.accuracy,
        "macro_f1": report.macro_f1,
        "weighted_f1": report.weighted_f1,
        "n_tokens": report.n_tokens,
        "per_label": per_label,
    }


def _write_confusion_csv(path: Path, report: EvalReport):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["predicted\\true", *LABELS])
        for i, name in enumerate(LABELS):
            writer.writerow([name, *map(int, report.confusion[i])])


def _load_headers_arg(raw: str | None):
    if raw:
        return load_headers(_require_path(raw, "headers file"))
    return default_headers()


def _load_gazetteer_arg(raw: str | None):
    if raw:
        return load_gazetteer(_require_path(raw, "gazetteer file"))
    return default_gazetteer()


# -- command handlers ---------------------------------------------------------


def _cmd_split_sections(args, config, out_dir: Path, inputs: dict) -> list[str]:
    notes_path = _require_path(args.notes, "notes file")
    inputs["notes"] = notes_path
    if args.headers:
        inputs["headers"] = Path(args.headers)
    headers = _load_headers_arg(args.headers)
    notes = load_notes(notes_path)
    out_path = out_dir / "sections.jsonl"
    with open(out_path, "w", encoding="utf-8") as fh:
        for note in notes:
            summary = split_sections(note, headers)
            record = {
                "note_id": note.note_id,
                "category": note.category,
                "sections": [
                    {
                        "name": sec.name,
                        "header_start": sec.header_start,
                        "body_start": sec.body_start,
                        "body_end": sec.body_end,
                        "header": sec.header_text(note.text),
                        "body": sec.body_raw(note.text),
                    }
                    for sec in summary.sections
                ],
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    return [out_path.name]


def _cmd_extract_cuis(args, config, out_dir: Path, inputs: dict) -> list[str]:
    notes_path = _require_path(args.notes, "notes file")
    inputs["notes"] = notes_path
    if args.gazetteer:
        inputs["gazetteer"] = Path(args.gazetteer)
    gaz = _load_gazetteer_arg(args.gazetteer)
    notes = load_notes(notes_path)
    out_path = out_dir / "cuis.jsonl"
    with open(out_path, "w", encoding="utf-8") as fh:
        for note in notes:
            spans = subsumption_filter(extract_concepts(note.text, gaz))
            record = {
                "note_id": note.note_id,
                "concepts": [
                    {"cui": s.cui, "start": s.start, "end": s.end, "text": note.text[s.start : s.end]}
                    for s in spans
                ],
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    return [out_path.name]


def _cmd_recall(args, config, out_dir: Path, inputs: dict) -> list[str]:
    _check_keys(config, {"mode", "seed"}, "recall")
    notes_path = _require_path(args.notes, "notes file")
    inputs["notes"] = notes_path
    if args.gazetteer:
        inputs["gazetteer"] = Path(args.gazetteer)
    gaz = _load_gazetteer_arg(args.gazetteer)
    mode = (args.mode or config.get("mode") or "by-admission").replace("-", "_")
    notes = load_notes(notes_path)
    report = upper_bound_report(notes, gaz, mode)

    csv_path = out_dir / "recall.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["note_id", "recall", "n_discharge_cuis", "n_other_cuis", "n_other_notes", "hours_outside_icu"]
        )
        for row in report.per_summary:
            hours = "" if row.hours_outside_icu is None else repr(row.hours_outside_icu)
            writer.writerow(
                [row.note_id, repr(row.recall), row.n_discharge_cuis, row.n_other_cuis, row.n_other_notes, hours]
            )
    summary_path = out_dir / "recall_summary.json"
    _write_json(summary_path, report.aggregates())
    return [csv_path.name, summary_path.name]


def _cmd_pretrain_embeddings(args, config, out_dir: Path, inputs: dict) -> list[str]:
    allowed = {"mode", "dim", "window", "negatives", "epochs", "lr", "min_count", "seed"}
    _check_keys(config, allowed, "pretrain-embeddings")
    notes_path = _require_path(args.notes, "notes file")
    inputs["notes"] = notes_path
    notes = load_notes(notes_path)
    corpus = [[tok.text for tok in tokenize(note.text)] for note in notes]
    mode = args.mode or config.get("mode") or "cbow"
    vocab = build_vocab(corpus, min_count=int(config.get("min_count", 1)))
    table = train_word2vec(
        corpus,
        mode,
        d=int(config.get("dim", 100)),
        window=int(config.get("window", 5)),
        negatives=int(config.get("negatives", 5)),
        epochs=int(config.get("epochs", 5)),
        seed=args.seed_value,
        vocab=vocab,
        lr=float(config.get("lr", 0.025)),
    )
    vec_path = out_dir / "vectors.txt"
    save_embeddings(vec_path, table, vocab)
    loss_path = out_dir / "pretrain_losses.json"
    _write_json(loss_path, {"mode": mode, "epoch_losses": table.epoch_losses})
    return [vec_path.name, loss_path.name]


def _resolve_word_mode(config: dict, embeddings: str | None) -> str:
    mode = config.get("word_mode")
    if embeddings and mode is None:
        return "pretrained-finetuned"
    if embeddings and mode == "learned-from-scratch":
        raise CliError("an embeddings file was given but word_mode is learned-from-scratch")
    if not embeddings and mode in ("pretrained-frozen", "pretrained-finetuned"):
        raise CliError(f"word_mode {mode} needs an embeddings file (--embeddings or config)")
    return mode or "learned-from-scratch"


def _cmd_train(args, config, out_dir: Path, inputs: dict) -> list[str]:
    _check_keys(config, _TRAIN_KEYS | _MODEL_KEYS | {"embeddings"}, "train")
    data_dir = _require_path(args.data, "annotated data directory", want_dir=True)
    inputs["data"] = data_dir
    embeddings = args.embeddings or config.get("embeddings")
    word_mode = _resolve_word_mode(config, embeddings)
    config = {**config, "word_mode": word_mode}
    model_cfg, train_cfg = _split_train_config(config, args.seed_value)

    docs = load_annotated_dir(data_dir)
    train_docs, dev_docs, test_docs = split_dataset(docs, seed=train_cfg.seed)
    vocab, char_vocab = vocab_from_docs(train_docs)

    table = None
    if embeddings:
        emb_path = _require_path(embeddings, "embeddings file")
        inputs["embeddings"] = emb_path
        table, stats = load_embeddings(emb_path, vocab, seed=train_cfg.seed)
        model_cfg = dataclasses.replace(model_cfg, word_dim=table.d)
        print(f"embeddings: {stats.n_loaded} loaded, {stats.n_oov} out of vocabulary, {stats.n_skipped} skipped")

    model = build_tagger(vocab, char_vocab, model_cfg, seed=train_cfg.seed)
    if table is not None:
        model.set_pretrained_words(table)
    history = train(model, train_cfg, train_docs, dev_docs)
    dev_report = evaluate(model, dev_docs)

    ckpt_path = out_dir / "model.ckpt"
    save_tagger(ckpt_path, model)
    _write_json(out_dir / "history.json", asdict(history))
    _write_json(out_dir / "metrics.json", _metrics_dict(dev_report))
    _write_confusion_csv(out_dir / "confusion.csv", dev_report)
    print(
        f"trained {len(history.epochs)} epochs, best dev F1 {history.best_dev_f1:.4f} "
        f"at epoch {history.best_epoch}"
    )
    return ["model.ckpt", "history.json", "metrics.json", "confusion.csv"]


def _cmd_evaluate(args, config, out_dir: Path, inputs: dict) -> list[str]:
    model_path = _require_path(args.model, "model checkpoint")
    data_dir = _require_path(args.data, "annotated data directory", want_dir=True)
    inputs["model"] = model_path
    inputs["data"] = data_dir
    model = load_tagger(model_path)
    docs = load_annotated_dir(data_dir)
    if not docs:
        raise CliError(f"{data_dir} holds no annotated documents")
    report = evaluate(model, docs)
    _write_json(out_dir / "metrics.json", _metrics_dict(report))
    _write_confusion_csv(out_dir / "confusion.csv", report)
    print(f"evaluated {len(docs)} documents: accuracy {report.accuracy:.4f}, weighted F1 {report.weighted_f1:.4f}")
    return ["metrics.json", "confusion.csv"]


def _cmd_predict(args, config, out_dir: Path, inputs: dict) -> list[str]:
    model_path = _require_path(args.model, "model checkpoint")
    input_path = _require_path(args.input, "input text file")
    inputs["model"] = model_path
    inputs["input"] = input_path
    model = load_tagger(model_path)
    out_path = out_dir / "predictions.jsonl"
    with open(input_path, encoding="utf-8") as src, open(out_path, "w", encoding="utf-8") as dst:
        for line in src:
            words = [tok.text for tok in tokenize(line.rstrip("\n"))]
            labels = model.predict(words)
            record = {
                "tokens": words,
                "labels": [int(y) for y in labels],
                "label_names": [LABELS[y] for y in labels],
            }
            dst.write(json.dumps(record, sort_keys=True) + "\n")
    return [out_path.name]


def _cmd_ablate(args, config, out_dir: Path, inputs: dict) -> list[str]:
    _check_keys(config, _TRAIN_KEYS | _MODEL_KEYS | {"rows"}, "ablate")
    data_dir = _require_path(args.data, "annotated data directory", want_dir=True)
    inputs["data"] = data_dir
    model_cfg, train_cfg = _split_train_config(
        {k: v for k, v in config.items() if k != "rows"}, args.seed_value
    )
    raw_rows = config.get("rows") or [
        {"name": "char-on", "use_char": True, "word_mode": "learned-from-scratch"},
        {"name": "char-off", "use_char": False, "word_mode": "learned-from-scratch"},
    ]
    specs = []
    for i, row in enumerate(raw_rows):
        if not isinstance(row, dict) or "name" not in row:
            raise CliError(f"ablation row {i} must be a table with a name")
        extra = sorted(set(row) - {"name", "use_char", "word_mode", "embeddings"})
        if extra:
            raise CliError(f"ablation row {row['name']!r} has unknown keys: {', '.join(extra)}")
        specs.append(
            AblationSpec(
                name=str(row["name"]),
                use_char=bool(row.get("use_char", True)),
                word_mode=str(row.get("word_mode", "learned-from-scratch")),
                embeddings_path=row.get("embeddings"),
            )
        )

    docs = load_annotated_dir(data_dir)
    train_docs, dev_docs, test_docs = split_dataset(docs, seed=train_cfg.seed)
    rows = ablation_run(specs, train_docs, dev_docs, model_cfg, train_cfg)
    out_path = out_dir / "ablation.csv"
    out_path.write_text(ablation_csv(rows), encoding="utf-8")
    for row in rows:
        print(f"{row.name}: {row.status}, dev F1 {row.dev_f1}")
    return [out_path.name]


def _cmd_report(args, config, out_dir: Path, inputs: dict) -> list[str]:
    run_dir = Path(args.run) if args.run else out_dir
    if not run_dir.is_dir():
        raise CliError(f"run directory {run_dir} does not exist")
    parts = [f"# Run report: {run_dir.name}", ""]

    summary = run_dir / "recall_summary.json"
    if summary.is_file():
        inputs["recall_summary"] = summary
        data = json.loads(summary.read_text(encoding="utf-8"))
        parts += ["## Concept recall", ""]
        parts += [f"- {key}: {value}" for key, value in sorted(data.items())]
        parts.append("")

    metrics = run_dir / "metrics.json"
    if metrics.is_file():
        inputs["metrics"] = metrics
        data = json.loads(metrics.read_text(encoding="utf-8"))
        parts += [
            "## Tagger metrics",
            "",
            f"- accuracy: {data['accuracy']}",
            f"- macro F1: {data['macro_f1']}",
            f"- weighted F1: {data['weighted_f1']}",
            f"- tokens: {data['n_tokens']}",
            "",
            "| label | precision | recall | F1 | support |",
            "| --- | --- | --- | --- | --- |",
        ]
        for row in data["per_label"]:
            parts.append(
                f"| {row['label']} | {row['precision']:.4f} | {row['recall']:.4f} "
                f"| {row['f1']:.4f} | {row['support']} |"
            )
        parts.append("")

    history = run_dir / "history.json"
    if history.is_file():
        inputs["history"] = history
        data = json.loads(history.read_text(encoding="utf-8"))
        parts += ["## Training history", ""]
        parts += ["| epoch | mean train loss | dev weighted F1 | lr |", "| --- | --- | --- | --- |"]
        for row in data.get("epochs", []):
            parts.append(
                f"| {row['epoch']} | {row['mean_train_loss']:.4f} "
                f"| {row['dev_weighted_f1']:.4f} | {row['lr']:.6f} |"
            )
        parts.append("")

    ablation = run_dir / "ablation.csv"
    if ablation.is_file():
        inputs["ablation"] = ablation
        parts += ["## Ablation grid", "", "```", ablation.read_text(encoding="utf-8").rstrip(), "```", ""]

    if len(parts) == 2:
        raise CliError(f"run directory {run_dir} holds no reportable artifacts")
    out_path = out_dir / "report.md"
    out_path.write_text("\n".join(parts), encoding="utf-8")
    return [out_path.name]


_HANDLERS = {
    "split-sections": _cmd_split_sections,
    "extract-cuis": _cmd_extract_cuis,
    "recall": _cmd_recall,
    "pretrain-embeddings": _cmd_pretrain_embeddings,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "predict": _cmd_predict,
    "ablate": _cmd_ablate,
    "report": _cmd_report,
}


# -- argument parsing and dispatch ---------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="hpikit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hpikit {__version__}")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text, **flags):
        sub = subs.add_parser(name, help=help_text)
        sub.add_argument("--config", help="JSON or TOML run config")
        sub.add_argument("--seed", type=int, help="random seed (wins over config)")
        sub.add_argument("--out-dir", help=f"run directory (default ${OUT_DIR_ENV} or ./runs/<command>)")
        for flag, help_line in flags.items():
            sub.add_argument(f"--{flag.replace('_', '-')}", help=help_line)
        return sub

    add("split-sections", "split notes into header-delimited sections",
        notes="notes file (.csv or .jsonl)", headers="header list file")
    add("extract-cuis", "extract maximal gazetteer concepts per note",
        notes="notes file (.csv or .jsonl)", gazetteer="phrase-to-CUI TSV")
    add("recall", "concept recall of discharge summaries against the rest of the record",
        notes="notes file (.csv or .jsonl)", gazetteer="phrase-to-CUI TSV",
        mode="grouping: by-admission or by-subject")
    add("pretrain-embeddings", "train word vectors on note text",
        notes="notes file (.csv or .jsonl)", mode="cbow or skipgram")
    add("train", "train the topic labeler on an annotated directory",
        data="directory of .txt/.xml annotated documents", embeddings="pretrained vector file")
    add("evaluate", "score a checkpoint on an annotated directory",
        model="tagger checkpoint", data="directory of .txt/.xml annotated documents")
    add("predict", "label raw note text, one document per line",
        model="tagger checkpoint", input="text file, one document per line")
    add("ablate", "train one model per architecture row and tabulate dev F1",
        data="directory of .txt/.xml annotated documents")
    add("report", "summarize a run directory's artifacts as markdown",
        run="run directory to summarize (default: --out-dir)")
    return parser


def _resolve_out_dir(args) -> Path:
    raw = args.out_dir or os.environ.get(OUT_DIR_ENV) or str(Path("runs") / args.command)
    out_dir = Path(raw)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def _run(argv) -> int:
    args = build_parser().parse_args(argv)
    config = load_config_file(args.config) if args.config else {}
    if args.seed is not None:
        args.seed_value = args.seed
    else:
        seed = config.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise CliError(f"config seed must be an integer, got {seed!r}")
        args.seed_value = seed

    out_dir = _resolve_out_dir(args)
    inputs: dict[str, Path] = {}
    if args.config:
        inputs["config"] = Path(args.config)

    manifest_path = out_dir / "manifest.json"
    manifest = {
        "command": args.command,
        "config": config,
        "seed": args.seed_value,
        "code_version": __version__,
        "inputs": {},
        "outputs": [],
        "started": _utc_now(),
        "finished": None,
        "status": "running",
    }
    _write_json(manifest_path, manifest)

    try:
        outputs = _HANDLERS[args.command](args, config, out_dir, inputs)
    except BaseException:
        manifest["inputs"] = {k: {"path": str(p), "sha256": _digest_path(p)} for k, p in inputs.items()}
        manifest["finished"] = _utc_now()
        manifest["status"] = "failed"
        _write_json(manifest_path, manifest)
        raise

    manifest["inputs"] = {k: {"path": str(p), "sha256": _digest_path(p)} for k, p in inputs.items()}
    manifest["outputs"] = outputs
    manifest["finished"] = _utc_now()
    manifest["status"] = "ok"
    _write_json(manifest_path, manifest)
    print(f"wrote {', '.join(outputs)} to {out_dir}")
    return 0


def main(argv=None) -> int:
    try:
        return _run(argv)
    except CliError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
