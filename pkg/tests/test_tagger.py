"""Tests for the word-level topic labeler: architecture contracts, exact
gradients through the whole stack, training behavior on constructed tasks,
evaluation arithmetic, checkpointing, and the ablation grid."""

import numpy as np
import pytest

from gradcheck import numerical_grad, rel_error
from hpikit import synthetic, tagger
from hpikit.checkpoint import save_arrays
from hpikit.corpus import N_LABELS, split_dataset
from hpikit.crf import sequence_nll
from hpikit.embeddings import PAD_ID, UNK_ID, save_embeddings
from hpikit.tagger import (
    AblationSpec,
    EvalReport,
    ModelConfig,
    TaggerError,
    TrainConfig,
    ablation_csv,
    ablation_run,
    build_tagger,
    evaluate,
    load_tagger,
    save_tagger,
    score_predictions,
    train,
    vocab_from_docs,
)


def small_config(**overrides):
    base = dict(word_dim=16, char_dim=8, char_hidden=8, ctx_hidden=12, scorer_hidden=12)
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture(scope="module")
def separable_split():
    docs = synthetic.separable_corpus(n_docs=150, vocab_size=40, doc_len=(4, 8), seed=3)
    tr, dev, te = split_dataset(docs, seed=0)
    return tr, dev, te


@pytest.fixture(scope="module")
def trained_separable(separable_split):
    """One real training run shared by the behavioral tests."""
    tr, dev, te = separable_split
    vocab, cv = vocab_from_docs(tr)
    cfg = small_config(word_dim=24)
    model = build_tagger(vocab, cv, cfg, seed=1)
    tcfg = TrainConfig(lr=0.01, dropout=0.2, batch=16, max_epochs=10, patience=3, seed=5)
    history = train(model, tcfg, tr, dev)
    return model, history, tr, dev


# -- configuration contracts -------------------------------------------------


def test_default_embedding_width():
    # word vectors of 100 plus two char-LSTM final states of 25 each
    assert ModelConfig().embed_dim == 150


def test_embedding_width_without_char_features():
    assert ModelConfig(use_char=False).embed_dim == 100
    assert small_config(use_char=False).embed_dim == 16


def test_model_config_rejects_bad_values():
    with pytest.raises(TaggerError):
        ModelConfig(word_mode="finetuned")
    with pytest.raises(TaggerError):
        ModelConfig(word_dim=0)
    with pytest.raises(TaggerError):
        ModelConfig(scorer_hidden=-3)


def test_train_config_rejects_bad_values():
    with pytest.raises(TaggerError):
        TrainConfig(patience=20, max_epochs=20)
    with pytest.raises(TaggerError):
        TrainConfig(dropout=1.0)
    with pytest.raises(TaggerError):
        TrainConfig(lr=0.0)


# -- embedding layer ---------------------------------------------------------


def build_small(docs, seed=0, **cfg_overrides):
    vocab, cv = vocab_from_docs(docs)
    return build_tagger(vocab, cv, small_config(**cfg_overrides), seed=seed)


def test_embed_width_matches_config(separable_split):
    tr = separable_split[0]
    model = build_small(tr)
    e, _ = model.embed_tokens(["tok000", "tok001", "tok002"])
    assert e.shape == (3, model.config.embed_dim)


def test_identical_words_embed_identically(separable_split):
    model = build_small(separable_split[0])
    e, _ = model.embed_tokens(["tok004", "tok009", "tok004"])
    np.testing.assert_array_equal(e[0], e[2])
    assert not np.array_equal(e[0], e[1])


def test_single_char_word_embeds(separable_split):
    model = build_small(separable_split[0])
    e, _ = model.embed_tokens(["a"])
    assert e.shape == (1, model.config.embed_dim)
    assert np.all(np.isfinite(e))


def test_unknown_words_share_the_unk_row(separable_split):
    model = build_small(separable_split[0], use_char=False)
    e, _ = model.embed_tokens(["zzzz-unseen", "qqqq-unseen"])
    np.testing.assert_array_equal(e[0], e[1])
    np.testing.assert_array_equal(e[0], model.word_table.value[UNK_ID])


# -- forward pass ------------------------------------------------------------


def test_zeroed_model_gives_zero_emissions(separable_split):
    model = build_small(separable_split[0])
    for p in model.all_params():
        p.value[:] = 0.0
    emissions, _ = model.forward(["tok001", "tok002", "tok003"])
    np.testing.assert_array_equal(emissions, np.zeros((3, N_LABELS)))


def test_emission_shape_is_tokens_by_labels(separable_split):
    model = build_small(separable_split[0])
    for m in (1, 2, 5):
        emissions, _ = model.forward([f"tok{k:03d}" for k in range(m)])
        assert emissions.shape == (m, N_LABELS)


def test_forward_empty_doc_raises(separable_split):
    model = build_small(separable_split[0])
    with pytest.raises(TaggerError):
        model.forward([])


def test_forward_deterministic_in_eval_mode(separable_split):
    model = build_small(separable_split[0])
    words = ["tok001", "tok005", "tok009"]
    a, _ = model.forward(words)
    b, _ = model.forward(words)
    np.testing.assert_array_equal(a, b)


def test_dropout_changes_train_mode_output(separable_split):
    model = build_small(separable_split[0])
    words = ["tok001", "tok005", "tok009"]
    base, _ = model.forward(words)
    dropped, _ = model.forward(words, train=True, rng=np.random.default_rng(0), drop_rate=0.5)
    assert not np.allclose(base, dropped)


# -- end-to-end gradients ----------------------------------------------------


def test_end_to_end_gradients_match_finite_differences():
    docs = synthetic.separable_corpus(n_docs=25, vocab_size=15, doc_len=(4, 6), seed=7)
    vocab, cv = vocab_from_docs(docs)
    cfg = ModelConfig(word_dim=10, char_dim=6, char_hidden=5, ctx_hidden=7, scorer_hidden=9)
    model = build_tagger(vocab, cv, cfg, seed=11)
    rng = np.random.default_rng(2)
    model.crf_t.value[:] = rng.normal(0, 0.3, model.crf_t.value.shape)
    model.crf_begin.value[:] = rng.normal(0, 0.3, N_LABELS)
    model.crf_end.value[:] = rng.normal(0, 0.3, N_LABELS)

    words = docs[0].token_texts()[:4]
    labels = docs[0].labels[:4]

    for p in model.all_params():
        p.zero_grad()
    model.sequence_loss(words, labels)

    def loss_only():
        emissions, _ = model.forward(words)
        loss, _ = sequence_nll(model.crf, emissions, labels)
        return loss

    for p in model.all_params():
        numeric = numerical_grad(lambda a: loss_only(), p.value)
        assert rel_error(numeric, p.grad) < 1e-3, p.name


def test_word_embedding_row_gradient_matches_finite_differences():
    docs = synthetic.separable_corpus(n_docs=25, vocab_size=15, doc_len=(4, 6), seed=9)
    vocab, cv = vocab_from_docs(docs)
    cfg = ModelConfig(word_dim=10, char_dim=6, char_hidden=5, ctx_hidden=7, scorer_hidden=9)
    model = build_tagger(vocab, cv, cfg, seed=13)
    words = docs[1].token_texts()[:4]
    labels = docs[1].labels[:4]
    row = int(model.vocab.id(words[2]))
    assert row > UNK_ID

    for p in model.all_params():
        p.zero_grad()
    model.sequence_loss(words, labels)

    def loss_only():
        emissions, _ = model.forward(words)
        loss, _ = sequence_nll(model.crf, emissions, labels)
        return loss

    row_view = model.word_table.value[row]
    numeric = numerical_grad(lambda a: loss_only(), row_view)
    assert rel_error(numeric, model.word_table.grad[row]) < 1e-3


def test_gradients_accumulate_across_documents(separable_split):
    model = build_small(separable_split[0])
    doc = separable_split[0][0]
    words, labels = doc.token_texts(), doc.labels
    for p in model.all_params():
        p.zero_grad()
    model.sequence_loss(words, labels)
    once = model.scorer_out.w.grad.copy()
    model.sequence_loss(words, labels)
    np.testing.assert_allclose(model.scorer_out.w.grad, 2 * once, rtol=1e-12)


# -- training ----------------------------------------------------------------


def test_training_learns_separable_rule(trained_separable):
    model, history, tr, dev = trained_separable
    assert history.best_dev_f1 >= 0.98
    assert history.best_epoch < 10


def test_loss_decreases_over_first_three_epochs(trained_separable):
    _, history, _, _ = trained_separable
    losses = [e.mean_train_loss for e in history.epochs[:3]]
    assert len(losses) == 3
    assert losses[0] > losses[1] > losses[2]


def test_predictions_follow_word_identity_rule(trained_separable):
    model, history, tr, dev = trained_separable
    correct = total = 0
    for doc in dev:
        words = doc.token_texts()
        pred = model.predict(words)
        want = np.array([int(w[3:]) % N_LABELS for w in words])
        correct += int((pred == want).sum())
        total += len(words)
    assert correct / total >= 0.98


def test_learning_rate_decays_per_epoch(trained_separable):
    _, history, _, _ = trained_separable
    for e in history.epochs:
        assert e.lr == pytest.approx(0.01 * 0.9**e.epoch, rel=1e-12)


def test_patience_stops_training_early():
    docs = synthetic.separable_corpus(n_docs=60, vocab_size=20, doc_len=(4, 6), seed=5)
    tr, dev, te = split_dataset(docs, seed=0)
    model = build_small(tr, seed=2)
    tcfg = TrainConfig(lr=0.02, dropout=0.1, batch=16, max_epochs=19, patience=2, seed=0)
    history = train(model, tcfg, tr, dev)
    assert history.stopped_early
    assert len(history.epochs) < tcfg.max_epochs
    assert len(history.epochs) == history.best_epoch + 1 + tcfg.patience


def test_divergence_aborts_and_keeps_last_good_state(separable_split):
    tr, dev, _ = separable_split
    model = build_small(tr, seed=4)
    model.scorer_out.b.value[:] = np.nan
    before = model.snapshot()
    tcfg = TrainConfig(lr=0.01, dropout=0.1, batch=16, max_epochs=5, patience=2, seed=0)
    history = train(model, tcfg, tr, dev)
    assert history.diverged
    assert history.epochs == []
    after = model.snapshot()
    for name in before:
        np.testing.assert_array_equal(before[name], after[name], err_msg=name)


def test_frozen_word_mode_keeps_table_fixed(separable_split):
    tr, dev, _ = separable_split
    vocab, cv = vocab_from_docs(tr)
    model = build_tagger(vocab, cv, small_config(word_mode="pretrained-frozen"), seed=3)
    frozen_before = model.word_table.value.copy()
    scorer_before = model.scorer_out.w.value.copy()
    tcfg = TrainConfig(lr=0.01, dropout=0.1, batch=16, max_epochs=2, patience=1, seed=0)
    train(model, tcfg, tr, dev)
    np.testing.assert_array_equal(model.word_table.value, frozen_before)
    assert not np.array_equal(model.scorer_out.w.value, scorer_before)


def test_finetuned_word_mode_updates_table(separable_split):
    tr, dev, _ = separable_split
    vocab, cv = vocab_from_docs(tr)
    model = build_tagger(vocab, cv, small_config(word_mode="pretrained-finetuned"), seed=3)
    before = model.word_table.value.copy()
    tcfg = TrainConfig(lr=0.01, dropout=0.1, batch=16, max_epochs=2, patience=1, seed=0)
    train(model, tcfg, tr, dev)
    assert not np.array_equal(model.word_table.value, before)


def test_training_is_deterministic(separable_split):
    tr, dev, _ = separable_split
    results = []
    for _ in range(2):
        model = build_small(tr, seed=6)
        tcfg = TrainConfig(lr=0.01, dropout=0.3, batch=16, max_epochs=3, patience=2, seed=9)
        history = train(model, tcfg, tr, dev)
        results.append((model.snapshot(), [(e.mean_train_loss, e.dev_weighted_f1) for e in history.epochs]))
    (state_a, log_a), (state_b, log_b) = results
    assert log_a == log_b
    for name in state_a:
        np.testing.assert_array_equal(state_a[name], state_b[name], err_msg=name)


def test_train_rejects_empty_document_lists(separable_split):
    tr, dev, _ = separable_split
    model = build_small(tr)
    with pytest.raises(TaggerError):
        train(model, TrainConfig(), [], dev)
    with pytest.raises(TaggerError):
        train(model, TrainConfig(), tr, [])


# -- prediction --------------------------------------------------------------


def test_predict_empty_doc_returns_empty(separable_split):
    model = build_small(separable_split[0])
    out = model.predict([])
    assert out.shape == (0,)
    assert out.dtype == np.int64


def test_predict_is_deterministic(trained_separable):
    model = trained_separable[0]
    words = ["tok001", "tok017", "tok032", "tok005"]
    np.testing.assert_array_equal(model.predict(words), model.predict(words))


def test_predict_length_matches_token_count(trained_separable):
    model = trained_separable[0]
    for m in (1, 3, 7):
        assert len(model.predict([f"tok{k:03d}" for k in range(m)])) == m


def test_predict_invariant_to_batch_composition(trained_separable):
    model, _, tr, dev = trained_separable
    target = dev[0].token_texts()
    alone = model.predict(target)
    for other in dev[1:4]:
        model.predict(other.token_texts())
    np.testing.assert_array_equal(model.predict(target), alone)


# -- evaluation --------------------------------------------------------------


def test_perfect_predictions_score_one():
    golds = [np.arange(N_LABELS), np.array([3, 3, 7])]
    report = score_predictions(golds, [g.copy() for g in golds])
    assert report.accuracy == 1.0
    assert report.macro_f1 == 1.0
    assert report.weighted_f1 == 1.0
    np.testing.assert_array_equal(report.confusion, np.diag(report.support))


def test_hand_fixture_twelve_tokens_three_labels():
    gold = np.array([0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2])
    pred = np.array([0, 0, 1, 2, 1, 1, 1, 0, 2, 2, 2, 2])
    report = score_predictions([gold], [pred])

    assert report.n_tokens == 12
    assert report.accuracy == pytest.approx(9 / 12)
    assert report.precision[0] == pytest.approx(2 / 3)
    assert report.recall[0] == pytest.approx(1 / 2)
    assert report.f1[0] == pytest.approx(4 / 7)
    assert report.precision[1] == pytest.approx(3 / 4)
    assert report.recall[1] == pytest.approx(3 / 4)
    assert report.f1[1] == pytest.approx(3 / 4)
    assert report.precision[2] == pytest.approx(4 / 5)
    assert report.recall[2] == pytest.approx(1.0)
    assert report.f1[2] == pytest.approx(8 / 9)
    np.testing.assert_array_equal(report.support[:3], [4, 4, 4])
    assert report.weighted_f1 == pytest.approx((4 * 4 / 7 + 4 * 3 / 4 + 4 * 8 / 9) / 12)
    assert report.macro_f1 == pytest.approx((4 / 7 + 3 / 4 + 8 / 9) / N_LABELS)


def test_confusion_marginals_reconcile():
    rng = np.random.default_rng(0)
    for _ in range(25):
        golds, preds = [], []
        for _ in range(rng.integers(1, 6)):
            m = int(rng.integers(1, 30))
            golds.append(rng.integers(0, N_LABELS, m))
            preds.append(rng.integers(0, N_LABELS, m))
        report = score_predictions(golds, preds)
        total = sum(len(g) for g in golds)
        np.testing.assert_array_equal(report.confusion.sum(axis=0), report.support)
        assert report.confusion.sum() == total
        assert report.accuracy == pytest.approx(np.trace(report.confusion) / total)


def test_labels_never_predicted_get_zero_precision():
    gold = np.array([0, 0, 1])
    pred = np.array([1, 1, 1])
    report = score_predictions([gold], [pred])
    assert report.precision[0] == 0.0
    assert report.recall[0] == 0.0
    assert report.f1[0] == 0.0
    assert report.precision[5] == 0.0


def test_score_predictions_rejects_length_mismatch():
    with pytest.raises(TaggerError):
        score_predictions([np.array([0, 1])], [np.array([0])])


def test_evaluate_runs_whole_documents(trained_separable):
    model, _, _, dev = trained_separable
    report = evaluate(model, dev)
    assert isinstance(report, EvalReport)
    assert report.n_tokens == sum(len(d.labels) for d in dev)
    assert report.weighted_f1 >= 0.98


# -- checkpointing -----------------------------------------------------------


def test_checkpoint_roundtrip_reproduces_metrics_exactly(tmp_path, trained_separable):
    model, _, _, dev = trained_separable
    before = evaluate(model, dev)
    path = tmp_path / "tagger.ckpt"
    save_tagger(path, model)
    loaded = load_tagger(path)
    after = evaluate(loaded, dev)
    assert before.accuracy == after.accuracy
    assert before.weighted_f1 == after.weighted_f1
    assert before.macro_f1 == after.macro_f1
    np.testing.assert_array_equal(before.confusion, after.confusion)
    np.testing.assert_array_equal(before.f1, after.f1)


def test_checkpoint_bytes_stable_across_saves(tmp_path, trained_separable):
    model = trained_separable[0]
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_tagger(a, model)
    save_tagger(b, load_tagger(a))
    assert a.read_bytes() == b.read_bytes()


def test_checkpoint_preserves_config_and_vocab(tmp_path, trained_separable):
    model = trained_separable[0]
    path = tmp_path / "t.ckpt"
    save_tagger(path, model)
    loaded = load_tagger(path)
    assert loaded.config == model.config
    assert loaded.vocab.tokens == model.vocab.tokens
    assert loaded.char_vocab.chars == model.char_vocab.chars


def test_load_rejects_foreign_checkpoint(tmp_path):
    path = tmp_path / "other.ckpt"
    save_arrays(path, {"x": np.zeros(3)}, meta={"kind": "something-else"})
    with pytest.raises(TaggerError):
        load_tagger(path)


def test_set_pretrained_words_rejects_shape_mismatch(separable_split):
    model = build_small(separable_split[0])
    from hpikit.embeddings import EmbeddingTable

    bad = EmbeddingTable(np.zeros((3, model.config.word_dim)), model.config.word_dim)
    with pytest.raises(TaggerError):
        model.set_pretrained_words(bad)


# -- vocabulary helper -------------------------------------------------------


def test_vocab_from_docs_reserves_special_ids(separable_split):
    vocab, cv = vocab_from_docs(separable_split[0])
    assert vocab.tokens[PAD_ID] == "<pad>"
    assert vocab.tokens[UNK_ID] == "<unk>"
    assert vocab.id("tok000") > UNK_ID
    for ch in "tok0123456789":
        assert cv.id(ch) > UNK_ID


# -- ablations ---------------------------------------------------------------


@pytest.fixture(scope="module")
def morphology_rows():
    docs = synthetic.suffix_corpus(n_docs=220, doc_len=(4, 8), stem_len=(4, 7), seed=1)
    tr, dev, te = split_dataset(docs, seed=0)
    cfg = ModelConfig(word_dim=30, char_dim=12, char_hidden=12, ctx_hidden=24, scorer_hidden=24)
    tcfg = TrainConfig(lr=0.01, dropout=0.3, batch=20, max_epochs=8, patience=3, seed=0)
    specs = [
        AblationSpec("char-on", True, "learned-from-scratch"),
        AblationSpec("char-off", False, "learned-from-scratch"),
    ]
    return ablation_run(specs, tr, dev, cfg, tcfg)


def test_two_row_grid_emits_two_rows(morphology_rows):
    assert len(morphology_rows) == 2
    assert all(r.status == "ok" for r in morphology_rows)


def test_char_features_beat_word_only_on_suffix_task(morphology_rows):
    with_char = next(r for r in morphology_rows if r.use_char)
    without = next(r for r in morphology_rows if not r.use_char)
    assert with_char.dev_f1 - without.dev_f1 >= 0.05


def test_ablation_csv_lists_every_row(morphology_rows):
    text = ablation_csv(morphology_rows)
    lines = text.strip().splitlines()
    assert lines[0] == "name,use_char,word_mode,status,dev_f1,best_epoch,n_epochs"
    assert len(lines) == 3
    assert lines[1].startswith("char-on,True,learned-from-scratch,ok,")


def test_missing_embeddings_file_marks_row_skipped(separable_split, tmp_path):
    tr, dev, _ = separable_split
    specs = [
        AblationSpec("pre", True, "pretrained-frozen", str(tmp_path / "absent.vec")),
        AblationSpec("scratch", True, "learned-from-scratch"),
    ]
    cfg = small_config()
    tcfg = TrainConfig(lr=0.01, dropout=0.1, batch=16, max_epochs=2, patience=1, seed=0)
    rows = ablation_run(specs, tr, dev, cfg, tcfg)
    assert rows[0].status.startswith("skipped")
    assert np.isnan(rows[0].dev_f1)
    assert rows[0].n_epochs == 0
    assert rows[1].status == "ok"
    assert np.isfinite(rows[1].dev_f1)


def test_pretrained_row_loads_vector_file(separable_split, tmp_path):
    tr, dev, _ = separable_split
    vocab, _ = vocab_from_docs(tr)
    from hpikit.embeddings import EmbeddingTable

    rng = np.random.default_rng(0)
    matrix = rng.uniform(-0.05, 0.05, size=(len(vocab), 12))
    matrix[PAD_ID] = 0.0
    path = tmp_path / "vectors.txt"
    save_embeddings(path, EmbeddingTable(matrix, 12), vocab)

    specs = [AblationSpec("pre", False, "pretrained-frozen", str(path))]
    cfg = small_config()
    tcfg = TrainConfig(lr=0.01, dropout=0.1, batch=16, max_epochs=2, patience=1, seed=0)
    rows = ablation_run(specs, tr, dev, cfg, tcfg)
    assert rows[0].status == "ok"
    assert rows[0].n_epochs == 2
