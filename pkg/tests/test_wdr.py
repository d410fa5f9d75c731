"""Word-ablation reaction scores: formula goldens, vector assembly, I/O."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wdrkit.classifier import ClassifierTrainConfig, train_classifier
from wdrkit.textcore import (
    Corpus,
    LabeledExample,
    Origin,
    UNK_TOKEN,
    detokenize,
    tokenize,
)
from wdrkit.wdr import (
    WdrFormatError,
    WdrVector,
    assemble_vector,
    baseline_reaction,
    batch_wdr,
    load_wdr_dataset,
    margin,
    save_wdr_dataset,
    to_feature_matrix,
    wdr_score,
    wdr_vector,
)


class TableProvider:
    """Answers from a fixed text -> logits table; counts queries."""

    def __init__(self, table, num_classes=2):
        self.table = table
        self.num_classes = num_classes
        self.calls = 0
        self.texts_seen = 0

    def query(self, texts):
        self.calls += 1
        self.texts_seen += len(texts)
        return [np.array(self.table[detokenize(t)], dtype=float) for t in texts]


# Stored two-class logit rows for one clean and one perturbed sentence.
# Keys are the full sentence and each single-word ablation.
CLEAN = "absolutely realized the worst sick"
CLEAN_TABLE = {
    CLEAN: [3.44, -3.46],
    f"{UNK_TOKEN} realized the worst sick": [3.40, -3.45],
    f"absolutely {UNK_TOKEN} the worst sick": [3.41, -3.47],
    f"absolutely realized {UNK_TOKEN} worst sick": [3.42, -3.45],
    f"absolutely realized the {UNK_TOKEN} sick": [1.68, -1.75],
    f"absolutely realized the worst {UNK_TOKEN}": [3.34, -3.42],
}
PERTURBED = "absolutely realized the tough silly"
PERTURBED_TABLE = {
    PERTURBED: [-1.85, 2.17],
    f"{UNK_TOKEN} realized the tough silly": [-0.31, 0.48],
    f"absolutely {UNK_TOKEN} the tough silly": [-1.07, 1.36],
    f"absolutely realized {UNK_TOKEN} tough silly": [-0.95, 1.10],
    f"absolutely realized the {UNK_TOKEN} silly": [2.14, -1.50],
    f"absolutely realized the tough {UNK_TOKEN}": [1.38, -1.37],
}


class TestMargin:
    def test_two_class(self):
        assert margin([3.0, 1.0], 0) == pytest.approx(2.0)
        assert margin([3.0, 1.0], 1) == pytest.approx(-2.0)

    def test_multiclass_uses_runner_up(self):
        assert margin([5.0, 1.0, 4.0], 0) == pytest.approx(1.0)

    def test_bad_class_index(self):
        with pytest.raises(ValueError):
            margin([1.0, 2.0], 2)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            margin([1.0], 0)


class TestScoreGoldens:
    def test_clean_sentence_scores(self):
        f = TableProvider(CLEAN_TABLE)
        text = tokenize(CLEAN)
        assert round(wdr_score(f, text, 3, 0).wdr, 2) == 3.43   # worst
        assert round(wdr_score(f, text, 4, 0).wdr, 2) == 6.76   # sick
        assert round(wdr_score(f, text, 0, 0).wdr, 2) == 6.85   # absolutely
        assert round(wdr_score(f, text, 1, 0).wdr, 2) == 6.88   # realized
        assert baseline_reaction(f, text) == pytest.approx(6.90, abs=0.01)

    def test_perturbed_sentence_scores(self):
        f = TableProvider(PERTURBED_TABLE)
        text = tokenize(PERTURBED)
        assert round(wdr_score(f, text, 3, 1).wdr, 2) == -3.64  # tough
        assert round(wdr_score(f, text, 4, 1).wdr, 2) == -2.75  # silly
        assert round(wdr_score(f, text, 0, 1).wdr, 2) == 0.79   # absolutely
        assert round(wdr_score(f, text, 1, 1).wdr, 2) == 2.43   # realized
        assert baseline_reaction(f, text) == pytest.approx(4.02, abs=0.01)

    def test_score_infers_predicted_class(self):
        f = TableProvider(CLEAN_TABLE)
        text = tokenize(CLEAN)
        assert wdr_score(f, text, 3).wdr == pytest.approx(wdr_score(f, text, 3, 0).wdr)

    def test_negative_score_means_flip(self):
        f = TableProvider(PERTURBED_TABLE)
        text = tokenize(PERTURBED)
        score = wdr_score(f, text, 3, 1).wdr
        ablated = PERTURBED_TABLE[f"absolutely realized the {UNK_TOKEN} silly"]
        assert score < 0
        assert int(np.argmax(ablated)) != 1

    def test_baseline_non_negative(self):
        for table, sentence in ((CLEAN_TABLE, CLEAN), (PERTURBED_TABLE, PERTURBED)):
            assert baseline_reaction(TableProvider(table), tokenize(sentence)) >= 0


class TestAssemble:
    def test_magnitude_sort_and_pad(self):
        v = assemble_vector([0.5, -3.0, 1.2], length=6)
        assert v.values == (-3.0, 1.2, 0.5, 0.0, 0.0, 0.0)
        assert v.true_length == 3

    def test_tie_keeps_original_order(self):
        v = assemble_vector([2.0, -2.0], length=3)
        assert v.values == (2.0, -2.0, 0.0)

    def test_truncation_keeps_largest(self):
        v = assemble_vector([1.0, -5.0, 0.2, 3.0], length=2)
        assert v.values == (-5.0, 3.0)
        assert v.true_length == 4

    def test_empty_scores(self):
        v = assemble_vector([], length=4)
        assert v.values == (0.0, 0.0, 0.0, 0.0)
        assert v.true_length == 0

    def test_invariant_enforced_on_construction(self):
        with pytest.raises(ValueError):
            WdrVector(values=(1.0, -2.0), true_length=2, baseline=0.0)

    @given(st.lists(st.floats(-20, 20, allow_nan=False), max_size=30),
           st.integers(1, 16))
    @settings(max_examples=200, deadline=None)
    def test_assembled_invariants(self, scores, length):
        v = assemble_vector(scores, length=length)
        mags = [abs(x) for x in v.values]
        kept = min(len(scores), length)
        assert len(v.values) == length
        assert all(mags[k] >= mags[k + 1] for k in range(kept - 1))
        assert all(x == 0.0 for x in v.values[kept:])
        assert v.true_length == len(scores)


class TestVector:
    def test_one_batched_call_for_n_plus_one_texts(self):
        f = TableProvider(CLEAN_TABLE)
        v = wdr_vector(f, tokenize(CLEAN), length=8)
        assert f.calls == 1
        assert f.texts_seen == 6  # sentence plus one ablation per word
        assert v.true_length == 5
        assert v.baseline == pytest.approx(6.90, abs=0.01)

    def test_vector_is_sorted_scores(self):
        f = TableProvider(PERTURBED_TABLE)
        v = wdr_vector(f, tokenize(PERTURBED), length=8,
                       origin=Origin.ADVERSARIAL)
        assert v.values[0] == pytest.approx(-3.64, abs=0.01)
        assert v.values[1] == pytest.approx(-2.75, abs=0.01)
        assert v.origin is Origin.ADVERSARIAL

    def test_empty_text(self):
        f = TableProvider({"": [1.0, -1.0]})
        v = wdr_vector(f, tokenize(""), length=4)
        assert v.values == (0.0, 0.0, 0.0, 0.0)
        assert v.true_length == 0


class TestSignLaw:
    def test_sign_iff_prediction_kept(self):
        corpus = Corpus(tuple(
            LabeledExample(tokenize(f"{'good fine' if k % 2 else 'bad poor'} "
                                    f"item number {k}"), k % 2)
            for k in range(30)
        ), num_classes=2)
        model = train_classifier(
            corpus, ClassifierTrainConfig(feature_dim=2 ** 12, epochs=10))
        rng = np.random.default_rng(0)
        checked = 0
        for ex in corpus:
            text = ex.text
            top_class = int(np.argmax(model.logits(text)))
            for i in rng.choice(len(text), size=2, replace=False):
                from wdrkit.textcore import substitute

                score = wdr_score(model, text, int(i), top_class).wdr
                kept = int(np.argmax(
                    model.logits(substitute(text, int(i), UNK_TOKEN)))) == top_class
                assert (score > 0) == kept
                checked += 1
        assert checked >= 50


class TestBatch:
    def test_batch_orders_and_origins(self):
        table = {**CLEAN_TABLE, **PERTURBED_TABLE}
        f = TableProvider(table)
        corpus = Corpus((
            LabeledExample(tokenize(CLEAN), 0),
            LabeledExample(tokenize(PERTURBED), 0, Origin.ADVERSARIAL),
        ), num_classes=2)
        vectors = batch_wdr(f, corpus, length=8)
        assert len(vectors) == 2
        assert vectors[0].origin is Origin.ORIGINAL
        assert vectors[1].origin is Origin.ADVERSARIAL

    def test_failure_names_example(self):
        f = TableProvider(CLEAN_TABLE)  # missing the perturbed entries
        corpus = Corpus((
            LabeledExample(tokenize(CLEAN), 0),
            LabeledExample(tokenize(PERTURBED), 0),
        ), num_classes=2)
        with pytest.raises(RuntimeError, match="example 1"):
            batch_wdr(f, corpus, length=8)


class TestFeatures:
    def _vectors(self):
        return [
            assemble_vector([4.0, 2.0], length=4, baseline=5.0),
            assemble_vector([-1.0, 0.5], length=4, baseline=0.4,
                            origin=Origin.ADVERSARIAL),
        ]

    def test_matrix_shape_and_labels(self):
        X, y = to_feature_matrix(self._vectors())
        assert X.shape == (2, 4)
        np.testing.assert_array_equal(y, [0, 1])

    def test_baseline_appended_on_request(self):
        X, _ = to_feature_matrix(self._vectors(), include_baseline=True)
        assert X.shape == (2, 5)
        assert X[0, 4] == pytest.approx(5.0)

    def test_baseline_excluded_by_default(self):
        X, _ = to_feature_matrix(self._vectors())
        assert 5.0 not in X[0]


class TestIO:
    def test_round_trip(self, tmp_path):
        vectors = [
            wdr_vector(TableProvider(CLEAN_TABLE), tokenize(CLEAN), length=8),
            wdr_vector(TableProvider(PERTURBED_TABLE), tokenize(PERTURBED),
                       length=8, origin=Origin.ADVERSARIAL),
        ]
        path = tmp_path / "wdr.jsonl"
        save_wdr_dataset(vectors, path)
        loaded = load_wdr_dataset(path)
        assert loaded[0].values == vectors[0].values
        assert loaded[1].origin is Origin.ADVERSARIAL
        assert loaded[0].baseline == pytest.approx(vectors[0].baseline)

    def test_byte_stable(self, tmp_path):
        vectors = [assemble_vector([1.25, -0.5], length=4)]
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_wdr_dataset(vectors, p1)
        save_wdr_dataset(vectors, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_malformed_line_reports_position(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"values": [1.0], "true_length": 1, "baseline": 0.0, '
                        '"origin": "original"}\nnot json\n')
        with pytest.raises(WdrFormatError, match=r":2"):
            load_wdr_dataset(path)

    def test_invariant_violations_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"values": [1.0, -2.0], "true_length": 2, '
                        '"baseline": 0.0, "origin": "original"}\n')
        with pytest.raises(WdrFormatError):
            load_wdr_dataset(path)
