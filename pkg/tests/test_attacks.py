"""Substitution attacks: lexicon handling, search behavior, budgets."""

import numpy as np
import pytest

from wdrkit.attacks import (
    ATTACKS,
    AttackConfig,
    LexiconFormatError,
    STOPWORDS,
    SynonymLexicon,
    generate_attack_dataset,
    genetic_attack,
    importance_greedy_attack,
    pwws_attack,
    word_saliency,
)
from wdrkit.classifier import (
    ClassifierTrainConfig,
    LinearTextClassifier,
    hashed_features,
    predicted_class,
    softmax,
)
from wdrkit.textcore import Corpus, LabeledExample, Origin, detokenize, tokenize

DIM = 4096


def lexical_model(word_weights: dict[str, float]) -> LinearTextClassifier:
    """Two-class model whose class-1 logit is the sum of word weights."""
    weights = np.zeros((2, DIM))
    for word, w in word_weights.items():
        idx, _ = hashed_features((word,), DIM)
        weights[1, idx[0]] += w
    return LinearTextClassifier(weights, np.zeros(2),
                                ClassifierTrainConfig(feature_dim=DIM))


class TestLexicon:
    def test_load_and_lookup(self, tmp_path):
        path = tmp_path / "syn.tsv"
        path.write_text("# comment line\nworst\ttough,grim\n\nGOOD\tfine\n")
        lex = SynonymLexicon.load(path)
        assert len(lex) == 2
        assert lex.candidates("worst") == ["tough", "grim"]
        assert "good" in lex and "GOOD" in lex

    def test_case_pattern_preserved(self):
        lex = SynonymLexicon({"worst": ["tough"]})
        assert lex.candidates("Worst") == ["Tough"]
        assert lex.candidates("WORST") == ["TOUGH"]
        assert lex.candidates("worst") == ["tough"]

    def test_never_its_own_candidate(self):
        lex = SynonymLexicon({"fast": ["fast", "quick", "FAST"]})
        assert lex.candidates("fast") == ["quick"]

    def test_unknown_word_has_no_candidates(self):
        lex = SynonymLexicon({"a": ["b"]})
        assert lex.candidates("zebra") == []

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "syn.tsv"
        path.write_text("fine\tok\nbroken line without tab\n")
        with pytest.raises(LexiconFormatError, match=":2"):
            SynonymLexicon.load(path)

    def test_save_round_trip(self, tmp_path):
        lex = SynonymLexicon({"b": ["c", "d"], "a": ["x"]})
        path = tmp_path / "out.tsv"
        lex.save(path)
        again = SynonymLexicon.load(path)
        assert again.candidates("b") == ["c", "d"]
        assert again.candidates("a") == ["x"]


class TestSaliency:
    def test_matches_probability_drop(self):
        model = lexical_model({"good": 2.0, "stuff": 0.4})
        text = tokenize("good stuff")
        sal = word_saliency(model, text)
        p0 = softmax(model.logits(text))[1]
        assert sal[0] == pytest.approx(p0 - softmax([0.0, 0.4])[1], abs=1e-9)
        assert sal[1] == pytest.approx(p0 - softmax([0.0, 2.0])[1], abs=1e-9)
        assert sal[0] > sal[1]  # the heavier word matters more

    def test_empty_text(self):
        model = lexical_model({"x": 1.0})
        assert word_saliency(model, tokenize("")) == []


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            AttackConfig(max_substitution_fraction=0.0)
        with pytest.raises(ValueError):
            AttackConfig(max_substitution_fraction=1.5)
        with pytest.raises(ValueError):
            AttackConfig(query_budget=-1)
        with pytest.raises(ValueError):
            AttackConfig(mutation_rate=2.0)
        with pytest.raises(ValueError):
            AttackConfig(population=0)


@pytest.fixture()
def flip_setup():
    """One strong word whose only candidate flips the prediction."""
    model = lexical_model({"good": 2.0, "movie": 0.3, "ok": -1.5})
    lexicon = SynonymLexicon({"good": ["ok"]})
    example = LabeledExample(tokenize("good movie"), 1)
    return model, lexicon, example


class TestPwws:
    def test_single_swap_flip(self, flip_setup):
        model, lexicon, example = flip_setup
        result = pwws_attack(model, example, lexicon, AttackConfig())
        assert result.success
        assert result.substitutions == ((0, "good", "ok"),)
        assert detokenize(result.adversarial) == "ok movie"
        assert predicted_class(model.logits(result.adversarial)) == 0
        assert not result.skipped
        # one original + two ablations + one candidate + one flip check
        assert result.queries_used == 5

    def test_skips_already_misclassified(self, flip_setup):
        model, lexicon, _ = flip_setup
        wrong = LabeledExample(tokenize("good movie"), 0)  # model says 1
        result = pwws_attack(model, wrong, lexicon, AttackConfig())
        assert result.skipped and not result.success
        assert result.substitutions == ()
        assert detokenize(result.adversarial) == "good movie"

    def test_zero_budget_fails_immediately(self, flip_setup):
        model, lexicon, example = flip_setup
        result = pwws_attack(model, example, lexicon,
                             AttackConfig(query_budget=0))
        assert not result.success
        assert result.queries_used == 0

    def test_empty_lexicon_fails(self, flip_setup):
        model, _, example = flip_setup
        result = pwws_attack(model, example, SynonymLexicon({}), AttackConfig())
        assert not result.success
        assert result.substitutions == ()

    def test_substitution_cap_respected(self):
        # three heavy words but the fraction allows only two swaps
        words = {f"w{k}": 2.0 for k in range(3)}
        downs = {f"d{k}": -0.5 for k in range(3)}
        model = lexical_model({**words, **downs,
                               **{f"n{k}": 0.01 for k in range(5)}})
        lexicon = SynonymLexicon({f"w{k}": [f"d{k}"] for k in range(3)})
        example = LabeledExample(
            tokenize("w0 w1 w2 n0 n1 n2 n3 n4"), 1)
        result = pwws_attack(model, example, lexicon, AttackConfig())
        assert not result.success
        assert len(result.substitutions) <= 2

    def test_stopwords_never_touched(self):
        model = lexical_model({"the": 3.0, "thing": 0.1, "nil": -3.0})
        lexicon = SynonymLexicon({"the": ["nil"]})
        example = LabeledExample(tokenize("the thing"), 1)
        result = pwws_attack(model, example, lexicon, AttackConfig())
        assert not result.success
        assert result.substitutions == ()

    def test_case_preserved_in_output(self):
        model = lexical_model({"good": 2.0, "ok": -1.5, "movie": 0.3})
        lexicon = SynonymLexicon({"good": ["ok"]})
        example = LabeledExample(tokenize("Good movie"), 1)
        result = pwws_attack(model, example, lexicon, AttackConfig())
        assert result.success
        assert detokenize(result.adversarial) == "Ok movie"

    def test_budget_monotone_on_success(self, flip_setup):
        model, lexicon, example = flip_setup
        outcomes = {}
        for budget in (3, 5, 8, 50, 1000):
            outcomes[budget] = pwws_attack(
                model, example, lexicon, AttackConfig(query_budget=budget))
        succeeded = [b for b, r in outcomes.items() if r.success]
        if succeeded:
            first = min(succeeded)
            for b, r in outcomes.items():
                if b >= first:
                    assert r.success
                    assert r.substitutions == outcomes[first].substitutions


class TestImportanceGreedy:
    def test_flip(self, flip_setup):
        model, lexicon, example = flip_setup
        result = importance_greedy_attack(model, example, lexicon, AttackConfig())
        assert result.success
        assert result.substitutions == ((0, "good", "ok"),)

    def test_takes_first_margin_reducing_candidate(self):
        # candidate order matters: "meh" reduces the margin and comes first
        model = lexical_model({"good": 2.0, "meh": 0.5, "ok": -1.5, "movie": 0.1})
        lexicon = SynonymLexicon({"good": ["meh", "ok"]})
        example = LabeledExample(tokenize("good movie"), 1)
        result = importance_greedy_attack(model, example, lexicon,
                                          AttackConfig())
        assert result.substitutions[0][2] == "meh"

    def test_budget_monotone_on_success(self, flip_setup):
        model, lexicon, example = flip_setup
        results = [importance_greedy_attack(
            model, example, lexicon, AttackConfig(query_budget=b))
            for b in (2, 4, 6, 20, 500)]
        succeeded = [r for r in results if r.success]
        assert succeeded  # generous budgets must succeed
        for a, b in zip(succeeded, succeeded[1:]):
            assert a.substitutions == b.substitutions


class TestGenetic:
    def _setup(self):
        strong = {"good": 2.0, "great": 2.0}
        filler = {w: 0.05 for w in
                  ("item", "piece", "thing", "object", "entry", "note")}
        downs = {"bad": -2.0, "poor": -2.0}
        model = lexical_model({**strong, **filler, **downs})
        lexicon = SynonymLexicon({"good": ["bad"], "great": ["poor"]})
        example = LabeledExample(
            tokenize("good great item piece thing object entry note"), 1)
        return model, lexicon, example

    def test_finds_two_swap_flip(self):
        model, lexicon, example = self._setup()
        result = genetic_attack(model, example, lexicon, AttackConfig(seed=5))
        assert result.success
        assert predicted_class(model.logits(result.adversarial)) == 0
        assert len(result.substitutions) <= 2  # cap: a quarter of 8 words

    def test_deterministic_given_seed(self):
        model, lexicon, example = self._setup()
        r1 = genetic_attack(model, example, lexicon, AttackConfig(seed=9))
        r2 = genetic_attack(model, example, lexicon, AttackConfig(seed=9))
        assert r1.success == r2.success
        assert r1.substitutions == r2.substitutions
        assert r1.queries_used == r2.queries_used

    def test_skip_and_empty_lexicon(self):
        model, lexicon, example = self._setup()
        wrong = LabeledExample(example.text, 0)
        assert genetic_attack(model, wrong, lexicon, AttackConfig()).skipped
        res = genetic_attack(model, example, SynonymLexicon({}), AttackConfig())
        assert not res.success


class TestGenerateDataset:
    def _corpus_setup(self):
        model = lexical_model({"good": 2.0, "ok": -1.5, "movie": 0.3,
                               "bad": -2.0, "fine": 1.5})
        lexicon = SynonymLexicon({"good": ["ok"], "bad": ["fine"]})
        corpus = Corpus((
            LabeledExample(tokenize("good movie"), 1),
            LabeledExample(tokenize("bad movie"), 0),
            LabeledExample(tokenize("good movie again"), 0),  # misclassified
        ), num_classes=2)
        return model, lexicon, corpus

    def test_pairs_and_report(self):
        model, lexicon, corpus = self._corpus_setup()
        attacked, report = generate_attack_dataset(
            model, corpus, "pwws", lexicon, AttackConfig())
        stats = report.as_dict()
        assert stats["attempted"] == 2
        assert stats["skipped"] == 1
        assert stats["succeeded"] == len(attacked) // 2
        assert set(stats) >= {"attempted", "succeeded", "mean_queries",
                              "mean_substitution_rate"}
        origins = [ex.origin for ex in attacked]
        assert origins[::2] == [Origin.ORIGINAL] * (len(attacked) // 2)
        assert origins[1::2] == [Origin.ADVERSARIAL] * (len(attacked) // 2)
        # adversarial keeps the original label
        for orig, adv in zip(attacked.examples[::2], attacked.examples[1::2]):
            assert orig.label == adv.label

    def test_unknown_kind(self):
        model, lexicon, corpus = self._corpus_setup()
        with pytest.raises(ValueError, match="unknown attack kind"):
            generate_attack_dataset(model, corpus, "nope", lexicon,
                                    AttackConfig())

    def test_registry_covers_all_kinds(self):
        assert set(ATTACKS) == {"pwws", "greedy", "genetic"}

    def test_soundness_and_revert(self):
        model, lexicon, corpus = self._corpus_setup()
        attacked, _ = generate_attack_dataset(
            model, corpus, "greedy", lexicon, AttackConfig())
        for orig, adv in zip(attacked.examples[::2], attacked.examples[1::2]):
            assert predicted_class(model.logits(adv.text)) != orig.label
            # rebuilding the original from the perturbed tokens must be exact
            from wdrkit.textcore import substitute

            restored = adv.text
            for k, tok in enumerate(orig.text.tokens):
                if restored.tokens[k] != tok:
                    restored = substitute(restored, k, tok)
            assert detokenize(restored) == detokenize(orig.text)


def test_stopword_list_contains_function_words():
    assert {"the", "and", "was", "a"} <= STOPWORDS
