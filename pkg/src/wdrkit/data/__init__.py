"""Bundled desk-scale fixtures: a toy sentiment corpus and synonym lexicon."""

from __future__ import annotations

from importlib.resources import files
from pathlib import Path

from ..attacks import SynonymLexicon
from ..textcore import Corpus, load_corpus


def toy_corpus_path() -> Path:
    return Path(str(files(__package__) / "toy_reviews.jsonl"))


def toy_lexicon_path() -> Path:
    return Path(str(files(__package__) / "synonyms.tsv"))


def load_toy_corpus() -> Corpus:
    return load_corpus(toy_corpus_path(), num_classes=2, name="toy-reviews")


def load_toy_lexicon() -> SynonymLexicon:
    return SynonymLexicon.load(toy_lexicon_path())
