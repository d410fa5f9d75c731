"""Word-level text primitives: tokenization, labeled corpora, and editing.

Tokens are maximal runs of word characters; everything between them
(whitespace and punctuation) is kept verbatim in ``separators`` so that
detokenization is an exact inverse. Punctuation therefore never appears
as a token and is never a substitution target.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

_WORD_RE = re.compile(r"\w+", re.UNICODE)

#: Reserved placeholder inserted when a word is ablated. Contains angle
#: brackets, which tokenization never includes in a token, so it cannot
#: collide with natural text.
UNK_TOKEN = "<unk>"


class CorpusFormatError(ValueError):
    """Raised when a corpus file is malformed or carries invalid labels."""


@dataclass(frozen=True)
class TokenizedText:
    """A sentence split into word tokens plus the glue between them.

    ``separators`` has length ``len(tokens) + 1``: leading text, the gap
    after each token, and trailing text. ``detokenize`` interleaves the
    two sequences, which reconstructs the source string exactly.
    """

    tokens: tuple[str, ...]
    separators: tuple[str, ...]

    def __post_init__(self):
        if len(self.separators) != len(self.tokens) + 1:
            raise ValueError(
                f"need {len(self.tokens) + 1} separators, got {len(self.separators)}"
            )
        if any(t == "" for t in self.tokens):
            raise ValueError("tokens must be non-empty strings")

    def __len__(self) -> int:
        return len(self.tokens)

    def text(self) -> str:
        return detokenize(self)


def tokenize(raw: str) -> TokenizedText:
    """Split ``raw`` into word tokens, preserving all inter-word text.

    The empty string yields an empty token list. Any input round-trips:
    ``detokenize(tokenize(s)) == s``.
    """
    tokens = []
    separators = []
    pos = 0
    for m in _WORD_RE.finditer(raw):
        separators.append(raw[pos:m.start()])
        tokens.append(m.group())
        pos = m.end()
    separators.append(raw[pos:])
    return TokenizedText(tuple(tokens), tuple(separators))


def detokenize(t: TokenizedText) -> str:
    """Exact inverse of :func:`tokenize`."""
    parts = [t.separators[0]]
    for token, sep in zip(t.tokens, t.separators[1:]):
        parts.append(token)
        parts.append(sep)
    return "".join(parts)


def substitute(t: TokenizedText, i: int, word: str) -> TokenizedText:
    """Return a copy of ``t`` with token ``i`` replaced by ``word``.

    The input is never mutated and the token count is unchanged.
    """
    if not 0 <= i < len(t.tokens):
        raise IndexError(f"token index {i} out of range for {len(t.tokens)} tokens")
    tokens = list(t.tokens)
    tokens[i] = word
    return TokenizedText(tuple(tokens), t.separators)


class Origin(str, Enum):
    """Whether an example is natural text or an attack output."""

    ORIGINAL = "original"
    ADVERSARIAL = "adversarial"


@dataclass(frozen=True)
class LabeledExample:
    text: TokenizedText
    label: int
    origin: Origin = Origin.ORIGINAL


@dataclass(frozen=True)
class Corpus:
    """An ordered collection of labeled examples for one task."""

    examples: tuple[LabeledExample, ...]
    num_classes: int
    name: str = ""

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError("num_classes must be positive")
        for k, ex in enumerate(self.examples):
            if not 0 <= ex.label < self.num_classes:
                raise CorpusFormatError(
                    f"example {k}: label {ex.label} outside 0..{self.num_classes - 1}"
                )

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[LabeledExample]:
        return iter(self.examples)


@dataclass
class Vocabulary:
    """Word-to-index map with a reserved slot for the ablation token."""

    unk_token: str = UNK_TOKEN
    _index: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.unk_token not in self._index:
            self._index = {self.unk_token: 0, **{
                w: i for w, i in self._index.items()
            }}

    @classmethod
    def build(cls, words: Iterable[str]) -> "Vocabulary":
        vocab = cls()
        for w in words:
            vocab.add(w)
        return vocab

    def add(self, word: str) -> int:
        if word not in self._index:
            self._index[word] = len(self._index)
        return self._index[word]

    def index(self, word: str) -> int:
        """Index of ``word``, falling back to the unknown-token slot."""
        return self._index.get(word, self._index[self.unk_token])

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def __len__(self) -> int:
        return len(self._index)

    @property
    def words(self) -> list[str]:
        return list(self._index)


def load_corpus(path, num_classes: int, name: str = "") -> Corpus:
    """Read a line-delimited JSON corpus file.

    Each line must be an object with ``text`` (string) and ``label``
    (integer below ``num_classes``); ``origin`` is optional and defaults
    to original. Errors name the offending 1-based line number.
    """
    path = Path(path)
    examples = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            if not isinstance(record, dict) or "text" not in record or "label" not in record:
                raise CorpusFormatError(f"{path}:{lineno}: record needs 'text' and 'label'")
            text, label = record["text"], record["label"]
            if not isinstance(text, str) or not isinstance(label, int) or isinstance(label, bool):
                raise CorpusFormatError(f"{path}:{lineno}: 'text' must be str, 'label' int")
            if not 0 <= label < num_classes:
                raise CorpusFormatError(
                    f"{path}:{lineno}: label {label} outside 0..{num_classes - 1}"
                )
            try:
                origin = Origin(record.get("origin", "original"))
            except ValueError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: bad origin {record.get('origin')!r}") from exc
            examples.append(LabeledExample(tokenize(text), label, origin))
    return Corpus(tuple(examples), num_classes, name or path.stem)


def save_corpus(corpus: Corpus, path) -> None:
    """Write ``corpus`` in the line-delimited JSON format of :func:`load_corpus`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for ex in corpus:
            record = {"text": detokenize(ex.text), "label": ex.label, "origin": ex.origin.value}
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
