"""Word-substitution attacks against any logits provider.

Three search strategies ship: a saliency-weighted greedy search, a
plain importance-ranked greedy search, and a genetic search. All of
them replace whole words with lexicon candidates, never touch stop
words, preserve capitalization, and respect per-sample query and
substitution budgets.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .classifier import LogitsProvider, predicted_class, softmax
from .textcore import (
    Corpus,
    LabeledExample,
    Origin,
    TokenizedText,
    UNK_TOKEN,
    substitute,
)
from .wdr import margin

STOPWORDS = frozenset("""
a an the and or but if of at by for with about to from in out on off is are was
were be been being am it its this that these those i you he she they we my your
his her their our as so than too very not no nor can will just do does did have
has had what which who whom when where why how all any both each few more most
other some such only own same then once here there up down again further s t
""".split())


class LexiconFormatError(ValueError):
    """Raised when a synonym lexicon file is malformed."""


class _BudgetExhausted(Exception):
    pass


def _match_case(template: str, word: str) -> str:
    """Re-case ``word`` to the capitalization pattern of ``template``."""
    if template.isupper() and len(template) > 1:
        return word.upper()
    if template[:1].isupper():
        return word[:1].upper() + word[1:]
    return word


class SynonymLexicon:
    """Case-insensitive word-to-candidates map.

    Candidates are stored lowercased; lookups re-case them to match the
    queried token. A word is never returned as its own candidate.
    """

    def __init__(self, entries: dict[str, Sequence[str]] | None = None):
        self._entries: dict[str, tuple[str, ...]] = {}
        for word, cands in (entries or {}).items():
            key = word.lower()
            kept = tuple(dict.fromkeys(c.lower() for c in cands if c.lower() != key))
            if kept:
                self._entries[key] = kept

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, word: str) -> bool:
        return word.lower() in self._entries

    def candidates(self, token: str) -> list[str]:
        """Replacement candidates for ``token``, capitalization preserved."""
        return [_match_case(token, c) for c in self._entries.get(token.lower(), ())]

    @classmethod
    def load(cls, path) -> "SynonymLexicon":
        """Read a tab-separated file: word TAB comma-separated candidates."""
        path = Path(path)
        entries: dict[str, list[str]] = {}
        with path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip() or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2 or not parts[0].strip():
                    raise LexiconFormatError(
                        f"{path}:{lineno}: expected 'word<TAB>syn1,syn2,...'"
                    )
                cands = [c.strip() for c in parts[1].split(",") if c.strip()]
                entries[parts[0].strip()] = cands
        return cls(entries)

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            for word in sorted(self._entries):
                fh.write(f"{word}\t{','.join(self._entries[word])}\n")


@dataclass
class AttackConfig:
    """Search budgets shared by all attack kinds.

    ``max_substitution_fraction`` caps how many words may be replaced
    (always allowing at least one). The genetic fields are ignored by
    the greedy searches.
    """

    max_substitution_fraction: float = 0.25
    query_budget: int = 3000
    population: int = 16
    generations: int = 25
    mutation_rate: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.max_substitution_fraction <= 1:
            raise ValueError("max_substitution_fraction must lie in (0, 1]")
        if self.query_budget < 0:
            raise ValueError("query_budget must be non-negative")
        if self.population < 1 or self.generations < 1:
            raise ValueError("population and generations must be positive")
        if not 0 <= self.mutation_rate <= 1:
            raise ValueError("mutation_rate must lie in [0, 1]")


@dataclass(frozen=True)
class AttackResult:
    original: LabeledExample
    adversarial: TokenizedText
    substitutions: tuple[tuple[int, str, str], ...]
    success: bool
    queries_used: int
    skipped: bool = False


class _MeteredProvider:
    """Counts queried texts and stops the search at the budget."""

    def __init__(self, provider: LogitsProvider, budget: int):
        self._provider = provider
        self._budget = budget
        self.used = 0

    def query(self, texts):
        if self.used + len(texts) > self._budget:
            raise _BudgetExhausted
        self.used += len(texts)
        return self._provider.query(texts)


def _max_substitutions(num_words: int, cfg: AttackConfig) -> int:
    return max(1, int(cfg.max_substitution_fraction * num_words))


def _eligible_indices(text: TokenizedText, lexicon: SynonymLexicon) -> list[int]:
    return [
        i for i, tok in enumerate(text.tokens)
        if tok.lower() not in STOPWORDS and tok in lexicon
    ]


def _skipped(example: LabeledExample, queries: int) -> AttackResult:
    return AttackResult(example, example.text, (), False, queries, skipped=True)


def _failed(example: LabeledExample, text: TokenizedText,
            subs: list[tuple[int, str, str]], queries: int) -> AttackResult:
    return AttackResult(example, text, tuple(subs), False, queries)


def pwws_attack(provider: LogitsProvider, example: LabeledExample,
                lexicon: SynonymLexicon, cfg: AttackConfig) -> AttackResult:
    """Saliency-weighted greedy substitution search.

    Per word, the candidate maximizing the drop in the predicted class's
    probability is chosen; words are then processed in descending order
    of that drop weighted by the softmax of the word's saliency, until
    the prediction flips or a budget runs out. Inputs the target already
    misclassifies are returned untouched and marked skipped.
    """
    f = _MeteredProvider(provider, cfg.query_budget)
    text = example.text
    try:
        logits0 = f.query([text])[0]
    except _BudgetExhausted:
        return _failed(example, text, [], f.used)
    top_class = predicted_class(logits0)
    if top_class != example.label:
        return _skipped(example, f.used)
    p0 = float(softmax(logits0)[top_class])

    n = len(text.tokens)
    eligible = _eligible_indices(text, lexicon)
    if not eligible:
        return _failed(example, text, [], f.used)

    working = text
    subs: list[tuple[int, str, str]] = []
    try:
        ablations = [substitute(text, i, UNK_TOKEN) for i in range(n)]
        saliency = np.array([
            p0 - float(softmax(z)[top_class]) for z in f.query(ablations)
        ])

        best_swap: dict[int, tuple[str, float]] = {}
        for i in eligible:
            cands = lexicon.candidates(text.tokens[i])
            drops = [
                p0 - float(softmax(f.query([substitute(text, i, c)])[0])[top_class])
                for c in cands
            ]
            k = int(np.argmax(drops))
            best_swap[i] = (cands[k], drops[k])

        weight = softmax(saliency)
        ranked = sorted(
            (i for i in eligible if best_swap[i][1] > 0),
            key=lambda i: (-best_swap[i][1] * float(weight[i]), i),
        )

        for i in ranked:
            if len(subs) >= _max_substitutions(n, cfg):
                break
            replacement = best_swap[i][0]
            working = substitute(working, i, replacement)
            subs.append((i, text.tokens[i], replacement))
            if predicted_class(f.query([working])[0]) != top_class:
                return AttackResult(example, working, tuple(subs), True, f.used)
    except _BudgetExhausted:
        return _failed(example, working if subs else text, subs, f.used)
    return _failed(example, working, subs, f.used)


def word_saliency(provider: LogitsProvider, text: TokenizedText) -> list[float]:
    """Per-word drop in the predicted class's probability under ablation."""
    logits0 = provider.query([text])[0]
    top_class = predicted_class(logits0)
    p0 = float(softmax(logits0)[top_class])
    if len(text.tokens) == 0:
        return []
    ablations = [substitute(text, i, UNK_TOKEN) for i in range(len(text.tokens))]
    return [p0 - float(softmax(z)[top_class]) for z in provider.query(ablations)]


def importance_greedy_attack(provider: LogitsProvider, example: LabeledExample,
                             lexicon: SynonymLexicon, cfg: AttackConfig) -> AttackResult:
    """Importance-ranked greedy search.

    Words are ordered by saliency alone; for each, the first candidate
    that lowers the predicted class's logit margin is applied.
    """
    f = _MeteredProvider(provider, cfg.query_budget)
    text = example.text
    try:
        logits0 = f.query([text])[0]
    except _BudgetExhausted:
        return _failed(example, text, [], f.used)
    top_class = predicted_class(logits0)
    if top_class != example.label:
        return _skipped(example, f.used)
    p0 = float(softmax(logits0)[top_class])

    n = len(text.tokens)
    eligible = _eligible_indices(text, lexicon)
    if not eligible:
        return _failed(example, text, [], f.used)

    working = text
    subs: list[tuple[int, str, str]] = []
    try:
        ablations = [substitute(text, i, UNK_TOKEN) for i in range(n)]
        saliency = [p0 - float(softmax(z)[top_class]) for z in f.query(ablations)]
        ranked = sorted(eligible, key=lambda i: (-saliency[i], i))

        cur_margin = margin(logits0, top_class)
        for i in ranked:
            if len(subs) >= _max_substitutions(n, cfg):
                break
            for cand in lexicon.candidates(text.tokens[i]):
                trial = substitute(working, i, cand)
                z = f.query([trial])[0]
                m = margin(z, top_class)
                if m < cur_margin:
                    working = trial
                    cur_margin = m
                    subs.append((i, text.tokens[i], cand))
                    if predicted_class(z) != top_class:
                        return AttackResult(example, working, tuple(subs), True, f.used)
                    break
    except _BudgetExhausted:
        return _failed(example, working, subs, f.used)
    return _failed(example, working, subs, f.used)


def genetic_attack(provider: LogitsProvider, example: LabeledExample,
                   lexicon: SynonymLexicon, cfg: AttackConfig) -> AttackResult:
    """Population search over substitution sets, seeded and deterministic.

    Individuals are mappings from word position to replacement; fitness
    is the negated margin of the originally predicted class. Each
    generation keeps the fittest individual and refills the population
    by per-position crossover plus random lexicon mutations.
    """
    f = _MeteredProvider(provider, cfg.query_budget)
    rng = random.Random(cfg.seed)
    text = example.text
    try:
        logits0 = f.query([text])[0]
    except _BudgetExhausted:
        return _failed(example, text, [], f.used)
    top_class = predicted_class(logits0)
    if top_class != example.label:
        return _skipped(example, f.used)

    n = len(text.tokens)
    eligible = _eligible_indices(text, lexicon)
    if not eligible:
        return _failed(example, text, [], f.used)
    cap = _max_substitutions(n, cfg)

    def realize(genome: dict[int, str]) -> TokenizedText:
        out = text
        for i, w in genome.items():
            out = substitute(out, i, w)
        return out

    def subs_of(genome: dict[int, str]) -> tuple[tuple[int, str, str], ...]:
        return tuple((i, text.tokens[i], genome[i]) for i in sorted(genome))

    def clamp(genome: dict[int, str]) -> dict[int, str]:
        while len(genome) > cap:
            genome.pop(rng.choice(sorted(genome)))
        return genome

    def random_single() -> dict[int, str]:
        i = rng.choice(eligible)
        return {i: rng.choice(lexicon.candidates(text.tokens[i]))}

    population = [clamp(random_single()) for _ in range(cfg.population)]
    best_genome: dict[int, str] = {}
    best_fitness = -margin(logits0, top_class)

    try:
        for _ in range(cfg.generations):
            texts = [realize(g) for g in population]
            logits = f.query(texts)
            fitness = [-margin(z, top_class) for z in logits]
            flipped = [
                k for k, z in enumerate(logits) if predicted_class(z) != top_class
            ]
            if flipped:
                k = max(flipped, key=lambda j: (fitness[j], -j))
                return AttackResult(example, texts[k], subs_of(population[k]),
                                    True, f.used)
            order = sorted(range(len(population)), key=lambda j: (-fitness[j], j))
            if fitness[order[0]] > best_fitness:
                best_fitness = fitness[order[0]]
                best_genome = dict(population[order[0]])

            elite = dict(population[order[0]])
            parents = [population[j] for j in order[:max(2, len(order) // 2)]]
            children = [elite]
            while len(children) < cfg.population:
                pa, pb = rng.choice(parents), rng.choice(parents)
                child: dict[int, str] = {}
                for i in set(pa) | set(pb):
                    source = pa if rng.random() < 0.5 else pb
                    if i in source:
                        child[i] = source[i]
                for i in eligible:
                    if rng.random() < cfg.mutation_rate:
                        choices = [text.tokens[i]] + lexicon.candidates(text.tokens[i])
                        pick = rng.choice(choices)
                        if pick == text.tokens[i]:
                            child.pop(i, None)
                        else:
                            child[i] = pick
                children.append(clamp(child))
            population = children
    except _BudgetExhausted:
        pass
    return _failed(example, realize(best_genome), list(subs_of(best_genome)), f.used)


ATTACKS: dict[str, Callable[..., AttackResult]] = {
    "pwws": pwws_attack,
    "greedy": importance_greedy_attack,
    "genetic": genetic_attack,
}


@dataclass
class AttackReport:
    """Aggregate outcome of an attack run over a corpus."""

    attempted: int = 0
    succeeded: int = 0
    skipped: int = 0
    queries: list[int] = field(default_factory=list)
    substitution_rates: list[float] = field(default_factory=list)

    def as_dict(self) -> dict:
        mean = lambda xs: (sum(xs) / len(xs)) if xs else 0.0
        return {
            "attempted": self.attempted,
            "succeeded": self.succeeded,
            "skipped": self.skipped,
            "success_rate": (self.succeeded / self.attempted) if self.attempted else 0.0,
            "mean_queries": mean(self.queries),
            "mean_substitution_rate": mean(self.substitution_rates),
        }


def generate_attack_dataset(provider: LogitsProvider, corpus: Corpus, kind: str,
                            lexicon: SynonymLexicon, cfg: AttackConfig,
                            ) -> tuple[Corpus, AttackReport]:
    """Attack every example; emit original/adversarial pairs for successes.

    The returned corpus is balanced by construction: each success
    contributes the untouched original and its perturbed counterpart,
    tagged with their origins. Failures and skipped inputs are only
    counted in the report.
    """
    if kind not in ATTACKS:
        raise ValueError(f"unknown attack kind {kind!r}; expected one of {sorted(ATTACKS)}")
    attack = ATTACKS[kind]
    report = AttackReport()
    out: list[LabeledExample] = []
    for k, ex in enumerate(corpus):
        sample_cfg = cfg
        if kind == "genetic":
            # distinct per-sample stream, still reproducible from the base seed
            sample_cfg = AttackConfig(**{**cfg.__dict__, "seed": cfg.seed * 1_000_003 + k})
        result = attack(provider, ex, lexicon, sample_cfg)
        if result.skipped:
            report.skipped += 1
            continue
        report.attempted += 1
        report.queries.append(result.queries_used)
        if result.success:
            report.succeeded += 1
            nwords = max(1, len(ex.text.tokens))
            report.substitution_rates.append(len(result.substitutions) / nwords)
            out.append(LabeledExample(ex.text, ex.label, Origin.ORIGINAL))
            out.append(LabeledExample(result.adversarial, ex.label, Origin.ADVERSARIAL))
    return Corpus(tuple(out), corpus.num_classes, corpus.name), report


def save_attack_report(report: AttackReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.as_dict(), indent=2) + "\n", encoding="utf-8")
