#!/usr/bin/env python3
"""Regenerate the bundled toy corpus and synonym lexicon.

Deterministic given the seeds below. The corpus is a two-class
sentiment world built from word pools with known polarity; each
polarity's strong words have lexicon candidates that lean toward the
opposite class (because those candidates also occur, diluted, in
opposite-class sentences), which is what gives substitution attacks
room to work. Run with --check to train a throwaway target model and
print attack/reaction statistics after regenerating.

Usage: PYTHONPATH=src python scripts/generate_fixtures.py [--check]
"""

from __future__ import annotations

import argparse
import random
from pathlib import Path

POS_STRONG = ["excellent", "wonderful", "superb", "delightful", "brilliant",
              "marvelous", "charming", "captivating", "masterful", "dazzling"]
POS_MILD = ["enjoyable", "pleasant", "solid", "engaging", "warm", "lively",
            "crisp", "heartfelt"]
NEG_STRONG = ["terrible", "awful", "dreadful", "horrible", "abysmal",
              "atrocious", "dismal", "lousy", "insufferable", "wretched"]
NEG_MILD = ["boring", "dull", "tedious", "flat", "sluggish", "stale",
            "grating", "lifeless"]
# Candidate pools for attacks: each occurs diluted in opposite-class
# sentences, so the trained model gives it opposite-leaning weight.
DOWN_POS = ["passable", "tolerable", "adequate", "unremarkable",
            "serviceable", "forgettable"]
DOWN_NEG = ["chaotic", "uneven", "unpolished", "overstuffed", "frantic",
            "muddled"]
NOUNS = ["movie", "film", "plot", "acting", "script", "pacing", "soundtrack",
         "ending", "dialogue", "cast", "visuals", "story", "direction",
         "characters", "scenes", "finale"]

PLAIN_TEMPLATES = [
    "the {n1} was {s1} and the {n2} was {s2}.",
    "the {n1} felt {s1} with {s2} {n2} and a {s3} {n3}.",
    "a {s1} {n1} with {s2} {n2} and {m1} {n3}.",
    "the {n1} seemed {m1} but the {n2} was {s1} and {s2}.",
    "the {n1} was {s1} the {n2} was {s2} and the {n3} was {s3}.",
    "i found the {n1} {s1} and the {n2} truly {s2}.",
    "the {n1} and the {n2} were {s1} with a {m1} {n3}.",
    "a {m1} {n1} a {s1} {n2} and a {s2} {n3} overall.",
]
MIXED_TEMPLATES = [
    "the {n1} was {d} in places but the {n2} stayed {s1} and {s2}.",
    "despite a {d} {n1} the {n2} was {s1} with {s2} {n3}.",
]
MIXED_SHARE = 0.35


def make_sentence(rng: random.Random, label: int) -> str:
    strong = POS_STRONG if label == 1 else NEG_STRONG
    mild = POS_MILD if label == 1 else NEG_MILD
    down = DOWN_NEG if label == 1 else DOWN_POS
    mixed = rng.random() < MIXED_SHARE
    template = rng.choice(MIXED_TEMPLATES if mixed else PLAIN_TEMPLATES)
    slots = {
        **{f"n{k}": w for k, w in enumerate(rng.sample(NOUNS, 3), start=1)},
        **{f"s{k}": w for k, w in enumerate(rng.sample(strong, 3), start=1)},
        "m1": rng.choice(mild),
        "d": rng.choice(down),
    }
    text = template.format(**slots)
    return text[0].upper() + text[1:]


def build_corpus(n: int, seed: int):
    rng = random.Random(seed)
    labels = [0] * (n // 2) + [1] * (n - n // 2)
    rng.shuffle(labels)
    return [(make_sentence(rng, lab), lab) for lab in labels]


def build_lexicon(seed: int) -> dict[str, list[str]]:
    rng = random.Random(seed)
    entries: dict[str, list[str]] = {}

    def fill(pool, same_k, cross, cross_k):
        for word in pool:
            same = rng.sample([w for w in pool if w != word], same_k)
            entries[word] = same + rng.sample(cross, cross_k)

    fill(POS_STRONG, 2, DOWN_POS, 3)
    fill(NEG_STRONG, 2, DOWN_NEG, 3)
    fill(POS_MILD, 2, DOWN_POS, 2)
    fill(NEG_MILD, 2, DOWN_NEG, 2)
    for word in DOWN_POS:
        entries[word] = rng.sample([w for w in DOWN_POS if w != word], 2)
    for word in DOWN_NEG:
        entries[word] = rng.sample([w for w in DOWN_NEG if w != word], 2)
    for word in NOUNS:
        entries[word] = rng.sample([w for w in NOUNS if w != word], 3)
    return entries


def check(corpus_path: Path, lexicon_path: Path) -> None:
    import numpy as np

    from wdrkit.attacks import AttackConfig, SynonymLexicon, pwws_attack
    from wdrkit.classifier import ClassifierTrainConfig, predicted_class, train_classifier
    from wdrkit.textcore import load_corpus
    from wdrkit.wdr import margin, wdr_vector

    corpus = load_corpus(corpus_path, num_classes=2)
    cfg = ClassifierTrainConfig(feature_dim=2 ** 16)
    model = train_classifier(corpus, cfg)
    correct = sum(
        predicted_class(model.logits(ex.text)) == ex.label for ex in corpus
    )
    margins = [
        margin(model.logits(ex.text), ex.label) for ex in corpus.examples[:200]
    ]
    print(f"train accuracy {correct / len(corpus):.3f}")
    print(f"margin mean {np.mean(margins):.2f}  min {min(margins):.2f}  "
          f"max {max(margins):.2f}")

    lexicon = SynonymLexicon.load(lexicon_path)
    acfg = AttackConfig()
    wins, queries, subs, adv_margins = 0, [], [], []
    sample = corpus.examples[:40]
    for ex in sample:
        res = pwws_attack(model, ex, lexicon, acfg)
        queries.append(res.queries_used)
        if res.success:
            wins += 1
            subs.append(len(res.substitutions))
            z = model.logits(res.adversarial)
            adv_margins.append(margin(z, predicted_class(z)))
    print(f"pwws success {wins}/{len(sample)}  mean queries {np.mean(queries):.0f}  "
          f"mean subs {np.mean(subs) if subs else 0:.1f}")
    if adv_margins:
        print(f"adversarial margin mean {np.mean(adv_margins):.2f}  "
              f"max {max(adv_margins):.2f}")
    for ex in sample[:3]:
        res = pwws_attack(model, ex, lexicon, acfg)
        if res.success:
            v_orig = wdr_vector(model, ex.text, length=16)
            v_adv = wdr_vector(model, res.adversarial, length=16)
            print("orig top", [round(x, 2) for x in v_orig.values[:5]],
                  "base", round(v_orig.baseline, 2))
            print(" adv top", [round(x, 2) for x in v_adv.values[:5]],
                  "base", round(v_adv.baseline, 2))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", type=Path,
                        default=Path(__file__).resolve().parent.parent / "src/wdrkit/data")
    parser.add_argument("--n", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=20260822)
    parser.add_argument("--check", action="store_true")
    args = parser.parse_args()

    args.out_dir.mkdir(parents=True, exist_ok=True)
    corpus_path = args.out_dir / "toy_reviews.jsonl"
    lexicon_path = args.out_dir / "synonyms.tsv"

    import json

    rows = build_corpus(args.n, args.seed)
    with corpus_path.open("w", encoding="utf-8") as fh:
        for text, label in rows:
            fh.write(json.dumps({"text": text, "label": label,
                                 "origin": "original"}, ensure_ascii=False) + "\n")

    entries = build_lexicon(args.seed + 1)
    with lexicon_path.open("w", encoding="utf-8") as fh:
        for word in sorted(entries):
            fh.write(f"{word}\t{','.join(entries[word])}\n")

    print(f"wrote {len(rows)} examples to {corpus_path}")
    print(f"wrote {len(entries)} lexicon entries to {lexicon_path}")
    if args.check:
        check(corpus_path, lexicon_path)


if __name__ == "__main__":
    main()
