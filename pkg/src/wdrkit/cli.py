"""Command-line pipeline driver.

Subcommands cover the full workflow: train the built-in target model,
attack it, measure word-level reactions, fit the detector, and run
evaluations. Configuration is one JSON document; any field can be
overridden on the command line by its dotted name, e.g.
``--attack.kind genetic`` or ``--detector.num_trees 40``. No
environment variables are consulted.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

import numpy as np

from .attacks import (
    AttackConfig,
    LexiconFormatError,
    SynonymLexicon,
    generate_attack_dataset,
    save_attack_report,
)
from .classifier import (
    ClassifierTrainConfig,
    LinearTextClassifier,
    ModelFormatError,
    TrainingError,
    load_classifier,
    predicted_class,
    save_classifier,
    train_classifier,
)
from .detector import (
    DetectorFormatError,
    DetectorTrainingError,
    GbtConfig,
    feature_importance,
    fit_detector,
    load_detector,
    predict_proba_batch,
    save_detector,
)
from .evaluation import (
    TransferConfig,
    TransferCase,
    evaluate_detector,
    format_metrics_table,
    run_transfer_matrix,
    save_report,
    save_report_lines,
    threshold_sweep,
)
from .remote import RemoteError, RemoteLogitsClient
from .textcore import Corpus, CorpusFormatError, load_corpus, save_corpus
from .wdr import (
    WdrFormatError,
    batch_wdr,
    load_wdr_dataset,
    save_wdr_dataset,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING_ARTIFACT = 3
EXIT_DATA_FORMAT = 4
EXIT_REMOTE = 5

DEFAULT_CONFIG: dict = {
    "corpus": None,            # path to a JSONL corpus; null = bundled toy set
    "lexicon": None,           # path to a TSV lexicon; null = bundled
    "num_classes": 2,
    "provider": "builtin",     # "builtin" or a remote base URL (http://...)
    "classifier_path": "artifacts/classifier.json",
    "attacked_path": "artifacts/attacked.jsonl",
    "attack_report_path": "artifacts/attack_report.json",
    "wdr_path": "artifacts/wdr.jsonl",
    "wdr_eval_path": "artifacts/wdr_eval.jsonl",
    "detector_path": "artifacts/detector.json",
    "report_dir": "reports",
    "L": 64,
    "threshold": 0.5,
    "seed": 0,
    "attack_limit": 500,
    "sweep_grid": [0.5, 0.4, 0.3, 0.15],
    "classifier": {
        "epochs": 30,
        "learning_rate": 0.5,
        "l2": 1e-6,
        "feature_dim": 262144,
        "batch_size": 32,
    },
    "attack": {
        "kind": "pwws",
        "max_substitution_fraction": 0.25,
        "query_budget": 3000,
        "population": 16,
        "generations": 25,
        "mutation_rate": 0.25,
    },
    "detector": {
        "num_trees": 29,
        "max_depth": 3,
        "learning_rate": 0.34,
        "l2": 1.0,
        "min_child_weight": 1.0,
        "include_baseline": False,
        "train_fraction": 0.7,
    },
    "transfer": None,          # {"train": {case}, "tests": [{case}, ...]}
}


class MissingArtifactError(FileNotFoundError):
    """An upstream output is absent; the message names its producer."""


class ConfigError(ValueError):
    """The configuration document or an override is invalid."""


def _deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _set_dotted(cfg: dict, dotted: str, raw: str) -> None:
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    parts = dotted.split(".")
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            raise ConfigError(f"unknown config section {part!r} in --{dotted}")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config field --{dotted}")
    node[parts[-1]] = value


def _parse_overrides(cfg: dict, extras: list[str]) -> None:
    k = 0
    while k < len(extras):
        token = extras[k]
        if not token.startswith("--"):
            raise ConfigError(f"unexpected argument {token!r}")
        if "=" in token:
            dotted, raw = token[2:].split("=", 1)
        else:
            if k + 1 >= len(extras):
                raise ConfigError(f"flag {token} is missing a value")
            dotted, raw = token[2:], extras[k + 1]
            k += 1
        _set_dotted(cfg, dotted, raw)
        k += 1


def build_config(args: argparse.Namespace, extras: list[str]) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if args.config is not None:
        path = Path(args.config)
        if not path.exists():
            raise MissingArtifactError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        cfg = _deep_merge(cfg, loaded)
    _parse_overrides(cfg, extras)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.threshold is not None:
        cfg["threshold"] = args.threshold
    return cfg


def _require(path_str: str, producer: str, what: str) -> Path:
    path = Path(path_str)
    if not path.exists():
        raise MissingArtifactError(
            f"missing {what} at {path} — run `wdrkit {producer}` first"
        )
    return path


def _load_main_corpus(cfg: dict) -> Corpus:
    if cfg["corpus"] is None:
        from .data import load_toy_corpus

        return load_toy_corpus()
    path = Path(cfg["corpus"])
    if not path.exists():
        raise MissingArtifactError(f"corpus file not found: {path}")
    return load_corpus(path, num_classes=int(cfg["num_classes"]), name=path.stem)


def _load_lexicon(cfg: dict) -> SynonymLexicon:
    if cfg["lexicon"] is None:
        from .data import load_toy_lexicon

        return load_toy_lexicon()
    path = Path(cfg["lexicon"])
    if not path.exists():
        raise MissingArtifactError(f"lexicon file not found: {path}")
    return SynonymLexicon.load(path)


def _provider(cfg: dict):
    choice = cfg["provider"]
    if choice == "builtin":
        path = _require(cfg["classifier_path"], "train-classifier",
                        "trained target model")
        return load_classifier(path)
    if isinstance(choice, str) and choice.startswith(("http://", "https://")):
        return RemoteLogitsClient(choice, num_classes=int(cfg["num_classes"]))
    raise ConfigError(
        f"provider must be 'builtin' or an http(s) URL, got {choice!r}"
    )


def _report_path(cfg: dict, name: str) -> Path:
    return Path(cfg["report_dir"]) / name


def _classifier_config(cfg: dict) -> ClassifierTrainConfig:
    c = cfg["classifier"]
    return ClassifierTrainConfig(
        epochs=int(c["epochs"]), learning_rate=float(c["learning_rate"]),
        l2=float(c["l2"]), feature_dim=int(c["feature_dim"]),
        batch_size=int(c["batch_size"]), seed=int(cfg["seed"]),
    )


def _attack_config(cfg: dict) -> AttackConfig:
    a = cfg["attack"]
    return AttackConfig(
        max_substitution_fraction=float(a["max_substitution_fraction"]),
        query_budget=int(a["query_budget"]), population=int(a["population"]),
        generations=int(a["generations"]),
        mutation_rate=float(a["mutation_rate"]), seed=int(cfg["seed"]),
    )


def _gbt_config(cfg: dict) -> GbtConfig:
    d = cfg["detector"]
    return GbtConfig(
        num_trees=int(d["num_trees"]), max_depth=int(d["max_depth"]),
        learning_rate=float(d["learning_rate"]), l2=float(d["l2"]),
        min_child_weight=float(d["min_child_weight"]), seed=int(cfg["seed"]),
    )


def cmd_train_classifier(cfg: dict) -> str:
    corpus = _load_main_corpus(cfg)
    model = train_classifier(corpus, _classifier_config(cfg))
    save_classifier(model, cfg["classifier_path"])
    correct = sum(
        predicted_class(model.logits(ex.text)) == ex.label for ex in corpus
    )
    accuracy = correct / len(corpus)
    save_report({
        "command": "train-classifier",
        "corpus": corpus.name,
        "n": len(corpus),
        "train_accuracy": accuracy,
        "classifier_path": str(cfg["classifier_path"]),
        "seed": cfg["seed"],
    }, _report_path(cfg, "train_classifier.json"))
    return (f"train-classifier: fit on {len(corpus)} examples, "
            f"train accuracy {accuracy:.3f}, saved {cfg['classifier_path']}")


def _attack_subset(corpus: Corpus, limit: int, seed: int) -> Corpus:
    """Deterministic class-stratified subset of at most ``limit`` examples."""
    if limit <= 0 or limit >= len(corpus):
        return corpus
    rng = np.random.default_rng(seed)
    per_class = limit // corpus.num_classes
    chosen: list[int] = []
    for cls in range(corpus.num_classes):
        idx = [k for k, ex in enumerate(corpus.examples) if ex.label == cls]
        rng.shuffle(idx)
        chosen.extend(idx[:per_class])
    chosen.sort()
    return Corpus(tuple(corpus.examples[k] for k in chosen),
                  corpus.num_classes, corpus.name)


def cmd_attack(cfg: dict) -> str:
    provider = _provider(cfg)
    corpus = _attack_subset(_load_main_corpus(cfg), int(cfg["attack_limit"]),
                            int(cfg["seed"]))
    lexicon = _load_lexicon(cfg)
    kind = cfg["attack"]["kind"]
    attacked, report = generate_attack_dataset(provider, corpus, kind, lexicon,
                                               _attack_config(cfg))
    save_corpus(attacked, cfg["attacked_path"])
    save_attack_report(report, cfg["attack_report_path"])
    stats = report.as_dict()
    save_report({"command": "attack", "kind": kind, **stats,
                 "attacked_path": str(cfg["attacked_path"]),
                 "seed": cfg["seed"]},
                _report_path(cfg, "attack.json"))
    return (f"attack: {kind} succeeded on {stats['succeeded']}/{stats['attempted']} "
            f"({stats['success_rate']:.0%}), mean {stats['mean_queries']:.0f} queries, "
            f"saved {cfg['attacked_path']}")


def cmd_wdr(cfg: dict) -> str:
    provider = _provider(cfg)
    attacked_path = _require(cfg["attacked_path"], "attack",
                             "original/adversarial corpus")
    corpus = load_corpus(attacked_path, num_classes=int(cfg["num_classes"]))
    vectors = batch_wdr(provider, corpus, length=int(cfg["L"]))
    save_wdr_dataset(vectors, cfg["wdr_path"])
    n_adv = sum(1 for v in vectors if v.origin.value == "adversarial")
    save_report({
        "command": "wdr", "n": len(vectors), "n_adversarial": n_adv,
        "L": int(cfg["L"]), "wdr_path": str(cfg["wdr_path"]),
        "seed": cfg["seed"],
    }, _report_path(cfg, "wdr.json"))
    return (f"wdr: measured {len(vectors)} vectors (L={cfg['L']}, "
            f"{n_adv} adversarial), saved {cfg['wdr_path']}")


def _split_pairs(vectors, train_fraction: float, seed: int):
    """Shuffled train/held-out split that never separates a pair.

    Attack datasets interleave each original with its adversarial
    counterpart; keeping the pair on one side of the split prevents
    leakage. Datasets without that layout fall back to splitting
    single vectors.
    """
    from .textcore import Origin

    paired = len(vectors) % 2 == 0 and all(
        vectors[k].origin is Origin.ORIGINAL
        and vectors[k + 1].origin is Origin.ADVERSARIAL
        for k in range(0, len(vectors), 2)
    )
    units = ([vectors[k:k + 2] for k in range(0, len(vectors), 2)]
             if paired else [[v] for v in vectors])
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(units))
    cut = int(round(train_fraction * len(units)))
    train = [v for k in order[:cut] for v in units[k]]
    heldout = [v for k in order[cut:] for v in units[k]]
    return train, heldout


def cmd_train_detector(cfg: dict) -> str:
    wdr_path = _require(cfg["wdr_path"], "wdr", "reaction-score dataset")
    vectors = load_wdr_dataset(wdr_path)
    d = cfg["detector"]
    train, heldout = _split_pairs(vectors, float(d["train_fraction"]),
                                  int(cfg["seed"]))
    if not heldout:
        train, heldout = vectors, vectors
    model, training = fit_detector(
        train, _gbt_config(cfg),
        include_baseline=bool(d["include_baseline"]),
        threshold=float(cfg["threshold"]),
    )
    save_detector(model, cfg["detector_path"])
    save_wdr_dataset(heldout, cfg["wdr_eval_path"])
    from .plots import plot_training_loss

    figure = plot_training_loss(training.log_loss,
                                _report_path(cfg, "detector_loss.png"))
    save_report({
        "command": "train-detector",
        "n_train": len(train), "n_heldout": len(heldout),
        "log_loss": training.log_loss,
        "detector_path": str(cfg["detector_path"]),
        "wdr_eval_path": str(cfg["wdr_eval_path"]),
        "figure": str(figure), "seed": cfg["seed"],
    }, _report_path(cfg, "train_detector.json"))
    return (f"train-detector: {d['num_trees']} trees on {len(train)} vectors, "
            f"final log-loss {training.log_loss[-1]:.4f}, "
            f"saved {cfg['detector_path']} (held out {len(heldout)})")


def _load_eval_set(cfg: dict):
    path = _require(cfg["wdr_eval_path"], "train-detector",
                    "held-out reaction-score dataset")
    return load_wdr_dataset(path)


def cmd_evaluate(cfg: dict) -> str:
    detector_path = _require(cfg["detector_path"], "train-detector",
                             "trained detector")
    model = load_detector(detector_path)
    vectors = _load_eval_set(cfg)
    tau = float(cfg["threshold"])
    report = evaluate_detector(model, vectors, tau)
    from .plots import plot_probability_histogram

    probas = predict_proba_batch(model, vectors)
    labels = [1 if v.origin.value == "adversarial" else 0 for v in vectors]
    figure = plot_probability_histogram(
        probas, labels, _report_path(cfg, "probabilities.png"), threshold=tau)
    save_report({"command": "evaluate", **report.as_dict(),
                 "figure": str(figure), "seed": cfg["seed"]},
                _report_path(cfg, "evaluate.json"))
    return (f"evaluate: macro-F1 {report.macro_f1:.4f}, adversarial recall "
            f"{report.adv_recall:.4f}, original recall {report.orig_recall:.4f} "
            f"at threshold {tau:g} on {report.counts.total} vectors")


def cmd_sweep(cfg: dict) -> str:
    detector_path = _require(cfg["detector_path"], "train-detector",
                             "trained detector")
    model = load_detector(detector_path)
    vectors = _load_eval_set(cfg)
    grid = [float(t) for t in cfg["sweep_grid"]]
    reports = threshold_sweep(model, vectors, grid)
    from .plots import plot_threshold_sweep

    figure = plot_threshold_sweep(reports, _report_path(cfg, "sweep.png"))
    save_report_lines([r.as_dict() for r in reports],
                      _report_path(cfg, "sweep.jsonl"))
    save_report({"command": "sweep", "grid": grid,
                 "rows": [r.as_dict() for r in reports],
                 "figure": str(figure), "seed": cfg["seed"]},
                _report_path(cfg, "sweep.json"))
    print(format_metrics_table(reports))
    best = max(reports, key=lambda r: r.adv_recall)
    return (f"sweep: {len(grid)} thresholds, adversarial recall peaks at "
            f"{best.adv_recall:.4f} (threshold {best.threshold:g})")


def _transfer_config(cfg: dict) -> TransferConfig:
    raw = cfg["transfer"]
    if raw is None:
        case = TransferCase(
            model="builtin" if cfg["provider"] == "builtin" else str(cfg["provider"]),
            dataset=cfg["corpus"] or "toy-reviews",
            attack=cfg["attack"]["kind"],
            source=str(cfg["wdr_eval_path"]),
        )
        return TransferConfig(train=case, tests=(case,))

    def parse_case(obj, where: str) -> TransferCase:
        if not isinstance(obj, dict):
            raise ConfigError(f"transfer.{where} must be an object")
        try:
            return TransferCase(model=str(obj["model"]), dataset=str(obj["dataset"]),
                                attack=str(obj["attack"]),
                                source=str(obj.get("source", "")))
        except KeyError as exc:
            raise ConfigError(f"transfer.{where} is missing {exc}") from exc

    if not isinstance(raw, dict) or "train" not in raw or "tests" not in raw:
        raise ConfigError("transfer config needs 'train' and 'tests'")
    train = parse_case(raw["train"], "train")
    tests = tuple(parse_case(t, f"tests[{k}]") for k, t in enumerate(raw["tests"]))
    return TransferConfig(train=train, tests=tests)


def cmd_transfer(cfg: dict) -> str:
    detector_path = _require(cfg["detector_path"], "train-detector",
                             "trained detector")
    model = load_detector(detector_path)
    tcfg = _transfer_config(cfg)

    def load_vectors(case: TransferCase):
        path = Path(case.source)
        if not path.exists():
            raise MissingArtifactError(
                f"missing reaction-score dataset at {path} — run `wdrkit wdr` "
                f"for that configuration first"
            )
        return load_wdr_dataset(path)

    table = run_transfer_matrix(model, tcfg, load_vectors,
                                threshold=float(cfg["threshold"]))
    save_report({"command": "transfer", **table.as_dict(), "seed": cfg["seed"]},
                _report_path(cfg, "transfer.json"))
    save_report_lines(table.rows, _report_path(cfg, "transfer.jsonl"))
    worst = min(table.rows, key=lambda r: r["f1"]) if table.rows else None
    tail = (f", lowest macro-F1 {worst['f1']:.4f} "
            f"({worst['model']}/{worst['dataset']}/{worst['attack']})"
            if worst else "")
    return f"transfer: evaluated {len(table.rows)} configuration(s){tail}"


def cmd_explain(cfg: dict) -> str:
    detector_path = _require(cfg["detector_path"], "train-detector",
                             "trained detector")
    model = load_detector(detector_path)
    vectors = _load_eval_set(cfg)
    report = feature_importance(model, vectors, seed=int(cfg["seed"]))
    from .plots import plot_beeswarm, plot_importance

    bars = plot_importance(report, _report_path(cfg, "importance.png"))
    swarm = plot_beeswarm(report, _report_path(cfg, "beeswarm.png"),
                          seed=int(cfg["seed"]))
    ranked = [int(i) for i in np.argsort(report.gain)[::-1] if report.gain[i] > 0]
    top_positions = [i + 1 for i in ranked[:3]]  # 1-indexed positions
    save_report({
        "command": "explain", **report.as_dict(),
        "top3_positions": top_positions,
        "top3_in_first5": all(p <= 5 for p in top_positions),
        "figures": [str(bars), str(swarm)], "seed": cfg["seed"],
    }, _report_path(cfg, "explain.json"))
    return (f"explain: top positions by split gain {top_positions}, "
            f"baseline macro-F1 {report.baseline_macro_f1:.4f}, "
            f"figures in {cfg['report_dir']}")


COMMANDS = {
    "train-classifier": cmd_train_classifier,
    "attack": cmd_attack,
    "wdr": cmd_wdr,
    "train-detector": cmd_train_detector,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "transfer": cmd_transfer,
    "explain": cmd_explain,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wdrkit",
        description="Detect word-substitution attacks on text classifiers.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS),
                        help="pipeline stage to run")
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--seed", type=int, help="seed for every stochastic stage")
    parser.add_argument("--threshold", type=float, help="detection threshold")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args, extras = parser.parse_known_args(argv)
    try:
        cfg = build_config(args, extras)
        summary = COMMANDS[args.command](cfg)
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_ARTIFACT
    except (ConfigError, ValueError) as exc:
        if isinstance(exc, (CorpusFormatError, ModelFormatError, WdrFormatError,
                            DetectorFormatError, LexiconFormatError)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DATA_FORMAT
        if isinstance(exc, (TrainingError, DetectorTrainingError)):
            print(f"error: {exc}", file=sys.stderr)
            return 1
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RemoteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REMOTE
    except (RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
