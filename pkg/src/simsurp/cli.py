"""Command-line entry points: validate, metrics, oracle, evaluate, sweep-alpha.

Every output artifact embeds the format version, a hash of the resolved
configuration, and the seed, so re-running an identical invocation
reproduces byte-identical payloads.  Module errors surface as one-line JSON
records on stderr with exit status 2; failed validations or failed identity
checks exit 1.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

from simsurp.interchange import (
    FORMAT_VERSION,
    Corpus,
    UnigramTable,
    audit_corpus_file,
    load_corpus,
    load_unigram_table,
)
from simsurp.metrics import (
    DEFAULT_SAMPLE_COUNT,
    ESTIMATOR_AUTO,
    ESTIMATOR_CHOICES,
    AGG_FIRST,
    AGG_SUM,
    LENGTH,
    LOG_UNIGRAM_FREQ,
    SIM_ADJUSTED_PREFIX,
    INFO_VALUE_PREFIX,
    SURPRISAL,
    compute_metrics_table,
)
from simsurp.oracle import run_default_checks
from simsurp.regression import (
    DEFAULT_FOLDS,
    DEFAULT_SPILLOVER,
    PredictorSet,
    compare_predictor_sets,
)
from simsurp.similarity import (
    CONTEXTUAL,
    EMBEDDING_COSINE,
    IDENTITY,
    NONCONTEXTUAL,
    ORTHOGRAPHIC,
    POS_IDENTITY,
    SimilaritySpec,
)

SIMILARITY_CHOICES = {
    "identity": (IDENTITY, None),
    "cosine:noncontextual": (EMBEDDING_COSINE, NONCONTEXTUAL),
    "cosine:contextual": (EMBEDDING_COSINE, CONTEXTUAL),
    "pos": (POS_IDENTITY, None),
    "orthographic": (ORTHOGRAPHIC, None),
}

DEFAULT_ALPHA_GRID = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)

METRIC_CHOICES = ("sim_adjusted_surprisal", "info_value")


@dataclass(frozen=True)
class RunConfig:
    """Resolved invocation: one flat record, hashable into output metadata."""

    command: str
    corpus: str | None = None
    unigrams: str | None = None
    similarity: tuple[str, ...] = ()
    alpha: float = 1.0
    alphas: tuple[float, ...] = DEFAULT_ALPHA_GRID
    samples: int = DEFAULT_SAMPLE_COUNT
    seed: int = 0
    folds: int = DEFAULT_FOLDS
    predictors: str | None = None
    baseline_predictors: str | None = None
    out: str | None = None
    fold_by_doc: bool = False
    estimator: str = ESTIMATOR_AUTO
    agg: str = AGG_SUM
    metric: str = "sim_adjusted_surprisal"

    def __post_init__(self):
        for path in (self.corpus, self.unigrams):
            if path is not None and not Path(path).exists():
                raise FileNotFoundError(f"input path does not exist: {path}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")

    def hash(self) -> str:
        canonical = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def specs(self) -> list[SimilaritySpec]:
        out = []
        for name in self.similarity:
            kind, source = SIMILARITY_CHOICES[name]
            alpha = 1.0 if kind == IDENTITY else self.alpha
            out.append(SimilaritySpec(kind=kind, alpha=alpha, embedding_source=source))
        return out


def parse_predictor_set(
    text: str, spillover: int = DEFAULT_SPILLOVER
) -> PredictorSet:
    """Parse 'name,name,...' where a trailing '=N' pins one name's spillover.

    Example: 'length,surprisal,info_value:orthographic=0' keeps 3-word
    spillover for length and surprisal but no lags for the last predictor.
    """
    names: list[str] = []
    overrides: dict[str, int] = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        name, eq, tail = part.rpartition("=")
        if eq and tail.isdigit():
            names.append(name)
            overrides[name] = int(tail)
        else:
            names.append(part)
    if not names:
        raise ValueError(f"no predictor names in {text!r}")
    return PredictorSet(names=tuple(names), spillover=spillover, spillover_overrides=overrides)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def _meta_lines(config: RunConfig) -> list[str]:
    return [
        f"# format_version: {FORMAT_VERSION}",
        f"# config_hash: {config.hash()}",
        f"# seed: {config.seed}",
    ]


def _render(config: RunConfig, header: list[str], rows: list[list], sep: str = "\t") -> str:
    lines = _meta_lines(config)
    lines.append(sep.join(header))
    lines.extend(sep.join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _load_inputs(config: RunConfig) -> tuple[Corpus, UnigramTable | None]:
    if config.corpus is None:
        raise ValueError("--corpus is required for this command")
    corpus = load_corpus(config.corpus)
    unigrams = load_unigram_table(config.unigrams) if config.unigrams else None
    return corpus, unigrams


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _cmd_validate(config: RunConfig) -> int:
    if config.corpus is None:
        raise ValueError("--corpus is required for validate")
    report = audit_corpus_file(config.corpus)
    rows = [
        [v.rule, v.doc_id, v.word_index, v.line, v.message] for v in report.violations
    ]
    if config.unigrams:
        try:
            load_unigram_table(config.unigrams)
        except ValueError as exc:
            rows.append(["unigram_table", None, None, None, str(exc)])
    text = _render(config, ["rule", "doc_id", "word_index", "line", "message"], rows)
    text += f"# violations: {len(rows)}\n"
    _emit(text, config.out)
    return 0 if not rows else 1


def _cmd_metrics(config: RunConfig) -> int:
    corpus, unigrams = _load_inputs(config)
    table = compute_metrics_table(
        corpus,
        config.specs(),
        unigrams,
        estimator=config.estimator,
        sample_count=config.samples,
        seed=config.seed,
        word_agg=config.agg,
    )
    header = ["doc_id", "word_index", "surface", "mean_rt", *table.columns]
    surfaces = {(r.doc_id, r.word_index): (r.surface, r.mean_rt) for r in corpus}
    rows = []
    for (doc, idx), values in table.rows.items():
        surface, mean_rt = surfaces[(doc, idx)]
        rows.append([doc, idx, surface, mean_rt, *(values.get(c) for c in table.columns)])
    _emit(_render(config, header, rows), config.out)
    return 0


def _cmd_oracle(config: RunConfig) -> int:
    suite = run_default_checks(seed=config.seed)
    lines = _meta_lines(config)
    lines.extend(str(check) for check in suite.checks)
    lines.append("all checks passed" if suite.passed else "CHECKS FAILED")
    _emit("\n".join(lines) + "\n", config.out)
    return 0 if suite.passed else 1


def _comparison_row(report, label) -> list:
    return [
        label,
        ",".join(report.added) if report.added else "(none)",
        report.mean_delta_e2,
        report.p_value,
        report.stars,
        report.n_rows,
        report.n_excluded,
    ]


def _cmd_evaluate(config: RunConfig) -> int:
    if not config.predictors or not config.baseline_predictors:
        raise ValueError("--predictors and --baseline-predictors are required for evaluate")
    corpus, unigrams = _load_inputs(config)
    table = compute_metrics_table(
        corpus,
        config.specs(),
        unigrams,
        estimator=config.estimator,
        sample_count=config.samples,
        seed=config.seed,
        word_agg=config.agg,
    )
    with_set = parse_predictor_set(config.predictors)
    without_set = parse_predictor_set(config.baseline_predictors)
    report = compare_predictor_sets(
        corpus,
        table,
        with_set,
        without_set,
        k=config.folds,
        seed=config.seed,
        fold_by_doc=config.fold_by_doc,
    )
    header = ["comparison", "added", "delta_llh_e2", "p_value", "stars", "n_rows", "n_excluded"]
    label = f"{config.predictors} vs {config.baseline_predictors}"
    text = _render(config, header, [_comparison_row(report, label)])
    text += "# fold_deltas: " + ",".join(f"{f.delta:.12g}" for f in report.folds) + "\n"
    _emit(text, config.out)
    return 0


def _cmd_sweep_alpha(config: RunConfig) -> int:
    if len(config.similarity) != 1:
        raise ValueError("sweep-alpha needs exactly one --similarity kernel")
    kind, source = SIMILARITY_CHOICES[config.similarity[0]]
    if kind == IDENTITY:
        raise ValueError("sweep-alpha over the identity kernel is a constant; pick another kernel")
    corpus, unigrams = _load_inputs(config)
    baseline = (
        parse_predictor_set(config.baseline_predictors)
        if config.baseline_predictors
        else parse_predictor_set(f"{LENGTH},{LOG_UNIGRAM_FREQ}" if unigrams else LENGTH)
    )
    prefix = SIM_ADJUSTED_PREFIX if config.metric == "sim_adjusted_surprisal" else INFO_VALUE_PREFIX

    rows = []
    for alpha in config.alphas:
        spec = SimilaritySpec(kind=kind, alpha=alpha, embedding_source=source)
        table = compute_metrics_table(
            corpus,
            [spec],
            unigrams,
            estimator=config.estimator,
            sample_count=config.samples,
            seed=config.seed,
            word_agg=config.agg,
        )
        predictor = prefix + spec.label
        with_set = PredictorSet(
            names=baseline.names + (predictor,),
            spillover=baseline.spillover,
            spillover_overrides=baseline.spillover_overrides,
        )
        report = compare_predictor_sets(
            corpus,
            table,
            with_set,
            baseline,
            k=config.folds,
            seed=config.seed,
            fold_by_doc=config.fold_by_doc,
        )
        rows.append([alpha, predictor, report.mean_delta_e2, report.p_value, report.stars])

    # Reference: the metric the tempered kernel converges to is plain
    # surprisal; report its delta over the same baseline.
    if SURPRISAL not in baseline.names:
        table = compute_metrics_table(
            corpus, [], unigrams, estimator=config.estimator,
            sample_count=config.samples, seed=config.seed, word_agg=config.agg,
        )
        with_set = PredictorSet(
            names=baseline.names + (SURPRISAL,),
            spillover=baseline.spillover,
            spillover_overrides=baseline.spillover_overrides,
        )
        report = compare_predictor_sets(
            corpus, table, with_set, baseline,
            k=config.folds, seed=config.seed, fold_by_doc=config.fold_by_doc,
        )
        rows.append(["inf", SURPRISAL, report.mean_delta_e2, report.p_value, report.stars])

    header = ["alpha", "predictor", "delta_llh_e2", "p_value", "stars"]
    _emit(_render(config, header, rows, sep=","), config.out)
    return 0


COMMANDS = {
    "validate": _cmd_validate,
    "metrics": _cmd_metrics,
    "oracle": _cmd_oracle,
    "evaluate": _cmd_evaluate,
    "sweep-alpha": _cmd_sweep_alpha,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simsurp",
        description="Similarity-aware word predictability metrics and reading-time evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, *, needs_corpus: bool):
        if needs_corpus:
            p.add_argument("--corpus", required=True, help="interchange corpus (JSON lines)")
            p.add_argument("--unigrams", help="unigram table (TSV: surface<TAB>count)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output path (default: stdout)")

    def add_metric_opts(p):
        p.add_argument(
            "--similarity",
            action="append",
            default=[],
            choices=sorted(SIMILARITY_CHOICES),
            help="similarity kernel (repeatable)",
        )
        p.add_argument("--alpha", type=float, default=1.0, help="similarity sharpening exponent")
        p.add_argument("--samples", type=int, default=DEFAULT_SAMPLE_COUNT)
        p.add_argument("--estimator", choices=ESTIMATOR_CHOICES, default=ESTIMATOR_AUTO)
        p.add_argument("--agg", choices=(AGG_SUM, AGG_FIRST), default=AGG_SUM,
                       help="subword-to-word aggregation for surprisal")

    def add_eval_opts(p):
        p.add_argument("--folds", type=int, default=DEFAULT_FOLDS)
        p.add_argument("--fold-by-doc", action="store_true",
                       help="cross-validation folds group whole documents")

    p = sub.add_parser("validate", help="report every format/invariant violation in a corpus")
    add_common(p, needs_corpus=True)

    p = sub.add_parser("metrics", help="per-word predictability metrics as TSV")
    add_common(p, needs_corpus=True)
    add_metric_opts(p)

    p = sub.add_parser("oracle", help="run the enumerated identity checks")
    add_common(p, needs_corpus=False)

    p = sub.add_parser("evaluate", help="cross-validated log-likelihood gain of added predictors")
    add_common(p, needs_corpus=True)
    add_metric_opts(p)
    add_eval_opts(p)
    p.add_argument("--predictors", required=True,
                   help="comma-separated predictor names; 'name=N' pins that name's spillover")
    p.add_argument("--baseline-predictors", required=True,
                   help="nested baseline predictor names")

    p = sub.add_parser("sweep-alpha", help="log-likelihood gain as a function of alpha (CSV)")
    add_common(p, needs_corpus=True)
    add_metric_opts(p)
    add_eval_opts(p)
    p.add_argument("--alphas", default=",".join(f"{a:g}" for a in DEFAULT_ALPHA_GRID),
                   help="comma-separated alpha grid")
    p.add_argument("--metric", choices=METRIC_CHOICES, default="sim_adjusted_surprisal")
    p.add_argument("--baseline-predictors",
                   help="baseline predictor names (default: length[,log_unigram_freq])")

    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    fields = {
        "command": args.command,
        "corpus": getattr(args, "corpus", None),
        "unigrams": getattr(args, "unigrams", None),
        "similarity": tuple(getattr(args, "similarity", []) or []),
        "alpha": getattr(args, "alpha", 1.0),
        "samples": getattr(args, "samples", DEFAULT_SAMPLE_COUNT),
        "seed": args.seed,
        "folds": getattr(args, "folds", DEFAULT_FOLDS),
        "predictors": getattr(args, "predictors", None),
        "baseline_predictors": getattr(args, "baseline_predictors", None),
        "out": args.out,
        "fold_by_doc": getattr(args, "fold_by_doc", False),
        "estimator": getattr(args, "estimator", ESTIMATOR_AUTO),
        "agg": getattr(args, "agg", AGG_SUM),
        "metric": getattr(args, "metric", "sim_adjusted_surprisal"),
    }
    if hasattr(args, "alphas"):
        fields["alphas"] = tuple(float(a) for a in str(args.alphas).split(",") if a.strip())
    return RunConfig(**fields)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = config_from_args(args)
        return COMMANDS[args.command](config)
    except Exception as exc:  # noqa: BLE001 - contract: machine-readable record
        record = {
            "error": type(exc).__name__,
            "message": str(exc),
            "command": args.command,
        }
        print(json.dumps(record), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
