"""Word predictability metrics over next-word distributions and sample sets.

Exact metrics consume a full candidate distribution; Monte Carlo variants
consume a multiset of sampled alternatives.  Both families share one algebra:
with pairwise similarity z and distance d = 1 - z,

  surprisal                  -ln p(target)
  sim-adjusted surprisal     -ln sum_w' z(target, w') p(w')
  sim-adjusted entropy       -sum_r p(r) ln sum_r' z(r, r') p(r')
  information value          sum_w' d(target, w') p(w')

Information value and sim-adjusted surprisal are two views of one quantity:
i_d = 1 - exp(-h_z), so they order words identically.  All logs are natural;
values are nats except information value, which lives in [0, 1].
"""

from __future__ import annotations

import math
from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from simsurp.interchange import (
    EXACT_VOCAB,
    MC_SAMPLES,
    PROB_MASS_TOLERANCE,
    AlternativeBlock,
    AlternativeEntry,
    Corpus,
    CorpusRecord,
    UnigramTable,
)
from simsurp.similarity import IDENTITY, ORTHOGRAPHIC, SimilaritySpec, similarity_row, pairwise_similarity_matrix

EXACT = "exact"
MONTE_CARLO = "monte_carlo"

AGG_SUM = "sum"
AGG_FIRST = "first"

# Sample budget used when a Monte Carlo estimate must be drawn fresh.
DEFAULT_SAMPLE_COUNT = 50


class ZeroSimilarityError(ValueError):
    """Every sampled alternative has similarity 0 to the target.

    The plug-in estimate -ln(mean z) would be infinite; downstream consumers
    must treat the word as an error case, never as a literal infinity.
    """


@dataclass(frozen=True, slots=True)
class MetricValue:
    """One metric result, tagged with how it was estimated.

    Monte Carlo values always record their sample count and seed so any
    number in a report can be regenerated.
    """

    value: float
    estimator: str
    sample_count: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.estimator not in (EXACT, MONTE_CARLO):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.estimator == MONTE_CARLO and (self.sample_count is None or self.seed is None):
            raise ValueError("monte_carlo values must record sample_count and seed")


class NextWordDistribution:
    """A validated distribution over distinct candidate next words."""

    __slots__ = ("context_id", "surfaces", "probs", "_index")

    def __init__(self, entries: Sequence[tuple[str, float]], context_id: str = ""):
        if not entries:
            raise ValueError("distribution has no entries")
        surfaces = tuple(s for s, _ in entries)
        probs = np.array([p for _, p in entries], dtype=np.float64)
        if len(set(surfaces)) != len(surfaces):
            dupes = sorted({s for s in surfaces if surfaces.count(s) > 1})
            raise ValueError(f"duplicate surfaces in distribution: {dupes}")
        if np.any(probs <= 0.0) or np.any(probs > 1.0):
            raise ValueError("probs must lie in (0, 1]")
        total = float(probs.sum())
        if abs(total - 1.0) > PROB_MASS_TOLERANCE:
            raise ValueError(f"probability mass {total:.6f} outside tolerance")
        self.context_id = context_id
        self.surfaces = surfaces
        self.probs = probs
        self._index = {s: i for i, s in enumerate(surfaces)}

    def __len__(self) -> int:
        return len(self.surfaces)

    def __contains__(self, surface: str) -> bool:
        return surface in self._index

    def index(self, surface: str) -> int:
        try:
            return self._index[surface]
        except KeyError:
            raise KeyError(f"target {surface!r} not among candidate words") from None

    def prob(self, surface: str) -> float:
        return float(self.probs[self.index(surface)])

    @property
    def entries(self) -> list[tuple[str, float]]:
        return [(s, float(p)) for s, p in zip(self.surfaces, self.probs)]


def _aligned_entries(
    dist: NextWordDistribution, annotations: Mapping[str, AlternativeEntry] | None
) -> list[AlternativeEntry]:
    # Surfaces without an annotation entry fall back to surface-only carriers;
    # kernels that need more raise AnnotationError naming the missing field.
    if annotations is None:
        return [AlternativeEntry(surface=s) for s in dist.surfaces]
    return [annotations.get(s) or AlternativeEntry(surface=s) for s in dist.surfaces]


def surprisal(dist: NextWordDistribution, target: str) -> MetricValue:
    """Negative log-probability of the target, in nats."""
    return MetricValue(value=-math.log(dist.prob(target)), estimator=EXACT)


def sim_adjusted_surprisal_exact(
    dist: NextWordDistribution,
    target: str,
    spec: SimilaritySpec,
    annotations: Mapping[str, AlternativeEntry] | None = None,
) -> MetricValue:
    """-ln of the similarity-weighted probability mass around the target.

    Always <= surprisal(target): the weighted mass includes at least the
    target's own probability since z(target, target) = 1.
    """
    idx = dist.index(target)
    entries = _aligned_entries(dist, annotations)
    z = similarity_row(spec, entries[idx], entries)
    mass = float(z @ dist.probs)
    return MetricValue(value=-math.log(mass), estimator=EXACT)


def sim_adjusted_entropy(
    dist: NextWordDistribution,
    spec: SimilaritySpec,
    annotations: Mapping[str, AlternativeEntry] | None = None,
) -> MetricValue:
    """Expected sim-adjusted surprisal over the distribution itself, in nats."""
    entries = _aligned_entries(dist, annotations)
    Z = pairwise_similarity_matrix(spec, entries)
    neighbourhood = Z @ dist.probs
    return MetricValue(value=float(-(dist.probs @ np.log(neighbourhood))), estimator=EXACT)


def information_value_exact(
    dist: NextWordDistribution,
    target: str,
    spec: SimilaritySpec,
    annotations: Mapping[str, AlternativeEntry] | None = None,
) -> MetricValue:
    """Expected distance of the target from a candidate drawn from the model."""
    idx = dist.index(target)
    entries = _aligned_entries(dist, annotations)
    z = similarity_row(spec, entries[idx], entries)
    return MetricValue(value=float((1.0 - z) @ dist.probs), estimator=EXACT)


def _sample_z_values(
    samples: AlternativeBlock, target: AlternativeEntry, spec: SimilaritySpec
) -> tuple[np.ndarray, np.ndarray]:
    if samples.mode != MC_SAMPLES:
        raise ValueError(f"expected {MC_SAMPLES!r} alternatives, got {samples.mode!r}")
    if not samples.entries:
        raise ValueError("empty sample set")
    if samples.sample_count is not None and samples.sample_count != len(samples.entries):
        raise ValueError(
            f"sample_count {samples.sample_count} != {len(samples.entries)} entries"
        )
    n = len(samples.entries)
    if spec.kind in (IDENTITY, ORTHOGRAPHIC):
        # Surface-only kernels: collapse the multiset to unique surfaces.
        counts = Counter(e.surface for e in samples.entries)
        uniques = [AlternativeEntry(surface=s) for s in counts]
        z = similarity_row(spec, target, uniques)
        weights = np.array([counts[u.surface] for u in uniques], dtype=np.float64)
        return z, weights / n
    # Annotated kernels: deduplicate only when repeats of a surface share
    # one annotation (always true for sampler-produced blocks); weighting by
    # multiplicity then equals the plain per-sample mean.
    first: dict[str, AlternativeEntry] = {}
    counts = Counter()
    consistent = True
    for e in samples.entries:
        prev = first.setdefault(e.surface, e)
        if prev is not e and (prev.embedding != e.embedding or prev.pos_tag != e.pos_tag):
            consistent = False
            break
        counts[e.surface] += 1
    if consistent:
        uniques = list(first.values())
        z = similarity_row(spec, target, uniques)
        weights = np.array([counts[u.surface] for u in uniques], dtype=np.float64)
        return z, weights / n
    z = similarity_row(spec, target, samples.entries)
    return z, np.full(n, 1.0 / n)


def information_value_mc(
    samples: AlternativeBlock,
    target: AlternativeEntry,
    spec: SimilaritySpec,
    *,
    seed: int = 0,
) -> MetricValue:
    """Mean distance between the target and each sampled alternative."""
    z, w = _sample_z_values(samples, target, spec)
    return MetricValue(
        value=float((1.0 - z) @ w),
        estimator=MONTE_CARLO,
        sample_count=len(samples.entries),
        seed=seed,
    )


def sim_adjusted_surprisal_mc(
    samples: AlternativeBlock,
    target: AlternativeEntry,
    spec: SimilaritySpec,
    *,
    seed: int = 0,
) -> MetricValue:
    """Plug-in estimate -ln(mean z); consistent, biased high for finite samples."""
    z, w = _sample_z_values(samples, target, spec)
    mean_z = float(z @ w)
    if mean_z <= 0.0:
        raise ZeroSimilarityError(
            f"all {len(samples.entries)} samples have similarity 0 to {target.surface!r}"
        )
    return MetricValue(
        value=-math.log(mean_z),
        estimator=MONTE_CARLO,
        sample_count=len(samples.entries),
        seed=seed,
    )


def aggregate_word_level(subword_values: Sequence[float], mode: str = AGG_SUM) -> float:
    """Collapse per-subword metric values to one word-level value."""
    if mode not in (AGG_SUM, AGG_FIRST):
        raise ValueError(f"unknown aggregation mode {mode!r}")
    if len(subword_values) == 0:
        raise ValueError("no subword values to aggregate")
    if mode == AGG_SUM:
        return float(sum(subword_values))
    return float(subword_values[0])


# ---------------------------------------------------------------------------
# Sampling and corpus-level tables
# ---------------------------------------------------------------------------


def record_rng(seed: int, counter: int) -> np.random.Generator:
    """Independent per-record generator: derived by counter, not stream draws.

    Guarantees bit-identical output for a given (seed, record order) no
    matter how records are scheduled.
    """
    return np.random.default_rng(np.random.SeedSequence([seed, counter]))


def annotations_from_block(block: AlternativeBlock) -> dict[str, AlternativeEntry]:
    """Surface -> annotated entry map, including the target's annotations."""
    ann = {e.surface: e for e in block.entries}
    if block.target is not None:
        ann[block.target.surface] = block.target
    return ann


def distribution_from_block(block: AlternativeBlock, context_id: str = "") -> NextWordDistribution:
    if block.mode != EXACT_VOCAB:
        raise ValueError(f"expected {EXACT_VOCAB!r} alternatives, got {block.mode!r}")
    return NextWordDistribution(
        [(e.surface, e.prob) for e in block.entries], context_id=context_id
    )


def sample_alternatives(
    dist: NextWordDistribution,
    sample_count: int,
    rng: np.random.Generator,
    annotations: Mapping[str, AlternativeEntry] | None = None,
) -> AlternativeBlock:
    """Draw i.i.d. alternatives from a candidate distribution.

    Entries inherit the annotations of their surface but never carry probs
    (multiset semantics).
    """
    if sample_count < 1:
        raise ValueError(f"sample_count must be >= 1, got {sample_count}")
    idx = rng.choice(len(dist), size=sample_count, p=dist.probs)
    aligned = _aligned_entries(dist, annotations)
    # Multiset entries never carry probs; strip once per surface, then the
    # sample list is plain references (draw counts can be large).
    stripped = [
        e if e.prob is None else AlternativeEntry(surface=e.surface, embedding=e.embedding, pos_tag=e.pos_tag)
        for e in aligned
    ]
    entries = [stripped[i] for i in idx]
    return AlternativeBlock(mode=MC_SAMPLES, entries=entries, sample_count=sample_count)


ESTIMATOR_AUTO = "auto"
ESTIMATOR_CHOICES = (ESTIMATOR_AUTO, EXACT, "mc")

LENGTH = "length"
LOG_UNIGRAM_FREQ = "log_unigram_freq"
SURPRISAL = "surprisal"
SIM_ADJUSTED_PREFIX = "sim_adjusted_surprisal:"
INFO_VALUE_PREFIX = "info_value:"


@dataclass
class MetricsTable:
    """Per-word metric values keyed by (doc_id, word_index).

    ``rows`` maps each word to a column -> value dict; numeric columns double
    as regression predictors.  ``estimator:<spec>`` columns record, per word,
    whether the spec's metrics came from the exact or Monte Carlo path.
    """

    columns: list[str]
    rows: dict[tuple[str, int], dict[str, float | str]]


def _target_entry(record: CorpusRecord, ann: Mapping[str, AlternativeEntry]) -> AlternativeEntry:
    block = record.alternatives
    if block is not None and block.target is not None and block.target.surface == record.surface:
        return block.target
    return ann.get(record.surface) or AlternativeEntry(surface=record.surface)


def compute_metrics_table(
    corpus: Corpus | Sequence[CorpusRecord],
    specs: Sequence[SimilaritySpec] = (),
    unigrams: UnigramTable | None = None,
    *,
    estimator: str = ESTIMATOR_AUTO,
    sample_count: int = DEFAULT_SAMPLE_COUNT,
    seed: int = 0,
    word_agg: str = AGG_SUM,
) -> MetricsTable:
    """Compute the per-word predictor table for a corpus.

    Surprisal comes from the record's own subword log-probs.  Similarity
    metrics come from the record's alternatives: exact formulas on candidate
    distributions, Monte Carlo on sample multisets.  ``estimator`` narrows
    the choice: ``exact`` rejects records without a candidate distribution,
    ``mc`` draws ``sample_count`` fresh alternatives (per-record seeded) even
    when an exact distribution is present.  Words without alternatives simply
    lack the similarity columns.
    """
    if estimator not in ESTIMATOR_CHOICES:
        raise ValueError(f"unknown estimator {estimator!r}, expected one of {ESTIMATOR_CHOICES}")
    labels = [spec.label for spec in specs]
    if len(set(labels)) != len(labels):
        raise ValueError(f"similarity specs have duplicate labels: {labels}")

    columns = [LENGTH]
    if unigrams is not None:
        columns.append(LOG_UNIGRAM_FREQ)
    columns.append(SURPRISAL)
    for label in labels:
        columns.extend(
            (SIM_ADJUSTED_PREFIX + label, INFO_VALUE_PREFIX + label, f"estimator:{label}")
        )

    rows: dict[tuple[str, int], dict[str, float | str]] = {}
    for counter, record in enumerate(corpus):
        row: dict[str, float | str] = {LENGTH: float(len(record.surface))}
        if unigrams is not None:
            row[LOG_UNIGRAM_FREQ] = unigrams.log_freq(record.surface)
        row[SURPRISAL] = aggregate_word_level(
            [-sw.logprob for sw in record.subwords], word_agg
        )

        block = record.alternatives
        if block is not None and specs:
            ann = annotations_from_block(block)
            target = _target_entry(record, ann)
            use_exact = block.mode == EXACT_VOCAB and estimator != "mc"
            if estimator == EXACT and block.mode != EXACT_VOCAB:
                raise ValueError(
                    f"exact estimator requires a candidate distribution "
                    f"(doc={record.doc_id}, word_index={record.word_index})"
                )
            if use_exact:
                dist = distribution_from_block(block)
                for spec, label in zip(specs, labels):
                    h = sim_adjusted_surprisal_exact(dist, record.surface, spec, ann)
                    iv = information_value_exact(dist, record.surface, spec, ann)
                    row[SIM_ADJUSTED_PREFIX + label] = h.value
                    row[INFO_VALUE_PREFIX + label] = iv.value
                    row[f"estimator:{label}"] = EXACT
            else:
                if block.mode == EXACT_VOCAB:
                    dist = distribution_from_block(block)
                    mc_block = sample_alternatives(
                        dist, sample_count, record_rng(seed, counter), ann
                    )
                else:
                    mc_block = block
                for spec, label in zip(specs, labels):
                    try:
                        h = sim_adjusted_surprisal_mc(mc_block, target, spec, seed=seed)
                    except ZeroSimilarityError as exc:
                        raise ZeroSimilarityError(
                            f"{exc} (doc={record.doc_id}, word_index={record.word_index})"
                        ) from exc
                    iv = information_value_mc(mc_block, target, spec, seed=seed)
                    row[SIM_ADJUSTED_PREFIX + label] = h.value
                    row[INFO_VALUE_PREFIX + label] = iv.value
                    row[f"estimator:{label}"] = MONTE_CARLO
        rows[(record.doc_id, record.word_index)] = row
    return MetricsTable(columns=columns, rows=rows)
