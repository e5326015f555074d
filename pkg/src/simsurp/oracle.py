"""Brute-force verification of the cost/surprisal identities on toy models.

Three identities are checked by explicit enumeration over small meaning
spaces, independently of the vectorized metric implementations:

  1. information value = 1 - exp(-sim-adjusted surprisal), so the two order
     words identically;
  2. the KL cost of updating a belief over meanings after observing a word
     equals that word's surprisal (deterministic injective emission);
  3. the similarity-aware version of that KL cost equals similarity-adjusted
     surprisal.

Models are capped at 64 meanings / 64 words so every check enumerates in
microseconds.  All random fixtures are seeded.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from simsurp.interchange import AlternativeEntry
from simsurp.metrics import (
    NextWordDistribution,
    information_value_exact,
    sim_adjusted_surprisal_exact,
    surprisal,
)
from simsurp.similarity import (
    EMBEDDING_COSINE,
    IDENTITY,
    KINDS,
    ORTHOGRAPHIC,
    POS_IDENTITY,
    SimilaritySpec,
    similarity,
)

MAX_MEANINGS = 64
MAX_VOCAB = 64

DEFAULT_TOLERANCE = 1e-12


class MeaningModelError(ValueError):
    """A toy model violates its construction invariants."""


@dataclass(frozen=True)
class MeaningModel:
    """Enumerable belief space: meanings with a prior, each emitting one word.

    Emission is deterministic and injective, so observing a word pins the
    meaning down exactly; the induced next-word marginal simply transports
    the prior onto the emitted words.
    """

    meanings: tuple[str, ...]
    prior: tuple[float, ...]
    emission: Mapping[str, str]

    def __post_init__(self):
        if not self.meanings:
            raise MeaningModelError("no meanings")
        if len(self.meanings) > MAX_MEANINGS:
            raise MeaningModelError(f"too many meanings ({len(self.meanings)} > {MAX_MEANINGS})")
        if len(set(self.meanings)) != len(self.meanings):
            raise MeaningModelError("meaning ids not distinct")
        if len(self.prior) != len(self.meanings):
            raise MeaningModelError("prior length != number of meanings")
        if any(not (p > 0.0 and math.isfinite(p)) for p in self.prior):
            raise MeaningModelError("prior probabilities must be positive and finite")
        if abs(math.fsum(self.prior) - 1.0) > 1e-12:
            raise MeaningModelError(f"prior sums to {math.fsum(self.prior)!r}, not 1")
        if set(self.emission.keys()) != set(self.meanings):
            raise MeaningModelError("emission must map every meaning and nothing else")
        emitted = list(self.emission.values())
        if len(set(emitted)) != len(emitted):
            raise MeaningModelError("emission not injective: two meanings share a word")

    def prior_of(self, meaning: str) -> float:
        return self.prior[self.meanings.index(meaning)]

    def meaning_of(self, word: str) -> str:
        for m, w in self.emission.items():
            if w == word:
                return m
        raise MeaningModelError(f"word {word!r} emitted by no meaning")

    @property
    def words(self) -> list[str]:
        return [self.emission[m] for m in self.meanings]

    def next_word_distribution(self) -> NextWordDistribution:
        return NextWordDistribution(
            [(self.emission[m], p) for m, p in zip(self.meanings, self.prior)]
        )


def belief_update_cost(model: MeaningModel, target: str) -> float:
    """KL divergence from prior to posterior over meanings after seeing target.

    Enumerates Bayes explicitly; no closed form is used, so this is an
    independent oracle for the surprisal identity.
    """
    likelihood = [1.0 if model.emission[m] == target else 0.0 for m in model.meanings]
    evidence = math.fsum(l * p for l, p in zip(likelihood, model.prior))
    if evidence == 0.0:
        raise MeaningModelError(f"word {target!r} emitted by no meaning; posterior undefined")
    posterior = [l * p / evidence for l, p in zip(likelihood, model.prior)]
    cost = 0.0
    for post, prior in zip(posterior, model.prior):
        if post > 0.0:
            cost += post * (math.log(post) - math.log(prior))
    return cost


@dataclass(frozen=True)
class SimAwareModel:
    """A meaning model whose word probabilities are smeared by a similarity kernel.

    The smeared quantities follow a fixed recipe: the word marginal becomes a
    similarity-weighted mass, the meaning prior is untouched, and the meaning
    posterior is the Bayes quotient of the two.  That posterior need not sum
    to 1 and is deliberately never normalized.
    """

    base: MeaningModel
    spec: SimilaritySpec
    annotations: Mapping[str, AlternativeEntry] | None = None

    def _entry(self, word: str) -> AlternativeEntry:
        if self.annotations is not None and word in self.annotations:
            return self.annotations[word]
        return AlternativeEntry(surface=word)

    def smeared_word_prob(self, target: str) -> float:
        """Similarity-weighted probability mass around target."""
        e_t = self._entry(target)
        return math.fsum(
            similarity(self.spec, e_t, self._entry(self.base.emission[m])) * p
            for m, p in zip(self.base.meanings, self.base.prior)
        )

    def smeared_posterior(self, meaning: str, target: str) -> float:
        """Unnormalized smeared posterior over meanings given target."""
        e_t = self._entry(target)
        z = similarity(self.spec, e_t, self._entry(self.base.emission[meaning]))
        return z * self.base.prior_of(meaning) / self.smeared_word_prob(target)


def sim_adjusted_cost(model: SimAwareModel, target: str) -> float:
    """Belief-update cost with smeared distributions inside the log.

    The weights are the true posterior (one-hot under deterministic
    injective emission); only the log ratio uses the smeared quantities.
    """
    base = model.base
    meaning_t = base.meaning_of(target)  # raises if target unsupported
    smeared_mass = model.smeared_word_prob(target)
    if smeared_mass == 0.0:
        raise MeaningModelError(f"smeared probability of {target!r} is zero")
    e_t = model._entry(target)
    cost = 0.0
    for m, prior in zip(base.meanings, base.prior):
        true_post = 1.0 if m == meaning_t else 0.0
        if true_post > 0.0:
            z = similarity(model.spec, e_t, model._entry(base.emission[m]))
            smeared_post = z * prior / smeared_mass
            cost += true_post * (math.log(smeared_post) - math.log(prior))
    return cost


# ---------------------------------------------------------------------------
# Check reports
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class IdentityCheck:
    """Outcome of one enumerated identity check."""

    name: str
    cases: int
    max_abs_gap: float
    tolerance: float
    passed: bool
    notes: str = ""

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        tail = f" ({self.notes})" if self.notes else ""
        return (
            f"{status} {self.name}: {self.cases} cases, "
            f"max gap {self.max_abs_gap:.3e} (tolerance {self.tolerance:g}){tail}"
        )


def check_cost_equals_surprisal(
    model: MeaningModel, tolerance: float = DEFAULT_TOLERANCE
) -> IdentityCheck:
    """Belief-update cost vs. surprisal, every emitted word of one model."""
    dist = model.next_word_distribution()
    max_gap = 0.0
    for word in model.words:
        gap = abs(belief_update_cost(model, word) - surprisal(dist, word).value)
        max_gap = max(max_gap, gap)
    return IdentityCheck(
        name="cost_equals_surprisal",
        cases=len(model.words),
        max_abs_gap=max_gap,
        tolerance=tolerance,
        passed=max_gap < tolerance,
    )


def check_sim_cost_equals_sim_surprisal(
    model: SimAwareModel, tolerance: float = DEFAULT_TOLERANCE
) -> IdentityCheck:
    """Smeared belief-update cost vs. similarity-adjusted surprisal."""
    dist = model.base.next_word_distribution()
    max_gap = 0.0
    for word in model.base.words:
        expected = sim_adjusted_surprisal_exact(dist, word, model.spec, model.annotations).value
        gap = abs(sim_adjusted_cost(model, word) - expected)
        max_gap = max(max_gap, gap)
    return IdentityCheck(
        name="sim_cost_equals_sim_adjusted_surprisal",
        cases=len(model.base.words),
        max_abs_gap=max_gap,
        tolerance=tolerance,
        passed=max_gap < tolerance,
    )


def check_info_value_identity(
    dist: NextWordDistribution,
    spec: SimilaritySpec | None = None,
    annotations: Mapping[str, AlternativeEntry] | None = None,
    *,
    z_matrix: np.ndarray | None = None,
    tolerance: float = DEFAULT_TOLERANCE,
) -> IdentityCheck:
    """information value = 1 - exp(-sim-adjusted surprisal), per target word.

    Accepts either a similarity spec (values computed through the metric
    ops) or a raw unit-diagonal similarity matrix aligned with the
    distribution (covers kernels no spec can express).  Also verifies that
    the two metrics rank all targets identically.
    """
    if (spec is None) == (z_matrix is None):
        raise ValueError("pass exactly one of spec or z_matrix")
    p = dist.probs
    if z_matrix is not None:
        Z = np.asarray(z_matrix, dtype=np.float64)
        if Z.shape != (len(dist), len(dist)):
            raise ValueError(f"z_matrix shape {Z.shape} does not match {len(dist)} words")
        if not np.all(np.diag(Z) == 1.0):
            raise ValueError("z_matrix diagonal must be exactly 1")
        if np.any(Z < 0.0) or np.any(Z > 1.0):
            raise ValueError("z_matrix entries must lie in [0, 1]")
        h = -np.log(Z @ p)
        iv = (1.0 - Z) @ p
    else:
        h = np.array(
            [sim_adjusted_surprisal_exact(dist, w, spec, annotations).value for w in dist.surfaces]
        )
        iv = np.array(
            [information_value_exact(dist, w, spec, annotations).value for w in dist.surfaces]
        )
    gaps = np.abs(iv - (1.0 - np.exp(-h)))
    ranks_agree = bool(np.array_equal(np.argsort(iv, kind="stable"), np.argsort(h, kind="stable")))
    max_gap = float(gaps.max())
    return IdentityCheck(
        name="info_value_surprisal_identity",
        cases=len(dist),
        max_abs_gap=max_gap,
        tolerance=tolerance,
        passed=max_gap < tolerance and ranks_agree,
        notes="ranks agree" if ranks_agree else "rank order differs",
    )


# ---------------------------------------------------------------------------
# Random fixtures
# ---------------------------------------------------------------------------

_TAGSET = ("NN", "VB", "JJ", "RB")
_ALPHAS = (1.0, 1.5, 2.0, 4.0)


def random_distribution(
    rng: np.random.Generator, max_size: int = MAX_VOCAB, min_size: int = 2
) -> NextWordDistribution:
    n = int(rng.integers(min_size, max_size + 1))
    probs = rng.dirichlet(np.ones(n))
    return NextWordDistribution([(f"w{i}", float(p)) for i, p in enumerate(probs)])


def random_similarity_matrix(rng: np.random.Generator, n: int) -> np.ndarray:
    """Symmetric [0,1] matrix with unit diagonal; no kernel structure assumed."""
    Z = rng.uniform(0.0, 1.0, size=(n, n))
    Z = 0.5 * (Z + Z.T)
    np.fill_diagonal(Z, 1.0)
    return Z


def random_meaning_model(
    rng: np.random.Generator, max_meanings: int = 16, min_meanings: int = 2
) -> MeaningModel:
    n = int(rng.integers(min_meanings, max_meanings + 1))
    prior = rng.dirichlet(np.ones(n))
    prior = prior / math.fsum(prior)  # renormalize within 1e-12
    words = [f"w{i}" for i in rng.permutation(n)]
    return MeaningModel(
        meanings=tuple(f"m{i}" for i in range(n)),
        prior=tuple(float(p) for p in prior),
        emission={f"m{i}": words[i] for i in range(n)},
    )


def random_annotations(
    rng: np.random.Generator, words: Sequence[str], kind: str
) -> dict[str, AlternativeEntry] | None:
    if kind == EMBEDDING_COSINE:
        vecs = rng.normal(size=(len(words), 4))
        return {
            w: AlternativeEntry(surface=w, embedding=tuple(float(x) for x in vecs[i]))
            for i, w in enumerate(words)
        }
    if kind == POS_IDENTITY:
        tags = rng.choice(_TAGSET, size=len(words))
        return {w: AlternativeEntry(surface=w, pos_tag=str(tags[i])) for i, w in enumerate(words)}
    return None  # identity / orthographic need only surfaces


def random_sim_aware_model(rng: np.random.Generator, max_meanings: int = 16) -> SimAwareModel:
    base = random_meaning_model(rng, max_meanings=max_meanings)
    kind = str(rng.choice(KINDS))
    alpha = float(rng.choice(_ALPHAS)) if kind != IDENTITY else 1.0
    spec = SimilaritySpec(kind=kind, alpha=alpha)
    return SimAwareModel(base=base, spec=spec, annotations=random_annotations(rng, base.words, kind))


@dataclass(slots=True)
class CheckSuite:
    """Aggregated outcome of a batch of randomized identity checks."""

    checks: list[IdentityCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __str__(self) -> str:
        return "\n".join(str(c) for c in self.checks)


def _merge(name: str, checks: Sequence[IdentityCheck]) -> IdentityCheck:
    max_gap = max(c.max_abs_gap for c in checks)
    notes = ""
    if any(c.notes == "rank order differs" for c in checks):
        notes = "rank order differs"
    return IdentityCheck(
        name=name,
        cases=sum(c.cases for c in checks),
        max_abs_gap=max_gap,
        tolerance=checks[0].tolerance,
        passed=all(c.passed for c in checks),
        notes=notes,
    )


def run_default_checks(
    seed: int = 0,
    identity_trials: int = 1000,
    meaning_trials: int = 200,
    sim_aware_trials: int = 200,
) -> CheckSuite:
    """The randomized verification batch behind the report command."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    t1 = [
        check_info_value_identity(
            (d := random_distribution(rng, max_size=8)),
            z_matrix=random_similarity_matrix(rng, len(d)),
        )
        for _ in range(identity_trials)
    ]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    t2 = [check_cost_equals_surprisal(random_meaning_model(rng)) for _ in range(meaning_trials)]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    t3 = [
        check_sim_cost_equals_sim_surprisal(random_sim_aware_model(rng))
        for _ in range(sim_aware_trials)
    ]
    suite = CheckSuite()
    suite.checks.append(_merge("info_value_surprisal_identity", t1))
    suite.checks.append(_merge("cost_equals_surprisal", t2))
    suite.checks.append(_merge("sim_cost_equals_sim_adjusted_surprisal", t3))
    return suite
