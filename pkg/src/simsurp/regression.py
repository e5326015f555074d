"""Reading-time regression: spillover design matrices, OLS, held-out deltas.

A predictor set names per-word metric columns; the design matrix carries each
column for the current word and for up to ``spillover`` preceding words of
the same document (lagged copies).  Model comparison is always between nested
predictor sets: both are fitted per cross-validation fold and scored on the
held-out fold by Gaussian log-likelihood, and the per-fold differences feed
an exact sign-flip permutation test.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from simsurp.interchange import Corpus, CorpusRecord

DEFAULT_SPILLOVER = 3
DEFAULT_FOLDS = 10

# 2^k sign patterns are enumerated outright; past this the table stops
# being "exact" in any useful sense and the memory bill arrives.
MAX_EXACT_PERMUTATION_FOLDS = 24

INTERCEPT = "intercept"


class RegressionError(ValueError):
    """Common base for design/fit failures."""


class DesignMatrixError(RegressionError):
    """A requested predictor value is missing or non-numeric for some word."""


class RankDeficiencyError(RegressionError):
    """Design matrix columns are linearly dependent."""

    def __init__(self, columns: list[str]):
        super().__init__(f"design matrix is rank deficient; dependent columns: {columns}")
        self.columns = columns


class DegenerateVarianceError(RegressionError):
    """Residual variance is zero: the model fits the data exactly.

    The fitted coefficients are attached so callers can still inspect them.
    """

    def __init__(self, weights: np.ndarray, intercept: float | None):
        super().__init__("residual variance is zero (exact fit); log-likelihood undefined")
        self.weights = weights
        self.intercept = intercept


@dataclass(frozen=True)
class PredictorSet:
    """Named metric columns plus how far their spillover reaches.

    ``spillover_overrides`` narrows the lag depth for individual names, e.g.
    testing a predictor on the current word only while control predictors
    keep their full spillover window.
    """

    names: tuple[str, ...]
    spillover: int = DEFAULT_SPILLOVER
    include_intercept: bool = True
    spillover_overrides: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"predictor names not distinct: {list(self.names)}")
        if self.spillover < 0:
            raise ValueError(f"spillover must be >= 0, got {self.spillover}")
        for name, lag in self.spillover_overrides.items():
            if name not in self.names:
                raise ValueError(f"spillover override for unknown predictor {name!r}")
            if lag < 0:
                raise ValueError(f"spillover override for {name!r} must be >= 0, got {lag}")

    def lag_of(self, name: str) -> int:
        return self.spillover_overrides.get(name, self.spillover)

    @property
    def max_lag(self) -> int:
        return max((self.lag_of(n) for n in self.names), default=0)

    def columns(self) -> list[str]:
        cols = []
        for name in self.names:
            cols.append(name)
            cols.extend(f"{name}_lag{l}" for l in range(1, self.lag_of(name) + 1))
        return cols

    def is_nested_in(self, other: PredictorSet) -> bool:
        return set(self.columns()) <= set(other.columns())

    def dropping(self, *names: str) -> PredictorSet:
        """The nested set without the given predictors."""
        keep = tuple(n for n in self.names if n not in names)
        overrides = {n: l for n, l in self.spillover_overrides.items() if n in keep}
        return PredictorSet(
            names=keep,
            spillover=self.spillover,
            include_intercept=self.include_intercept,
            spillover_overrides=overrides,
        )


@dataclass
class DesignMatrix:
    """Fully materialized regression problem: one row per usable word."""

    rows: np.ndarray
    targets: np.ndarray
    row_keys: list[tuple[str, int]]
    column_names: list[str]
    include_intercept: bool = True
    excluded: list[tuple[str, int]] = field(default_factory=list)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.rows.ndim != 2:
            raise DesignMatrixError(f"rows must be 2-d, got shape {self.rows.shape}")
        n, d = self.rows.shape
        if d != len(self.column_names):
            raise DesignMatrixError(f"{d} columns but {len(self.column_names)} column names")
        if len(self.targets) != n or len(self.row_keys) != n:
            raise DesignMatrixError("rows, targets, and row_keys lengths disagree")
        if not np.all(np.isfinite(self.rows)) or not np.all(np.isfinite(self.targets)):
            raise DesignMatrixError("non-finite cells in design matrix")

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    def subset_columns(
        self, columns: Sequence[str], include_intercept: bool | None = None
    ) -> DesignMatrix:
        missing = [c for c in columns if c not in self.column_names]
        if missing:
            raise DesignMatrixError(f"columns not in design matrix: {missing}")
        idx = [self.column_names.index(c) for c in columns]
        return DesignMatrix(
            rows=self.rows[:, idx],
            targets=self.targets,
            row_keys=self.row_keys,
            column_names=list(columns),
            include_intercept=self.include_intercept if include_intercept is None else include_intercept,
            excluded=self.excluded,
        )

    def subset_rows(self, indices: np.ndarray) -> DesignMatrix:
        return DesignMatrix(
            rows=self.rows[indices],
            targets=self.targets[indices],
            row_keys=[self.row_keys[i] for i in indices],
            column_names=self.column_names,
            include_intercept=self.include_intercept,
            excluded=self.excluded,
        )


@dataclass(frozen=True)
class Regressor:
    """Fitted linear model with training-set MLE residual variance."""

    weights: np.ndarray
    intercept: float | None
    sigma2: float
    column_names: tuple[str, ...]

    def __post_init__(self):
        if not (self.sigma2 > 0.0 and math.isfinite(self.sigma2)):
            raise ValueError(f"sigma2 must be positive and finite, got {self.sigma2!r}")

    def predict(self, X: DesignMatrix) -> np.ndarray:
        if tuple(X.column_names) != self.column_names:
            raise RegressionError(
                f"column mismatch: model has {list(self.column_names)}, matrix has {X.column_names}"
            )
        pred = X.rows @ self.weights
        if self.intercept is not None:
            pred = pred + self.intercept
        return pred


@dataclass(frozen=True)
class FoldReport:
    """Held-out per-word mean log-likelihoods of one cross-validation fold."""

    fold_id: int
    llh_with: float
    llh_without: float
    delta: float
    n_items: int

    def __post_init__(self):
        if abs(self.delta - (self.llh_with - self.llh_without)) > 1e-9:
            raise ValueError("delta must equal llh_with - llh_without")


def build_design_matrix(
    corpus: Corpus | Sequence[CorpusRecord],
    metrics_table,
    predictors: PredictorSet,
) -> DesignMatrix:
    """Assemble rows with lagged predictor columns, one per usable word.

    Words whose lag window would reach before the start of their document are
    excluded (and listed in ``excluded``); lags never cross document
    boundaries.  Every requested value must exist in the metrics table.
    """
    table: Mapping[tuple[str, int], Mapping[str, float]] = getattr(
        metrics_table, "rows", metrics_table
    )
    max_lag = predictors.max_lag
    columns = predictors.columns()

    rows: list[list[float]] = []
    targets: list[float] = []
    row_keys: list[tuple[str, int]] = []
    excluded: list[tuple[str, int]] = []
    for record in corpus:
        key = (record.doc_id, record.word_index)
        if record.word_index < max_lag:
            excluded.append(key)
            continue
        row: list[float] = []
        for name in predictors.names:
            for lag in range(predictors.lag_of(name) + 1):
                source = (record.doc_id, record.word_index - lag)
                try:
                    value = table[source][name]
                except KeyError:
                    raise DesignMatrixError(
                        f"no value for predictor {name!r} at doc={source[0]!r}, "
                        f"word_index={source[1]}"
                    ) from None
                if not isinstance(value, (int, float)) or not math.isfinite(value):
                    raise DesignMatrixError(
                        f"predictor {name!r} at doc={source[0]!r}, word_index={source[1]} "
                        f"is not a finite number: {value!r}"
                    )
                row.append(float(value))
        rows.append(row)
        targets.append(record.mean_rt)
        row_keys.append(key)

    return DesignMatrix(
        rows=np.array(rows, dtype=np.float64).reshape(len(rows), len(columns)),
        targets=np.array(targets, dtype=np.float64),
        row_keys=row_keys,
        column_names=columns,
        include_intercept=predictors.include_intercept,
        excluded=excluded,
    )


def _augmented(X: DesignMatrix) -> tuple[np.ndarray, list[str]]:
    names = list(X.column_names)
    A = X.rows
    if X.include_intercept:
        A = np.column_stack([A, np.ones(X.n)])
        names = names + [INTERCEPT]
    return A, names


def fit_ols(X: DesignMatrix, *, sigma2_floor: float | None = None) -> Regressor:
    """Least-squares fit with residual variance RSS / n.

    An exact fit has no likelihood, so zero variance raises unless a floor is
    supplied (synthetic-data escape hatch; never use one on real data).
    """
    A, names = _augmented(X)
    n, d = A.shape
    if n <= d:
        raise RegressionError(f"need more rows than columns to fit: n={n}, d={d}")
    rank = np.linalg.matrix_rank(A)
    if rank < d:
        # Pivoted QR puts dependent columns last; name them for the caller.
        _, _, pivots = scipy.linalg.qr(A, mode="economic", pivoting=True)
        dependent = sorted(names[i] for i in pivots[rank:])
        raise RankDeficiencyError(dependent)
    coef, _, _, _ = np.linalg.lstsq(A, X.targets, rcond=None)
    residuals = X.targets - A @ coef
    sigma2 = float(residuals @ residuals) / n
    if X.include_intercept:
        weights, intercept = coef[:-1], float(coef[-1])
    else:
        weights, intercept = coef, None
    # An exact fit leaves only rounding noise in the residuals; treat
    # variance below the noise floor of the target scale as zero.
    degenerate = sigma2 <= 1e-24 * float(np.mean(np.square(X.targets)))
    if degenerate and sigma2_floor is None:
        raise DegenerateVarianceError(weights, intercept)
    if sigma2_floor is not None:
        sigma2 = max(sigma2, sigma2_floor)
    return Regressor(
        weights=weights,
        intercept=intercept,
        sigma2=sigma2,
        column_names=tuple(X.column_names),
    )


def log_likelihood(model: Regressor, X: DesignMatrix) -> float:
    """Total Gaussian log-density of the targets under the model, in nats."""
    residuals = X.targets - model.predict(X)
    n = X.n
    return float(-0.5 * n * math.log(2.0 * math.pi * model.sigma2) - (residuals @ residuals) / (2.0 * model.sigma2))


def _fold_indices(
    X: DesignMatrix, k: int, seed: int, fold_by_doc: bool
) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    if fold_by_doc:
        docs = list(dict.fromkeys(doc for doc, _ in X.row_keys))
        if len(docs) < k:
            raise RegressionError(f"cannot make {k} document folds from {len(docs)} documents")
        order = [docs[i] for i in rng.permutation(len(docs))]
        groups = np.array_split(np.arange(len(order)), k)
        doc_fold = {order[i]: f for f, g in enumerate(groups) for i in g}
        folds = [[] for _ in range(k)]
        for row, (doc, _) in enumerate(X.row_keys):
            folds[doc_fold[doc]].append(row)
        return [np.array(f, dtype=np.intp) for f in folds]
    perm = rng.permutation(X.n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def cross_validate(
    X: DesignMatrix,
    with_set: PredictorSet,
    without_set: PredictorSet,
    k: int = DEFAULT_FOLDS,
    seed: int = 0,
    fold_by_doc: bool = False,
) -> list[FoldReport]:
    """Per-fold held-out log-likelihood gain of the larger predictor set.

    Folds are a seeded shuffle split into k near-equal blocks (optionally
    grouping whole documents).  Both nested models are refitted on the other
    k-1 folds each round; reports carry per-word means so folds of unequal
    size stay comparable.
    """
    if not without_set.is_nested_in(with_set):
        raise RegressionError("without_set must be nested in with_set (column subset)")
    if k < 2:
        raise RegressionError(f"need at least 2 folds, got {k}")
    if X.n < k:
        raise RegressionError(f"cannot make {k} folds from {X.n} rows")
    X_with = X.subset_columns(with_set.columns(), with_set.include_intercept)
    X_without = X.subset_columns(without_set.columns(), without_set.include_intercept)

    folds = _fold_indices(X, k, seed, fold_by_doc)
    all_rows = np.arange(X.n)
    reports = []
    for fold_id, held_out in enumerate(folds):
        if len(held_out) == 0:
            raise RegressionError(f"fold {fold_id} is empty")
        train = np.setdiff1d(all_rows, held_out)
        model_with = fit_ols(X_with.subset_rows(train))
        model_without = fit_ols(X_without.subset_rows(train))
        n_items = len(held_out)
        llh_with = log_likelihood(model_with, X_with.subset_rows(held_out)) / n_items
        llh_without = log_likelihood(model_without, X_without.subset_rows(held_out)) / n_items
        reports.append(
            FoldReport(
                fold_id=fold_id,
                llh_with=llh_with,
                llh_without=llh_without,
                delta=llh_with - llh_without,
                n_items=n_items,
            )
        )
    return reports


def paired_permutation_test(deltas: Sequence[float]) -> float:
    """Exact two-sided sign-flip test on per-fold deltas.

    Enumerates all 2^k sign assignments; p is the fraction whose |mean| is at
    least the observed |mean|.  The observed assignment always qualifies, so
    p >= 1/2^k; all-zero deltas give p = 1.
    """
    d = np.asarray(deltas, dtype=np.float64)
    k = len(d)
    if k < 2:
        raise ValueError(f"need at least 2 deltas, got {k}")
    if k > MAX_EXACT_PERMUTATION_FOLDS:
        raise ValueError(
            f"{k} folds would enumerate 2^{k} sign patterns; "
            f"limit is {MAX_EXACT_PERMUTATION_FOLDS}"
        )
    total = 1 << k
    chunk = min(total, 1 << 16)
    bit_positions = np.arange(k, dtype=np.uint32)
    observed: float | None = None
    count = 0
    for start in range(0, total, chunk):
        masks = np.arange(start, min(start + chunk, total), dtype=np.uint32)
        signs = 1.0 - 2.0 * ((masks[:, None] >> bit_positions) & 1)
        sums = np.abs(signs @ d)
        if observed is None:
            # Mask 0 is the observed assignment, computed by the same
            # reduction as every other row so ties compare exactly.
            observed = float(sums[0])
        count += int(np.count_nonzero(sums >= observed))
    return count / total


def significance_stars(p: float) -> str:
    """Conventional star coding for p-values."""
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"p-value must lie in [0, 1], got {p!r}")
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


@dataclass(frozen=True)
class ComparisonReport:
    """Cross-validated comparison of one nested predictor-set pair."""

    added: tuple[str, ...]
    folds: tuple[FoldReport, ...]
    mean_delta: float
    p_value: float
    stars: str
    n_rows: int
    n_excluded: int

    @property
    def mean_delta_e2(self) -> float:
        """Mean per-word delta scaled to 10^-2 nats (table units)."""
        return 100.0 * self.mean_delta


def compare_predictor_sets(
    corpus: Corpus | Sequence[CorpusRecord],
    metrics_table,
    with_set: PredictorSet,
    without_set: PredictorSet,
    *,
    k: int = DEFAULT_FOLDS,
    seed: int = 0,
    fold_by_doc: bool = False,
) -> ComparisonReport:
    """Build, cross-validate, and test one nested predictor-set comparison."""
    X = build_design_matrix(corpus, metrics_table, with_set)
    folds = cross_validate(X, with_set, without_set, k=k, seed=seed, fold_by_doc=fold_by_doc)
    deltas = [f.delta for f in folds]
    p = paired_permutation_test(deltas)
    added = tuple(n for n in with_set.names if n not in without_set.names)
    return ComparisonReport(
        added=added,
        folds=tuple(folds),
        mean_delta=float(np.mean(deltas)),
        p_value=p,
        stars=significance_stars(p),
        n_rows=X.n,
        n_excluded=len(X.excluded),
    )
