"""Bounded word-pair similarity kernels and their distance duals.

Every kernel maps a pair of annotated words to [0, 1], equals 1 on identical
words, and is symmetric.  An exponent ``alpha >= 1`` sharpens any kernel
toward the identity kernel (pointwise power; fixed points 0 and 1), so one
parameter interpolates between similarity-sensitive and classical behaviour.
Distance is the complement ``d = 1 - z``.
"""

from __future__ import annotations

import math
from collections.abc import Collection, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from simsurp.interchange import AlternativeEntry

EMBEDDING_COSINE = "embedding_cosine"
POS_IDENTITY = "pos_identity"
ORTHOGRAPHIC = "orthographic"
IDENTITY = "identity"

KINDS = (EMBEDDING_COSINE, POS_IDENTITY, ORTHOGRAPHIC, IDENTITY)

# Provenance labels for which model layer produced the vectors.
NONCONTEXTUAL = "noncontextual"
CONTEXTUAL = "contextual"
EMBEDDING_SOURCES = (NONCONTEXTUAL, CONTEXTUAL)


class AnnotationError(ValueError):
    """A kernel needs an annotation (embedding, POS tag) the entry lacks."""


@dataclass(frozen=True, slots=True)
class SimilaritySpec:
    """Choice of kernel plus sharpening exponent.

    ``embedding_source`` records which embedding variant the corpus carries
    (static input vectors vs. context-sensitive states).  It is provenance
    only: it flows into output column labels, never into computation, since
    vectors are treated opaquely.
    """

    kind: str
    alpha: float = 1.0
    embedding_source: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown similarity kind {self.kind!r}, expected one of {KINDS}")
        if not (math.isfinite(self.alpha) and self.alpha >= 1.0):
            raise ValueError(f"alpha must be finite and >= 1, got {self.alpha!r}")
        if self.embedding_source is not None:
            if self.kind != EMBEDDING_COSINE:
                raise ValueError(f"embedding_source only applies to {EMBEDDING_COSINE!r}")
            if self.embedding_source not in EMBEDDING_SOURCES:
                raise ValueError(
                    f"embedding_source must be one of {EMBEDDING_SOURCES}, got {self.embedding_source!r}"
                )

    @property
    def label(self) -> str:
        base = self.kind
        if self.kind == EMBEDDING_COSINE and self.embedding_source:
            base = f"{base}:{self.embedding_source}"
        if self.alpha != 1.0:
            base = f"{base}@a{self.alpha:g}"
        return base


@dataclass(frozen=True)
class EmbeddingTable:
    """Surface-keyed word vectors of one fixed dimension, no zero vectors."""

    vectors: Mapping[str, tuple[float, ...]]
    dim: int = field(init=False)

    def __post_init__(self):
        if not self.vectors:
            raise ValueError("embedding table is empty")
        dims = {len(v) for v in self.vectors.values()}
        if len(dims) != 1:
            raise ValueError(f"embedding dimensions not uniform: {sorted(dims)}")
        for surface, vec in self.vectors.items():
            if not any(vec):
                raise ValueError(f"zero vector for {surface!r} (cosine undefined)")
        object.__setattr__(self, "dim", dims.pop())

    def __contains__(self, surface: str) -> bool:
        return surface in self.vectors

    def vector(self, surface: str) -> tuple[float, ...]:
        return self.vectors[surface]

    def entry(self, surface: str) -> AlternativeEntry:
        return AlternativeEntry(surface=surface, embedding=self.vectors[surface])


def cosine_similarity(u, v) -> float:
    """Cosine similarity rescaled from [-1, 1] to [0, 1], clamped.

    Identical vectors compare equal to exactly 1.0 regardless of rounding.
    Zero vectors are rejected: they have no direction.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"embedding dims differ: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity undefined for zero vectors")
    if np.array_equal(u, v):
        return 1.0
    cos = float(np.dot(u, v) / (nu * nv))
    return min(1.0, max(0.0, 0.5 * (cos + 1.0)))


def pos_similarity(tag_a: str, tag_b: str, tagset: Collection[str] | None = None) -> float:
    """1 if the POS tags match exactly, else 0.

    When the corpus declares a tagset, tags outside it are rejected rather
    than silently compared.
    """
    if tagset is not None:
        for tag in (tag_a, tag_b):
            if tag not in tagset:
                raise ValueError(f"tag {tag!r} not in declared tagset")
    return 1.0 if tag_a == tag_b else 0.0


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance over Unicode code points (unit costs)."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        curr = [i]
        for j, cb in enumerate(b, start=1):
            curr.append(min(prev[j] + 1, curr[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = curr
    return prev[-1]


def orthographic_similarity(a: str, b: str) -> float:
    """1 - edit_distance / max(len); undefined (0/0) when both are empty."""
    longest = max(len(a), len(b))
    if longest == 0:
        raise ValueError("orthographic similarity undefined for two empty strings")
    if a == b:
        return 1.0
    return 1.0 - edit_distance(a, b) / longest


def apply_temperature(z: float, alpha: float) -> float:
    """Sharpen a similarity value: z ** alpha, requiring finite alpha >= 1."""
    if not (math.isfinite(alpha) and alpha >= 1.0):
        raise ValueError(f"alpha must be finite and >= 1, got {alpha!r}")
    if alpha == 1.0:
        return z
    return z**alpha


def _base_similarity(spec: SimilaritySpec, a: AlternativeEntry, b: AlternativeEntry) -> float:
    if spec.kind == IDENTITY:
        return 1.0 if a.surface == b.surface else 0.0
    if spec.kind == EMBEDDING_COSINE:
        if a.embedding is None or b.embedding is None:
            missing = a.surface if a.embedding is None else b.surface
            raise AnnotationError(f"entry {missing!r} has no embedding")
        return cosine_similarity(a.embedding, b.embedding)
    if spec.kind == POS_IDENTITY:
        if a.pos_tag is None or b.pos_tag is None:
            missing = a.surface if a.pos_tag is None else b.surface
            raise AnnotationError(f"entry {missing!r} has no pos_tag")
        return pos_similarity(a.pos_tag, b.pos_tag)
    # orthographic
    return orthographic_similarity(a.surface, b.surface)


def similarity(spec: SimilaritySpec, a: AlternativeEntry, b: AlternativeEntry) -> float:
    """Kernel value for one annotated pair, temperature applied.

    The identity kernel skips tempering (0 and 1 are fixed points of powers).
    """
    z = _base_similarity(spec, a, b)
    if spec.kind == IDENTITY:
        return z
    return apply_temperature(z, spec.alpha)


def to_distance(z: float) -> float:
    """Complement distance d = 1 - z."""
    return 1.0 - z


def _embedding_matrix(entries: Sequence[AlternativeEntry]) -> np.ndarray:
    for e in entries:
        if e.embedding is None:
            raise AnnotationError(f"entry {e.surface!r} has no embedding")
    E = np.array([e.embedding for e in entries], dtype=np.float64)
    norms = np.linalg.norm(E, axis=1)
    if np.any(norms == 0.0):
        bad = entries[int(np.argmin(norms))].surface
        raise ValueError(f"cosine similarity undefined for zero vectors (entry {bad!r})")
    return E


def pairwise_similarity_matrix(
    spec: SimilaritySpec, entries: Sequence[AlternativeEntry]
) -> np.ndarray:
    """Full kernel matrix over a list of annotated words.

    Vectorized per kind; agrees with the scalar :func:`similarity` path,
    including the exact-1.0 guarantee for identical annotations.
    """
    n = len(entries)
    surfaces = [e.surface for e in entries]
    if spec.kind == IDENTITY:
        arr = np.array(surfaces, dtype=object)
        return (arr[:, None] == arr[None, :]).astype(np.float64)

    if spec.kind == EMBEDDING_COSINE:
        E = _embedding_matrix(entries)
        unit = E / np.linalg.norm(E, axis=1)[:, None]
        Z = 0.5 * (unit @ unit.T + 1.0)
        np.clip(Z, 0.0, 1.0, out=Z)
        # Identical vectors must compare to exactly 1, as in the scalar path.
        same = np.all(E[:, None, :] == E[None, :, :], axis=2)
        Z[same] = 1.0
    elif spec.kind == POS_IDENTITY:
        for e in entries:
            if e.pos_tag is None:
                raise AnnotationError(f"entry {e.surface!r} has no pos_tag")
        tags = np.array([e.pos_tag for e in entries], dtype=object)
        Z = (tags[:, None] == tags[None, :]).astype(np.float64)
    else:  # orthographic
        Z = np.ones((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                Z[i, j] = Z[j, i] = orthographic_similarity(surfaces[i], surfaces[j])

    if spec.alpha != 1.0:
        Z **= spec.alpha
    return Z


def similarity_row(
    spec: SimilaritySpec, target: AlternativeEntry, entries: Sequence[AlternativeEntry]
) -> np.ndarray:
    """Kernel values between one target word and a list of words."""
    if spec.kind == IDENTITY:
        return np.array([1.0 if e.surface == target.surface else 0.0 for e in entries])

    if spec.kind == EMBEDDING_COSINE:
        if target.embedding is None:
            raise AnnotationError(f"entry {target.surface!r} has no embedding")
        E = _embedding_matrix(entries)
        t = np.asarray(target.embedding, dtype=np.float64)
        nt = np.linalg.norm(t)
        if nt == 0.0:
            raise ValueError(f"cosine similarity undefined for zero vectors (entry {target.surface!r})")
        norms = np.linalg.norm(E, axis=1)
        row = 0.5 * ((E @ t) / (norms * nt) + 1.0)
        np.clip(row, 0.0, 1.0, out=row)
        if E.shape[1] == t.shape[0]:
            row[np.all(E == t[None, :], axis=1)] = 1.0
    elif spec.kind == POS_IDENTITY:
        if target.pos_tag is None:
            raise AnnotationError(f"entry {target.surface!r} has no pos_tag")
        for e in entries:
            if e.pos_tag is None:
                raise AnnotationError(f"entry {e.surface!r} has no pos_tag")
        row = np.array([1.0 if e.pos_tag == target.pos_tag else 0.0 for e in entries])
    else:  # orthographic
        row = np.array([orthographic_similarity(target.surface, e.surface) for e in entries])

    if spec.alpha != 1.0:
        row **= spec.alpha
    return row
