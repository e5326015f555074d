"""Shared fixtures: small hand-checkable corpora and annotation sets."""

from __future__ import annotations

import math

import numpy as np
import pytest

from simsurp.interchange import (
    EXACT_VOCAB,
    AlternativeBlock,
    AlternativeEntry,
    Corpus,
    CorpusHeader,
    CorpusRecord,
    SubwordPiece,
    dump_corpus,
)
from simsurp.metrics import NextWordDistribution
from simsurp.similarity import SimilaritySpec


@pytest.fixture
def ab_fixture():
    """Two words, p = (0.75, 0.25), orthogonal embeddings so z(a, b) = 0.5.

    Hand values: h_z(a) = -ln 0.875, i_d(a) = 0.125, H_z ~ 0.217648.
    """
    dist = NextWordDistribution([("a", 0.75), ("b", 0.25)])
    ann = {
        "a": AlternativeEntry("a", embedding=(1.0, 0.0)),
        "b": AlternativeEntry("b", embedding=(0.0, 1.0)),
    }
    return dist, ann, SimilaritySpec("embedding_cosine")


def three_record_corpus() -> Corpus:
    """Three valid records over a 3-word candidate set.

    Subword log-probs equal the log of the word's candidate probability, so
    the surprisal column and any identity-kernel column must agree exactly.
    """

    def block():
        return AlternativeBlock(
            mode=EXACT_VOCAB,
            entries=[
                AlternativeEntry("the", 0.5, (1.0, 0.0), "DT"),
                AlternativeEntry("dog", 0.25, (0.0, 1.0), "NN"),
                AlternativeEntry("runs", 0.25, (0.6, 0.8), "VB"),
            ],
        )

    header = CorpusHeader(embedding_dim=2, tagset=("DT", "NN", "VB"))
    records = [
        CorpusRecord("d1", 0, "the", 210.0, [SubwordPiece("the", math.log(0.5))], block()),
        CorpusRecord("d1", 1, "dog", 250.0, [SubwordPiece("Ġdog", math.log(0.25))], block()),
        CorpusRecord(
            "d1",
            2,
            "runs",
            230.0,
            [SubwordPiece("Ġr", math.log(0.5)), SubwordPiece("uns", math.log(0.5))],
            block(),
        ),
    ]
    return Corpus(header, records)


@pytest.fixture
def corpus3() -> Corpus:
    return three_record_corpus()


@pytest.fixture
def corpus3_path(tmp_path):
    path = tmp_path / "corpus3.jsonl"
    dump_corpus(three_record_corpus(), path)
    return path


@pytest.fixture
def unigram_path(tmp_path):
    path = tmp_path / "unigrams.tsv"
    path.write_text("the\t100\ncat\t50\nsat\t50\n", encoding="utf-8")
    return path


def synthetic_corpus(
    seed: int = 3, docs: int = 2, words: int = 60, rt_noise: float = 8.0
) -> Corpus:
    """A corpus whose reading times are planted on surprisal.

    Candidate surfaces have distinct lengths so the length predictor is not
    collinear with the intercept.
    """
    rng = np.random.default_rng(seed)
    vocab = ["a", "he", "cat", "dogs", "quick", "runner", "leaping", "tortoise"]
    emb = {w: tuple(float(x) for x in rng.normal(size=3)) for w in vocab}
    tags = {w: ("NN" if i % 2 else "VB") for i, w in enumerate(vocab)}
    records = []
    for d in range(docs):
        for i in range(words):
            probs = rng.dirichlet(np.ones(len(vocab)))
            t = int(rng.integers(len(vocab)))
            entries = [
                AlternativeEntry(w, float(p), emb[w], tags[w]) for w, p in zip(vocab, probs)
            ]
            lp = math.log(float(probs[t]))
            rt = 180.0 - 40.0 * lp + float(rng.normal(scale=rt_noise))
            records.append(
                CorpusRecord(
                    f"doc{d}",
                    i,
                    vocab[t],
                    rt,
                    [SubwordPiece(vocab[t], lp)],
                    AlternativeBlock(mode=EXACT_VOCAB, entries=entries),
                )
            )
    return Corpus(CorpusHeader(embedding_dim=3, tagset=("NN", "VB")), records)


@pytest.fixture
def planted_corpus() -> Corpus:
    return synthetic_corpus()


@pytest.fixture
def planted_corpus_path(tmp_path):
    path = tmp_path / "planted.jsonl"
    dump_corpus(synthetic_corpus(), path)
    return path
