"""Similarity-aware word predictability metrics and reading-time evaluation."""

__version__ = "0.1.0"

from simsurp.interchange import (
    AlternativeBlock,
    AlternativeEntry,
    Corpus,
    CorpusHeader,
    CorpusRecord,
    SubwordPiece,
    UnigramTable,
    dump_corpus,
    dumps_corpus,
    load_corpus,
    load_unigram_table,
    validate_corpus,
)
from simsurp.metrics import MetricValue, NextWordDistribution
from simsurp.similarity import SimilaritySpec

__all__ = [
    "AlternativeBlock",
    "AlternativeEntry",
    "Corpus",
    "CorpusHeader",
    "CorpusRecord",
    "MetricValue",
    "NextWordDistribution",
    "SimilaritySpec",
    "SubwordPiece",
    "UnigramTable",
    "dump_corpus",
    "dumps_corpus",
    "load_corpus",
    "load_unigram_table",
    "validate_corpus",
]
