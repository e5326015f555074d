"""Interchange-corpus export from a causal language model."""

__version__ = "0.1.0"

from lmexport.export import (
    ExportConfig,
    ExportError,
    InputDocument,
    InputWord,
    export_corpus,
    export_file,
    fixture_documents,
    read_documents,
    write_documents,
)
from lmexport.model import CausalLM, ModelConfig, build_fixture_model, load_model, resolve_model, save_model
from lmexport.tagger import TAGSET, TAGSET_NAME, tag_word
from lmexport.tokenizer import AlignmentError, SubwordTokenizer

__all__ = [
    "AlignmentError",
    "CausalLM",
    "ExportConfig",
    "ExportError",
    "InputDocument",
    "InputWord",
    "ModelConfig",
    "SubwordTokenizer",
    "TAGSET",
    "TAGSET_NAME",
    "build_fixture_model",
    "export_corpus",
    "export_file",
    "fixture_documents",
    "load_model",
    "read_documents",
    "resolve_model",
    "save_model",
    "tag_word",
    "write_documents",
]
