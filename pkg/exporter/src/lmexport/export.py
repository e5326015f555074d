"""Corpus export: teacher-forced per-word log-probs plus alternatives.

One record per input word.  Subword log-probs come from a single
teacher-forced pass per document, with an end-of-sequence token as the
initial context.  The alternatives block describes the distribution at the
word's onset (its first piece position), in one of three shapes:

- ``subword``: sample next pieces with replacement; entries carry
  marker-stripped piece surfaces plus embeddings, the target carries the
  word surface with its first piece's embedding.
- ``full_word``: sample whole next words by walking pieces until a
  word-initial piece (left unconsumed) or the end token; entries and target
  carry POS tags instead of embeddings.
- ``exact_vocab``: an exact candidate distribution over the unique surfaces
  of the input documents, probabilities proportional to each candidate's
  piece-product likelihood in context; entries carry probs, embeddings, and
  POS tags.

Randomness is derived per (seed, document index, word index), with one
spawn per sample for full-word walks, so exports are byte-identical across
runs and insensitive to processing order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from simsurp import (
    AlternativeBlock,
    AlternativeEntry,
    Corpus,
    CorpusHeader,
    CorpusRecord,
    SubwordPiece,
    dump_corpus,
)

from lmexport.model import CausalLM, log_softmax, resolve_model
from lmexport.tagger import TAGSET, tag_word
from lmexport.tokenizer import SubwordTokenizer

MODES = ("subword", "full_word", "exact_vocab")
EMBEDDING_SOURCES = ("noncontextual", "contextual", "none")
DEFAULT_SAMPLE_COUNT = 50
MAX_WORD_PIECES = 16

_MODE_DEFAULT_SOURCE = {"subword": "contextual", "full_word": "none",
                        "exact_vocab": "noncontextual"}


class ExportError(ValueError):
    pass


class DocumentFormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Input documents
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class InputWord:
    surface: str
    mean_rt: float


@dataclass(frozen=True, slots=True)
class InputDocument:
    doc_id: str
    words: tuple[InputWord, ...]


def read_documents(path: str | Path) -> list[InputDocument]:
    """JSON-lines documents: {"doc_id": ..., "words": [{"surface", "mean_rt"}]}."""
    docs: list[InputDocument] = []
    seen: set[str] = set()
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DocumentFormatError(f"line {line_no}: invalid JSON: {exc}") from None
        if not isinstance(obj, dict) or "doc_id" not in obj or "words" not in obj:
            raise DocumentFormatError(f"line {line_no}: expected doc_id and words keys")
        doc_id = obj["doc_id"]
        if doc_id in seen:
            raise DocumentFormatError(f"line {line_no}: duplicate doc_id {doc_id!r}")
        seen.add(doc_id)
        words = []
        for i, w in enumerate(obj["words"]):
            if not isinstance(w, dict) or "surface" not in w or "mean_rt" not in w:
                raise DocumentFormatError(
                    f"line {line_no}: word {i} needs surface and mean_rt")
            words.append(InputWord(str(w["surface"]), float(w["mean_rt"])))
        if not words:
            raise DocumentFormatError(f"line {line_no}: document {doc_id!r} has no words")
        docs.append(InputDocument(doc_id, tuple(words)))
    if not docs:
        raise DocumentFormatError("no documents found")
    return docs


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class ExportConfig:
    """Everything that determines an export, CLI flags mirror this 1:1."""

    model: str
    mode: str = "subword"
    sample_count: int = DEFAULT_SAMPLE_COUNT
    embedding_source: str | None = None  # None picks the mode's default
    noncontextual_layer: int = 0
    contextual_layer: int | None = None  # None means the last layer
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ExportError(f"unknown mode {self.mode!r}, expected one of {MODES}")
        if self.sample_count < 1:
            raise ExportError(f"sample_count must be >= 1, got {self.sample_count}")
        source = self.resolved_embedding_source
        if source not in EMBEDDING_SOURCES:
            raise ExportError(
                f"unknown embedding source {source!r}, expected one of {EMBEDDING_SOURCES}")
        if self.mode == "full_word" and source != "none":
            raise ExportError(
                "full_word alternatives carry POS tags; embeddings are defined "
                "over vocabulary pieces only")
        if self.noncontextual_layer != 0:
            # deeper "noncontextual" layers mix in context by construction
            raise ExportError("noncontextual embeddings live at layer 0")
        if self.contextual_layer is not None and self.contextual_layer < 1:
            raise ExportError("contextual layer must be >= 1 (0 is the static table)")

    @property
    def resolved_embedding_source(self) -> str:
        return self.embedding_source or _MODE_DEFAULT_SOURCE[self.mode]


def _record_rng(seed: int, doc_index: int, word_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, doc_index, word_index])


# ---------------------------------------------------------------------------
# Export core
# ---------------------------------------------------------------------------


class _DocumentState:
    """Per-document token stream and the teacher-forced pass over it."""

    def __init__(self, model: CausalLM, doc: InputDocument):
        tok = model.tokenizer
        self.piece_ids: list[list[int]] = [
            tok.encode_word(w.surface, word_initial=(i == 0),
                            doc_id=doc.doc_id, word_index=i)
            for i, w in enumerate(doc.words)
        ]
        seq = [tok.eos_id]
        self.onsets: list[int] = []
        for ids in self.piece_ids:
            self.onsets.append(len(seq))
            seq.extend(ids)
        self.tokens = np.array([seq])
        self.log_probs = model.log_probs(self.tokens)[0]  # (T, V)

    def word_logprobs(self, w: int) -> list[float]:
        start = self.onsets[w]
        return [
            float(self.log_probs[start + k - 1, piece])
            for k, piece in enumerate(self.piece_ids[w])
        ]

    def onset_distribution(self, w: int) -> np.ndarray:
        return np.exp(self.log_probs[self.onsets[w] - 1])

    def context(self, w: int) -> np.ndarray:
        return self.tokens[:, : self.onsets[w]]


class Exporter:
    def __init__(self, config: ExportConfig, model: CausalLM | None = None):
        self.config = config
        self.model = model if model is not None else resolve_model(config.model)
        n_layer = self.model.config.n_layer
        self.contextual_layer = (
            config.contextual_layer if config.contextual_layer is not None else n_layer)
        if not 1 <= self.contextual_layer <= n_layer:
            raise ExportError(
                f"contextual layer {self.contextual_layer} outside [1, {n_layer}]")

    # -- embeddings ---------------------------------------------------------

    def _embed(self, piece_ids: np.ndarray, context: np.ndarray) -> np.ndarray:
        source = self.config.resolved_embedding_source
        if source == "noncontextual":
            return self.model.embedding(piece_ids, self.config.noncontextual_layer)
        return self.model.embedding(piece_ids, self.contextual_layer, context=context)

    # -- alternatives blocks -------------------------------------------------

    def _subword_block(self, state: _DocumentState, w: int, surface: str,
                       rng: np.random.Generator) -> AlternativeBlock:
        tok = self.model.tokenizer
        probs = state.onset_distribution(w)
        draws = rng.choice(len(probs), size=self.config.sample_count, p=probs)
        first_piece = state.piece_ids[w][0]
        source = self.config.resolved_embedding_source
        vectors: dict[int, tuple[float, ...]] = {}
        if source != "none":
            unique = sorted(set(draws.tolist()) | {first_piece})
            embedded = self._embed(np.array(unique), state.context(w))
            vectors = {pid: tuple(vec) for pid, vec in zip(unique, embedded.tolist())}
        entries = [
            AlternativeEntry(
                surface=tok.strip_marker(tok.pieces[pid]),
                embedding=vectors.get(pid),
            )
            for pid in draws.tolist()
        ]
        target = AlternativeEntry(surface=surface, embedding=vectors.get(first_piece))
        return AlternativeBlock(
            mode="mc_samples", entries=entries,
            sample_count=self.config.sample_count, target=target,
        )

    def _full_word_block(self, state: _DocumentState, w: int, surface: str,
                         seed_seq: np.random.SeedSequence) -> AlternativeBlock:
        tok = self.model.tokenizer
        n = self.config.sample_count
        ctx = state.context(w)
        capacity = min(ctx.shape[1] + MAX_WORD_PIECES, self.model.config.n_ctx)
        cache1, logits1 = self.model.prefill(ctx, capacity)
        cache = cache1.repeat(n)
        rngs = [np.random.default_rng(s) for s in seed_seq.spawn(n)]

        first = log_softmax(logits1[0])
        probs = np.exp(first)
        pieces: list[list[int]] = [[] for _ in range(n)]
        active = np.ones(n, dtype=bool)
        current = np.full(n, tok.eos_id)
        for j in range(n):
            pid = int(rngs[j].choice(len(probs), p=probs))
            if pid == tok.eos_id:
                active[j] = False
            else:
                pieces[j].append(pid)
                current[j] = pid

        steps = 1
        while active.any() and steps < MAX_WORD_PIECES and cache.length < capacity:
            out = self.model.step(cache, current)
            lp = log_softmax(out.logits)
            for j in np.flatnonzero(active):
                pid = int(rngs[j].choice(lp.shape[1], p=np.exp(lp[j])))
                # a word-initial piece belongs to the NEXT word; leave it unread
                if pid == tok.eos_id or tok.is_word_initial(pid):
                    active[j] = False
                else:
                    pieces[j].append(pid)
                    current[j] = pid
            steps += 1

        entries = []
        for ids in pieces:
            alt = tok.decode_word(ids) if ids else tok.eos_token
            entries.append(AlternativeEntry(surface=alt, pos_tag=tag_word(alt)))
        target = AlternativeEntry(surface=surface, pos_tag=tag_word(surface))
        return AlternativeBlock(mode="mc_samples", entries=entries,
                                sample_count=n, target=target)

    def _exact_block(self, state: _DocumentState, w: int,
                     candidates: list[str]) -> AlternativeBlock:
        tok = self.model.tokenizer
        ctx = state.context(w)
        T = ctx.shape[1]
        cand_ids = [
            tok.encode_word(c, word_initial=(w == 0)) for c in candidates
        ]
        width = max(len(ids) for ids in cand_ids)
        batch = np.full((len(candidates), T + width), tok.eos_id)
        batch[:, :T] = ctx
        for row, ids in enumerate(cand_ids):
            batch[row, T:T + len(ids)] = ids
        lp = self.model.log_probs(batch)
        scores = np.array([
            sum(lp[row, T + k - 1, piece] for k, piece in enumerate(ids))
            for row, ids in enumerate(cand_ids)
        ])
        weights = np.exp(scores - scores.max())
        probs = weights / weights.sum()

        source = self.config.resolved_embedding_source
        vectors: list[tuple[float, ...] | None] = [None] * len(candidates)
        if source != "none":
            firsts = np.array([ids[0] for ids in cand_ids])
            embedded = self._embed(firsts, ctx)
            vectors = [tuple(v) for v in embedded.tolist()]
        entries = [
            AlternativeEntry(surface=c, prob=float(p), embedding=vec,
                             pos_tag=tag_word(c))
            for c, p, vec in zip(candidates, probs, vectors)
        ]
        return AlternativeBlock(mode="exact_vocab", entries=entries)

    # -- whole corpus ---------------------------------------------------------

    def header(self) -> CorpusHeader:
        source = self.config.resolved_embedding_source
        return CorpusHeader(
            format_version=1,
            embedding_dim=self.model.config.d_model if source != "none" else None,
            tagset=TAGSET if self.config.mode in ("full_word", "exact_vocab") else None,
            subword_space_marker=self.model.tokenizer.space_marker,
        )

    def export(self, documents: list[InputDocument]) -> Corpus:
        candidates = None
        if self.config.mode == "exact_vocab":
            candidates = sorted({w.surface for d in documents for w in d.words})
        records: list[CorpusRecord] = []
        for d, doc in enumerate(documents):
            state = _DocumentState(self.model, doc)
            for w, word in enumerate(doc.words):
                pieces = [
                    SubwordPiece(token=self.model.tokenizer.pieces[pid], logprob=lp)
                    for pid, lp in zip(state.piece_ids[w], state.word_logprobs(w))
                ]
                seed_seq = _record_rng(self.config.seed, d, w)
                if self.config.mode == "subword":
                    block = self._subword_block(
                        state, w, word.surface, np.random.default_rng(seed_seq))
                elif self.config.mode == "full_word":
                    block = self._full_word_block(state, w, word.surface, seed_seq)
                else:
                    block = self._exact_block(state, w, candidates)
                records.append(CorpusRecord(
                    doc_id=doc.doc_id, word_index=w, surface=word.surface,
                    mean_rt=word.mean_rt, subwords=pieces, alternatives=block,
                ))
        return Corpus(self.header(), records)


def export_corpus(config: ExportConfig, documents: list[InputDocument],
                  model: CausalLM | None = None) -> Corpus:
    return Exporter(config, model).export(documents)


def export_file(config: ExportConfig, documents_path: str | Path,
                out_path: str | Path) -> Corpus:
    corpus = export_corpus(config, read_documents(documents_path))
    dump_corpus(corpus, out_path)
    return corpus


# ---------------------------------------------------------------------------
# Fixture inputs
# ---------------------------------------------------------------------------

_FIXTURE_WORDS = (
    "the", "a", "an", "and", "or", "is", "was", "on", "in", "at", "it",
    "he", "she", "they", "we", "reader", "time", "word", "story", "line",
    "reading", "timing", "wording", "reads", "words", "sat", "ran", "saw",
    "said", "slowly", "quietly", "longest", "statement", "cat", "dog", "mat",
)


def fixture_documents(seed: int = 0, n_docs: int = 2, words_per_doc: int = 20) -> list[InputDocument]:
    """Synthetic text with plausible positive RTs, fully tokenizer-covered."""
    if n_docs < 1 or words_per_doc < 1:
        raise ExportError("need at least one document and one word")
    rng = np.random.default_rng(np.random.SeedSequence([0xD0C5, seed]))
    docs = []
    for d in range(n_docs):
        words = tuple(
            InputWord(
                surface=_FIXTURE_WORDS[int(rng.integers(len(_FIXTURE_WORDS)))],
                mean_rt=float(np.round(rng.uniform(180.0, 420.0), 2)),
            )
            for _ in range(words_per_doc)
        )
        docs.append(InputDocument(doc_id=f"doc{d}", words=words))
    return docs


def write_documents(docs: list[InputDocument], path: str | Path) -> None:
    lines = [
        json.dumps(
            {"doc_id": d.doc_id,
             "words": [{"surface": w.surface, "mean_rt": w.mean_rt} for w in d.words]},
            ensure_ascii=False, separators=(",", ":"),
        )
        for d in docs
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
