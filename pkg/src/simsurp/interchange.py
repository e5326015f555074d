"""On-disk interchange format decoupling metric computation from any language model.

A corpus file is UTF-8 JSON-lines: a header object on the first line, then one
word record per line.  Records carry per-subword log-probabilities, candidate
or sampled alternative continuations (optionally annotated with embeddings and
POS tags), and participant-averaged reading times.  Unigram frequency tables
are plain two-column TSV.

All structures are immutable after construction and safe to share across
parallel readers.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from pathlib import Path

FORMAT_VERSION = 1
PROB_MASS_TOLERANCE = 1e-6
# "Ġ" -- the leading-space marker used by byte-level BPE exports.
DEFAULT_SPACE_MARKER = "Ġ"

EXACT_VOCAB = "exact_vocab"
MC_SAMPLES = "mc_samples"

LAPLACE_ONE = "laplace_one"
MIN_OBSERVED = "min_observed"


class CorpusFormatError(ValueError):
    """A line could not be parsed into a record at all (bad JSON or schema)."""


class CorpusValidationError(ValueError):
    """A structurally well-formed record violates a corpus invariant."""

    def __init__(self, violation: Violation):
        super().__init__(str(violation))
        self.violation = violation


class UnigramTableError(ValueError):
    """A unigram table file is malformed or contains invalid counts."""


@dataclass(slots=True)
class SubwordPiece:
    """One model token of a word with its log-probability in nats (<= 0)."""

    token: str
    logprob: float


@dataclass(slots=True)
class AlternativeEntry:
    """One alternative continuation, optionally annotated for similarity kernels.

    ``prob`` is required in exact_vocab blocks and must be absent in mc_samples
    blocks.  The same class doubles as the annotation carrier for target words.
    """

    surface: str
    prob: float | None = None
    embedding: tuple[float, ...] | None = None
    pos_tag: str | None = None


@dataclass(slots=True)
class AlternativeBlock:
    """Alternative continuations for one context.

    ``exact_vocab`` blocks hold a full candidate distribution (probs sum to 1);
    ``mc_samples`` blocks hold a multiset of draws (entries may repeat) with
    ``sample_count`` equal to the number of entries.  ``target`` optionally
    carries annotations (embedding, POS tag) for the observed word itself,
    which need not appear among the entries in mc_samples mode.
    """

    mode: str
    entries: list[AlternativeEntry]
    sample_count: int | None = None
    target: AlternativeEntry | None = None


@dataclass(slots=True)
class CorpusRecord:
    """One word token: identity, reading time, subword pieces, alternatives."""

    doc_id: str
    word_index: int
    surface: str
    mean_rt: float
    subwords: list[SubwordPiece]
    alternatives: AlternativeBlock | None = None


@dataclass(slots=True)
class CorpusHeader:
    """First-line header object of a corpus file."""

    format_version: int = FORMAT_VERSION
    embedding_dim: int | None = None
    tagset: tuple[str, ...] | None = None
    subword_space_marker: str = DEFAULT_SPACE_MARKER


@dataclass(slots=True)
class Violation:
    """One invariant violation, with enough coordinates to locate the record."""

    rule: str
    message: str
    doc_id: str | None = None
    word_index: int | None = None
    line: int | None = None

    def __str__(self) -> str:
        where = []
        if self.doc_id is not None:
            where.append(f"doc={self.doc_id}")
        if self.word_index is not None:
            where.append(f"word_index={self.word_index}")
        if self.line is not None:
            where.append(f"line={self.line}")
        loc = f" [{', '.join(where)}]" if where else ""
        return f"{self.rule}: {self.message}{loc}"


@dataclass(slots=True)
class ValidationReport:
    """All invariant violations found in a corpus; empty iff the corpus is valid."""

    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def rules(self) -> set[str]:
        return {v.rule for v in self.violations}

    def __str__(self) -> str:
        if self.ok:
            return "corpus valid: no violations"
        lines = [f"{len(self.violations)} violation(s):"]
        lines.extend(f"  {v}" for v in self.violations)
        return "\n".join(lines)


class Corpus(Sequence[CorpusRecord]):
    """An ordered collection of records plus the file header that scoped them."""

    def __init__(self, header: CorpusHeader, records: list[CorpusRecord]):
        self.header = header
        self._records = records

    def __len__(self) -> int:
        return len(self._records)

    def __getitem__(self, i):  # type: ignore[override]
        return self._records[i]

    def __iter__(self) -> Iterator[CorpusRecord]:
        return iter(self._records)

    @property
    def records(self) -> list[CorpusRecord]:
        return self._records


# ---------------------------------------------------------------------------
# Parsing (schema level: shapes and types, no cross-field invariants)
# ---------------------------------------------------------------------------


def _fail(line: int, message: str) -> CorpusFormatError:
    return CorpusFormatError(f"line {line}: {message}")


def _require(obj: dict, key: str, line: int):
    if key not in obj:
        raise _fail(line, f"missing required key {key!r}")
    return obj[key]


def _as_float(value, what: str, line: int) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _fail(line, f"{what} must be a number, got {type(value).__name__}")
    return float(value)


def _parse_header(obj, line: int = 1) -> CorpusHeader:
    if not isinstance(obj, dict):
        raise _fail(line, "header must be a JSON object")
    version = _require(obj, "format_version", line)
    if version != FORMAT_VERSION:
        raise _fail(line, f"unsupported format_version {version!r}")
    dim = obj.get("embedding_dim")
    if dim is not None and (isinstance(dim, bool) or not isinstance(dim, int) or dim <= 0):
        raise _fail(line, f"embedding_dim must be a positive integer or null, got {dim!r}")
    tagset = obj.get("tagset")
    if tagset is not None:
        if not isinstance(tagset, list) or not all(isinstance(t, str) for t in tagset):
            raise _fail(line, "tagset must be a list of strings or null")
        tagset = tuple(tagset)
    marker = obj.get("subword_space_marker", DEFAULT_SPACE_MARKER)
    if not isinstance(marker, str):
        raise _fail(line, "subword_space_marker must be a string")
    return CorpusHeader(
        format_version=version,
        embedding_dim=dim,
        tagset=tagset,
        subword_space_marker=marker,
    )


def _parse_entry(obj, line: int) -> AlternativeEntry:
    if not isinstance(obj, dict):
        raise _fail(line, "alternative entry must be a JSON object")
    surface = _require(obj, "surface", line)
    if not isinstance(surface, str):
        raise _fail(line, "entry surface must be a string")
    prob = obj.get("prob")
    if prob is not None:
        prob = _as_float(prob, "entry prob", line)
    embedding = obj.get("embedding")
    if embedding is not None:
        if not isinstance(embedding, list):
            raise _fail(line, "entry embedding must be an array of numbers")
        embedding = tuple(_as_float(x, "embedding component", line) for x in embedding)
    pos_tag = obj.get("pos_tag")
    if pos_tag is not None and not isinstance(pos_tag, str):
        raise _fail(line, "entry pos_tag must be a string")
    return AlternativeEntry(surface=surface, prob=prob, embedding=embedding, pos_tag=pos_tag)


def _parse_record(obj, line: int) -> CorpusRecord:
    if not isinstance(obj, dict):
        raise _fail(line, "record must be a JSON object")
    doc_id = _require(obj, "doc_id", line)
    if not isinstance(doc_id, str):
        raise _fail(line, "doc_id must be a string")
    word_index = _require(obj, "word_index", line)
    if isinstance(word_index, bool) or not isinstance(word_index, int) or word_index < 0:
        raise _fail(line, f"word_index must be a non-negative integer, got {word_index!r}")
    surface = _require(obj, "surface", line)
    if not isinstance(surface, str):
        raise _fail(line, "surface must be a string")
    mean_rt = _as_float(_require(obj, "mean_rt", line), "mean_rt", line)

    raw_subwords = _require(obj, "subwords", line)
    if not isinstance(raw_subwords, list):
        raise _fail(line, "subwords must be an array")
    subwords = []
    for sw in raw_subwords:
        if not isinstance(sw, dict):
            raise _fail(line, "subword piece must be a JSON object")
        token = _require(sw, "token", line)
        if not isinstance(token, str):
            raise _fail(line, "subword token must be a string")
        logprob = _as_float(_require(sw, "logprob", line), "subword logprob", line)
        subwords.append(SubwordPiece(token=token, logprob=logprob))

    alternatives = None
    raw_alt = obj.get("alternatives")
    if raw_alt is not None:
        if not isinstance(raw_alt, dict):
            raise _fail(line, "alternatives must be a JSON object")
        mode = _require(raw_alt, "mode", line)
        if mode not in (EXACT_VOCAB, MC_SAMPLES):
            raise _fail(line, f"unknown alternatives mode {mode!r}")
        raw_entries = _require(raw_alt, "entries", line)
        if not isinstance(raw_entries, list):
            raise _fail(line, "alternatives entries must be an array")
        entries = [_parse_entry(e, line) for e in raw_entries]
        sample_count = raw_alt.get("sample_count")
        if sample_count is not None and (
            isinstance(sample_count, bool) or not isinstance(sample_count, int) or sample_count < 1
        ):
            raise _fail(line, f"sample_count must be a positive integer, got {sample_count!r}")
        target = raw_alt.get("target")
        if target is not None:
            target = _parse_entry(target, line)
        alternatives = AlternativeBlock(
            mode=mode, entries=entries, sample_count=sample_count, target=target
        )

    return CorpusRecord(
        doc_id=doc_id,
        word_index=word_index,
        surface=surface,
        mean_rt=mean_rt,
        subwords=subwords,
        alternatives=alternatives,
    )


# ---------------------------------------------------------------------------
# Invariant validation
# ---------------------------------------------------------------------------


def strip_marker(token: str, marker: str) -> str:
    """Remove every occurrence of the detokenization marker from a token."""
    if not marker:
        return token
    return token.replace(marker, "")


def _entry_violations(
    entry: AlternativeEntry,
    header: CorpusHeader,
    embedding_dim: list[int | None],
    where: dict,
    role: str,
) -> list[Violation]:
    out: list[Violation] = []
    if entry.prob is not None and not (0.0 <= entry.prob <= 1.0 and math.isfinite(entry.prob)):
        out.append(
            Violation("prob_range", f"{role} {entry.surface!r} prob {entry.prob!r} outside [0,1]", **where)
        )
    if entry.embedding is not None:
        if not all(math.isfinite(x) for x in entry.embedding):
            out.append(
                Violation("embedding_finite", f"{role} {entry.surface!r} has non-finite embedding", **where)
            )
        dim = len(entry.embedding)
        expected = header.embedding_dim if header.embedding_dim is not None else embedding_dim[0]
        if expected is None:
            embedding_dim[0] = dim
        elif dim != expected:
            out.append(
                Violation(
                    "embedding_dim",
                    f"{role} {entry.surface!r} embedding has dim {dim}, expected {expected}",
                    **where,
                )
            )
    if entry.pos_tag is not None and header.tagset is not None and entry.pos_tag not in header.tagset:
        out.append(
            Violation(
                "pos_tag_unknown",
                f"{role} {entry.surface!r} tag {entry.pos_tag!r} not in declared tagset",
                **where,
            )
        )
    return out


def _record_violations(
    record: CorpusRecord,
    header: CorpusHeader,
    expected_index: int,
    embedding_dim: list[int | None],
    line: int | None = None,
) -> list[Violation]:
    out: list[Violation] = []
    where = {"doc_id": record.doc_id, "word_index": record.word_index, "line": line}

    if record.word_index != expected_index:
        out.append(
            Violation(
                "index_contiguity",
                f"word_index {record.word_index} breaks contiguity, expected {expected_index}",
                **where,
            )
        )
    if not (math.isfinite(record.mean_rt) and record.mean_rt > 0):
        out.append(Violation("mean_rt_positive", f"mean_rt {record.mean_rt!r} not positive", **where))
    if not record.subwords:
        out.append(Violation("subwords_nonempty", "record has no subword pieces", **where))
    for sw in record.subwords:
        if not math.isfinite(sw.logprob) or sw.logprob > 0.0:
            out.append(
                Violation(
                    "subword_logprob",
                    f"subword {sw.token!r} logprob {sw.logprob!r} not finite and <= 0",
                    **where,
                )
            )
    if record.subwords:
        concat = "".join(strip_marker(sw.token, header.subword_space_marker) for sw in record.subwords)
        if concat != record.surface:
            out.append(
                Violation(
                    "surface_mismatch",
                    f"subwords concatenate to {concat!r}, surface is {record.surface!r}",
                    **where,
                )
            )

    block = record.alternatives
    if block is not None:
        if block.mode == EXACT_VOCAB:
            total = 0.0
            seen: set[str] = set()
            for entry in block.entries:
                if entry.prob is None:
                    out.append(
                        Violation("prob_required", f"exact_vocab entry {entry.surface!r} has no prob", **where)
                    )
                else:
                    total += entry.prob
                if entry.surface in seen:
                    out.append(
                        Violation("duplicate_entry", f"duplicate entry surface {entry.surface!r}", **where)
                    )
                seen.add(entry.surface)
            if abs(total - 1.0) > PROB_MASS_TOLERANCE:
                out.append(
                    Violation(
                        "probability_mass",
                        f"probability mass {total:.2f} outside tolerance (expected 1 within {PROB_MASS_TOLERANCE:g})",
                        **where,
                    )
                )
        else:  # mc_samples
            if block.sample_count is None:
                out.append(Violation("sample_count", "mc_samples block has no sample_count", **where))
            elif block.sample_count != len(block.entries):
                out.append(
                    Violation(
                        "sample_count",
                        f"sample_count {block.sample_count} != {len(block.entries)} entries",
                        **where,
                    )
                )
            for entry in block.entries:
                if entry.prob is not None:
                    out.append(
                        Violation(
                            "prob_forbidden", f"mc_samples entry {entry.surface!r} carries a prob", **where
                        )
                    )
        for entry in block.entries:
            out.extend(_entry_violations(entry, header, embedding_dim, where, "entry"))
        if block.target is not None:
            out.extend(_entry_violations(block.target, header, embedding_dim, where, "target"))

    return out


def validate_corpus(
    records: Sequence[CorpusRecord] | Corpus,
    header: CorpusHeader | None = None,
) -> ValidationReport:
    """Check every corpus invariant; violations are data, not errors.

    If ``records`` is a :class:`Corpus` its own header is used; otherwise a
    default header (standard marker, no declared tagset or embedding dim)
    applies unless one is passed explicitly.
    """
    if header is None:
        header = records.header if isinstance(records, Corpus) else CorpusHeader()
    report = ValidationReport()
    next_index: dict[str, int] = {}
    embedding_dim: list[int | None] = [None]
    for record in records:
        expected = next_index.get(record.doc_id, 0)
        report.violations.extend(
            _record_violations(record, header, expected, embedding_dim)
        )
        # Resync so one gap does not cascade into violations for every
        # following record of the document.
        next_index[record.doc_id] = record.word_index + 1
    return report


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def _read_lines(path: Path) -> Iterator[tuple[int, str]]:
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            stripped = line.strip()
            if stripped:
                yield line_no, stripped


def load_corpus(path: str | Path) -> Corpus:
    """Load and fully validate a corpus file.

    Records are returned in file order.  Raises :class:`CorpusFormatError`
    (with the line number) on unparseable lines and
    :class:`CorpusValidationError` (naming record and rule) on the first
    invariant violation.  Use :func:`audit_corpus_file` to collect all
    problems instead of stopping at the first.
    """
    path = Path(path)
    header: CorpusHeader | None = None
    records: list[CorpusRecord] = []
    next_index: dict[str, int] = {}
    embedding_dim: list[int | None] = [None]
    for line_no, text in _read_lines(path):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise _fail(line_no, f"invalid JSON ({exc.msg})") from exc
        if header is None:
            header = _parse_header(obj, line_no)
            continue
        record = _parse_record(obj, line_no)
        expected = next_index.get(record.doc_id, 0)
        violations = _record_violations(record, header, expected, embedding_dim, line=line_no)
        if violations:
            raise CorpusValidationError(violations[0])
        next_index[record.doc_id] = record.word_index + 1
        records.append(record)
    if header is None:
        raise CorpusFormatError(f"{path}: empty file, expected a header line")
    return Corpus(header, records)


def audit_corpus_file(path: str | Path) -> ValidationReport:
    """Lenient scan of a corpus file: collect parse and invariant violations."""
    path = Path(path)
    report = ValidationReport()
    header: CorpusHeader | None = None
    records: list[CorpusRecord] = []
    lines: list[int] = []
    for line_no, text in _read_lines(path):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            report.violations.append(Violation("parse", f"invalid JSON ({exc.msg})", line=line_no))
            continue
        if header is None:
            try:
                header = _parse_header(obj, line_no)
            except CorpusFormatError as exc:
                report.violations.append(Violation("parse", str(exc), line=line_no))
                header = CorpusHeader()
            continue
        try:
            records.append(_parse_record(obj, line_no))
            lines.append(line_no)
        except CorpusFormatError as exc:
            report.violations.append(Violation("parse", str(exc), line=line_no))
    if header is None:
        report.violations.append(Violation("parse", "empty file, expected a header line", line=1))
        return report
    next_index: dict[str, int] = {}
    embedding_dim: list[int | None] = [None]
    for record, line_no in zip(records, lines):
        expected = next_index.get(record.doc_id, 0)
        report.violations.extend(
            _record_violations(record, header, expected, embedding_dim, line=line_no)
        )
        next_index[record.doc_id] = record.word_index + 1
    return report


# ---------------------------------------------------------------------------
# Serialization (canonical form: fixed key order, compact separators)
# ---------------------------------------------------------------------------


def _dump(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def _entry_to_obj(entry: AlternativeEntry) -> dict:
    obj: dict = {"surface": entry.surface}
    if entry.prob is not None:
        obj["prob"] = entry.prob
    if entry.embedding is not None:
        obj["embedding"] = list(entry.embedding)
    if entry.pos_tag is not None:
        obj["pos_tag"] = entry.pos_tag
    return obj


def header_to_json(header: CorpusHeader) -> str:
    return _dump(
        {
            "format_version": header.format_version,
            "embedding_dim": header.embedding_dim,
            "tagset": list(header.tagset) if header.tagset is not None else None,
            "subword_space_marker": header.subword_space_marker,
        }
    )


def record_to_json(record: CorpusRecord) -> str:
    obj: dict = {
        "doc_id": record.doc_id,
        "word_index": record.word_index,
        "surface": record.surface,
        "mean_rt": record.mean_rt,
        "subwords": [{"token": sw.token, "logprob": sw.logprob} for sw in record.subwords],
    }
    block = record.alternatives
    if block is not None:
        alt: dict = {"mode": block.mode}
        if block.sample_count is not None:
            alt["sample_count"] = block.sample_count
        alt["entries"] = [_entry_to_obj(e) for e in block.entries]
        if block.target is not None:
            alt["target"] = _entry_to_obj(block.target)
        obj["alternatives"] = alt
    return _dump(obj)


def dumps_corpus(corpus: Corpus) -> str:
    lines = [header_to_json(corpus.header)]
    lines.extend(record_to_json(r) for r in corpus)
    return "\n".join(lines) + "\n"


def dump_corpus(corpus: Corpus, path: str | Path) -> None:
    Path(path).write_text(dumps_corpus(corpus), encoding="utf-8")


# ---------------------------------------------------------------------------
# Unigram tables
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class UnigramTable:
    """Case-insensitive relative unigram frequencies with OOV smoothing.

    ``laplace_one`` applies add-one smoothing over the observed vocabulary:
    seen words get (count + 1) / (N + V), unknown words 1 / (N + V).
    ``min_observed`` keeps raw relative frequencies and maps unknown words to
    the smallest observed one.
    """

    frequencies: dict[str, float]
    total_count: float
    oov_policy: str
    oov_frequency: float

    def freq(self, surface: str) -> float:
        return self.frequencies.get(surface.lower(), self.oov_frequency)

    def log_freq(self, surface: str) -> float:
        return math.log(self.freq(surface))


def load_unigram_table(path: str | Path, oov_policy: str = LAPLACE_ONE) -> UnigramTable:
    """Load a two-column (surface TAB count) table and normalize it.

    Surfaces are lowercased; duplicate surfaces after lowercasing have their
    counts summed.  Zero or negative counts are rejected.
    """
    if oov_policy not in (LAPLACE_ONE, MIN_OBSERVED):
        raise UnigramTableError(f"unknown oov_policy {oov_policy!r}")
    counts: dict[str, float] = {}
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise UnigramTableError(f"line {line_no}: expected 'surface<TAB>count', got {line!r}")
            surface, raw_count = parts
            try:
                count = float(raw_count)
            except ValueError as exc:
                raise UnigramTableError(f"line {line_no}: count {raw_count!r} is not a number") from exc
            if not math.isfinite(count) or count <= 0:
                raise UnigramTableError(f"line {line_no}: count must be positive, got {raw_count!r}")
            key = surface.lower()
            counts[key] = counts.get(key, 0.0) + count
    if not counts:
        raise UnigramTableError(f"{path}: empty unigram table")
    total = sum(counts.values())
    if oov_policy == LAPLACE_ONE:
        denom = total + len(counts)
        frequencies = {w: (c + 1.0) / denom for w, c in counts.items()}
        oov = 1.0 / denom
    else:
        frequencies = {w: c / total for w, c in counts.items()}
        oov = min(counts.values()) / total
    return UnigramTable(
        frequencies=frequencies, total_count=total, oov_policy=oov_policy, oov_frequency=oov
    )
