"""Greedy longest-match subword tokenizer with a leading-space marker.

Pieces are plain strings; a word preceded by whitespace tokenizes with the
marker glued onto its first piece ("Ġthe"), the document-initial word
without.  Concatenating a word's pieces and stripping the marker always
reproduces the surface, so exported records satisfy the corpus invariant
that subword tokens re-assemble into the word.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

SPACE_MARKER = "Ġ"
EOS = "<eos>"

# Single characters every fixture vocabulary covers; anything outside this
# set (or an explicit vocab) is an alignment failure, not a silent <unk>.
_CHARS = (
    "abcdefghijklmnopqrstuvwxyz"
    "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    "0123456789"
    ".,;:'\"?!()-"
)

# Frequent English chunks so fixture words split into realistic multi-piece
# sequences instead of raw characters.
_MERGES = (
    "th", "the", "he", "in", "ing", "er", "an", "and", "at", "on",
    "re", "ed", "es", "en", "it", "is", "or", "ar", "st", "nt", "ll",
    "read", "time", "word",
)
_MARKED_MERGES = ("th", "the", "an", "and", "in", "is", "it", "on", "or", "st", "re")


class AlignmentError(ValueError):
    """A word cannot be tokenized; carries document/word/character offsets."""

    def __init__(self, doc_id: str, word_index: int, surface: str, offset: int):
        self.doc_id = doc_id
        self.word_index = word_index
        self.surface = surface
        self.offset = offset
        detail = (
            f"no piece matches character {surface[offset]!r} at offset {offset}"
            if surface else "empty surface"
        )
        super().__init__(
            f"cannot tokenize {surface!r} at doc={doc_id}, word_index={word_index}: {detail}"
        )


def default_pieces() -> list[str]:
    pieces = [EOS]
    pieces.extend(_CHARS)
    pieces.extend(SPACE_MARKER + c for c in _CHARS)
    pieces.extend(_MERGES)
    pieces.extend(SPACE_MARKER + m for m in _MARKED_MERGES)
    return pieces


@dataclass(frozen=True, slots=True)
class SubwordTokenizer:
    """Fixed piece inventory plus the marker convention around it."""

    pieces: tuple[str, ...]
    space_marker: str = SPACE_MARKER
    eos_token: str = EOS
    _ids: dict = field(init=False, repr=False, compare=False)
    _max_len: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.pieces)) != len(self.pieces):
            raise ValueError("duplicate pieces in vocabulary")
        if self.eos_token not in self.pieces:
            raise ValueError(f"vocabulary must contain the end token {self.eos_token!r}")
        object.__setattr__(self, "_ids", {p: i for i, p in enumerate(self.pieces)})
        object.__setattr__(self, "_max_len", max(len(p) for p in self.pieces))

    def __len__(self) -> int:
        return len(self.pieces)

    @property
    def eos_id(self) -> int:
        return self._ids[self.eos_token]

    def piece_id(self, piece: str) -> int:
        return self._ids[piece]

    def is_word_initial(self, piece_id: int) -> bool:
        """True for pieces that begin a new word (marker-prefixed or EOS)."""
        piece = self.pieces[piece_id]
        return piece.startswith(self.space_marker) or piece == self.eos_token

    def strip_marker(self, piece: str) -> str:
        return piece[len(self.space_marker):] if piece.startswith(self.space_marker) else piece

    def encode_word(self, surface: str, *, word_initial: bool, doc_id: str = "?",
                    word_index: int = 0) -> list[int]:
        """Greedy longest-match pieces for one word.

        ``word_initial`` False prepends the space marker, mirroring how a
        tokenizer sees words after the first.
        """
        if not surface:
            raise AlignmentError(doc_id, word_index, surface, 0)
        text = surface if word_initial else self.space_marker + surface
        ids: list[int] = []
        i = 0
        while i < len(text):
            for j in range(min(len(text), i + self._max_len), i, -1):
                piece_id = self._ids.get(text[i:j])
                if piece_id is not None:
                    ids.append(piece_id)
                    i = j
                    break
            else:
                # report the offset in the original surface, not the marked text
                offset = max(0, i - (len(text) - len(surface)))
                raise AlignmentError(doc_id, word_index, surface, offset)
        return ids

    def decode_word(self, ids: list[int]) -> str:
        text = "".join(self.pieces[i] for i in ids)
        return self.strip_marker(text)

    def to_json(self) -> str:
        return json.dumps(
            {"pieces": list(self.pieces), "space_marker": self.space_marker,
             "eos_token": self.eos_token},
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, text: str) -> "SubwordTokenizer":
        obj = json.loads(text)
        return cls(tuple(obj["pieces"]), obj["space_marker"], obj["eos_token"])

    @classmethod
    def default(cls) -> "SubwordTokenizer":
        return cls(tuple(default_pieces()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SubwordTokenizer":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))
