"""Deterministic rule-based POS tagger with a named tagset.

Closed-class lexicon first, then suffix heuristics, NOUN as the open-class
default.  Accuracy is beside the point here: exports need a total,
reproducible surface -> tag function whose tagset name travels in the
corpus header, so downstream similarity kernels can rely on membership.
"""

from __future__ import annotations

TAGSET_NAME = "upos-lite-v1"

TAGSET = ("ADJ", "ADP", "ADV", "CONJ", "DET", "NOUN", "NUM", "PRON", "PUNCT", "VERB", "X")

_LEXICON = {
    "DET": {"a", "an", "the", "this", "that", "these", "those", "every", "some", "no"},
    "PRON": {"i", "you", "he", "she", "it", "we", "they", "me", "him", "her",
             "us", "them", "who", "what", "which", "mine", "yours", "his", "hers"},
    "ADP": {"in", "on", "at", "by", "for", "with", "from", "to", "of", "over",
            "under", "into", "onto", "about", "between", "through"},
    "CONJ": {"and", "or", "but", "nor", "so", "yet", "because", "although",
             "while", "if", "when"},
    "VERB": {"is", "are", "was", "were", "be", "been", "am", "do", "does", "did",
             "has", "have", "had", "can", "could", "will", "would", "may",
             "might", "shall", "should", "must"},
    "ADV": {"not", "very", "quite", "too", "also", "now", "then", "here",
            "there", "never", "always", "often", "soon"},
}

_SUFFIX_RULES: tuple[tuple[str, str], ...] = (
    ("ly", "ADV"),
    ("ing", "VERB"),
    ("ed", "VERB"),
    ("ize", "VERB"),
    ("ise", "VERB"),
    ("ous", "ADJ"),
    ("ful", "ADJ"),
    ("ive", "ADJ"),
    ("able", "ADJ"),
    ("ible", "ADJ"),
    ("al", "ADJ"),
    ("est", "ADJ"),
    ("tion", "NOUN"),
    ("ment", "NOUN"),
    ("ness", "NOUN"),
    ("ity", "NOUN"),
    ("er", "NOUN"),
    ("ism", "NOUN"),
)

_WORD_TAGS = {w: tag for tag, words in _LEXICON.items() for w in words}


def tag_word(surface: str) -> str:
    """Tag one surface form; total over arbitrary strings."""
    if not surface:
        return "X"
    lowered = surface.lower()
    if all(not c.isalnum() for c in surface):
        return "PUNCT"
    if lowered.replace(",", "").replace(".", "").isdigit():
        return "NUM"
    if not any(c.isalpha() for c in surface):
        return "X"
    tag = _WORD_TAGS.get(lowered)
    if tag is not None:
        return tag
    for suffix, suffix_tag in _SUFFIX_RULES:
        # suffix must leave a stem behind, else "ed" itself would be a VERB
        if lowered.endswith(suffix) and len(lowered) > len(suffix) + 1:
            return suffix_tag
    return "NOUN"
