"""Word-level tokenizer with reserved sequence-start / pad / unknown ids."""
from __future__ import annotations

import re
from dataclasses import dataclass

CLS_ID = 0
PAD_ID = 1
UNK_ID = 2
RESERVED = {"[CLS]": CLS_ID, "[PAD]": PAD_ID, "[UNK]": UNK_ID}

MAX_TOKENS = 77  # sequence-start token + up to 76 content tokens after padding

_WORD_RE = re.compile(r"[a-z0-9]+")


@dataclass
class TokenSequence:
    ids: tuple[int, ...]
    valid: tuple[bool, ...]  # True at the start token and content positions

    def __post_init__(self):
        if len(self.ids) != len(self.valid):
            raise ValueError("ids and validity flags must have equal length")
        if len(self.ids) == 0 or self.ids[0] != CLS_ID:
            raise ValueError("position 0 must carry the sequence-start id")


def split_words(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation; keeps [a-z0-9] runs."""
    return _WORD_RE.findall(text.lower())


def build_vocab(corpus) -> dict[str, int]:
    """Deterministic vocabulary over a prompt corpus.

    Words are ordered by (frequency desc, lexicographic) after the reserved
    ids, so the same corpus always yields the same id assignment.
    """
    counts: dict[str, int] = {}
    seen_any = False
    for text in corpus:
        seen_any = True
        for word in split_words(text):
            counts[word] = counts.get(word, 0) + 1
    if not seen_any:
        raise ValueError("corpus must contain at least one string")
    vocab = dict(RESERVED)
    for word in sorted(counts, key=lambda w: (-counts[w], w)):
        vocab[word] = len(vocab)
    return vocab


def tokenize(text: str, vocab: dict[str, int], max_tokens: int = MAX_TOKENS) -> TokenSequence:
    """Encode text as exactly `max_tokens` ids: start token, content, padding.

    Unknown words map to the unknown id; overlong texts keep the first
    max_tokens - 1 content words.
    """
    words = split_words(text)[: max_tokens - 1]
    ids = [CLS_ID] + [vocab.get(w, UNK_ID) for w in words]
    valid = [True] * len(ids)
    while len(ids) < max_tokens:
        ids.append(PAD_ID)
        valid.append(False)
    return TokenSequence(ids=tuple(ids), valid=tuple(valid))


def vocab_size(vocab: dict[str, int]) -> int:
    return max(vocab.values()) + 1
