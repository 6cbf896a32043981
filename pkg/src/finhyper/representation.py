"""Sentence-vector ingestion and sentence+word fusion into 768-d features.

Word vectors (dimension <= 768, typically 300) are zero-padded up to the
768-d sentence dimension and added element-wise, so the combined vector
stays at 768 and components past the word dimension always equal the
sentence vector's components exactly.
"""

from __future__ import annotations

import enum
import logging

import numpy as np

from .embeddings import VectorTable, load_w2v, save_w2v, word_vector

log = logging.getLogger(__name__)

SENTENCE_DIM = 768
WORD_DIM = 300

# Separator used in the store file format: internal spaces of a text key
# are replaced with U+2581 so the key fits the one-token word2vec layout.
_SPACE_MARK = "▁"


class FeatureMode(str, enum.Enum):
    """Feature construction mode; sentence_only and fused are the paper's
    first and second submitted systems."""

    SENTENCE_ONLY = "sentence_only"
    WORD_ONLY = "word_only"
    FUSED = "fused"


def pad(v, target: int) -> np.ndarray:
    """Zero-pad a vector on the right up to ``target`` components."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("pad expects a 1-d vector")
    if v.shape[0] > target:
        raise ValueError(f"cannot pad dimension {v.shape[0]} down to {target}")
    out = np.zeros(target)
    out[: v.shape[0]] = v
    return out


def fuse(sent, word) -> np.ndarray:
    """Element-wise sum of a 768-d sentence vector and a padded word vector."""
    sent = np.asarray(sent, dtype=np.float64)
    if sent.shape != (SENTENCE_DIM,):
        raise ValueError(f"sentence vector must have dimension {SENTENCE_DIM}, got {sent.shape}")
    return sent + pad(word, SENTENCE_DIM)


def normalize_key(text: str) -> str:
    return text.strip().lower()


class SentenceVectorStore:
    """Lowercased text key -> 768-d vector, loaded from an external encoder.

    The same key normalization (strip + lowercase) is applied at load and
    at query time.
    """

    dimension = SENTENCE_DIM

    def __init__(self, mapping: dict[str, np.ndarray]):
        self._table: dict[str, np.ndarray] = {}
        for key, vec in mapping.items():
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (SENTENCE_DIM,):
                raise ValueError(
                    f"sentence vector for {key!r} has shape {vec.shape}, "
                    f"expected ({SENTENCE_DIM},)"
                )
            self._table[normalize_key(key)] = vec

    def __contains__(self, text) -> bool:
        return normalize_key(text) in self._table

    def __len__(self) -> int:
        return len(self._table)

    def keys(self) -> list[str]:
        return list(self._table)

    def vector(self, text: str) -> np.ndarray:
        key = normalize_key(text)
        if key not in self._table:
            raise KeyError(f"no sentence vector for {text!r}")
        return self._table[key].copy()

    def save(self, path, header_comment: str | None = None) -> None:
        keys = sorted(self._table)
        encoded = [k.replace(" ", _SPACE_MARK) for k in keys]
        vectors = np.stack([self._table[k] for k in keys]) if keys else np.zeros((0, SENTENCE_DIM))
        table = VectorTable(SENTENCE_DIM, encoded, vectors)
        save_w2v(table, path, header_comment=header_comment)

    @classmethod
    def load(cls, path) -> "SentenceVectorStore":
        table = load_w2v(path, key_decode=lambda token: token.replace(_SPACE_MARK, " "))
        if table.dimension != SENTENCE_DIM:
            raise ValueError(
                f"{path}: sentence store must have dimension {SENTENCE_DIM}, "
                f"got {table.dimension}"
            )
        return cls({k: table.vectors[i] for i, k in enumerate(table.vocab)})


def term_word_part(term: str, words: VectorTable) -> np.ndarray:
    """Sum of word vectors over the whitespace tokens of the term."""
    part = np.zeros(words.dimension)
    for token in term.lower().split():
        part += word_vector(words, token)
    return part


def term_embedding(
    term: str,
    mode: FeatureMode,
    sents: SentenceVectorStore | None = None,
    words: VectorTable | None = None,
    *,
    missing_sentence_fallback: bool = False,
    per_word_sentence: bool = False,
) -> np.ndarray:
    """768-d feature vector for a term under the given mode.

    fused = sentence vector + padded sum of the term's word vectors; the
    sentence vector enters once regardless of token count. With
    ``per_word_sentence`` the alternative sum-over-tokens form (sentence
    re-added per token) is used instead. Missing sentence vectors raise
    unless ``missing_sentence_fallback`` substitutes the zero vector.
    """
    mode = FeatureMode(mode)

    def sentence_part():
        if sents is None:
            raise ValueError(f"mode {mode.value} requires a sentence vector store")
        try:
            return sents.vector(term)
        except KeyError:
            if missing_sentence_fallback:
                log.warning("no sentence vector for %r; substituting zeros", term)
                return np.zeros(SENTENCE_DIM)
            raise

    if mode is FeatureMode.SENTENCE_ONLY:
        return sentence_part()

    if words is None:
        raise ValueError(f"mode {mode.value} requires a word vector table")
    word_part = term_word_part(term, words)
    if mode is FeatureMode.WORD_ONLY:
        return pad(word_part, SENTENCE_DIM)
    if per_word_sentence:
        sent = sentence_part()
        tokens = term.lower().split()
        out = np.zeros(SENTENCE_DIM)
        for token in tokens:
            out += fuse(sent, word_vector(words, token))
        return out
    return fuse(sentence_part(), word_part)
