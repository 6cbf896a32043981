"""Skip-gram negative-sampling word vectors with optional subword n-grams.

Two interchangeable 300-d models over the same trainer: plain skip-gram
(one input vector per word) and the subword variant, where a word's input
representation is its own vector plus the vectors of all hashed character
n-grams of ``<word>`` (boundary markers included, duplicates kept). The
subword composition also serves out-of-vocabulary words at query time.

Training is single-threaded and bit-reproducible under a fixed seed by
default; an optional multi-worker mode performs lock-free updates and is
then only statistically reproducible.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

FNV_OFFSET_BASIS = 0x811C9DC5
FNV_PRIME = 0x01000193


def fnv1a_32(data: bytes) -> int:
    """32-bit FNV-1a hash."""
    h = FNV_OFFSET_BASIS
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & 0xFFFFFFFF
    return h


def char_ngrams(word: str, ngram_min: int, ngram_max: int) -> list[str]:
    """All character n-grams of ``<word>``, duplicates kept, in scan order."""
    wrapped = f"<{word}>"
    grams = []
    for n in range(ngram_min, ngram_max + 1):
        if n > len(wrapped):
            break
        for i in range(len(wrapped) - n + 1):
            grams.append(wrapped[i : i + n])
    return grams


def ngram_bucket_ids(word: str, ngram_min: int, ngram_max: int, buckets: int) -> np.ndarray:
    """Hashed bucket row for each n-gram of the word, in n-gram order."""
    grams = char_ngrams(word, ngram_min, ngram_max)
    return np.array([fnv1a_32(g.encode("utf-8")) % buckets for g in grams], dtype=np.int64)


@dataclass
class EmbeddingConfig:
    dimension: int = 300
    window: int = 5
    negatives: int = 5
    ngram_min: int = 3
    ngram_max: int = 6
    min_count: int = 5
    epochs: int = 5
    learning_rate: float = 0.05
    seed: int = 1
    subwords_enabled: bool = True
    buckets: int = 2_000_000
    workers: int = 1

    def __post_init__(self):
        if self.dimension <= 0:
            raise ValueError("dimension must be > 0")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.ngram_min > self.ngram_max:
            raise ValueError("ngram_min must be <= ngram_max")
        if self.ngram_min < 1:
            raise ValueError("ngram_min must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.negatives < 0:
            raise ValueError("negatives must be >= 0")
        if self.min_count < 1 or self.epochs < 1 or self.buckets < 1 or self.workers < 1:
            raise ValueError("min_count, epochs, buckets and workers must be >= 1")


@dataclass
class SubwordState:
    """Raw parameter matrices kept alongside the composed lookup vectors."""

    word_own: np.ndarray
    bucket_vectors: np.ndarray
    ngram_min: int
    ngram_max: int
    buckets: int


class VectorTable:
    """Token -> fixed-dimension vector map, with subword OOV composition."""

    def __init__(self, dimension, vocab, vectors, subword: SubwordState | None = None):
        self.dimension = int(dimension)
        self.vocab = list(vocab)
        self.index = {w: i for i, w in enumerate(self.vocab)}
        self.vectors = np.asarray(vectors, dtype=np.float64)
        self.subword = subword
        if self.vectors.shape != (len(self.vocab), self.dimension):
            raise ValueError(
                f"vector matrix shape {self.vectors.shape} does not match "
                f"({len(self.vocab)}, {self.dimension})"
            )
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("vector table contains non-finite components")

    def __contains__(self, word) -> bool:
        return word in self.index

    def __len__(self) -> int:
        return len(self.vocab)

    def keys(self) -> list[str]:
        return list(self.vocab)

    def vector_with_status(self, word: str) -> tuple[np.ndarray, str]:
        """Vector plus how it was obtained: 'stored', 'subword' or 'zero'."""
        i = self.index.get(word)
        if i is not None:
            return self.vectors[i].copy(), "stored"
        if self.subword is not None:
            ids = ngram_bucket_ids(
                word, self.subword.ngram_min, self.subword.ngram_max, self.subword.buckets
            )
            if len(ids):
                return self.subword.bucket_vectors[ids].sum(axis=0), "subword"
        return np.zeros(self.dimension), "zero"

    def vector(self, word: str) -> np.ndarray:
        return self.vector_with_status(word)[0]


def word_vector(table: VectorTable, word: str) -> np.ndarray:
    """Total lookup: stored vector, subword composition, or the zero vector."""
    return table.vector(word)


def _sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _log_sigmoid(x):
    # log sigma(x) = min(x, 0) - log(1 + exp(-|x|)), overflow-free
    x = np.asarray(x, dtype=np.float64)
    return np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))


def pair_objective(input_vec, target_vec, noise_vecs) -> float:
    """Negative-sampling loss for one (input, target, noise set) example.

    -log sigma(t.h) - sum_i log sigma(-n_i.h). The analytic gradients in
    :func:`pair_gradients` are checked against finite differences of this
    function.
    """
    input_vec = np.asarray(input_vec, dtype=np.float64)
    target_vec = np.asarray(target_vec, dtype=np.float64)
    noise_vecs = np.asarray(noise_vecs, dtype=np.float64).reshape(-1, input_vec.shape[0])
    s_pos = float(target_vec @ input_vec)
    s_neg = noise_vecs @ input_vec
    return float(-_log_sigmoid(s_pos) - _log_sigmoid(-s_neg).sum())


def pair_gradients(input_vec, target_vec, noise_vecs):
    """Gradients of :func:`pair_objective` w.r.t. input, target and noise rows."""
    input_vec = np.asarray(input_vec, dtype=np.float64)
    target_vec = np.asarray(target_vec, dtype=np.float64)
    noise_vecs = np.asarray(noise_vecs, dtype=np.float64).reshape(-1, input_vec.shape[0])
    a_pos = float(_sigmoid(target_vec @ input_vec)) - 1.0
    a_neg = _sigmoid(noise_vecs @ input_vec)
    g_input = a_pos * target_vec + a_neg @ noise_vecs
    g_target = a_pos * input_vec
    g_noise = a_neg[:, None] * input_vec[None, :]
    return g_input, g_target, g_noise


def _build_vocab(sentences, min_count):
    counts = Counter(tok for sent in sentences for tok in sent)
    vocab = sorted((w for w, c in counts.items() if c >= min_count), key=lambda w: (-counts[w], w))
    if not vocab:
        raise ValueError(f"empty vocabulary after min_count={min_count} filtering")
    return vocab, np.array([counts[w] for w in vocab], dtype=np.float64)


class _NoiseSampler:
    """Unigram^(3/4) sampler over the vocabulary."""

    def __init__(self, counts):
        self.cum = np.cumsum(counts**0.75)
        self.total = float(self.cum[-1])

    def draw(self, rng, exclude: int, k: int) -> list[int]:
        # Resampling on a hit of `exclude` cannot terminate for a
        # single-word vocabulary, so give up after a bounded number of tries.
        out = []
        attempts = 0
        limit = 10 * (k + 1)
        while len(out) < k and attempts < limit:
            attempts += 1
            i = int(np.searchsorted(self.cum, rng.random() * self.total, side="right"))
            i = min(i, len(self.cum) - 1)
            if i != exclude:
                out.append(i)
        return out


def train(corpus_lines, config: EmbeddingConfig) -> VectorTable:
    """Train a vector table on an iterable of whitespace-tokenized lines.

    Each line is one sentence; context windows never cross lines. The
    learning rate decays linearly to a small floor over all updates.
    """
    sentences = [line.split() for line in corpus_lines]
    sentences = [s for s in sentences if s]
    vocab, counts = _build_vocab(sentences, config.min_count)
    index = {w: i for i, w in enumerate(vocab)}
    encoded = [[index[t] for t in s if t in index] for s in sentences]
    encoded = [s for s in encoded if s]

    d = config.dimension
    rng = np.random.default_rng(config.seed)
    if config.subwords_enabled:
        word_own = (rng.random((len(vocab), d)) - 0.5) / d
        bucket_vectors = (rng.random((config.buckets, d)) - 0.5) / d
        ngram_ids = [
            ngram_bucket_ids(w, config.ngram_min, config.ngram_max, config.buckets) for w in vocab
        ]
        in_vectors = None
    else:
        word_own = None
        bucket_vectors = None
        ngram_ids = None
        in_vectors = (rng.random((len(vocab), d)) - 0.5) / d
    out_vectors = np.zeros((len(vocab), d))

    sampler = _NoiseSampler(counts)
    total_updates = max(1, config.epochs * sum(len(s) for s in encoded))
    state = {"updates": 0}

    def run_pass(sent_subset, pass_rng):
        for sent in sent_subset:
            for pos, center in enumerate(sent):
                state["updates"] += 1
                alpha = config.learning_rate * max(
                    1.0 - state["updates"] / total_updates, 1e-4
                )
                if config.subwords_enabled:
                    ids = ngram_ids[center]
                    h = word_own[center] + bucket_vectors[ids].sum(axis=0)
                else:
                    h = in_vectors[center]
                b = int(pass_rng.integers(1, config.window + 1))
                lo, hi = max(0, pos - b), min(len(sent), pos + b + 1)
                for ctx_pos in range(lo, hi):
                    if ctx_pos == pos:
                        continue
                    target = sent[ctx_pos]
                    negs = sampler.draw(pass_rng, target, config.negatives)
                    noise = out_vectors[negs] if negs else np.zeros((0, d))
                    loss = pair_objective(h, out_vectors[target], noise)
                    if not np.isfinite(loss):
                        raise ValueError(f"non-finite loss at update step {state['updates']}")
                    g_input, g_target, g_noise = pair_gradients(h, out_vectors[target], noise)
                    out_vectors[target] -= alpha * g_target
                    if negs:
                        np.add.at(out_vectors, negs, -alpha * g_noise)
                    if config.subwords_enabled:
                        word_own[center] -= alpha * g_input
                        if len(ids):
                            np.add.at(bucket_vectors, ids, -alpha * g_input)
                    else:
                        in_vectors[center] -= alpha * g_input

    if config.workers == 1:
        for _ in range(config.epochs):
            run_pass(encoded, rng)
    else:
        # Lock-free racing updates; only statistically reproducible.
        from concurrent.futures import ThreadPoolExecutor

        seeds = np.random.SeedSequence(config.seed).spawn(config.workers)
        chunks = [encoded[i :: config.workers] for i in range(config.workers)]
        for _ in range(config.epochs):
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                list(
                    pool.map(
                        run_pass, chunks, [np.random.default_rng(s) for s in seeds]
                    )
                )

    if config.subwords_enabled:
        composed = np.empty((len(vocab), d))
        for i in range(len(vocab)):
            composed[i] = word_own[i] + bucket_vectors[ngram_ids[i]].sum(axis=0)
        subword = SubwordState(
            word_own=word_own,
            bucket_vectors=bucket_vectors,
            ngram_min=config.ngram_min,
            ngram_max=config.ngram_max,
            buckets=config.buckets,
        )
        return VectorTable(d, vocab, composed, subword=subword)
    return VectorTable(d, vocab, in_vectors)


def _sidecar_path(path) -> str:
    return f"{path}.subword.npz"


def save_w2v(table: VectorTable, path, header_comment: str | None = None) -> None:
    """Write the table in word2vec text format (6 decimal places).

    Subword tables additionally persist a sidecar ``.subword.npz`` with the
    raw word-own and n-gram bucket matrices, so reloading is exact.
    """
    for token in table.vocab:
        if any(c.isspace() for c in token):
            raise ValueError(f"token contains whitespace and cannot be serialized: {token!r}")
    with open(path, "w", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write(f"{len(table.vocab)} {table.dimension}\n")
        for token, row in zip(table.vocab, table.vectors):
            fh.write(token + " " + " ".join(f"{x:.6f}" for x in row) + "\n")
    if table.subword is not None:
        sw = table.subword
        meta = {
            "ngram_min": sw.ngram_min,
            "ngram_max": sw.ngram_max,
            "buckets": sw.buckets,
            "dimension": table.dimension,
        }
        np.savez_compressed(
            _sidecar_path(path),
            word_own=sw.word_own,
            bucket_vectors=sw.bucket_vectors,
            vocab=np.array(table.vocab, dtype=object),
            meta=json.dumps(meta),
        )


def load_w2v(path, key_decode=None) -> VectorTable:
    """Load a word2vec text file; restores subword state from the sidecar.

    Leading ``#`` comment lines are tolerated, so both plain third-party
    files and files written with a provenance header load. ``key_decode``
    optionally transforms each token (used for sentence-vector keys).
    """
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    # Comments are only tolerated before the header; a body line may
    # legitimately start with '#' (it is a vocabulary token).
    start = 0
    while start < len(lines) and (not lines[start] or lines[start].startswith("#")):
        start += 1
    if start >= len(lines):
        raise ValueError(f"{path}: empty vector file")
    header = lines[start].split()
    if len(header) != 2:
        raise ValueError(f"{path}: malformed header {lines[start]!r}")
    declared, dim = int(header[0]), int(header[1])
    rows = [ln for ln in lines[start + 1 :] if ln]
    if len(rows) != declared:
        raise ValueError(f"{path}: header declares {declared} rows but file has {len(rows)}")
    vocab = []
    vectors = np.empty((declared, dim))
    for i, row in enumerate(rows):
        cells = row.split(" ")
        token, values = cells[0], cells[1:]
        if len(values) != dim:
            raise ValueError(
                f"{path}: row {i + 1} ({token!r}) has {len(values)} components, expected {dim}"
            )
        vocab.append(key_decode(token) if key_decode else token)
        vectors[i] = [float(v) for v in values]

    subword = None
    try:
        with np.load(_sidecar_path(path), allow_pickle=True) as npz:
            meta = json.loads(str(npz["meta"]))
            sidecar_vocab = [str(w) for w in npz["vocab"]]
            if sidecar_vocab != vocab:
                raise ValueError(f"{path}: sidecar vocabulary does not match the text file")
            subword = SubwordState(
                word_own=npz["word_own"],
                bucket_vectors=npz["bucket_vectors"],
                ngram_min=int(meta["ngram_min"]),
                ngram_max=int(meta["ngram_max"]),
                buckets=int(meta["buckets"]),
            )
    except FileNotFoundError:
        pass

    if subword is not None:
        # Recompose exactly from the raw matrices instead of the 6-decimal text.
        for i, w in enumerate(vocab):
            ids = ngram_bucket_ids(w, subword.ngram_min, subword.ngram_max, subword.buckets)
            vectors[i] = subword.word_own[i] + subword.bucket_vectors[ids].sum(axis=0)
    return VectorTable(dim, vocab, vectors, subword=subword)
