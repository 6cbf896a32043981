"""Text preprocessing, similarity-pair construction, and dataset splits.

Segmentation is deliberately naive: lowercase, then split on newline and
the terminal punctuation set ``. ! ? ;``. Abbreviations are split apart
("U.S." -> "u", "s"), a documented artifact of the rule. The delimiter set
is configurable via ``DELIMITERS``.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field

from .ontology import DefinitionCorpus
from .tags import SeedTag

DELIMITERS = ".!?;"
_SPLIT_RE = re.compile(f"[{re.escape(DELIMITERS)}\n]")

# Settings the external sentence-encoder trainer is expected to use on the
# exported pairs.
RECOMMENDED_TRAINER_SETTINGS = {"train_batch_size": 8, "epochs": 4, "split": "70/10/20"}


def preprocess(raw: str) -> list[str]:
    """Lowercase and segment text into trimmed, non-empty sentences."""
    segments = _SPLIT_RE.split(raw.lower())
    return [s for s in (seg.strip() for seg in segments) if s]


@dataclass
class PairSet:
    """(sentence, tag, score) triples for external sentence-encoder training.

    Every sentence is duplicated once per tag; the pair carrying the
    sentence's own tag scores ``pos``, all others ``neg``.
    """

    pairs: list[tuple[str, str, float]]
    metadata: dict = field(default_factory=lambda: dict(RECOMMENDED_TRAINER_SETTINGS))

    def __len__(self) -> int:
        return len(self.pairs)

    def positives(self) -> list[tuple[str, str, float]]:
        scores = {s for _, _, s in self.pairs}
        if not scores:
            return []
        pos = max(scores)
        return [p for p in self.pairs if p[2] == pos]


def build_pairs(
    corpus: DefinitionCorpus,
    tags: list[SeedTag],
    pos: float = 0.8,
    neg: float = 0.3,
) -> PairSet:
    """Expand each corpus entry into one pair per tag.

    Order is deterministic: corpus order, then canonical tag order. An
    empty corpus yields an empty pair set.
    """
    if not tags:
        raise ValueError("tags must be non-empty")
    if not pos > neg:
        raise ValueError(f"pos must exceed neg (got pos={pos}, neg={neg})")
    ordered = sorted(tags)
    pairs = []
    for entry in corpus.entries:
        for sentence in preprocess(entry.text):
            for tag in ordered:
                score = pos if tag.name == entry.tag.name else neg
                pairs.append((sentence, tag.name, score))
    return PairSet(pairs=pairs)


@dataclass
class SplitSpec:
    """Train/dev/test fractions plus the shuffle seed."""

    train_fraction: float = 0.7
    dev_fraction: float = 0.1
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        fractions = (self.train_fraction, self.dev_fraction, self.test_fraction)
        if any(f < 0 for f in fractions):
            raise ValueError("fractions must be >= 0")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ValueError(f"fractions must sum to 1 (got {sum(fractions)})")


def split(items: list, spec: SplitSpec) -> tuple[list, list, list]:
    """Deterministic shuffle under ``spec.seed``, then contiguous partition.

    Part sizes are round(n*fraction), adjusted so the three parts exactly
    partition the input.
    """
    shuffled = list(items)
    random.Random(spec.seed).shuffle(shuffled)
    n = len(shuffled)
    n_train = min(round(n * spec.train_fraction), n)
    n_dev = min(round(n * spec.dev_fraction), n - n_train)
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_dev],
        shuffled[n_train + n_dev :],
    )


PAIRS_HEADER = "sentence\ttag\tscore"


def save_pairs(pairset: PairSet, path, header_comment: str | None = None) -> None:
    """Write the three-column pair TSV with a ``#metadata`` settings line."""
    meta = " ".join(f"{k}={v}" for k, v in sorted(pairset.metadata.items()))
    with open(path, "w", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write(f"#metadata {meta}\n")
        fh.write(PAIRS_HEADER + "\n")
        for sentence, tag, score in pairset.pairs:
            fh.write(f"{sentence}\t{tag}\t{score:g}\n")


def load_pairs(path) -> PairSet:
    pairs = []
    metadata = {}
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    body = []
    for line in lines:
        if line.startswith("#metadata"):
            for item in line.split()[1:]:
                key, _, value = item.partition("=")
                metadata[key] = value
        elif line.startswith("#") or not line:
            continue
        else:
            body.append(line)
    if body and body[0] == PAIRS_HEADER:
        body = body[1:]
    for lineno, line in enumerate(body, start=1):
        cells = line.split("\t")
        if len(cells) != 3:
            raise ValueError(f"pairs line {lineno}: expected 3 columns, got {len(cells)}")
        pairs.append((cells[0], cells[1], float(cells[2])))
    return PairSet(pairs=pairs, metadata=metadata or dict(RECOMMENDED_TRAINER_SETTINGS))


def save_split(items: list[str], spec: SplitSpec, base_path) -> tuple[str, str, str]:
    """Split text lines and write them to ``base_path`` + .train/.dev/.test."""
    train, dev, test = split(items, spec)
    paths = []
    for suffix, part in ((".train", train), (".dev", dev), (".test", test)):
        path = f"{base_path}{suffix}"
        with open(path, "w", encoding="utf-8") as fh:
            for item in part:
                fh.write(f"{item}\n")
        paths.append(path)
    return tuple(paths)
