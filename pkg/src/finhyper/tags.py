"""The 17 canonical financial hypernym tags and their fixed ordering.

Every ranking tie-break and every multi-seed assignment in the toolkit is
resolved against this single ordering, which is what makes pipeline output
deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

CANONICAL_TAGS: tuple[str, ...] = (
    "Bonds",
    "Forward",
    "Funds",
    "Future",
    "MMIs",
    "Option",
    "Stocks",
    "Swap",
    "Equity Index",
    "Credit Index",
    "Securities restrictions",
    "Parametric schedules",
    "Debt pricing and yields",
    "Credit Events",
    "Stock Corporation",
    "Central Securities Depository",
    "Regulatory Agency",
)

_INDEX = {name: i for i, name in enumerate(CANONICAL_TAGS)}


@dataclass(frozen=True, order=True)
class SeedTag:
    """One canonical tag together with its position in the fixed ordering."""

    canonical_index: int
    name: str

    def __post_init__(self):
        if self.name not in _INDEX:
            raise ValueError(f"unknown tag: {self.name!r}")
        if _INDEX[self.name] != self.canonical_index:
            raise ValueError(
                f"canonical_index {self.canonical_index} does not match "
                f"{self.name!r} (expected {_INDEX[self.name]})"
            )


def is_canonical(name: str) -> bool:
    return name in _INDEX


def canonical_index(name: str) -> int:
    """Position of ``name`` in the canonical ordering; raises for unknown tags."""
    try:
        return _INDEX[name]
    except KeyError:
        raise ValueError(f"unknown tag: {name!r}") from None


def seed_tag(name: str) -> SeedTag:
    return SeedTag(canonical_index(name), name)


def all_seed_tags() -> list[SeedTag]:
    """All 17 tags in canonical order."""
    return [SeedTag(i, name) for i, name in enumerate(CANONICAL_TAGS)]


def seed_tags(names) -> list[SeedTag]:
    """SeedTags for the given names, sorted into canonical order."""
    return sorted(seed_tag(n) for n in names)
