"""Ontology dump loading and depth-limited definition mining.

The dump is UTF-8 JSONL, one concept per line with keys ``iri``, ``label``,
``definition``, ``explanatory_note``, ``generated_description``,
``synonyms``, ``subclasses``, ``instances`` (absent keys mean empty).
Mining walks the subclass graph (and optionally instance links) from the
seed tags, stops two levels below the seeds, and emits every non-empty
textual property of every visited concept as one corpus entry.

A concept reachable from several seeds is assigned to the seed at minimal
link distance, ties broken by the smaller canonical tag index, so the
output depends only on the graph, never on record order.
"""

from __future__ import annotations

import json
import logging
import time
import urllib.request
from collections import deque
from dataclasses import dataclass, field

from .tags import SeedTag

log = logging.getLogger(__name__)

# Textual properties collected from each concept, in emission order.
PROPERTIES = ("definition", "explanatory_note", "generated_description", "synonym")
_PROPERTY_RANK = {p: i for i, p in enumerate(PROPERTIES)}


@dataclass
class OntologyRecord:
    """One concept page: label, textual properties, and outgoing links."""

    iri: str
    label: str
    definition: str = ""
    explanatory_note: str = ""
    generated_description: str = ""
    synonyms: list[str] = field(default_factory=list)
    subclasses: list[str] = field(default_factory=list)
    instances: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class MinedDefinition:
    """One (text, tag) pair mined from a concept at a given depth."""

    text: str
    tag: SeedTag
    depth: int
    source_iri: str
    property: str

    def __post_init__(self):
        if self.property not in _PROPERTY_RANK:
            raise ValueError(f"unknown property: {self.property!r}")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")


@dataclass
class DefinitionCorpus:
    """Mined corpus entries plus per-tag counts and assignment conflicts."""

    entries: list[MinedDefinition]
    conflicts: list[tuple[str, list[str]]] = field(default_factory=list)

    @property
    def per_tag_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for e in self.entries:
            counts[e.tag.name] = counts.get(e.tag.name, 0) + 1
        return counts

    def __len__(self) -> int:
        return len(self.entries)

    def texts(self) -> list[str]:
        return [e.text for e in self.entries]


class DumpFormatError(ValueError):
    """Raised for a malformed or inconsistent ontology dump."""


def _parse_record(obj: dict, lineno: int) -> OntologyRecord:
    if not isinstance(obj, dict):
        raise DumpFormatError(f"line {lineno}: record is not an object")
    iri = obj.get("iri")
    label = obj.get("label")
    if not isinstance(iri, str) or not iri:
        raise DumpFormatError(f"line {lineno}: missing or empty 'iri'")
    if not isinstance(label, str):
        raise DumpFormatError(f"line {lineno}: missing 'label'")

    def _text(key):
        value = obj.get(key) or ""
        if not isinstance(value, str):
            raise DumpFormatError(f"line {lineno}: {key!r} must be a string")
        return value

    def _texts(key):
        value = obj.get(key) or []
        if not isinstance(value, list) or any(not isinstance(v, str) for v in value):
            raise DumpFormatError(f"line {lineno}: {key!r} must be an array of strings")
        return list(value)

    return OntologyRecord(
        iri=iri,
        label=label,
        definition=_text("definition"),
        explanatory_note=_text("explanatory_note"),
        generated_description=_text("generated_description"),
        synonyms=_texts("synonyms"),
        subclasses=_texts("subclasses"),
        instances=_texts("instances"),
    )


def dangling_references(records: list[OntologyRecord]) -> list[tuple[str, str]]:
    """(source iri, referenced iri) pairs that do not resolve in the dump."""
    known = {r.iri for r in records}
    dangling = []
    for r in records:
        for ref in list(r.subclasses) + list(r.instances):
            if ref not in known:
                dangling.append((r.iri, ref))
    return dangling


def load_dump(path) -> list[OntologyRecord]:
    """Load a JSONL ontology dump.

    Malformed lines and duplicate iris raise :class:`DumpFormatError` with
    the offending line number; dangling subclass/instance references are
    only reported via the module logger (see :func:`dangling_references`).
    """
    records: list[OntologyRecord] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DumpFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            record = _parse_record(obj, lineno)
            if record.iri in seen:
                raise DumpFormatError(
                    f"line {lineno}: duplicate iri {record.iri!r} "
                    f"(first seen on line {seen[record.iri]})"
                )
            seen[record.iri] = lineno
            records.append(record)
    for source, ref in dangling_references(records):
        log.warning("dangling reference: %s -> %s", source, ref)
    return records


def _resolve_seed(records_by_iri: dict[str, OntologyRecord], seed: SeedTag) -> str:
    matches = [r.iri for r in records_by_iri.values() if r.label.lower() == seed.name.lower()]
    if not matches:
        raise ValueError(f"seed tag {seed.name!r} does not resolve to any record label")
    if len(matches) > 1:
        raise ValueError(
            f"seed tag {seed.name!r} resolves to multiple records: {sorted(matches)}"
        )
    return matches[0]


def _bfs_depths(
    records_by_iri: dict[str, OntologyRecord], start: str, max_depth: int, expand_instances: bool
) -> dict[str, int]:
    """Link distance from ``start`` for every record within ``max_depth``."""
    depths = {start: 0}
    queue = deque([start])
    while queue:
        iri = queue.popleft()
        d = depths[iri]
        if d == max_depth:
            continue
        record = records_by_iri.get(iri)
        if record is None:
            continue
        links = list(record.subclasses)
        if expand_instances:
            links += list(record.instances)
        for ref in links:
            if ref in records_by_iri and ref not in depths:
                depths[ref] = d + 1
                queue.append(ref)
    return depths


def mine(
    records: list[OntologyRecord],
    seeds: list[SeedTag],
    max_depth: int = 2,
    expand_instances: bool = False,
) -> DefinitionCorpus:
    """Walk the dump from the seeds and collect a definition/tag corpus.

    Every record within ``max_depth`` links of a seed contributes each of
    its non-empty textual properties (each synonym separately) tagged with
    its assigned seed. Cycles are handled by the visited set.
    """
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    records_by_iri = {r.iri: r for r in records}

    # Distance map per seed, then reduce to (min depth, min canonical index).
    per_seed = {}
    for seed in seeds:
        start = _resolve_seed(records_by_iri, seed)
        per_seed[seed] = _bfs_depths(records_by_iri, start, max_depth, expand_instances)

    assignment: dict[str, tuple[int, SeedTag]] = {}
    candidates: dict[str, list[str]] = {}
    for seed in sorted(seeds):
        for iri, depth in per_seed[seed].items():
            candidates.setdefault(iri, []).append(seed.name)
            best = assignment.get(iri)
            if best is None or depth < best[0]:
                assignment[iri] = (depth, seed)

    conflicts = []
    for iri in sorted(candidates):
        if len(candidates[iri]) > 1:
            conflicts.append((iri, candidates[iri]))
            log.info(
                "record %s reachable from multiple seeds %s; assigned to %s",
                iri,
                candidates[iri],
                assignment[iri][1].name,
            )

    entries = []
    for iri, (depth, seed) in assignment.items():
        record = records_by_iri[iri]
        for prop in ("definition", "explanatory_note", "generated_description"):
            text = getattr(record, prop).strip()
            if text:
                entries.append(MinedDefinition(text, seed, depth, iri, prop))
        seen_synonyms = set()
        for synonym in record.synonyms:
            text = synonym.strip()
            if text and text not in seen_synonyms:
                seen_synonyms.add(text)
                entries.append(MinedDefinition(text, seed, depth, iri, "synonym"))

    entries.sort(
        key=lambda e: (
            e.tag.canonical_index,
            e.depth,
            e.source_iri,
            _PROPERTY_RANK[e.property],
            e.text,
        )
    )
    return DefinitionCorpus(entries=entries, conflicts=conflicts)


CORPUS_HEADER = "text\ttag\tdepth\tsource_iri\tproperty"


def _clean_cell(text: str) -> str:
    return text.replace("\t", " ").replace("\n", " ").replace("\r", " ")


def save_corpus(corpus: DefinitionCorpus, path, header_comment: str | None = None) -> None:
    """Write the corpus TSV (tabs/newlines inside text are blanked)."""
    with open(path, "w", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write(CORPUS_HEADER + "\n")
        for e in corpus.entries:
            fh.write(
                f"{_clean_cell(e.text)}\t{e.tag.name}\t{e.depth}\t{e.source_iri}\t{e.property}\n"
            )


def load_corpus(path) -> DefinitionCorpus:
    from .tags import seed_tag

    entries = []
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    body = [ln for ln in lines if ln and not ln.startswith("#")]
    if not body:
        return DefinitionCorpus(entries=[])
    if body[0] != CORPUS_HEADER:
        raise DumpFormatError(f"unexpected corpus header: {body[0]!r}")
    for lineno, line in enumerate(body[1:], start=2):
        cells = line.split("\t")
        if len(cells) != 5:
            raise DumpFormatError(f"line {lineno}: expected 5 columns, got {len(cells)}")
        text, tag_name, depth, iri, prop = cells
        entries.append(MinedDefinition(text, seed_tag(tag_name), int(depth), iri, prop))
    return DefinitionCorpus(entries=entries)


def _default_http_get(url: str, timeout: float = 30.0) -> str:
    with urllib.request.urlopen(url, timeout=timeout) as resp:
        return resp.read().decode("utf-8", errors="replace")


def _page_to_record(iri: str, label: str, page: str) -> OntologyRecord:
    """Very naive section scrape; the live page layout is explicitly a non-goal."""
    import re

    def section(name):
        m = re.search(rf"{name}\s*[:\n]\s*(.+)", page, flags=re.IGNORECASE)
        return m.group(1).strip() if m else ""

    record = OntologyRecord(
        iri=iri,
        label=label,
        definition=section("Definition"),
        explanatory_note=section("Explanatory Note"),
        generated_description=section("Generated Description"),
        synonyms=[s for s in section("Synonym(s)?").split(";") if s.strip()],
    )
    if not any(
        [record.definition, record.explanatory_note, record.generated_description, record.synonyms]
    ):
        log.warning("page for %s lacks all four properties", iri)
    return record


def fetch_pages(
    base_url: str,
    seeds: list[SeedTag],
    out,
    *,
    min_interval: float = 0.5,
    http_get=None,
    sleep=time.sleep,
):
    """Download seed pages into the JSONL dump format.

    Idempotent: iris already present in ``out`` are skipped. On network
    failure the partial output is preserved and the run is resumable.
    Requests are spaced at least ``min_interval`` seconds apart.
    """
    http_get = http_get or _default_http_get
    done = set()
    try:
        for record in load_dump(out):
            done.add(record.iri)
    except FileNotFoundError:
        pass

    last_request = 0.0
    with open(out, "a", encoding="utf-8") as fh:
        for seed in sorted(seeds):
            slug = seed.name.lower().replace(" ", "-")
            iri = f"{base_url.rstrip('/')}/{slug}"
            if iri in done:
                continue
            wait = min_interval - (time.monotonic() - last_request)
            if wait > 0 and last_request > 0:
                sleep(wait)
            last_request = time.monotonic()
            page = http_get(iri)
            record = _page_to_record(iri, seed.name, page)
            fh.write(json.dumps(record.__dict__, ensure_ascii=False) + "\n")
            fh.flush()
            done.add(iri)
    return out
