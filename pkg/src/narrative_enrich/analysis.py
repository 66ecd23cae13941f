"""Aggregate outcome records: non-expansion shares and positional relevance.

Operates on the serialized record stream (dicts), so it can run over files
produced by earlier runs; live EnrichmentOutcome objects are accepted too.
"""

from __future__ import annotations

import re

from .resources import load_resource_json
from .reversum import NON_EXPANSION_REASONS

_categories: list[tuple[str, list[str]]] | None = None

OTHER_CATEGORY = "Other"


def section_categories() -> list[tuple[str, list[str]]]:
    """The ten predefined section categories with their keyword lists, in
    match order (first keyword hit wins). Editable resource file."""
    global _categories
    if _categories is None:
        raw = load_resource_json("section_categories.json")
        _categories = [(entry["name"], list(entry["keywords"])) for entry in raw]
    return _categories


def _keyword_hits(keyword: str, lowered_title: str) -> bool:
    # anchored at a word start so "war" cannot fire inside "awards";
    # keywords act as prefixes so "politic" covers "political"/"politics"
    return re.search(rf"\b{re.escape(keyword)}", lowered_title) is not None


def categorize_section(title: str) -> str:
    """Map a section title to one of the ten categories; total and
    deterministic, falling back to Other."""
    lowered = title.lower()
    for name, keywords in section_categories():
        if any(_keyword_hits(k, lowered) for k in keywords):
            return name
    return OTHER_CATEGORY


def _as_dict(outcome) -> dict:
    return outcome if isinstance(outcome, dict) else outcome.to_dict()


def _retrieval_positions(outcome: dict) -> list[float]:
    for record in outcome.get("trace", []):
        if record.get("stage") == "retrieval":
            return list(record.get("info", {}).get("relative_positions", []))
    return []


def positional_relevance(outcomes) -> dict[str, float]:
    """Mean relative position of retrieved chunks, grouped by the section
    category. Sections without a retrieval trace contribute nothing;
    categories with no data are omitted."""
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for raw in outcomes:
        outcome = _as_dict(raw)
        positions = _retrieval_positions(outcome)
        if not positions:
            continue
        category = categorize_section(outcome["section_title"])
        sums[category] = sums.get(category, 0.0) + sum(positions)
        counts[category] = counts.get(category, 0) + len(positions)
    return {cat: sums[cat] / counts[cat] for cat in sums}


EXPANDED_KEY = "expanded"


def non_expansion_stats(outcomes) -> dict[str, float]:
    """Percentage of all sections per non-expansion reason, with the expanded
    share reported alongside under the "expanded" key."""
    outcomes = [_as_dict(o) for o in outcomes]
    total = len(outcomes)
    stats = {reason: 0.0 for reason in NON_EXPANSION_REASONS}
    stats[EXPANDED_KEY] = 0.0
    if total == 0:
        return stats
    for outcome in outcomes:
        key = EXPANDED_KEY if outcome["expanded"] else outcome["reason"]
        stats[key] = stats.get(key, 0.0) + 1
    return {k: 100.0 * v / total for k, v in stats.items()}
