"""Outcome record stream: one JSON record per line, versioned header first.

The stream is the common currency between enrichment (any method), the
metrics tables, and the analysis aggregations. Serialization is canonical
(sorted keys, no timestamps), so identical runs produce byte-identical files.
Schema: resources/records.schema.json.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .errors import CorpusError

FORMAT_NAME = "narrative-enrich.records"
FORMAT_VERSION = 1


def _dump(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=True)


def config_fingerprint(config_dict: dict) -> str:
    canonical = json.dumps(config_dict, ensure_ascii=False, sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_records(path: str | Path, outcomes, meta: dict | None = None) -> None:
    header = {
        "record_type": "header",
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
    }
    if meta:
        header.update(meta)
    lines = [_dump(header)]
    for outcome in outcomes:
        record = outcome if isinstance(outcome, dict) else outcome.to_dict()
        lines.append(_dump({"record_type": "outcome", **record}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_records(path: str | Path) -> tuple[dict, list[dict]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise CorpusError(f"record stream {path} is empty")
    header = json.loads(lines[0])
    if header.get("format") != FORMAT_NAME:
        raise CorpusError(
            f"record stream {path} has format {header.get('format')!r}, "
            f"expected {FORMAT_NAME!r}"
        )
    if header.get("version") != FORMAT_VERSION:
        raise CorpusError(
            f"record stream {path} has version {header.get('version')!r}, "
            f"expected {FORMAT_VERSION}"
        )
    outcomes = []
    for line in lines[1:]:
        if not line.strip():
            continue
        record = json.loads(line)
        if record.get("record_type") == "outcome":
            outcomes.append(record)
    return header, outcomes


def _provenance_lines(outcome: dict) -> list[str]:
    lines: list[str] = []
    retrieval = next(
        (r for r in outcome.get("trace", []) if r.get("stage") == "retrieval"), None
    )
    verification = next(
        (
            r
            for r in outcome.get("trace", [])
            if r.get("stage") == "evidence_verification" and r.get("parsed")
        ),
        None,
    )
    if retrieval and retrieval.get("parsed"):
        seqs = retrieval["parsed"]
        positions = retrieval.get("info", {}).get("relative_positions", [])
        pairs = ", ".join(
            f"chunk {seq} (pos {pos:.2f})" for seq, pos in zip(seqs, positions)
        )
        lines.append(f"  retrieved: {pairs}")
    if verification:
        for item in verification["parsed"]:
            cited = item.get("cited_chunk")
            suffix = f" [Document {cited}]" if cited else ""
            lines.append(f"  evidence: {item['text']}{suffix}")
    return lines


def render_report(outcomes) -> str:
    """Human-readable rendering: original section, generated addition, and
    provenance citations (or the stage that declined)."""
    blocks: list[str] = []
    for raw in outcomes:
        outcome = raw if isinstance(raw, dict) else raw.to_dict()
        lines = [
            f"== {outcome['section_title']} "
            f"[{outcome['method']}] ==",
            "original:",
            outcome["original"] or "  (empty)",
        ]
        if outcome["expanded"]:
            lines.append("generated:")
            lines.append(outcome["generated"])
            lines.extend(_provenance_lines(outcome))
        else:
            lines.append(f"not expanded: blocked at {outcome['reason']}")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"
