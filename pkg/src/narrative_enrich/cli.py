"""Command-line surface: fetch, chunk, enrich, evaluate, analyze.

Exit codes: 0 success (non-expansion outcomes are data, not failure),
1 usage/config/input problems, 2 backend or transport failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .analysis import EXPANDED_KEY, non_expansion_stats, positional_relevance
from .archive_client import ArchiveClient
from .baselines import METHOD_COHERENCE, METHOD_RAG_MAP, enrich_article_baseline
from .config import (
    load_config,
    make_backends,
    make_generation_backend,
    make_settings,
)
from .corpus import chunk_document, load_article, load_narrative
from .errors import ArchiveError, BackendError, ConfigError, CorpusError
from .metrics import calibrated_informativeness
from .records import config_fingerprint, read_records, render_report, write_records
from .reversum import (
    METHOD_REVERSUM,
    METHOD_STANDARD_RAG,
    NON_EXPANSION_REASONS,
    enrich_article,
    render_template,
)

METHODS = (METHOD_REVERSUM, METHOD_STANDARD_RAG, METHOD_COHERENCE, METHOD_RAG_MAP)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors, per the exit-code policy
        raise UsageError(message)


def _write_text(path: str | None, text: str) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_fetch(args) -> int:
    client = ArchiveClient()
    items = client.search_person(args.name, max_results=args.max_results)
    if not items:
        print(f"no results for {args.name!r}", file=sys.stderr)
        return 1
    for item in items:
        marker = "text" if item.has_text else "    "
        print(f"{item.identifier:40s} [{marker}] {item.title}")
    if not args.pick:
        print("re-run with --pick <identifier> to download", file=sys.stderr)
        return 0
    chosen = [i for i in items if i.identifier == args.pick]
    if not chosen:
        print(f"identifier {args.pick!r} is not among the results", file=sys.stderr)
        return 1
    if not chosen[0].has_text:
        print(f"item {args.pick!r} has no plain-text file", file=sys.stderr)
        return 1
    identifier, text = client.fetch_first_text(chosen)
    out = args.out or f"{identifier}.txt"
    Path(out).write_text(text, encoding="utf-8")
    print(f"wrote {out} ({len(text)} chars)")
    return 0


def cmd_chunk(args) -> int:
    cfg = load_config(args.config, overrides=vars(args))
    narrative = load_narrative(args.narrative, subject_name=args.subject or "")
    chunks = chunk_document(narrative, chunk_size=cfg.chunk_size, overlap=cfg.overlap)
    lines = [
        json.dumps(
            {
                "doc_id": c.doc_id,
                "seq": c.seq,
                "start": c.start,
                "end": c.end,
                "relative_position": c.relative_position,
                "text": c.text,
            },
            ensure_ascii=False,
            sort_keys=True,
        )
        for c in chunks
    ]
    _write_text(args.out, "\n".join(lines) + "\n")
    print(f"{len(chunks)} chunks", file=sys.stderr)
    return 0


def _dry_run_prompts(article, cfg) -> str:
    placeholder_docs = "\n".join(
        f"Document {i}: <retrieved chunk {i}>" for i in range(1, cfg.retrieval.k + 1)
    )
    blocks = []
    for section in article.sections:
        slots = {
            "person_name": article.person_name,
            "section_title": section.title,
            "section_content": section.content,
            "documents": placeholder_docs,
        }
        stages = [
            ("standard_rag", dict(slots)),
            ("relevance_detection", dict(slots)),
            ("evidence_extraction", {}),
            (
                "evidence_verification",
                {"evidences": "<extracted evidences>", "documents": placeholder_docs},
            ),
            ("summary_generation", {"evidences": "<verified evidences>"}),
        ]
        for name, values in stages:
            blocks.append(
                f"--- section {section.index}: {section.title} / {name} ---\n"
                + render_template(name, **values)
            )
    return "\n\n".join(blocks) + "\n"


def cmd_enrich(args) -> int:
    cfg = load_config(args.config, overrides=vars(args))
    article = load_article(args.article)
    narrative = load_narrative(args.narrative, subject_name=article.person_name)
    settings = make_settings(cfg, args.method, tuple(args.ablate or ()))
    if args.dry_run:
        sys.stdout.write(_dry_run_prompts(article, cfg))
        return 0
    backends = make_backends(cfg)
    if args.method in (METHOD_REVERSUM, METHOD_STANDARD_RAG):
        outcomes = enrich_article(
            article, narrative, backends, settings, jobs=args.jobs
        )
    else:
        outcomes = enrich_article_baseline(
            article,
            narrative,
            backends,
            settings,
            args.method,
            weights=cfg.mapping_weights,
        )
    meta = {
        "method": args.method,
        "config_fingerprint": config_fingerprint(cfg.to_dict()),
    }
    write_records(args.out_records, outcomes, meta)
    if args.out_report:
        Path(args.out_report).write_text(render_report(outcomes), encoding="utf-8")
    expanded = sum(1 for o in outcomes if o.expanded)
    print(
        f"{expanded}/{len(outcomes)} sections expanded; records in {args.out_records}",
        file=sys.stderr,
    )
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    _, outcomes = read_records(args.records)
    article = load_article(args.originals)
    scorer = make_generation_backend(cfg)
    rows = []
    for record in outcomes:
        idx = record["section_index"]
        if idx >= len(article.sections):
            print(
                f"error: no original for section index {idx} "
                f"({record['section_title']!r}); skipping",
                file=sys.stderr,
            )
            continue
        original = article.sections[idx].content
        generated = record["generated"] or ""
        report = calibrated_informativeness(original, generated, scorer)
        rows.append((record["section_title"], record["method"], report))
    if args.out_csv:
        with open(args.out_csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [
                    "section", "method", "delta_ci", "delta_understandability",
                    "delta_readability", "delta_quality", "new_word_fraction",
                    "continuation_score", "continuation_coarse",
                ]
            )
            for title, method, r in rows:
                writer.writerow(
                    [
                        title, method,
                        repr(r.calibrated_informativeness),
                        repr(r.delta_understandability),
                        repr(r.delta_readability),
                        repr(r.delta_quality),
                        repr(r.new_word_fraction),
                        repr(r.continuation_score),
                        r.continuation_coarse,
                    ]
                )
    lines = [
        f"{'Method':28s} {'dCI':>10s} {'dUnd.':>10s} {'dRead.':>10s} {'dQuality':>10s}"
    ]
    by_method: dict[str, list] = {}
    for _, method, r in rows:
        by_method.setdefault(method, []).append(r)
    for method, reports in sorted(by_method.items()):
        n = len(reports)
        lines.append(
            f"{method:28s} "
            f"{sum(r.calibrated_informativeness for r in reports) / n:10.2f} "
            f"{sum(r.delta_understandability for r in reports) / n:10.2f} "
            f"{sum(r.delta_readability for r in reports) / n:10.2f} "
            f"{sum(r.delta_quality for r in reports) / n:10.2f}"
        )
    table = "\n".join(lines) + "\n"
    _write_text(args.out_table, table)
    return 0


def cmd_analyze(args) -> int:
    _, outcomes = read_records(args.records)
    stats = non_expansion_stats(outcomes)
    positions = positional_relevance(outcomes)

    stat_lines = ["reason,percentage"]
    for reason in (*NON_EXPANSION_REASONS, EXPANDED_KEY):
        stat_lines.append(f"{reason},{repr(stats.get(reason, 0.0))}")
    _write_text(args.out_nonexpansion, "\n".join(stat_lines) + "\n")

    pos_lines = ["category,mean_relative_position"]
    for category in sorted(positions):
        pos_lines.append(f"{category},{repr(positions[category])}")
    _write_text(args.out_positions, "\n".join(pos_lines) + "\n")

    if args.out_nonexpansion or args.out_positions:
        print("analysis tables written", file=sys.stderr)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="narrative-enrich")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fetch", help="search a digital library for a narrative")
    p.add_argument("name")
    p.add_argument("--max-results", type=int, default=10)
    p.add_argument("--pick", help="identifier to download")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("chunk", help="split a narrative into retrieval chunks")
    p.add_argument("narrative")
    p.add_argument("--subject", help="subject name to attach to the document")
    p.add_argument("--config")
    p.add_argument("--chunk-size", type=int, dest="chunk_size")
    p.add_argument("--overlap", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_chunk)

    p = sub.add_parser("enrich", help="enrich article sections from a narrative")
    p.add_argument("article")
    p.add_argument("narrative")
    p.add_argument("--config")
    p.add_argument("--method", choices=METHODS, default=METHOD_REVERSUM)
    p.add_argument(
        "--ablate",
        action="append",
        metavar="STAGE",
        help="disable a pipeline stage (repeatable)",
    )
    p.add_argument("--out-records", default="records.jsonl")
    p.add_argument("--out-report")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("--chunk-size", type=int, dest="chunk_size")
    p.add_argument("--overlap", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--llm-rules", dest="llm_rules")
    p.set_defaults(func=cmd_enrich)

    p = sub.add_parser("evaluate", help="score outcome records against originals")
    p.add_argument("records")
    p.add_argument("originals")
    p.add_argument("--config")
    p.add_argument("--out-csv")
    p.add_argument("--out-table")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze", help="aggregate outcome records")
    p.add_argument("records")
    p.add_argument("--out-nonexpansion")
    p.add_argument("--out-positions")
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, CorpusError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (BackendError, ArchiveError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
