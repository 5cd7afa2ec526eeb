"""Log-point quality against developer-written logs.

Every ``LOG.<level>(...)`` line in the corpus is removed and kept as ground
truth. The stripped corpus is enhanced and the injected statements are
scored with position, level, variable and text metrics.

    python3 scripts/eval_logpoints.py [--corpus DIR] [--docs FILE] [--json OUT]
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path

from conflog import syntax
from conflog.catalog import load_catalog
from conflog.evaluate import GroundTruthPoint, evaluate
from conflog.synth import enhance

ROOT = Path(__file__).resolve().parent.parent
LOG_LINE = re.compile(r"^\s*LOG\.(trace|debug|info|warn|error)\(.*\);\s*$")


def strip_logs(sources: dict[str, str]) -> tuple[dict[str, str], list[dict]]:
    """Remove log lines; return stripped sources and truth records in original coordinates."""
    stripped, truth = {}, []
    for path, text in sorted(sources.items()):
        kept, removed = [], 0
        for lineno, line in enumerate(text.splitlines(keepends=True), start=1):
            if LOG_LINE.match(line):
                call = syntax.parse_statement(line.strip()).expr
                truth.append(
                    {
                        "file": path,
                        "line": lineno,
                        "stripped_line": lineno - removed,
                        "level": call.name.upper(),
                        "text": call.args[0].value,
                        "variables": [syntax.render(a) for a in call.args[1:]],
                    }
                )
                removed += 1
            else:
                kept.append(line)
        stripped[path] = "".join(kept)
    return stripped, truth


def owning_block(blocks, file: str, line: int) -> str:
    """Innermost block whose handling span covers ``line`` (stripped coordinates)."""
    best = None
    for b in blocks:
        lo, hi = b.handling_span
        if b.file == file and min(lo, b.entry_line + 1) <= line <= hi:
            if best is None or b.entry_line > best.entry_line:
                best = b
    return best.block_id if best else ""


def run_eval(corpus: Path, docs: Path):
    from conflog.frontend import read_sources

    catalog = load_catalog(docs)
    stripped, truth_rows = strip_logs(read_sources(corpus))
    result = enhance(stripped, catalog)
    truth = [
        GroundTruthPoint(
            file=t["file"],
            line=t["line"],
            block_id=owning_block(result.analysis.blocks, t["file"], t["stripped_line"]),
            level=t["level"],
            variables=frozenset(t["variables"]),
            text=t["text"],
        )
        for t in truth_rows
    ]
    predicted = [GroundTruthPoint.from_json(p) for p in result.predicted_points()]
    return evaluate(truth, predicted)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--corpus", type=Path, default=ROOT / "fixtures" / "logpoints")
    ap.add_argument("--docs", type=Path, default=ROOT / "fixtures" / "params.xml")
    ap.add_argument("--json", type=Path)
    args = ap.parse_args(argv)
    report = run_eval(args.corpus, args.docs)
    for p in report.points:
        t = p.truth
        print(f"{t.file}:{t.line:<4} {t.level:5} pa={p.pa} la={p.la} aod={p.aod} f1={p.var_f1}")
    print(report.table())
    if args.json:
        args.json.write_text(json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8")
    return 0


if __name__ == "__main__":
    sys.exit(main())
