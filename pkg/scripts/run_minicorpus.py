"""Silent-failure elimination on the bundled mini-corpus.

For every case: replay the original program under its misconfiguration,
enhance the corpus, replay again, and score both runs with the direct-hit
matcher. Prints one row per case and the totals.

    python3 scripts/run_minicorpus.py [--corpus DIR] [--docs FILE] [--json OUT]
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from conflog.catalog import load_catalog
from conflog.evaluate import direct_hit
from conflog.frontend import parse_texts, read_sources
from conflog.ir import Program
from conflog.replay import run
from conflog.synth import enhance

ROOT = Path(__file__).resolve().parent.parent


def evaluate_corpus(corpus: Path, docs: Path) -> dict:
    t0 = time.perf_counter()
    catalog = load_catalog(docs)
    manifest = json.loads((corpus / "cases.json").read_text(encoding="utf-8"))
    sources = read_sources(corpus)
    result = enhance(sources, catalog)
    before = Program(parse_texts(sources))
    after = Program(parse_texts(result.sources))
    found = {b.block_id for b in result.analysis.blocks}
    injected = {o.block.block_id for o in result.injected}
    rows = []
    for case in manifest["cases"]:
        keys = case["misconfigured_keys"]
        r0 = run(before, case["entry"], case["config"], case["args"])
        r1 = run(after, case["entry"], case["config"], case["args"])
        rows.append(
            {
                "id": case["id"],
                "block_found": case["block"] in found,
                "injected": case["block"] in injected,
                "hit_before": direct_hit(r0.logs, catalog, keys)[0],
                "hit_after": direct_hit(r1.logs, catalog, keys)[0],
                "log_after": r1.logs[0] if r1.logs else None,
            }
        )
    return {
        "cases": rows,
        "blocks_found": sum(r["block_found"] for r in rows),
        "injected": sum(r["injected"] for r in rows),
        "hits_before": sum(r["hit_before"] == 1 for r in rows),
        "hits_after": sum(r["hit_after"] == 1 for r in rows),
        "total": len(rows),
        "labeling_s": result.timings["engine_labeling"],
        "runtime_s": time.perf_counter() - t0,
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--corpus", type=Path, default=ROOT / "fixtures" / "minicorpus")
    ap.add_argument("--docs", type=Path, default=ROOT / "fixtures" / "params.xml")
    ap.add_argument("--json", type=Path)
    args = ap.parse_args(argv)
    summary = evaluate_corpus(args.corpus, args.docs)
    print(f"{'case':22} {'found':>5} {'inj':>4} {'hit0':>5} {'hit1':>5}")
    for r in summary["cases"]:
        print(f"{r['id']:22} {r['block_found']!s:>5} {r['injected']!s:>4} {r['hit_before']:>5} {r['hit_after']:>5}")
    n = summary["total"]
    print(
        f"blocks {summary['blocks_found']}/{n}  injected {summary['injected']}/{n}  "
        f"direct hits before {summary['hits_before']}/{n} after {summary['hits_after']}/{n}  "
        f"runtime {summary['runtime_s']:.2f}s"
    )
    if args.json:
        args.json.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return 0 if summary["hits_after"] == n else 1


if __name__ == "__main__":
    sys.exit(main())
