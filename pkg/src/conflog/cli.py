"""``conflog`` command line: engines, analyze, enhance, evaluate.

Exit codes: 0 success, 1 input error, 2 internal invariant violation.
Every run writes a manifest (tool version, config echo, per-stage timings).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .catalog import ParameterCatalog, load_catalogs
from .errors import ConflogError, InvariantViolation
from .frontend import parse_texts, read_sources
from .ir import Program, emit_cir, load_ir

EXIT_OK, EXIT_INPUT, EXIT_INVARIANT = 0, 1, 2


class UsageError(ConflogError):
    code = "cli.UsageError"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits 2 by default; 2 is reserved here
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    src: str | None = None
    ir: str | None = None
    docs: list[str] = field(default_factory=list)
    out: str | None = None
    report: str | None = None
    manifest: str | None = None
    max_path_len: int = 30
    include_control: bool = True
    backend: str = "template"
    endpoint: str | None = None
    extra_engines: str | None = None
    quiet: bool = False
    dump_pdg: str | None = None
    emit_ir: str | None = None
    truth: str | None = None
    predicted: str | None = None

    def validate(self) -> None:
        if self.max_path_len < 1:
            raise UsageError(f"--max-path-len must be >= 1, got {self.max_path_len}")
        if self.command in ("engines", "analyze", "enhance"):
            if (self.src is None) == (self.ir is None):
                raise UsageError("exactly one of --src or --ir is required")
            if not self.docs:
                raise UsageError("at least one --docs file is required")
        if self.command == "enhance":
            if self.src is None:
                raise UsageError("enhance rewrites source text and needs --src")
            if self.out is None:
                raise UsageError("enhance needs --out")
            if self.backend == "external" and not self.endpoint:
                raise UsageError("--backend external needs --endpoint or CONFLOG_ENDPOINT")
        if self.command == "evaluate" and (self.truth is None or self.predicted is None):
            raise UsageError("evaluate needs --truth and --predicted")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="conflog", description="Configuration-aware logging enhancement")
    p.add_argument("--version", action="version", version=f"conflog {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def inputs(sp):
        sp.add_argument("--src", help="directory of source files")
        sp.add_argument("--ir", help="CIR document instead of sources")
        sp.add_argument("--docs", action="append", default=[], help="parameter documentation (repeatable)")
        sp.add_argument("--extra-engines", help="file listing extra engine class names, one per line")

    def common(sp):
        sp.add_argument("--report", help="write the JSON report here (default: stdout)")
        sp.add_argument("--manifest", help="write the run manifest here")
        sp.add_argument("--quiet", action="store_true", help="suppress the rendered table")

    def analysis(sp):
        sp.add_argument("--max-path-len", type=int, default=30)
        sp.add_argument("--no-control-dep", dest="include_control", action="store_false")

    sp = sub.add_parser("engines", help="label configuration engines")
    inputs(sp)
    common(sp)

    sp = sub.add_parser("analyze", help="report configuration-sensitive blocks")
    inputs(sp)
    common(sp)
    analysis(sp)
    sp.add_argument("--dump-pdg", help="write the dependence graph as JSON")
    sp.add_argument("--emit-ir", help="write the lowered program as CIR")

    sp = sub.add_parser("enhance", help="inject logging statements")
    inputs(sp)
    common(sp)
    analysis(sp)
    sp.add_argument("--out", help="output directory for enhanced sources and drafts.json")
    sp.add_argument("--backend", choices=("template", "external"), default="template")
    sp.add_argument("--endpoint", default=None, help="external generator URL (env CONFLOG_ENDPOINT)")

    sp = sub.add_parser("evaluate", help="score predicted log points against ground truth")
    common(sp)
    sp.add_argument("--truth", help="ground-truth points (JSON)")
    sp.add_argument("--predicted", help="predicted points (JSON, e.g. drafts.json)")
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    known = {f for f in RunConfig.__dataclass_fields__}
    cfg = RunConfig(**{k: v for k, v in vars(ns).items() if k in known})
    if cfg.command == "enhance" and cfg.endpoint is None:
        cfg.endpoint = os.environ.get("CONFLOG_ENDPOINT")
    return cfg


# --- stages --------------------------------------------------------------------------


def _load_inputs(cfg: RunConfig, timings: dict) -> tuple[ParameterCatalog, list, dict[str, str] | None, tuple[str, ...]]:
    t = time.perf_counter()
    catalog = load_catalogs(cfg.docs)
    timings["catalog"] = time.perf_counter() - t
    t = time.perf_counter()
    texts = None
    if cfg.src is not None:
        if not Path(cfg.src).is_dir():
            raise UsageError(f"--src {cfg.src} is not a directory")
        texts = read_sources(cfg.src)
        units = parse_texts(texts)
    else:
        units = load_ir(cfg.ir)
    timings["frontend"] = time.perf_counter() - t
    extra: tuple[str, ...] = ()
    if cfg.extra_engines:
        lines = Path(cfg.extra_engines).read_text(encoding="utf-8").splitlines()
        extra = tuple(s.strip() for s in lines if s.strip() and not s.lstrip().startswith("#"))
    return catalog, units, texts, extra


def _dump(data: dict) -> str:
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def _engines_table(report: dict) -> str:
    rows = [f"{'class':40} {'kind':12} {'reason':12} via"]
    for e in report["engines"]:
        rows.append(f"{e['class']:40} {e['kind']:12} {e['reason']:12} {e['via'] or '-'}")
    return "\n".join(rows)


def _blocks_table(blocks: list[dict]) -> str:
    rows = [f"{'block':60} {'hops':>4}  parameters"]
    for b in blocks:
        rows.append(f"{b['block_id']:60} {b['path_len']:>4}  {', '.join(b['parameters'])}")
    return "\n".join(rows)


def cmd_engines(cfg: RunConfig, timings: dict) -> tuple[dict, str]:
    from .engines import label_engines

    catalog, units, _, extra = _load_inputs(cfg, timings)
    engines = label_engines(units, catalog, extra)
    timings["engine_labeling"] = engines.elapsed_s
    report = engines.to_report()
    return report, _engines_table(report)


def cmd_analyze(cfg: RunConfig, timings: dict) -> tuple[dict, str]:
    from .taint import analyze

    catalog, units, _, extra = _load_inputs(cfg, timings)
    if cfg.emit_ir:
        Path(cfg.emit_ir).write_text(emit_cir(units), encoding="utf-8")
    a = analyze(Program(units), catalog, cfg.max_path_len, cfg.include_control, extra)
    timings.update(a.timings)
    if cfg.dump_pdg:
        Path(cfg.dump_pdg).write_text(a.pdg.to_json(), encoding="utf-8")
    blocks = [b.to_report() for b in a.blocks]
    sources = []
    for s in a.sources:
        file, line = a.program.line_of(s.stmt)
        sources.append(
            {
                "stmt": s.stmt,
                "file": file,
                "line": line,
                "engine": s.engine.class_name,
                "getter": s.getter,
                "keys": list(s.bound_keys),
                "valid": s.valid,
                "reason": s.reason,
            }
        )
    report = {
        "engines": a.engines.to_report()["engines"],
        "sources": sources,
        "blocks": blocks,
        "sink_count": len({p.sink for p in a.paths}),
    }
    return report, _blocks_table(blocks)


def cmd_enhance(cfg: RunConfig, timings: dict) -> tuple[dict, str]:
    from .synth import enhance

    catalog, _, texts, extra = _load_inputs(cfg, timings)
    assert texts is not None
    result = enhance(texts, catalog, cfg.max_path_len, cfg.include_control, extra, cfg.backend, cfg.endpoint)
    timings.update(result.timings)
    out = Path(cfg.out)
    for rel, text in sorted(result.sources.items()):
        target = out / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    report = result.to_report()
    (out / "drafts.json").write_text(_dump(report), encoding="utf-8")
    rows = [f"{'block':60} decision"]
    for b in report["blocks"]:
        rows.append(f"{b['block_id']:60} {b['decision']}")
    rows.append(f"injected {report['injected']}, kept {report['kept']}, flagged redundant {report['flagged_redundant']}")
    return report, "\n".join(rows)


def cmd_evaluate(cfg: RunConfig, timings: dict) -> tuple[dict, str]:
    from .evaluate import evaluate, load_points

    t = time.perf_counter()
    truth = load_points(cfg.truth)
    predicted = load_points(cfg.predicted)
    report = evaluate(truth, predicted)
    timings["evaluate"] = time.perf_counter() - t
    return report.to_json(), report.table()


COMMANDS = {"engines": cmd_engines, "analyze": cmd_analyze, "enhance": cmd_enhance, "evaluate": cmd_evaluate}


def _manifest_path(cfg: RunConfig) -> Path | None:
    if cfg.manifest:
        return Path(cfg.manifest)
    if cfg.command == "enhance" and cfg.out:
        return Path(cfg.out) / "manifest.json"
    if cfg.report:
        return Path(cfg.report).with_suffix(".manifest.json")
    return None


def run(cfg: RunConfig) -> int:
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    manifest = {"tool": "conflog", "version": __version__, "command": cfg.command, "config": asdict(cfg)}
    try:
        cfg.validate()
        report, table = COMMANDS[cfg.command](cfg, timings)
        code = EXIT_OK
    except InvariantViolation as exc:
        print(f"conflog: internal error [{exc.code}]: {exc}", file=sys.stderr)
        report, table, code = None, "", EXIT_INVARIANT
    except AssertionError as exc:
        print(f"conflog: internal error [conflog.InvariantViolation]: {exc}", file=sys.stderr)
        report, table, code = None, "", EXIT_INVARIANT
    except ConflogError as exc:
        print(f"conflog: error [{exc.code}]: {exc}", file=sys.stderr)
        report, table, code = None, "", EXIT_INPUT
    except OSError as exc:
        print(f"conflog: error [cli.IOError]: {exc}", file=sys.stderr)
        report, table, code = None, "", EXIT_INPUT
    timings["total"] = time.perf_counter() - t0
    manifest["timings"] = {k: max(0.0, v) for k, v in timings.items()}
    manifest["exit_code"] = code
    if report is not None:
        text = _dump(report)
        if cfg.report:
            Path(cfg.report).parent.mkdir(parents=True, exist_ok=True)
            Path(cfg.report).write_text(text, encoding="utf-8")
            if not cfg.quiet:
                print(table)
        else:
            sys.stdout.write(text)
            if not cfg.quiet:
                print(table, file=sys.stderr)
    target = _manifest_path(cfg)
    if target is not None and (code == EXIT_OK or target.parent.exists()):
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(_dump(manifest), encoding="utf-8")
    else:
        print(json.dumps(manifest, sort_keys=True), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    return run(config_from_args(ns))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
