"""Diagnosability metrics and the direct-inference matcher.

Position accuracy gates everything else: level, variable and text metrics are
only computed for predicted points that land within one line of the truth
inside the same block.
"""

from __future__ import annotations

import json
import math
import re
import urllib.error
import urllib.request
from collections import Counter
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from pathlib import Path

from .catalog import ParameterCatalog, match_parameters_in_text
from .errors import EndpointUnavailable, MalformedDoc

LEVEL_ORDER = ("TRACE", "DEBUG", "INFO", "WARN", "ERROR")
_RANK = {lvl: i for i, lvl in enumerate(LEVEL_ORDER)}


@dataclass(frozen=True)
class GroundTruthPoint:
    file: str
    line: int
    block_id: str
    level: str
    variables: frozenset[str] = frozenset()
    text: str = ""

    def __post_init__(self) -> None:
        if self.line < 1:
            raise ValueError(f"line must be >= 1, got {self.line}")
        if self.level not in _RANK:
            raise ValueError(f"unknown level {self.level!r}")

    @classmethod
    def from_json(cls, d: dict) -> GroundTruthPoint:
        return cls(
            file=str(d["file"]),
            line=int(d["line"]),
            block_id=str(d.get("block_id", "")),
            level=str(d.get("level", "INFO")).upper(),
            variables=frozenset(str(v) for v in d.get("variables", ())),
            text=str(d.get("text", "")),
        )

    def to_json(self) -> dict:
        return {
            "file": self.file,
            "line": self.line,
            "block_id": self.block_id,
            "level": self.level,
            "variables": sorted(self.variables),
            "text": self.text,
        }


# --- per-point metrics -------------------------------------------------------------


def position_accuracy(predicted: GroundTruthPoint, truth: GroundTruthPoint) -> int:
    if predicted.file != truth.file:
        return 0
    return int(abs(predicted.line - truth.line) <= 1 and predicted.block_id == truth.block_id)


def max_dist(level: str) -> int:
    r = _RANK[level]
    return max(r, len(LEVEL_ORDER) - 1 - r)


def level_metrics(truth_level: str, injected_level: str) -> tuple[int, float]:
    t, i = _RANK[truth_level.upper()], _RANK[injected_level.upper()]
    return int(t == i), 1.0 - abs(t - i) / max_dist(truth_level.upper())


def _norm_var(v: str) -> str:
    return "".join(v.split())


def variable_metrics(var_t: Iterable[str], var_i: Iterable[str]) -> tuple[float | None, float | None, float | None]:
    t = {_norm_var(v) for v in var_t}
    i = {_norm_var(v) for v in var_i}
    common = len(t & i)
    p = common / len(i) if i else None
    r = common / len(t) if t else None
    f1 = None
    if p is not None and r is not None and p + r > 0:
        f1 = 2 * p * r / (p + r)
    return p, r, f1


_PLACEHOLDER = re.compile(r"\{[^{}]*\}|%[sdfx]")


def tokenize(text: str) -> list[str]:
    return _PLACEHOLDER.sub(" <*> ", text.lower()).split()


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[k : k + n]) for k in range(len(tokens) - n + 1))


def bleu(reference: list[str], candidate: list[str], max_n: int) -> float:
    """Sentence BLEU; unigram precision unsmoothed, higher orders add-one smoothed."""
    if not candidate or not reference:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        cand = _ngrams(candidate, n)
        ref = _ngrams(reference, n)
        matched = sum(min(c, ref[g]) for g, c in cand.items())
        total = sum(cand.values())
        if n > 1:
            matched, total = matched + 1, total + 1
        if matched == 0:
            return 0.0
        log_sum += math.log(matched / total) / max_n
    c, r = len(candidate), len(reference)
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return bp * math.exp(log_sum)


def _f1(overlap: float, cand_len: int, ref_len: int) -> float:
    if overlap == 0 or cand_len == 0 or ref_len == 0:
        return 0.0
    p, r = overlap / cand_len, overlap / ref_len
    return 2 * p * r / (p + r)


def _lcs(a: list[str], b: list[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def text_metrics(truth_text: str, injected_text: str) -> tuple[float, float, float, float]:
    ref, cand = tokenize(truth_text), tokenize(injected_text)
    overlap = sum((Counter(ref) & Counter(cand)).values())
    return (
        bleu(ref, cand, 1),
        bleu(ref, cand, 4),
        _f1(overlap, len(cand), len(ref)),
        _f1(_lcs(ref, cand), len(cand), len(ref)),
    )


# --- hit score ------------------------------------------------------------------------

IndirectHook = Callable[[list[str], list[str]], bool]


def direct_hit(
    run_log: list[str],
    catalog: ParameterCatalog,
    injected_param_keys: Iterable[str],
    indirect: IndirectHook | None = None,
) -> tuple[float, int]:
    """(overall, direct phase): 1/1 on a key hit, 0.5/-1 on indirect success, else 0/-1."""
    keys = set(injected_param_keys)
    for line in run_log:
        if any(k in keys for k, _span in match_parameters_in_text(catalog, line)):
            return 1.0, 1
    if run_log and indirect is not None and indirect(list(run_log), sorted(keys)):
        return 0.5, -1
    return 0.0, -1


def http_indirect_hook(endpoint: str, timeout: float = 30.0) -> IndirectHook:
    """Indirect-inference stub speaking JSON: ``{logs, params}`` -> ``{success}``."""

    def hook(logs: list[str], params: list[str]) -> bool:
        body = json.dumps({"logs": logs, "params": params}).encode("utf-8")
        req = urllib.request.Request(endpoint, data=body, headers={"Content-Type": "application/json"}, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                data = json.loads(resp.read())
        except (urllib.error.URLError, OSError) as exc:
            raise EndpointUnavailable(f"{endpoint}: {exc}") from exc
        except json.JSONDecodeError:
            return False
        return bool(isinstance(data, dict) and data.get("success"))

    return hook


def specific_rate(valid_cases: Iterable, other_version_cases: Iterable) -> float:
    valid = set(valid_cases)
    if not valid:
        return 0.0
    return len(valid - set(other_version_cases)) / len(valid)


# --- aggregate report -------------------------------------------------------------------


def format_coverage(hits: int, total: int) -> str:
    pct = 0 if total == 0 else round(100 * hits / total)
    return f"{pct}% ({hits}/{total})"


@dataclass
class PointResult:
    truth: GroundTruthPoint
    predicted: GroundTruthPoint | None
    pa: int
    la: int | None = None
    aod: float | None = None
    var_precision: float | None = None
    var_recall: float | None = None
    var_f1: float | None = None
    bleu1: float | None = None
    bleu4: float | None = None
    rouge1: float | None = None
    rougeL: float | None = None

    def to_json(self) -> dict:
        return {
            "truth": self.truth.to_json(),
            "predicted": self.predicted.to_json() if self.predicted else None,
            "pa": self.pa,
            "la": self.la,
            "aod": self.aod,
            "var_precision": self.var_precision,
            "var_recall": self.var_recall,
            "var_f1": self.var_f1,
            "bleu1": self.bleu1,
            "bleu4": self.bleu4,
            "rouge1": self.rouge1,
            "rougeL": self.rougeL,
        }


_AVG_FIELDS = ("la", "aod", "var_precision", "var_recall", "var_f1", "bleu1", "bleu4", "rouge1", "rougeL")


@dataclass
class EvalReport:
    points: list[PointResult]
    hit: dict | None = None
    aggregates: dict = field(init=False)

    def __post_init__(self) -> None:
        hits = [p for p in self.points if p.pa == 1]
        total = len(self.points)
        agg: dict = {
            "total": total,
            "pa_hits": len(hits),
            "coverage": len(hits) / total if total else 0.0,
            "coverage_text": format_coverage(len(hits), total),
        }
        for name in _AVG_FIELDS:
            vals = [getattr(p, name) for p in hits if getattr(p, name) is not None]
            agg[name] = sum(vals) / len(vals) if vals else None
        self.aggregates = agg

    def to_json(self) -> dict:
        out = {"aggregates": self.aggregates, "points": [p.to_json() for p in self.points]}
        if self.hit is not None:
            out["hit"] = self.hit
        return out

    def table(self) -> str:
        a = self.aggregates
        rows = [("Coverage", a["coverage_text"])]
        labels = {
            "la": "LA",
            "aod": "AOD",
            "var_precision": "Var P",
            "var_recall": "Var R",
            "var_f1": "Var F1",
            "bleu1": "BLEU-1",
            "bleu4": "BLEU-4",
            "rouge1": "ROUGE-1",
            "rougeL": "ROUGE-L",
        }
        for k, label in labels.items():
            rows.append((label, "-" if a[k] is None else f"{a[k]:.3f}"))
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def score_point(truth: GroundTruthPoint, predicted: GroundTruthPoint | None) -> PointResult:
    if predicted is None or not position_accuracy(predicted, truth):
        return PointResult(truth, predicted, 0)
    la, aod = level_metrics(truth.level, predicted.level)
    p, r, f1 = variable_metrics(truth.variables, predicted.variables)
    b1, b4, r1, rl = text_metrics(truth.text, predicted.text)
    return PointResult(truth, predicted, 1, la, aod, p, r, f1, b1, b4, r1, rl)


def match_points(truth: list[GroundTruthPoint], predicted: list[GroundTruthPoint]) -> list[GroundTruthPoint | None]:
    """Greedy one-to-one pairing: each truth takes the closest unused prediction in its block."""
    used: set[int] = set()
    out: list[GroundTruthPoint | None] = []
    for t in truth:
        best = None
        for k, p in enumerate(predicted):
            if k in used or p.file != t.file or p.block_id != t.block_id:
                continue
            d = abs(p.line - t.line)
            if best is None or d < best[0]:
                best = (d, k)
        if best is None:
            out.append(None)
        else:
            used.add(best[1])
            out.append(predicted[best[1]])
    return out


def evaluate(truth: list[GroundTruthPoint], predicted: list[GroundTruthPoint], hit: dict | None = None) -> EvalReport:
    pairs = match_points(truth, predicted)
    return EvalReport([score_point(t, p) for t, p in zip(truth, pairs)], hit)


def load_points(path: str | Path) -> list[GroundTruthPoint]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedDoc(f"{path}: {exc}") from exc
    if isinstance(data, dict):
        data = data.get("points", data.get("predicted", []))
    if not isinstance(data, list):
        raise MalformedDoc(f"{path}: expected a list of points")
    try:
        return [GroundTruthPoint.from_json(d) for d in data]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedDoc(f"{path}: {exc}") from exc
