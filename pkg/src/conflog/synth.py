"""Logging-statement synthesis and source rewriting.

For every sensitive block: inspect existing logs, pick the logging scenario,
draft a single ``LOG.<level>(template, vars...)`` statement that names the
parameter keys, states the checked constraint and carries the runtime values,
then splice it into the source.

Drafting is deterministic (``template`` backend). An external generator may
be plugged in over HTTP; its responses pass the same gates as our own drafts
and fall back to the template draft when rejected.
"""

from __future__ import annotations

import enum
import json
import re
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

from . import syntax as ast
from .errors import ConstraintUnderivable, EndpointUnavailable, ReparseFailure, ResponseRejected, SourceSyntaxError
from .frontend import parse_texts
from .ir import LOG_LEVELS, Kind, MethodDecl, Program, Statement, dominates, dominators
from .taint import SensitiveBlock

LEVELS = ("TRACE", "DEBUG", "INFO", "WARN", "ERROR")
PLACEHOLDER = "{}"


class Decision(str, enum.Enum):
    KEEP_EXISTING = "keep_existing"
    INJECT = "inject"
    INJECT_AND_FLAG_REDUNDANT = "inject_and_flag_redundant"


class Scenario(str, enum.Enum):
    FALLBACK_PATH = "fallback_path"
    SERVICE_SWITCH = "service_switch"
    CONFIG_PROCESSING = "config_processing"


SCENARIO_LEVEL = {
    Scenario.FALLBACK_PATH: "WARN",
    Scenario.SERVICE_SWITCH: "WARN",
    Scenario.CONFIG_PROCESSING: "INFO",
}

_SWITCH_CALL = re.compile(r"^(start|stop|init|enable|disable|shutdown|register|unregister|activate|deactivate)", re.IGNORECASE)
_ENABLE_CALL = re.compile(r"^(start|init|enable|register|activate)", re.IGNORECASE)


@dataclass(frozen=True)
class LogDraft:
    block_id: str
    file: str
    decision: Decision
    scenario: Scenario
    level: str
    insert_line: int
    message_template: str
    variables: tuple[str, ...]
    guidance: str
    parameters: tuple[str, ...]
    arm: str = "then"
    constraint_derived: bool = True
    rationale: str = ""
    backend: str = "template"

    def statement(self) -> str:
        args = "".join(", " + v for v in self.variables)
        return f"LOG.{self.level.lower()}({ast.quote(self.message_template)}{args});"

    def check(self) -> None:
        """Three-part contract: level, constraint text, placeholder/variable arity."""
        if self.level not in LEVELS:
            raise AssertionError(f"level {self.level!r} outside {LEVELS}")
        if not self.message_template.strip():
            raise AssertionError("empty message template")
        if self.message_template.count(PLACEHOLDER) != len(self.variables):
            raise AssertionError("placeholder count differs from variable count")

    def to_report(self) -> dict:
        d = asdict(self)
        d["decision"] = self.decision.value
        d["scenario"] = self.scenario.value
        d["variables"] = list(self.variables)
        d["parameters"] = list(self.parameters)
        d["statement"] = self.statement()
        return d


# --- helpers over the IR -------------------------------------------------------------


def _def(program: Program, method: MethodDecl, value: str) -> Statement | None:
    return program.def_stmt(method, value)


def _follow_copies(program: Program, method: MethodDecl, value: str) -> Statement | None:
    s = _def(program, method, value)
    while s is not None and s.kind is Kind.ASSIGN and s.op == "copy":
        s = _def(program, method, s.uses[0])
    return s


def _literal(program: Program, method: MethodDecl, value: str) -> str | None:
    """Rendered literal if ``value`` is a literal or a constant field, else None."""
    s = _follow_copies(program, method, value)
    if s is None:
        return None
    if s.kind is Kind.CONST_STRING:
        return f"'{s.value}'"
    if s.kind is Kind.ASSIGN and s.op == "const":
        return s.value
    if s.kind is Kind.ASSIGN and s.op == "-":
        inner = _literal(program, method, s.uses[0])
        return None if inner is None or inner.startswith("'") else f"-{inner}"
    if s.kind is Kind.FIELD_READ and s.value:
        decl = program.field_decl(s.value)
        if decl is not None and decl.is_static:
            if decl.initializer is not None:
                return f"'{decl.initializer}'"
            if decl.literal is not None:
                return decl.literal
    return None


def _text(method: MethodDecl, program: Program, value: str) -> str:
    if value in method.value_names:
        return method.value_names[value]
    s = _def(program, method, value)
    return s.text if s is not None else value


def log_template(program: Program, stmt: Statement) -> str:
    method = program.method_of(stmt.id)
    first = _def(program, method, stmt.args[0]) if stmt.args else None
    if first is not None and first.kind is Kind.CONST_STRING:
        return first.value or ""
    return stmt.text


# --- existing-log inspection --------------------------------------------------------------


def inspect_existing(block: SensitiveBlock, program: Program) -> tuple[Decision, str]:
    """Keep sufficient existing logs, otherwise inject (flagging redundant ones)."""
    if not block.existing_logs:
        return Decision.INJECT, "no existing logging statement in the block"
    method = program.methods[block.method]
    for sid in block.existing_logs:
        stmt = program.stmt(sid)
        template = log_template(program, stmt)
        named = [k for k in block.parameters if k in template or k in stmt.text]
        if named:
            return Decision.KEEP_EXISTING, f"log at line {program.line_of(sid)[1]} names '{named[0]}'"
        for arg in stmt.args[1:]:
            d = _def(program, method, arg)
            if d is not None and d.id in block.tainted:
                return Decision.KEEP_EXISTING, f"log at line {program.line_of(sid)[1]} reports tainted value {_text(method, program, arg)}"
    lines = ", ".join(str(program.line_of(s)[1]) for s in block.existing_logs)
    return (
        Decision.INJECT_AND_FLAG_REDUNDANT,
        f"existing log(s) at line {lines} carry neither a parameter key nor a configuration-derived value",
    )


# --- scenario classification ----------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioFacts:
    scenario: Scenario
    arm: str  # "then" or "else": region that receives the log
    anchor: int | None = None  # statement to insert before (early return)
    detail: str = ""


def _arm_of(block: SensitiveBlock, sid: int) -> str | None:
    if sid in block.then_stmts:
        return "then"
    if sid in block.else_stmts:
        return "else"
    return None


def _default_arm(block: SensitiveBlock, program: Program) -> str:
    def real(ids):
        return [i for i in ids if program.stmt(i).kind is not Kind.PHI]

    if real(block.then_stmts) or not real(block.else_stmts):
        return "then"
    return "else"


def scenario_facts(block: SensitiveBlock, program: Program) -> ScenarioFacts:
    method = program.methods[block.method]
    region = set(block.region_stmts())
    tainted = block.tainted

    # (1) fallback: a merge of an in-region definition with a configuration-derived one
    for sid in block.dependent_stmts:
        phi = program.stmt(sid)
        if phi.kind is not Kind.PHI or len(phi.uses) < 2:
            continue
        defs = [_def(program, method, u) for u in phi.uses]
        plain = [d for d in defs if d is not None and d.id in region and d.id not in tainted]
        if plain and any(d is not None and d.id in tainted and d not in plain for d in defs):
            arm = _arm_of(block, plain[0].id) or "then"
            return ScenarioFacts(Scenario.FALLBACK_PATH, arm, detail=f"falling back to an alternate value for {_base(phi.text)}")
    writes: dict[str, list[Statement]] = {}
    for s in method.statements():
        if s.kind is Kind.FIELD_WRITE and s.value:
            writes.setdefault(s.value, []).append(s)
    for ref, ws in sorted(writes.items()):
        plain = [w for w in ws if w.id in region and w.id not in tainted]
        if plain and any(w.id in tainted for w in ws):
            arm = _arm_of(block, plain[0].id) or "then"
            return ScenarioFacts(Scenario.FALLBACK_PATH, arm, detail=f"falling back to an alternate value for {ref.rpartition('.')[2]}")

    # (2) service switch: early exit, feature flag flip, or service start/stop
    arms = (("then", block.then_stmts), ("else", block.else_stmts))
    for arm_name, ids in arms:
        for sid in ids:
            if program.stmt(sid).kind is Kind.RETURN:
                return ScenarioFacts(Scenario.SERVICE_SWITCH, arm_name, anchor=sid, detail="returning early and skipping the remaining setup")
    for arm_name, ids in arms:
        for sid in ids:
            s = program.stmt(sid)
            if s.kind is Kind.FIELD_WRITE:
                lit = _literal(program, method, s.uses[-1])
                if lit in ("true", "false"):
                    return ScenarioFacts(Scenario.SERVICE_SWITCH, arm_name, detail=f"switching {s.value.rpartition('.')[2]} to {lit}")
            if s.kind is Kind.CALL and not s.is_log_call and s.callee:
                name = s.callee.split("(")[0].split("/")[0].rpartition(".")[2]
                if _SWITCH_CALL.match(name):
                    verb = "activating" if _ENABLE_CALL.match(name) else "deactivating"
                    return ScenarioFacts(Scenario.SERVICE_SWITCH, arm_name, detail=f"{verb} a service via {name}()")
    return ScenarioFacts(Scenario.CONFIG_PROCESSING, _default_arm(block, program), detail="applying the configured value")


def classify_scenario(block: SensitiveBlock, program: Program) -> Scenario:
    """Precedence: fallback_path > service_switch > config_processing."""
    return scenario_facts(block, program).scenario


# --- constraint derivation ----------------------------------------------------------------------

_NEGATE = {"==": "!=", "!=": "==", "<": ">=", ">=": "<", ">": "<=", "<=": ">"}
_PHRASE = {
    "==": "equals",
    "!=": "differs from",
    "<": "is below",
    ">": "exceeds",
    "<=": "is at most",
    ">=": "is at least",
}


@dataclass
class Atom:
    op: str | None  # comparison operator, or None for a boolean value
    operands: tuple[str, ...]
    negated: bool = False

    def effective_op(self, holds: bool) -> str | None:
        neg = self.negated ^ (not holds)
        if self.op is None:
            return "false" if neg else "true"
        return _NEGATE[self.op] if neg else self.op


def _atoms(program: Program, method: MethodDecl, value: str, negated: bool = False) -> tuple[list[Atom], str | None]:
    """Decompose a condition into comparison atoms; second item is the connective."""
    s = _follow_copies(program, method, value)
    if s is not None and s.kind is Kind.ASSIGN:
        if s.op == "!":
            return _atoms(program, method, s.uses[0], not negated)
        if s.op in _NEGATE:
            return [Atom(s.op, s.uses, negated)], None
        if s.op in ("&&", "||"):
            left, _ = _atoms(program, method, s.uses[0], negated)
            right, _ = _atoms(program, method, s.uses[1], negated)
            conn = s.op
            if negated:
                conn = "||" if conn == "&&" else "&&"
            return left + right, conn
    if s is not None and s.kind is Kind.CALL and s.callee:
        name = s.callee.split("/")[0].split("(")[0].rpartition(".")[2]
        if name in ("equals", "equalsIgnoreCase") and len(s.uses) == 2:
            return [Atom("==", s.uses, negated)], None
    return [Atom(None, (value,), negated)], None


@dataclass
class Constraint:
    text: str
    variables: list[str]
    guidance: list[str]


def derive_constraint(block: SensitiveBlock, program: Program, holds: bool = True, bounds: bool = True) -> Constraint:
    """Render the branch predicate (as it holds on the logged arm) into text.

    ``bounds`` adds "review so that ..." guidance for inequalities; it only
    makes sense when the logged arm handles an invalid value.
    Raises ConstraintUnderivable when no comparison touches a tainted value.
    """
    method = program.methods[block.method]
    branch = program.stmt(block.entry_stmt)
    atoms, conn = _atoms(program, method, branch.cond or "")
    keys = set(block.parameters)

    def tainted(v: str) -> bool:
        d = _def(program, method, v)
        return d is not None and d.id in block.tainted

    def keys_of(v: str) -> list[str]:
        d = _def(program, method, v)
        return [k for k in block.tainted.get(d.id, ()) if k in keys] if d is not None else []

    variables: list[str] = []
    guidance: list[str] = []
    parts: list[str] = []

    def operand(v: str) -> str:
        lit = _literal(program, method, v)
        if lit is not None:
            return lit
        text = _text(method, program, v)
        if tainted(v) and text not in variables:
            variables.append(text)
            return f"{text}={PLACEHOLDER}"
        return text

    useful = [a for a in atoms if any(tainted(v) for v in a.operands)]
    if not useful:
        raise ConstraintUnderivable(f"no comparison in '{branch.text}' involves a configuration value")
    for a in useful:
        op = a.effective_op(holds)
        if a.op is None:
            call = _follow_copies(program, method, a.operands[0])
            if call is not None and call.kind is Kind.CALL and call.receiver and tainted(call.receiver):
                name = call.callee.split("/")[0].split("(")[0].rpartition(".")[2]
                shown = ", ".join(operand(x) for x in call.args)
                verdict = "holds" if op == "true" else "does not hold"
                parts.append(f"{operand(call.receiver)} {name}({shown}) {verdict}")
            else:
                parts.append(f"{operand(a.operands[0])} is {op}")
            continue
        left, right = a.operands
        if not tainted(left) and tainted(right):
            left, right, op = right, left, _flip(op)
        lit_left, lit_right = _literal(program, method, left), _literal(program, method, right)
        parts.append(f"{operand(left)} {_PHRASE[op]} {operand(right)}")
        if a.op in ("==", "!=") and (lit_left is None) != (lit_right is None):
            expected = lit_right if lit_right is not None else lit_left
            subject = left if lit_right is not None else right
            for k in keys_of(subject):
                if expected == "null":
                    if op == "==":
                        guidance.append(f"Please set '{k}'; no value is configured")
                elif op == "!=":
                    guidance.append(f"Please set '{k}' to {expected}")
                else:
                    guidance.append(f"Please set '{k}' to a value other than {expected} if this is unintended")
        elif bounds and a.op in _NEGATE:
            other = lit_right if lit_right is not None else _text(method, program, right)
            for k in keys_of(left):
                guidance.append(f"Please review '{k}' so that it {_PHRASE[_NEGATE[op]]} {other}")
    joiner = " and " if conn in (None, "&&") else " or "
    if not holds and len(useful) > 1:
        joiner = " or " if joiner == " and " else " and "
    return Constraint(joiner.join(parts), variables, list(dict.fromkeys(guidance)))


def _base(value_name: str) -> str:
    return value_name.split("#")[0].split("=")[0].strip()


def _flip(op: str) -> str:
    return {"<": ">", ">": "<", "<=": ">=", ">=": "<="}.get(op, op)


# --- drafting ----------------------------------------------------------------------------------------


def _arm_ids(block: SensitiveBlock, arm: str) -> tuple[int, ...]:
    return block.then_stmts if arm == "then" else block.else_stmts


def insert_line_for(block: SensitiveBlock, program: Program, facts: ScenarioFacts) -> int:
    if facts.anchor is not None:
        return program.line_of(facts.anchor)[1]
    lines = [program.line_of(i)[1] for i in _arm_ids(block, facts.arm) if program.stmt(i).kind is not Kind.PHI]
    return min(lines) if lines else block.entry_line + 1


def synthesize_template(
    block: SensitiveBlock,
    scenario: Scenario | ScenarioFacts,
    decision: Decision,
    program: Program,
    rationale: str = "",
) -> LogDraft:
    """Deterministic three-part draft: level, constraint message, runtime variables."""
    if decision is Decision.KEEP_EXISTING:
        raise ValueError("nothing to draft for a block whose existing log is kept")
    facts = scenario if isinstance(scenario, ScenarioFacts) else _facts_for(block, program, scenario)
    keys_text = ", ".join(f"'{k}'" for k in block.parameters)
    derived = True
    try:
        c = derive_constraint(block, program, holds=facts.arm == "then", bounds=facts.scenario is Scenario.FALLBACK_PATH)
        constraint, variables, guidance = c.text, c.variables, c.guidance
    except ConstraintUnderivable:
        derived = False
        method = program.methods[block.method]
        branch = program.stmt(block.entry_stmt)
        cond_def = _def(program, method, branch.cond or "")
        variables = []
        for u in cond_def.uses if cond_def is not None else ():
            d = _def(program, method, u)
            text = _text(method, program, u)
            if d is not None and d.id in block.tainted and text not in variables:
                variables.append(text)
        state = "holds" if facts.arm == "then" else "does not hold"
        shown = ", ".join(f"{v}={PLACEHOLDER}" for v in variables)
        constraint = f"condition '{branch.text.replace(chr(34), chr(39))}' {state}" + (f" ({shown})" if shown else "")
        guidance = []
    if not guidance:
        guidance = [f"Review {keys_text} if this behavior is unintended"]
    guidance_text = ". ".join(guidance) + "."
    template = f"Configuration {keys_text}: {constraint}; {facts.detail}. {guidance_text}"
    draft = LogDraft(
        block_id=block.block_id,
        file=block.file,
        decision=decision,
        scenario=facts.scenario,
        level=SCENARIO_LEVEL[facts.scenario],
        insert_line=insert_line_for(block, program, facts),
        message_template=template,
        variables=tuple(variables),
        guidance=guidance_text,
        parameters=block.parameters,
        arm=facts.arm,
        constraint_derived=derived,
        rationale=rationale,
    )
    draft.check()
    return draft


def _facts_for(block: SensitiveBlock, program: Program, scenario: Scenario) -> ScenarioFacts:
    facts = scenario_facts(block, program)
    if facts.scenario is scenario:
        return facts
    return ScenarioFacts(scenario, _default_arm(block, program), detail=scenario.value.replace("_", " "))


def is_configuration_informative(template: str, variables, keys, constant_keys: dict[str, str] | None = None) -> bool:
    """Template or variables mention at least one parameter key (directly or via its constant)."""
    keys = set(keys)
    if any(k in template for k in keys):
        return True
    constant_keys = constant_keys or {}
    for v in variables:
        if any(k in v for k in keys):
            return True
        for const, key in constant_keys.items():
            if key in keys and re.search(rf"\b{re.escape(const)}\b", v):
                return True
    return False


# --- rewriting ------------------------------------------------------------------------------------------


def insert_statement(text: str, line: int, statement: str) -> str:
    lines = text.splitlines(keepends=True)
    if not 1 <= line <= len(lines) + 1:
        raise ReparseFailure(f"insert line {line} outside file of {len(lines)} lines")
    target = lines[line - 1] if line <= len(lines) else (lines[-1] if lines else "")
    indent = target[: len(target) - len(target.lstrip(" \t"))]
    newline = "\r\n" if target.endswith("\r\n") else "\n"
    if line > len(lines) and lines and not lines[-1].endswith("\n"):
        lines[-1] += newline
    lines.insert(line - 1, indent + statement + newline)
    return "".join(lines)


def remove_line(text: str, line: int) -> str:
    lines = text.splitlines(keepends=True)
    del lines[line - 1]
    return "".join(lines)


def _inside_arm(program: Program, file: str, entry_line: int, arm: str, line: int) -> bool:
    """Is there a log call at ``line`` inside the ``arm`` of the branch at ``entry_line``?"""
    for method in program.methods.values():
        unit = program.method_unit[method.signature]
        if unit.path != file:
            continue
        branches = [s for s in method.statements() if s.kind is Kind.BRANCH and unit.line_map[s.id][1] == entry_line]
        logs = [s for s in method.statements() if s.is_log_call and unit.line_map[s.id][1] == line]
        if not branches or not logs:
            continue
        idom = dominators(method)
        for br in branches:
            target = br.then if arm == "then" else br.else_
            if target is None:
                continue
            for lg in logs:
                if dominates(idom, target, method.block_of(lg.id).id):
                    return True
    return False


def rewrite_source(sources: dict[str, str], draft: LogDraft, entry_line: int | None = None) -> str:
    """Return the draft's file with the logging statement inserted.

    The whole program is re-parsed with the new text; on failure the
    original is left untouched and ReparseFailure is raised.
    """
    if draft.decision is Decision.KEEP_EXISTING:
        return sources[draft.file]
    if draft.file not in sources:
        raise ReparseFailure(f"target file {draft.file} not present")
    if entry_line is not None and draft.insert_line <= entry_line:
        raise ReparseFailure(f"insert line {draft.insert_line} is not below the branch at line {entry_line}")
    new_text = insert_statement(sources[draft.file], draft.insert_line, draft.statement())
    trial = dict(sources)
    trial[draft.file] = new_text
    try:
        program = Program(parse_texts(trial))
    except SourceSyntaxError as exc:
        raise ReparseFailure(f"insertion at {draft.file}:{draft.insert_line} does not parse: {exc}") from exc
    if entry_line is not None and not _inside_arm(program, draft.file, entry_line, draft.arm, draft.insert_line):
        raise ReparseFailure(f"inserted statement at {draft.file}:{draft.insert_line} falls outside the {draft.arm} region")
    return new_text


# --- external generator wire contract ---------------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorRequest:
    code_whole: str
    code_specified: str
    params: tuple[str, ...]
    existing_logs: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "code_whole": self.code_whole,
            "code_specified": self.code_specified,
            "params": list(self.params),
            "existing_logs": list(self.existing_logs),
        }


@dataclass(frozen=True)
class GeneratorResponse:
    enhanced_code: str
    inserted_line: int
    level: str
    message_template: str
    variables: tuple[str, ...] = field(default_factory=tuple)

    @classmethod
    def from_json(cls, d) -> GeneratorResponse:
        try:
            return cls(
                enhanced_code=str(d["enhanced_code"]),
                inserted_line=int(d["inserted_line"]),
                level=str(d["level"]),
                message_template=str(d["message_template"]),
                variables=tuple(str(v) for v in d.get("variables", ())),
            )
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ResponseRejected(f"malformed response: {exc}") from exc


def build_request(block: SensitiveBlock, sources: dict[str, str], program: Program) -> tuple[GeneratorRequest, int]:
    """Request for one block plus the file line where ``code_whole`` starts."""
    method = program.methods[block.method]
    lines = sources[block.file].splitlines()
    first, last = method.first_line, method.last_line
    whole = "\n".join(lines[first - 1 : last])
    lo = min(block.checking_span[0], block.handling_span[0])
    hi = max(block.checking_span[1], block.handling_span[1])
    specified = "\n".join(lines[lo - 1 : hi])
    logs = tuple(program.stmt(s).text for s in block.existing_logs)
    return GeneratorRequest(whole, specified, block.parameters, logs), first


def validate_response(
    request: GeneratorRequest,
    response: GeneratorResponse,
    block: SensitiveBlock,
    first_line: int,
    constant_keys: dict[str, str] | None = None,
) -> tuple[str, int, tuple[str, ...], str]:
    """Gate a generator response; returns (level, file line, variables, template)."""
    before = request.code_whole.splitlines()
    after = response.enhanced_code.splitlines()
    if len(after) > len(before) + 1:
        raise ResponseRejected("multi-insert")
    if len(after) != len(before) + 1:
        raise ResponseRejected("no inserted statement")
    i = next((k for k in range(len(before)) if before[k] != after[k]), len(before))
    if after[:i] != before[:i] or after[i + 1 :] != before[i:]:
        raise ResponseRejected("existing code modified")
    if response.inserted_line != i + 1:
        raise ResponseRejected("inserted_line does not match the inserted statement")
    try:
        stmt = ast.parse_statement(after[i].strip())
    except SourceSyntaxError as exc:
        raise ResponseRejected(f"inserted statement does not parse: {exc.message}") from exc
    call = stmt.expr if isinstance(stmt, ast.ExprStmt) else None
    if not (isinstance(call, ast.Call) and isinstance(call.obj, ast.Name) and call.obj.id == "LOG" and call.name in LOG_LEVELS):
        raise ResponseRejected("inserted statement is not a logging call")
    if not call.args or not (isinstance(call.args[0], ast.Literal) and call.args[0].kind == "string"):
        raise ResponseRejected("logging call lacks a literal message template")
    template = call.args[0].value
    variables = tuple(ast.render(a) for a in call.args[1:])
    if call.name.upper() != response.level.upper():
        raise ResponseRejected("level field disagrees with the inserted statement")
    if template.count(PLACEHOLDER) != len(variables):
        raise ResponseRejected("placeholder count differs from argument count")
    if not is_configuration_informative(template, variables, request.params, constant_keys):
        raise ResponseRejected("not configuration-informative")
    file_line = first_line + i
    lo = min(block.entry_line + 1, block.handling_span[0])
    hi = max(block.handling_span[1], block.entry_line + 1)
    if not lo <= file_line <= hi:
        raise ResponseRejected("inserted statement outside the sensitive block")
    return call.name.upper(), file_line, variables, template


def call_external_generator(endpoint: str, request: GeneratorRequest, timeout: float = 30.0) -> GeneratorResponse:
    body = json.dumps(request.to_json()).encode("utf-8")
    req = urllib.request.Request(endpoint, data=body, headers={"Content-Type": "application/json"}, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            payload = resp.read()
    except (urllib.error.URLError, OSError) as exc:
        raise EndpointUnavailable(f"{endpoint}: {exc}") from exc
    try:
        data = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise ResponseRejected("response is not JSON") from exc
    return GeneratorResponse.from_json(data)


def draft_from_generator(
    block: SensitiveBlock,
    fallback: LogDraft,
    sources: dict[str, str],
    program: Program,
    endpoint: str,
    constant_keys: dict[str, str] | None = None,
    timeout: float = 30.0,
) -> LogDraft:
    """Ask the external generator; on any failure return ``fallback`` annotated with why."""
    request, first = build_request(block, sources, program)
    try:
        response = call_external_generator(endpoint, request, timeout)
        level, line, variables, template = validate_response(request, response, block, first, constant_keys)
    except (EndpointUnavailable, ResponseRejected) as exc:
        return _annotate(fallback, f"template-fallback ({exc})")
    guidance = next((s.strip() for s in template.split(".") if s.strip().lower().startswith("please")), "")
    arm = "else" if any(program.line_of(s)[1] == line for s in block.else_stmts) else fallback.arm
    return LogDraft(
        block_id=fallback.block_id,
        file=fallback.file,
        decision=fallback.decision,
        scenario=fallback.scenario,
        level=level,
        insert_line=line,
        message_template=template,
        variables=variables,
        guidance=guidance,
        parameters=fallback.parameters,
        arm=arm,
        constraint_derived=fallback.constraint_derived,
        rationale=fallback.rationale,
        backend="external",
    )


def _annotate(draft: LogDraft, backend: str) -> LogDraft:
    from dataclasses import replace

    return replace(draft, backend=backend)


# --- whole-program enhancement ------------------------------------------------------------------------------


@dataclass
class BlockOutcome:
    block: SensitiveBlock
    decision: Decision
    rationale: str
    draft: LogDraft | None = None
    final_line: int | None = None
    error: str | None = None
    redundant_lines: tuple[int, ...] = ()

    def to_report(self) -> dict:
        d = {
            "block_id": self.block.block_id,
            "file": self.block.file,
            "entry_line": self.block.entry_line,
            "parameters": list(self.block.parameters),
            "decision": self.decision.value,
            "rationale": self.rationale,
            "redundant_log_lines": list(self.redundant_lines),
        }
        if self.draft is not None:
            d["draft"] = self.draft.to_report()
            d["final_line"] = self.final_line
        if self.error:
            d["error"] = self.error
        return d


def plan_drafts(
    blocks: list[SensitiveBlock],
    program: Program,
    sources: dict[str, str],
    backend: str = "template",
    endpoint: str | None = None,
    constant_keys: dict[str, str] | None = None,
    max_inflight: int = 4,
) -> list[BlockOutcome]:
    outcomes = []
    for block in blocks:
        decision, rationale = inspect_existing(block, program)
        outcome = BlockOutcome(block, decision, rationale)
        if decision is Decision.INJECT_AND_FLAG_REDUNDANT:
            outcome.redundant_lines = tuple(sorted({program.line_of(s)[1] for s in block.existing_logs}))
        if decision is not Decision.KEEP_EXISTING:
            facts = scenario_facts(block, program)
            outcome.draft = synthesize_template(block, facts, decision, program, rationale)
        outcomes.append(outcome)
    if backend == "external" and endpoint:
        todo = [o for o in outcomes if o.draft is not None]
        with ThreadPoolExecutor(max_workers=max(1, max_inflight)) as pool:
            results = list(
                pool.map(
                    lambda o: draft_from_generator(o.block, o.draft, sources, program, endpoint, constant_keys),
                    todo,
                )
            )
        for o, d in zip(todo, results):
            o.draft = d
    return outcomes


def apply_drafts(sources: dict[str, str], outcomes: list[BlockOutcome]) -> dict[str, str]:
    """Insert every draft, bottom-up per file, re-parsing after each insertion."""
    current = dict(sources)
    pending = [o for o in outcomes if o.draft is not None]
    order = sorted(pending, key=lambda o: (o.draft.file, -o.draft.insert_line, o.block.entry_line))
    applied: list[BlockOutcome] = []
    for o in order:
        try:
            current[o.draft.file] = rewrite_source(current, o.draft, o.block.entry_line)
            applied.append(o)
        except ReparseFailure as exc:
            o.error = str(exc)
            o.draft = None
    for idx, o in enumerate(applied):
        later = applied[idx + 1 :]
        shift = sum(1 for x in later if x.draft.file == o.draft.file and x.draft.insert_line <= o.draft.insert_line)
        o.final_line = o.draft.insert_line + shift
    return current


@dataclass
class EnhanceResult:
    sources: dict[str, str]
    outcomes: list[BlockOutcome]
    analysis: object  # taint.Analysis of the input program
    timings: dict[str, float]

    @property
    def injected(self) -> list[BlockOutcome]:
        return [o for o in self.outcomes if o.draft is not None and o.final_line is not None]

    def predicted_points(self) -> list[dict]:
        return [
            {
                "file": o.draft.file,
                "line": o.final_line,
                "block_id": o.block.block_id,
                "level": o.draft.level,
                "variables": list(o.draft.variables),
                "text": o.draft.message_template,
            }
            for o in self.injected
        ]

    def to_report(self) -> dict:
        return {
            "blocks": [o.to_report() for o in self.outcomes],
            "injected": len(self.injected),
            "kept": sum(1 for o in self.outcomes if o.decision is Decision.KEEP_EXISTING),
            "flagged_redundant": sum(1 for o in self.outcomes if o.decision is Decision.INJECT_AND_FLAG_REDUNDANT),
            "predicted": self.predicted_points(),
        }


def enhance(
    sources: dict[str, str],
    catalog,
    max_path_len: int = 30,
    include_control: bool = True,
    extra_engines: tuple[str, ...] = (),
    backend: str = "template",
    endpoint: str | None = None,
    max_inflight: int = 4,
) -> EnhanceResult:
    """Analyze ``sources`` (path -> text) and inject one log per sensitive block lacking one."""
    import time

    from .taint import analyze

    analysis = analyze(parse_texts(sources), catalog, max_path_len, include_control, extra_engines)
    constant_keys = {}
    for ref, (_engine, key) in analysis.engines.colored_fields().items():
        constant_keys[ref] = key
        constant_keys[ref.rpartition(".")[2]] = key
    t = time.perf_counter()
    outcomes = plan_drafts(analysis.blocks, analysis.program, sources, backend, endpoint, constant_keys, max_inflight)
    timings = dict(analysis.timings)
    timings["synthesis"] = time.perf_counter() - t
    t = time.perf_counter()
    enhanced = apply_drafts(sources, outcomes)
    timings["rewrite"] = time.perf_counter() - t
    return EnhanceResult(enhanced, outcomes, analysis, timings)
