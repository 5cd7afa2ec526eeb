"""Configuration parameter catalog built from key/value documentation.

Three documentation shapes are accepted:

* ``kvdoc-xml``  -- ``<configuration><property><name/><value/><description/></property>...``
* ``kvdoc-json`` -- ``[{"name": ..., "value": ..., "type": ..., "description": ...}, ...]``
* ``kvdoc-tsv``  -- ``key<TAB>default<TAB>description`` per line
"""

from __future__ import annotations

import enum
import json
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DuplicateKey, MalformedDoc

FORMATS = ("kvdoc-xml", "kvdoc-json", "kvdoc-tsv")

IDENT_CHARS = frozenset("ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_.-")
# a key followed by one of these and then a non-identifier char (or end) still
# counts as bounded: "... in property: mapred.local.dir."
_TRAILING_PUNCT = frozenset(".-")


class ValueType(str, enum.Enum):
    STRING = "string"
    INT = "int"
    FLOAT = "float"
    BOOL = "bool"
    DURATION = "duration"
    PATH = "path"
    ENUM = "enum"
    UNTYPED = "untyped"


_TYPE_ALIASES = {
    "string": ValueType.STRING,
    "str": ValueType.STRING,
    "int": ValueType.INT,
    "integer": ValueType.INT,
    "long": ValueType.INT,
    "float": ValueType.FLOAT,
    "double": ValueType.FLOAT,
    "bool": ValueType.BOOL,
    "boolean": ValueType.BOOL,
    "duration": ValueType.DURATION,
    "time": ValueType.DURATION,
    "path": ValueType.PATH,
    "file": ValueType.PATH,
}

_ENUM_HINT = re.compile(r"^enum\s*(?:\((?P<paren>[^)]*)\)|:(?P<colon>.*))$", re.IGNORECASE)


def parse_type_hint(hint: str | None) -> tuple[ValueType, tuple[str, ...]]:
    """Map a free-form type hint to ``(ValueType, enum choices)``.

    ``None``/empty gives ``untyped``; ``enum(a,b)`` and ``enum:a,b`` give an
    enumeration; unknown words are treated as ``untyped``.
    """
    if hint is None or not hint.strip():
        return ValueType.UNTYPED, ()
    text = hint.strip()
    m = _ENUM_HINT.match(text)
    if m:
        body = m.group("paren") if m.group("paren") is not None else m.group("colon")
        choices = tuple(c.strip() for c in body.replace("|", ",").split(",") if c.strip())
        return ValueType.ENUM, choices
    return _TYPE_ALIASES.get(text.lower(), ValueType.UNTYPED), ()


def format_type_hint(value_type: ValueType, choices: tuple[str, ...]) -> str | None:
    if value_type is ValueType.UNTYPED:
        return None
    if value_type is ValueType.ENUM:
        return "enum(" + ",".join(choices) + ")"
    return value_type.value


@dataclass(frozen=True)
class ConfigParameter:
    key: str
    value_type: ValueType = ValueType.UNTYPED
    default_value: str | None = None
    description: str | None = None
    choices: tuple[str, ...] = ()
    # (doc path, entry index); provenance only, ignored by equality
    source_doc: tuple[str, int] = field(default=("", 0), compare=False)

    def __post_init__(self) -> None:
        if not self.key or any(c.isspace() for c in self.key):
            raise MalformedDoc(f"invalid parameter key {self.key!r}")


@dataclass(frozen=True)
class ParameterCatalog:
    parameters: tuple[ConfigParameter, ...] = ()
    skipped: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        index: dict[str, ConfigParameter] = {}
        for p in self.parameters:
            if p.key in index:
                raise DuplicateKey(p.key, index[p.key].source_doc, p.source_doc)
            index[p.key] = p
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_matcher", None)

    @property
    def key_index(self) -> dict[str, ConfigParameter]:
        return dict(self._index)  # type: ignore[attr-defined]

    def __len__(self) -> int:
        return len(self.parameters)

    def __iter__(self) -> Iterator[ConfigParameter]:
        return iter(self.parameters)

    def __contains__(self, key: object) -> bool:
        return key in self._index  # type: ignore[attr-defined]

    def get(self, key: str) -> ConfigParameter | None:
        return self._index.get(key)  # type: ignore[attr-defined]

    def keys(self) -> list[str]:
        return [p.key for p in self.parameters]

    def merged(self, other: ParameterCatalog) -> ParameterCatalog:
        return ParameterCatalog(self.parameters + other.parameters, self.skipped + other.skipped)


# --- loading -----------------------------------------------------------------


def detect_format(path: str | Path) -> str:
    suffix = Path(path).suffix.lower()
    return {".xml": "kvdoc-xml", ".json": "kvdoc-json", ".tsv": "kvdoc-tsv"}.get(suffix, "kvdoc-xml")


def load_catalog(path: str | Path, format: str | None = None) -> ParameterCatalog:
    """Load one documentation file into a catalog.

    Entries with an empty key are skipped and counted in ``catalog.skipped``.
    Raises :class:`MalformedDoc` on unparsable input and :class:`DuplicateKey`
    when a key is documented twice.
    """
    path = Path(path)
    fmt = format or detect_format(path)
    if fmt not in FORMATS:
        raise MalformedDoc(f"unknown documentation format {fmt!r}")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise MalformedDoc(f"cannot read {path}: {exc}") from exc
    reader = {"kvdoc-xml": _read_xml, "kvdoc-json": _read_json, "kvdoc-tsv": _read_tsv}[fmt]
    params: list[ConfigParameter] = []
    skipped = 0
    for index, entry in enumerate(reader(text, str(path))):
        key = (entry.get("name") or "").strip()
        if not key:
            skipped += 1
            continue
        value_type, choices = parse_type_hint(entry.get("type"))
        params.append(
            ConfigParameter(
                key=key,
                value_type=value_type,
                default_value=entry.get("value"),
                description=entry.get("description"),
                choices=choices,
                source_doc=(str(path), index),
            )
        )
    return ParameterCatalog(tuple(params), skipped)


def load_catalogs(paths: Iterable[str | Path]) -> ParameterCatalog:
    catalog = ParameterCatalog()
    for p in paths:
        catalog = catalog.merged(load_catalog(p))
    return catalog


def _read_xml(text: str, origin: str) -> list[dict[str, str | None]]:
    if not text.strip():
        return []
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise MalformedDoc(f"{origin}: {exc}") from exc
    if root.tag != "configuration":
        raise MalformedDoc(f"{origin}: root element must be <configuration>, got <{root.tag}>")
    entries = []
    for prop in root.findall("property"):
        entry: dict[str, str | None] = {}
        for tag in ("name", "value", "description", "type"):
            node = prop.find(tag)
            entry[tag] = None if node is None else (node.text or "").strip()
        entries.append(entry)
    return entries


def _read_json(text: str, origin: str) -> list[dict[str, str | None]]:
    if not text.strip():
        return []
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDoc(f"{origin}: {exc}") from exc
    if not isinstance(data, list) or not all(isinstance(d, dict) for d in data):
        raise MalformedDoc(f"{origin}: expected a JSON array of objects")
    entries = []
    for d in data:
        entries.append({k: None if d.get(k) is None else str(d[k]) for k in ("name", "value", "description", "type")})
    return entries


def _read_tsv(text: str, origin: str) -> list[dict[str, str | None]]:
    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) > 3:
            raise MalformedDoc(f"{origin}:{lineno}: expected at most 3 tab-separated columns")
        cols += [""] * (3 - len(cols))
        entries.append(
            {"name": cols[0], "value": cols[1] or None, "description": cols[2] or None, "type": None}
        )
    return entries


def dump_catalog(catalog: ParameterCatalog) -> str:
    """Serialize as ``kvdoc-json``; :func:`load_catalog` reads it back unchanged."""
    return json.dumps(
        [
            {
                "name": p.key,
                "value": p.default_value,
                "type": format_type_hint(p.value_type, p.choices),
                "description": p.description,
            }
            for p in catalog.parameters
        ],
        indent=2,
    )


# --- matching keys in free text ---------------------------------------------


def _bounded(text: str, start: int, end: int) -> bool:
    if start > 0 and text[start - 1] in IDENT_CHARS:
        return False
    if end == len(text) or text[end] not in IDENT_CHARS:
        return True
    return text[end] in _TRAILING_PUNCT and (end + 1 == len(text) or text[end + 1] not in IDENT_CHARS)


def match_parameters_in_text(catalog: ParameterCatalog, text: str) -> list[tuple[str, tuple[int, int]]]:
    """Find every standalone occurrence of a catalog key in ``text``.

    Returns ``(key, (start, end))`` pairs sorted by position. Spans never
    overlap; where two keys overlap the longer one wins. Matching is
    case-sensitive.
    """
    matcher = catalog._matcher  # type: ignore[attr-defined]
    if matcher is None:
        keys = sorted(catalog.keys(), key=lambda k: (-len(k), k))
        matcher = re.compile("|".join(re.escape(k) for k in keys)) if keys else False
        object.__setattr__(catalog, "_matcher", matcher)
    if not matcher or not text:
        return []
    candidates: list[tuple[int, int, str]] = []
    # overlapping scan: retry from every start offset the regex could match at
    pos = 0
    while True:
        m = matcher.search(text, pos)
        if m is None:
            break
        start = m.start()
        # the alternation prefers the longest key at this offset; shorter keys
        # at the same offset are only relevant if the longest is unbounded
        for key in _keys_at(catalog, text, start):
            if _bounded(text, start, start + len(key)):
                candidates.append((start, start + len(key), key))
                break
        pos = start + 1
    candidates.sort(key=lambda c: (-(c[1] - c[0]), c[0]))
    taken: list[tuple[int, int, str]] = []
    for c in candidates:
        if all(c[1] <= t[0] or c[0] >= t[1] for t in taken):
            taken.append(c)
    taken.sort()
    return [(key, (s, e)) for s, e, key in taken]


def _keys_at(catalog: ParameterCatalog, text: str, start: int) -> list[str]:
    return sorted(
        (k for k in catalog._index if text.startswith(k, start)),  # type: ignore[attr-defined]
        key=len,
        reverse=True,
    )
