"""Gold-standard protocol model: types, YAML parsing, validation.

A protocol document is a UTF-8 YAML file with top-level keys
``id, title, version, materials, steps``.  The parser is strict: unknown
keys are rejected, and every structural invariant is enforced at parse
time, so any document that parses also validates clean.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import yaml

from .errors import ProtocolSyntaxError, SchemaError

UNKNOWN_LABEL = "unknown"

_PROTOCOL_KEYS = {"id", "title", "version", "materials", "steps"}
_STEP_KEYS = {
    "index", "id", "name", "action_label", "description",
    "expected_duration_ms", "required_materials", "parameters",
    "requires_sterile", "skippable",
}
_PARAM_KEYS = {"name", "unit", "expected", "tolerance"}


@dataclass(frozen=True)
class ParameterSpec:
    """A critical parameter with an absolute tolerance in its own unit."""

    name: str
    unit: str
    expected: float
    tolerance: float


@dataclass(frozen=True)
class Step:
    index: int
    id: str
    name: str
    action_label: str
    description: str
    duration_min_ms: int
    duration_max_ms: int
    required_materials: tuple[str, ...] = ()
    parameters: tuple[ParameterSpec, ...] = ()
    requires_sterile: bool = False
    skippable: bool = False


@dataclass(frozen=True)
class Protocol:
    id: str
    title: str
    version: str
    steps: tuple[Step, ...]
    materials: tuple[str, ...] = ()

    def label_vocabulary(self) -> set[str]:
        return {s.action_label for s in self.steps}

    def step_by_id(self, step_id: str) -> Step:
        for s in self.steps:
            if s.id == step_id:
                return s
        raise KeyError(step_id)


@dataclass
class ValidationReport:
    issues: list[tuple[str, str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not any(sev == "error" for sev, _, _ in self.issues)

    def add(self, severity: str, path: str, message: str) -> None:
        self.issues.append((severity, path, message))


def _require(cond, path, message):
    if not cond:
        raise SchemaError(path, message)


def _typed(obj, typ, path):
    # bool is an int subclass; keep the two apart.
    if typ is int and isinstance(obj, bool):
        raise SchemaError(path, "expected integer, got boolean")
    if typ is float and isinstance(obj, int) and not isinstance(obj, bool):
        return float(obj)
    if not isinstance(obj, typ):
        raise SchemaError(path, f"expected {typ.__name__}, got {type(obj).__name__}")
    return obj


def _str_list(obj, path) -> tuple[str, ...]:
    _typed(obj, list, path)
    return tuple(_typed(x, str, f"{path}[{i}]") for i, x in enumerate(obj))


def _parse_parameter(obj, path) -> ParameterSpec:
    _typed(obj, dict, path)
    unknown = set(obj) - _PARAM_KEYS
    _require(not unknown, path, f"unknown keys: {sorted(unknown)}")
    for k in ("name", "unit", "expected", "tolerance"):
        _require(k in obj, path, f"missing key '{k}'")
    p = ParameterSpec(
        name=_typed(obj["name"], str, f"{path}.name"),
        unit=_typed(obj["unit"], str, f"{path}.unit"),
        expected=_typed(obj["expected"], float, f"{path}.expected"),
        tolerance=_typed(obj["tolerance"], float, f"{path}.tolerance"),
    )
    _require(p.unit != "", f"{path}.unit", "unit must be non-empty")
    _require(p.tolerance >= 0, f"{path}.tolerance", "tolerance must be >= 0")
    return p


def _parse_step(obj, path) -> Step:
    _typed(obj, dict, path)
    unknown = set(obj) - _STEP_KEYS
    _require(not unknown, path, f"unknown keys: {sorted(unknown)}")
    for k in ("index", "id", "name", "action_label", "expected_duration_ms"):
        _require(k in obj, path, f"missing key '{k}'")
    dur = obj["expected_duration_ms"]
    _typed(dur, list, f"{path}.expected_duration_ms")
    _require(len(dur) == 2, f"{path}.expected_duration_ms", "expected [min, max]")
    dmin = _typed(dur[0], int, f"{path}.expected_duration_ms[0]")
    dmax = _typed(dur[1], int, f"{path}.expected_duration_ms[1]")
    _require(0 <= dmin <= dmax, f"{path}.expected_duration_ms", "need 0 <= min <= max")
    _require(dmax > 0, f"{path}.expected_duration_ms", "max must be > 0")
    step = Step(
        index=_typed(obj["index"], int, f"{path}.index"),
        id=_typed(obj["id"], str, f"{path}.id"),
        name=_typed(obj["name"], str, f"{path}.name"),
        action_label=_typed(obj["action_label"], str, f"{path}.action_label"),
        description=_typed(obj.get("description", ""), str, f"{path}.description"),
        duration_min_ms=dmin,
        duration_max_ms=dmax,
        required_materials=_str_list(obj.get("required_materials", []), f"{path}.required_materials"),
        parameters=tuple(
            _parse_parameter(p, f"{path}.parameters[{i}]")
            for i, p in enumerate(_typed(obj.get("parameters", []), list, f"{path}.parameters"))
        ),
        requires_sterile=_typed(obj.get("requires_sterile", False), bool, f"{path}.requires_sterile"),
        skippable=_typed(obj.get("skippable", False), bool, f"{path}.skippable"),
    )
    _require(step.action_label != "", f"{path}.action_label", "action_label must be non-empty")
    _require(step.action_label != UNKNOWN_LABEL, f"{path}.action_label",
             f"'{UNKNOWN_LABEL}' is reserved for observations")
    return step


def parse_protocol(document: str) -> Protocol:
    """Parse a protocol document; raises ProtocolSyntaxError or SchemaError."""
    try:
        raw = yaml.safe_load(document)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark
        raise ProtocolSyntaxError(
            str(e.problem or e),
            line=None if mark is None else mark.line + 1,
            column=None if mark is None else mark.column + 1,
        ) from e
    except yaml.YAMLError as e:
        raise ProtocolSyntaxError(str(e)) from e

    _typed(raw, dict, "$")
    unknown = set(raw) - _PROTOCOL_KEYS
    _require(not unknown, "$", f"unknown keys: {sorted(unknown)}")
    for k in ("id", "title", "version", "steps"):
        _require(k in raw, "$", f"missing key '{k}'")

    steps_raw = _typed(raw["steps"], list, "$.steps")
    _require(len(steps_raw) > 0, "$.steps", "steps must be non-empty")
    steps = tuple(_parse_step(s, f"$.steps[{i}]") for i, s in enumerate(steps_raw))

    p = Protocol(
        id=_typed(raw["id"], str, "$.id"),
        title=_typed(raw["title"], str, "$.title"),
        version=_typed(raw["version"], str, "$.version"),
        materials=_str_list(raw.get("materials", []), "$.materials"),
        steps=steps,
    )

    for i, s in enumerate(p.steps):
        _require(s.index == i, f"$.steps[{i}].index", f"expected contiguous index {i}, got {s.index}")
    seen = set()
    for i, s in enumerate(p.steps):
        _require(s.id not in seen, f"$.steps[{i}].id", f"duplicate step id '{s.id}'")
        seen.add(s.id)
    mats = set(p.materials)
    for i, s in enumerate(p.steps):
        for m in s.required_materials:
            _require(m in mats, f"$.steps[{i}].required_materials",
                     f"material '{m}' not declared in protocol materials")
    return p


def serialize_protocol(p: Protocol) -> str:
    """Canonical YAML serialization; parse(serialize(p)) == p."""
    doc = {
        "id": p.id,
        "title": p.title,
        "version": p.version,
        "materials": list(p.materials),
        "steps": [
            {
                "index": s.index,
                "id": s.id,
                "name": s.name,
                "action_label": s.action_label,
                "description": s.description,
                "expected_duration_ms": [s.duration_min_ms, s.duration_max_ms],
                "required_materials": list(s.required_materials),
                "parameters": [
                    {"name": q.name, "unit": q.unit,
                     "expected": q.expected, "tolerance": q.tolerance}
                    for q in s.parameters
                ],
                "requires_sterile": s.requires_sterile,
                "skippable": s.skippable,
            }
            for s in p.steps
        ],
    }
    return yaml.safe_dump(doc, sort_keys=False, allow_unicode=True)


def protocol_hash(p: Protocol) -> str:
    """Content hash of the canonical serialization (sha256 hex)."""
    return hashlib.sha256(serialize_protocol(p).encode("utf-8")).hexdigest()


def validate_protocol(p: Protocol) -> ValidationReport:
    """Semantic validation of an in-memory Protocol.

    Documents accepted by parse_protocol always come back ok; this catches
    invariant breakage in programmatically built protocols and adds style
    warnings the parser does not enforce.
    """
    rep = ValidationReport()
    if not p.steps:
        rep.add("error", "$.steps", "steps must be non-empty")
        return rep
    for i, s in enumerate(p.steps):
        path = f"$.steps[{i}]"
        if s.index != i:
            rep.add("error", f"{path}.index", f"expected contiguous index {i}, got {s.index}")
        if not (0 <= s.duration_min_ms <= s.duration_max_ms):
            rep.add("error", f"{path}.expected_duration_ms", "need 0 <= min <= max")
        if s.duration_max_ms <= 0:
            rep.add("error", f"{path}.expected_duration_ms", "max must be > 0")
        if not s.action_label:
            rep.add("error", f"{path}.action_label", "action_label must be non-empty")
        for q in s.parameters:
            if q.tolerance < 0:
                rep.add("error", f"{path}.parameters", f"'{q.name}': tolerance must be >= 0")
            if not q.unit:
                rep.add("error", f"{path}.parameters", f"'{q.name}': unit must be non-empty")
    seen: dict[str, int] = {}
    for i, s in enumerate(p.steps):
        if s.id in seen:
            rep.add("error", f"$.steps[{i}].id",
                    f"duplicate step id '{s.id}' (first at index {seen[s.id]})")
        else:
            seen[s.id] = i
    mats = set(p.materials)
    for i, s in enumerate(p.steps):
        for m in s.required_materials:
            if m not in mats:
                rep.add("error", f"$.steps[{i}].required_materials",
                        f"material '{m}' not declared in protocol materials")
    for i in range(len(p.steps) - 1):
        if p.steps[i].action_label == p.steps[i + 1].action_label:
            rep.add("warning", f"$.steps[{i + 1}].action_label",
                    f"adjacent steps {i} and {i + 1} share action_label "
                    f"'{p.steps[i].action_label}'")
    return rep
