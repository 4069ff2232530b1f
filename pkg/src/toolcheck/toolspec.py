"""Tool and parameter type system plus an immutable in-memory registry."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Any, Iterable, Mapping

logger = logging.getLogger(__name__)

SCALAR_KINDS = ("string", "integer", "number", "boolean")
CONTAINER_KINDS = ("list", "tuple", "object")

_ALIASES = {
    "str": "string",
    "string": "string",
    "text": "string",
    "int": "integer",
    "integer": "integer",
    "float": "number",
    "number": "number",
    "double": "number",
    "bool": "boolean",
    "boolean": "boolean",
    "list": "list",
    "array": "list",
    "tuple": "tuple",
    "dict": "object",
    "object": "object",
}


class MalformedSpec(ValueError):
    pass


@dataclass(frozen=True)
class ParamType:
    kind: str
    elements: tuple["ParamType", ...] = ()
    # only kept for `unknown` so that rendering round-trips
    raw: str = ""

    def __post_init__(self):
        if self.kind in SCALAR_KINDS and self.elements:
            raise ValueError(f"scalar kind {self.kind!r} cannot carry element types")

    def render(self) -> str:
        """Render back to the Python-typing style strings used by tool datasets."""
        if self.kind == "unknown":
            return self.raw or "unknown"
        if self.kind in SCALAR_KINDS:
            return {"string": "str", "integer": "int", "number": "float", "boolean": "bool"}[self.kind]
        head = {"list": "List", "tuple": "Tuple", "object": "Dict"}[self.kind]
        if not self.elements:
            return {"list": "list", "tuple": "tuple", "object": "dict"}[self.kind]
        return f"{head}[{', '.join(e.render() for e in self.elements)}]"

    def __str__(self) -> str:
        return self.render()


UNKNOWN = ParamType("unknown")


def _split_top_level(s: str) -> list[str]:
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(s):
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        elif ch == "," and depth == 0:
            parts.append(s[start:i])
            start = i + 1
    parts.append(s[start:])
    return [p.strip() for p in parts]


def parse_param_type(s: Any) -> ParamType:
    """Parse a type string such as ``"List[Tuple[float, float]]"``.

    Total: anything unrecognised becomes ``unknown`` (which disables type
    checking for that parameter). A trailing ``", optional"`` is ignored here;
    :func:`parse_tool_spec` reads it as a requiredness hint.
    """
    if not isinstance(s, str):
        return UNKNOWN
    text = s.strip()
    if text.lower().endswith(", optional"):
        text = text[: -len(", optional")].strip()
    if not text or text.lower() == "unknown":
        return UNKNOWN

    alias = _ALIASES.get(text.lower())
    if alias is not None:
        return ParamType(alias)

    if text.endswith("]") and "[" in text:
        head, _, inner = text[:-1].partition("[")
        head = head.strip().lower()
        depth = 0
        for ch in inner:
            depth += ch == "["
            depth -= ch == "]"
            if depth < 0:
                return ParamType("unknown", raw=text)
        if depth != 0:
            return ParamType("unknown", raw=text)
        args = [a for a in _split_top_level(inner) if a]
        if head in ("list", "sequence", "array"):
            return ParamType("list", tuple(parse_param_type(a) for a in args[:1]))
        if head == "tuple":
            return ParamType("tuple", tuple(parse_param_type(a) for a in args))
        if head in ("dict", "mapping"):
            return ParamType("object", tuple(parse_param_type(a) for a in args))
        if head == "optional" and len(args) == 1:
            return parse_param_type(args[0])
    return ParamType("unknown", raw=text)


def param_type_from_schema(schema: Any) -> ParamType:
    """JSON-schema fragment (``{"type": "array", "items": {...}}``) to ParamType."""
    if isinstance(schema, str):
        return parse_param_type(schema)
    if not isinstance(schema, Mapping):
        return UNKNOWN
    t = schema.get("type")
    if isinstance(t, list):
        return UNKNOWN
    pt = parse_param_type(t) if t is not None else UNKNOWN
    if pt.kind == "list" and not pt.elements and "items" in schema:
        return ParamType("list", (param_type_from_schema(schema["items"]),))
    return pt


def value_matches(ptype: ParamType, value: Any) -> bool:
    """Does a JSON value satisfy a declared type?

    Integers widen to ``number``; booleans are never numbers; ``None`` is left
    to the empty-value rule rather than counted as a type violation.
    """
    kind = ptype.kind
    if value is None or kind == "unknown":
        return True
    if kind == "string":
        return isinstance(value, str)
    if kind == "boolean":
        return isinstance(value, bool)
    if kind == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "list":
        if not isinstance(value, list):
            return False
        if ptype.elements:
            return all(value_matches(ptype.elements[0], v) for v in value)
        return True
    if kind == "tuple":
        if not isinstance(value, list):
            return False
        if ptype.elements:
            return len(value) == len(ptype.elements) and all(
                value_matches(t, v) for t, v in zip(ptype.elements, value)
            )
        return True
    if kind == "object":
        if not isinstance(value, dict):
            return False
        if len(ptype.elements) == 2:
            return all(value_matches(ptype.elements[1], v) for v in value.values())
        return True
    return True


@dataclass(frozen=True)
class ParamSpec:
    name: str
    ptype: ParamType = UNKNOWN
    description: str = ""
    required: bool = True


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str = ""
    params: tuple[ParamSpec, ...] = ()

    def __post_init__(self):
        if not self.name:
            raise MalformedSpec("tool name must be non-empty")
        seen = set()
        for p in self.params:
            if not p.name:
                raise MalformedSpec(f"tool {self.name!r} has a parameter with an empty name")
            if p.name in seen:
                raise MalformedSpec(f"tool {self.name!r} declares parameter {p.name!r} twice")
            seen.add(p.name)

    @property
    def required(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params if p.required)

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)

    def param(self, name: str) -> ParamSpec | None:
        for p in self.params:
            if p.name == name:
                return p
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "description": self.description,
            "parameters": {
                p.name: {"type": p.ptype.render(), "description": p.description} for p in self.params
            },
            "required": list(self.required),
        }


def _param_entries(params: Any, tool_name: str) -> list[tuple[str, Any]]:
    if params is None:
        return []
    if isinstance(params, list):
        # API-Bank style: [{"name": ..., "type": ..., ...}, ...]
        out = []
        for item in params:
            if not isinstance(item, Mapping) or not isinstance(item.get("name"), str):
                raise MalformedSpec(f"tool {tool_name!r}: parameter entries need a 'name'")
            out.append((item["name"], item))
        return out
    if isinstance(params, Mapping):
        return list(params.items())
    raise MalformedSpec(f"tool {tool_name!r}: 'parameters' must be an object or a list")


def parse_tool_spec(raw: Mapping[str, Any]) -> ToolSpec:
    """Build a ToolSpec from a tool-information object.

    Accepts the flat ``{"param": {"type": ..., "description": ...}}`` layout,
    JSON-schema ``{"type": "object", "properties": ..., "required": [...]}``
    and a list of named parameter objects. With no explicit required list
    every parameter is treated as required, except those whose type string
    says ``", optional"`` or that carry ``"required": false``.
    """
    if not isinstance(raw, Mapping):
        raise MalformedSpec("tool spec must be an object")
    name = raw.get("name")
    if not isinstance(name, str) or not name.strip():
        raise MalformedSpec("tool spec is missing a non-empty 'name'")
    description = raw.get("description") or ""
    if not isinstance(description, str):
        description = str(description)

    params = raw.get("parameters")
    required = raw.get("required")
    if isinstance(params, Mapping) and "properties" in params and isinstance(params.get("properties"), Mapping):
        if required is None:
            required = params.get("required")
        params = params["properties"]
    elif isinstance(params, Mapping) and params.get("type") == "object" and set(params) <= {"type", "required"}:
        if required is None:
            required = params.get("required")
        params = {}
    if required is not None and (
        not isinstance(required, list) or not all(isinstance(r, str) for r in required)
    ):
        raise MalformedSpec(f"tool {name!r}: 'required' must be a list of names")

    specs = []
    for pname, body in _param_entries(params, name):
        body = body if isinstance(body, Mapping) else {"type": body}
        tstr = body.get("type")
        ptype = param_type_from_schema(body) if not isinstance(tstr, str) else parse_param_type(tstr)
        if ptype.kind == "list" and not ptype.elements and isinstance(body.get("items"), Mapping):
            ptype = ParamType("list", (param_type_from_schema(body["items"]),))
        if required is not None:
            is_req = pname in required
        elif isinstance(body.get("required"), bool):
            is_req = body["required"]
        else:
            is_req = not (isinstance(tstr, str) and tstr.strip().lower().endswith(", optional"))
        specs.append(
            ParamSpec(
                name=pname,
                ptype=ptype,
                description=str(body.get("description") or ""),
                required=is_req,
            )
        )
    if required is not None:
        declared = {p.name for p in specs}
        missing = [r for r in required if r not in declared]
        if missing:
            raise MalformedSpec(f"tool {name!r}: required names {missing} are not declared")
    return ToolSpec(name=name, description=description, params=tuple(specs))


@dataclass(frozen=True)
class ToolRegistry:
    tools: Mapping[str, ToolSpec] = field(default_factory=lambda: MappingProxyType({}))
    warnings: tuple[str, ...] = ()

    def __contains__(self, name: object) -> bool:
        return name in self.tools

    def __len__(self) -> int:
        return len(self.tools)

    def __iter__(self):
        return iter(self.tools.values())

    def get(self, name: str) -> ToolSpec | None:
        return self.tools.get(name)

    def __getitem__(self, name: str) -> ToolSpec:
        return self.tools[name]

    def suggest(self, name: str) -> str | None:
        """Case-insensitive near miss for a name that failed exact lookup."""
        folded = name.casefold()
        for candidate in self.tools:
            if candidate.casefold() == folded:
                return candidate
        return None


def registry_from_specs(specs: Iterable[ToolSpec]) -> ToolRegistry:
    tools: dict[str, ToolSpec] = {}
    warnings = []
    for spec in specs:
        if spec.name in tools:
            msg = f"duplicate tool name {spec.name!r}; keeping the later definition"
            logger.warning(msg)
            warnings.append(msg)
        tools[spec.name] = spec
    return ToolRegistry(MappingProxyType(tools), tuple(warnings))


def load_registry(path: str | Path) -> ToolRegistry:
    """Read a JSON-lines file with one tool spec per line."""
    specs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                specs.append(parse_tool_spec(json.loads(line)))
            except (json.JSONDecodeError, MalformedSpec) as exc:
                raise MalformedSpec(f"{path}:{lineno}: {exc}") from exc
    return registry_from_specs(specs)


def dump_registry(registry: ToolRegistry | Iterable[ToolSpec], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for spec in registry:
            fh.write(json.dumps(spec.to_dict(), ensure_ascii=False) + "\n")
