"""The conceptual instance model (CIM): a flat JSON description of objects,
their attribute values and their links, keyed by instance id.

Shape of the JSON document::

    {
      "<InstanceID>": {
        "type": "<ClassName>",
        "attributes": [{"dataType": ..., "attributeName": ..., "value": ...}],
        "associations": {
          "compositions": [{"associationName": ..., "associatedClassName": ..., "instanceID": ...}],
          "references":   [{"associationName": ..., "associatedClassName": ..., "instanceID": ...}]
        }
      }
    }
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Mapping

from .diagnostics import Code, Diagnostic, error, warning
from .exceptions import InvalidJson, NoJsonFound, NotAJsonObject

OBJECT_KEYS = ("type", "attributes", "associations")
ATTRIBUTE_KEYS = ("dataType", "attributeName", "value")
LINK_KEYS = ("associationName", "associatedClassName", "instanceID")
SECTIONS = ("compositions", "references")


@dataclass(frozen=True)
class AttributeSpec:
    attribute_name: str
    value: str
    data_type: str = ""


@dataclass(frozen=True)
class LinkSpec:
    association_name: str
    target_id: str
    associated_class_name: str = ""


@dataclass(frozen=True)
class ObjectSpec:
    type: str
    attributes: tuple[AttributeSpec, ...] = ()
    compositions: tuple[LinkSpec, ...] = ()
    references: tuple[LinkSpec, ...] = ()


@dataclass(frozen=True)
class ConceptualInstanceModel:
    objects: Mapping[str, ObjectSpec] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.objects)


# -- extraction from raw LLM output -----------------------------------------

_FENCE = re.compile(r"^\s*```[A-Za-z0-9_-]*\s*$", re.MULTILINE)


def _balanced_end(text: str, start: int) -> int:
    """Index one past the brace closing the object opened at `start`, or -1."""
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return i + 1
    return -1


def extract_json_payload(llm_output: str) -> str:
    """Return the first balanced JSON object in `llm_output`.

    Markdown code-fence lines are removed before scanning. Raises NoJsonFound
    when no balanced candidate parses as a JSON object.
    """
    text = _FENCE.sub("", llm_output)
    pos = text.find("{")
    while pos != -1:
        end = _balanced_end(text, pos)
        if end != -1:
            candidate = text[pos:end]
            try:
                if isinstance(json.loads(candidate), dict):
                    return candidate
            except ValueError:
                pass
        pos = text.find("{", pos + 1)
    raise NoJsonFound("no parseable JSON object in model output")


# -- parsing -----------------------------------------------------------------


class _Pairs(dict):
    """dict that remembers keys which occurred more than once."""

    duplicates: list

    def __init__(self, pairs):
        super().__init__()
        self.duplicates = []
        for k, v in pairs:
            if k in self:
                self.duplicates.append((k, v))
            else:
                self[k] = v


def canonical_scalar(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


class _CimParser:
    def __init__(self) -> None:
        self.diags: list[Diagnostic] = []

    def unknown_keys(self, data: dict, known, iid: str, what: str) -> None:
        for key in data:
            if key not in known:
                self.diags.append(
                    warning(Code.UNKNOWN_KEY, f"ignoring unknown key {key!r} in {what}", instance_id=iid)
                )

    def attributes(self, raw: Any, iid: str) -> list[AttributeSpec]:
        if raw is None:
            return []
        if not isinstance(raw, list):
            self.diags.append(error(Code.MALFORMED_ATTRIBUTE, "'attributes' is not a list", instance_id=iid))
            return []
        out = []
        for i, entry in enumerate(raw):
            if not isinstance(entry, dict):
                self.diags.append(error(Code.MALFORMED_ATTRIBUTE, "attribute entry is not an object",
                                        instance_id=iid, index=i))
                continue
            self.unknown_keys(entry, ATTRIBUTE_KEYS, iid, "attribute")
            name = entry.get("attributeName")
            if not isinstance(name, str) or not name.strip():
                self.diags.append(error(Code.MALFORMED_ATTRIBUTE, "attribute entry has no attributeName",
                                        instance_id=iid, index=i))
                continue
            if "value" not in entry:
                self.diags.append(error(Code.MALFORMED_ATTRIBUTE, "attribute entry has no value",
                                        instance_id=iid, feature_name=name, index=i))
                continue
            dtype = entry.get("dataType")
            dtype = dtype if isinstance(dtype, str) else ("" if dtype is None else canonical_scalar(dtype))
            value = entry["value"]
            where = dict(instance_id=iid, feature_name=name, index=i)
            if value is None:
                self.diags.append(warning(Code.NULL_VALUE, "null value read as empty string", **where))
                out.append(AttributeSpec(name, "", dtype))
            elif isinstance(value, list):
                if not all(isinstance(v, (str, int, float, bool)) for v in value):
                    self.diags.append(error(Code.MALFORMED_ATTRIBUTE, "list value holds non-scalars", **where))
                    continue
                self.diags.append(warning(Code.LIST_VALUE_EXPANDED,
                                          f"list value split into {len(value)} entries", **where))
                out.extend(AttributeSpec(name, canonical_scalar(v), dtype) for v in value)
            elif isinstance(value, dict):
                self.diags.append(error(Code.MALFORMED_ATTRIBUTE, "value is an object", **where))
            else:
                out.append(AttributeSpec(name, canonical_scalar(value), dtype))
        return out

    def links(self, raw: Any, iid: str, section: str) -> list[LinkSpec]:
        if raw is None:
            return []
        if not isinstance(raw, list):
            self.diags.append(error(Code.MALFORMED_LINK, f"{section!r} is not a list", instance_id=iid))
            return []
        out = []
        for i, entry in enumerate(raw):
            if not isinstance(entry, dict):
                self.diags.append(error(Code.MALFORMED_LINK, f"{section} entry is not an object",
                                        instance_id=iid, index=i))
                continue
            self.unknown_keys(entry, LINK_KEYS, iid, section[:-1])
            name = entry.get("associationName")
            target = entry.get("instanceID")
            if isinstance(target, (int, float)) and not isinstance(target, bool):
                target = canonical_scalar(target)
            if not isinstance(name, str) or not name.strip() or not isinstance(target, str) or not target:
                self.diags.append(error(Code.MALFORMED_LINK,
                                        f"{section} entry needs associationName and instanceID",
                                        instance_id=iid, feature_name=name if isinstance(name, str) else None,
                                        index=i))
                continue
            cls = entry.get("associatedClassName")
            out.append(LinkSpec(name, target, cls if isinstance(cls, str) else ""))
        return out

    def object(self, iid: str, data: Any) -> ObjectSpec | None:
        if not isinstance(data, dict):
            self.diags.append(error(Code.MALFORMED_OBJECT, "object entry is not a JSON object", instance_id=iid))
            return None
        type_name = data.get("type")
        if not isinstance(type_name, str) or not type_name.strip():
            self.diags.append(error(Code.MISSING_TYPE_FIELD, "object has no 'type'; dropped", instance_id=iid))
            return None
        known = OBJECT_KEYS + SECTIONS
        self.unknown_keys(data, known, iid, "object")
        assoc = data.get("associations")
        if assoc is None:
            assoc = {}
        elif not isinstance(assoc, dict):
            self.diags.append(error(Code.MALFORMED_LINK, "'associations' is not an object", instance_id=iid))
            assoc = {}
        else:
            self.unknown_keys(assoc, SECTIONS, iid, "associations")
        sections = {}
        for name in SECTIONS:
            raw = assoc.get(name)
            if name in data:
                self.diags.append(warning(Code.ALIASED_SECTION,
                                          f"top-level {name!r} read as associations.{name}", instance_id=iid))
                top = data[name]
                if raw is None:
                    raw = top
                elif isinstance(raw, list) and isinstance(top, list):
                    raw = raw + top
            sections[name] = self.links(raw, iid, name)
        return ObjectSpec(
            type=type_name.strip(),
            attributes=tuple(self.attributes(data.get("attributes"), iid)),
            compositions=tuple(sections["compositions"]),
            references=tuple(sections["references"]),
        )


def parse_cim(json_text: str) -> tuple[ConceptualInstanceModel, list[Diagnostic]]:
    """Parse CIM JSON text.

    Objects that cannot be used (missing type, not an object) are dropped with
    an error diagnostic; parsing always continues. Raises InvalidJson or
    NotAJsonObject when the document itself is unusable.
    """
    try:
        data = json.loads(json_text, object_pairs_hook=_Pairs)
    except ValueError as exc:
        raise InvalidJson(str(exc)) from exc
    if not isinstance(data, dict):
        raise NotAJsonObject(f"top-level JSON value is a {type(data).__name__}, not an object")
    p = _CimParser()
    objects: dict[str, ObjectSpec] = {}
    for iid, body in data.items():
        spec = p.object(iid, body)
        if spec is not None:
            objects[iid] = spec
    for iid, _ in data.duplicates:
        p.diags.append(error(Code.MALFORMED_OBJECT, "duplicate instance id; later entry dropped", instance_id=iid))
    return ConceptualInstanceModel(objects), p.diags


def load_cim(path) -> tuple[ConceptualInstanceModel, list[Diagnostic]]:
    with open(path, encoding="utf-8") as fp:
        text = fp.read()
    try:
        return parse_cim(text)
    except InvalidJson:
        return parse_cim(extract_json_payload(text))


def validate_structure(cim: ConceptualInstanceModel) -> list[Diagnostic]:
    diags = []
    for iid, spec in cim.objects.items():
        for section in SECTIONS:
            for i, link in enumerate(getattr(spec, section)):
                where = dict(instance_id=iid, feature_name=link.association_name, index=i)
                if link.target_id not in cim.objects:
                    diags.append(error(Code.DANGLING_TARGET_ID, f"target {link.target_id!r} is not defined", **where))
                elif section == "compositions" and link.target_id == iid:
                    diags.append(error(Code.SELF_COMPOSITION, "object composes itself", **where))
    return diags


# -- writing -----------------------------------------------------------------


def _link_json(link: LinkSpec) -> dict:
    return {
        "associationName": link.association_name,
        "associatedClassName": link.associated_class_name,
        "instanceID": link.target_id,
    }


def cim_to_json(cim: ConceptualInstanceModel) -> dict:
    return {
        iid: {
            "type": spec.type,
            "attributes": [
                {"dataType": a.data_type, "attributeName": a.attribute_name, "value": a.value}
                for a in spec.attributes
            ],
            "associations": {
                "compositions": [_link_json(link) for link in spec.compositions],
                "references": [_link_json(link) for link in spec.references],
            },
        }
        for iid, spec in cim.objects.items()
    }


def dump_cim(cim: ConceptualInstanceModel) -> str:
    return json.dumps(cim_to_json(cim), indent=2, ensure_ascii=False) + "\n"
