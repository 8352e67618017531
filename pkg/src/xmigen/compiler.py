"""Instance compiler: CIM + metamodel -> validated instance object graph.

Compilation runs in two phases. Every CIM entry whose type names a concrete
class is instantiated first; attributes and links are populated afterwards,
so forward references between entries resolve regardless of key order.
Nothing here raises on bad input: every rejected element becomes an
error diagnostic and is counted against grammatical accuracy.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Optional, Union

from .cim import AttributeSpec, ConceptualInstanceModel, LinkSpec, ObjectSpec
from .diagnostics import Code, Diagnostic, error, warning
from .ecore import (
    BUILTIN_TYPES,
    UNBOUNDED,
    EAttribute,
    EClass,
    EEnum,
    MetaModel,
    all_features,
    find_attribute,
    find_reference,
    is_instantiable,
    resolve_classifier,
)

Scalar = Union[str, int, float, bool]

CATEGORIES = ("objects", "attributes", "associations")

_INT = re.compile(r"^[+-]?\d+$", re.ASCII)
_FLOAT = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$", re.ASCII)
# characters XML 1.0 cannot carry, even escaped
_XML_ILLEGAL = re.compile("[\x00-\x08\x0b\x0c\x0e-\x1f\ud800-\udfff\ufffe\uffff]")

_DECLARED_KINDS = {name.lower(): kind for name, kind in BUILTIN_TYPES.items()}
_DECLARED_KINDS.update({
    "string": "string", "str": "string", "text": "string",
    "int": "int", "integer": "int", "long": "int", "short": "int",
    "float": "float", "double": "float", "decimal": "float", "real": "float",
    "boolean": "boolean", "bool": "boolean",
})


@dataclass
class InstanceObject:
    id: str
    # qualified class name
    eclass: str
    attr_values: dict[str, list[Scalar]] = field(default_factory=dict)
    ref_targets: dict[str, list[str]] = field(default_factory=dict)
    # (parent id, containment feature name)
    container: Optional[tuple[str, str]] = None


@dataclass
class InstanceModel:
    objects: dict[str, InstanceObject] = field(default_factory=dict)
    roots: list[str] = field(default_factory=list)

    def children(self, obj: InstanceObject, m: MetaModel) -> Iterator[tuple[str, InstanceObject]]:
        """Contained children as (feature name, child), in serialization order."""
        for ref in all_features(m.eclass(obj.eclass), m)[1]:
            if ref.is_containment:
                for cid in obj.ref_targets.get(ref.name, ()):
                    yield ref.name, self.objects[cid]

    def document_order(self, m: MetaModel) -> list[InstanceObject]:
        out: list[InstanceObject] = []

        def visit(obj: InstanceObject) -> None:
            out.append(obj)
            for _, child in self.children(obj, m):
                visit(child)

        for rid in self.roots:
            visit(self.objects[rid])
        return out


@dataclass
class ElementCount:
    accepted: int = 0
    attempted: int = 0

    def add(self, accepted: bool) -> None:
        self.attempted += 1
        self.accepted += int(accepted)


@dataclass
class CompileReport:
    model: InstanceModel
    diagnostics: list[Diagnostic]
    counts: dict[str, ElementCount]

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.is_error]

    def grammatical_accuracy(self, category: Optional[str] = None) -> Fraction:
        """Accepted over attempted elements; 1 when nothing was attempted."""
        cats = CATEGORIES if category is None else (category,)
        acc = sum(self.counts[c].accepted for c in cats)
        att = sum(self.counts[c].attempted for c in cats)
        return Fraction(acc, att) if att else Fraction(1)


# -- value handling ----------------------------------------------------------


def coerce_value(attr: EAttribute, raw: str, m: MetaModel) -> Scalar:
    """Convert a raw string to the attribute's metamodel type or raise ValueError."""
    kind = attr.kind
    if kind == "string":
        if _XML_ILLEGAL.search(raw):
            raise ValueError("string contains characters that cannot be stored in XML")
        return raw
    text = raw.strip()
    if kind == "int":
        if not _INT.match(text):
            raise ValueError(f"{raw!r} is not an integer")
        return int(text)
    if kind == "float":
        if not _FLOAT.match(text):
            raise ValueError(f"{raw!r} is not a decimal number")
        return float(text)
    if kind == "boolean":
        low = text.lower()
        if low not in ("true", "false"):
            raise ValueError(f"{raw!r} is not a boolean")
        return low == "true"
    enum = m.classifier_index[attr.enum_name]
    assert isinstance(enum, EEnum)
    if text not in enum.literals:
        raise ValueError(f"{raw!r} is not a literal of {enum.name} ({', '.join(enum.literals)})")
    return text


def render_value(value: Scalar) -> str:
    """Canonical text for a typed value: lowercase booleans, shortest-roundtrip floats."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _declared_matches(declared: str, attr: EAttribute, m: MetaModel) -> bool:
    d = declared.strip()
    if not d:
        return True
    if attr.kind == "enum":
        enum = m.classifier_index[attr.enum_name]
        return d in (enum.name, attr.enum_name) or d.lower() in ("enum", "eenum", "eenumerator")
    return _DECLARED_KINDS.get(d.lower()) == attr.kind


def _room(upper: int, used: int) -> bool:
    return upper == UNBOUNDED or used < upper


# -- the two phases ----------------------------------------------------------


def instantiate_objects(
    m: MetaModel, cim: ConceptualInstanceModel
) -> tuple[dict[str, InstanceObject], list[Diagnostic]]:
    objects: dict[str, InstanceObject] = {}
    diags: list[Diagnostic] = []
    for iid, spec in cim.objects.items():
        found = resolve_classifier(m, spec.type)
        if not isinstance(found, EClass):
            detail = f"class {spec.type!r} is not defined in the metamodel"
            if isinstance(found, EEnum):
                detail = f"{spec.type!r} is an enumeration, not a class"
            diags.append(error(Code.UNKNOWN_CLASS, detail, instance_id=iid))
        elif not is_instantiable(found):
            what = "an interface" if found.is_interface else "abstract"
            diags.append(error(Code.ABSTRACT_CLASS, f"class {found.name!r} is {what}", instance_id=iid))
        else:
            objects[iid] = InstanceObject(iid, found.qualified_name)
    return objects, diags


def set_attribute(
    owner: InstanceObject, spec: AttributeSpec, m: MetaModel, index: Optional[int] = None
) -> tuple[bool, list[Diagnostic]]:
    where = dict(instance_id=owner.id, feature_name=spec.attribute_name, index=index)
    eclass = m.eclass(owner.eclass)
    attr = find_attribute(eclass, m, spec.attribute_name)
    if attr is None:
        detail = f"class {eclass.name!r} has no attribute {spec.attribute_name!r}"
        if find_reference(eclass, m, spec.attribute_name) is not None:
            detail += " (it is a reference)"
        return False, [error(Code.UNKNOWN_ATTRIBUTE, detail, **where)]
    diags = []
    if not _declared_matches(spec.data_type, attr, m):
        diags.append(warning(
            Code.TYPE_MISMATCH_DECLARED,
            f"declared {spec.data_type!r} but the metamodel says {attr.type_name}; using {attr.type_name}",
            **where,
        ))
    try:
        value = coerce_value(attr, spec.value, m)
    except ValueError as exc:
        diags.append(error(Code.VALUE_COERCION_FAILED, str(exc), **where))
        return False, diags
    values = owner.attr_values.setdefault(attr.name, [])
    if not _room(attr.upper_bound, len(values)):
        if not values:
            del owner.attr_values[attr.name]
        diags.append(error(Code.UPPER_BOUND_EXCEEDED,
                           f"{attr.name!r} holds at most {attr.upper_bound} value(s)", **where))
        return False, diags
    values.append(value)
    return True, diags


def _contains(objects: dict[str, InstanceObject], ancestor: str, node: str) -> bool:
    """True if `node` is `ancestor` or lies below it in the containment tree."""
    cur: Optional[str] = node
    seen = set()
    while cur is not None and cur not in seen:
        if cur == ancestor:
            return True
        seen.add(cur)
        parent = objects[cur].container
        cur = parent[0] if parent else None
    return False


def set_association(
    owner: InstanceObject,
    spec: LinkSpec,
    kind: str,
    objects: dict[str, InstanceObject],
    m: MetaModel,
    index: Optional[int] = None,
) -> tuple[bool, list[Diagnostic]]:
    """Add one link; `kind` is "composition" or "reference" as the CIM put it."""
    where = dict(instance_id=owner.id, feature_name=spec.association_name, index=index)
    eclass = m.eclass(owner.eclass)
    ref = find_reference(eclass, m, spec.association_name)
    if ref is None:
        detail = f"class {eclass.name!r} has no reference {spec.association_name!r}"
        if find_attribute(eclass, m, spec.association_name) is not None:
            detail += " (it is an attribute)"
        return False, [error(Code.UNKNOWN_REFERENCE, detail, **where)]
    diags = []
    if ref.is_containment != (kind == "composition"):
        actual = "containment" if ref.is_containment else "non-containment"
        diags.append(warning(Code.KIND_MISMATCH, f"listed as a {kind} but {ref.name!r} is {actual}", **where))
    target = objects.get(spec.target_id)
    if target is None:
        diags.append(error(Code.DANGLING_TARGET, f"no instantiated object {spec.target_id!r}", **where))
        return False, diags
    target_class = m.eclass(target.eclass)
    if spec.associated_class_name and spec.associated_class_name not in (target_class.name, target.eclass):
        diags.append(warning(
            Code.CLASS_NAME_MISMATCH,
            f"link names class {spec.associated_class_name!r} but {spec.target_id!r} is a {target_class.name}",
            **where,
        ))
    if not m.conforms(target.eclass, ref.target_class):
        diags.append(error(
            Code.TYPE_NON_CONFORMING,
            f"{ref.name!r} expects {m.eclass(ref.target_class).name}, got {target_class.name}",
            **where,
        ))
        return False, diags
    targets = owner.ref_targets.get(ref.name, [])
    if spec.target_id in targets:
        diags.append(error(Code.DUPLICATE_LINK, f"{spec.target_id!r} is already linked via {ref.name!r}", **where))
        return False, diags
    if ref.is_containment:
        if target.container is not None:
            parent, feat = target.container
            diags.append(error(Code.SECOND_CONTAINER,
                               f"{spec.target_id!r} is already contained by {parent!r}.{feat}", **where))
            return False, diags
        if _contains(objects, spec.target_id, owner.id):
            diags.append(error(Code.CONTAINMENT_CYCLE,
                               f"containing {spec.target_id!r} in {owner.id!r} would close a cycle", **where))
            return False, diags
    if not _room(ref.upper_bound, len(targets)):
        diags.append(error(Code.UPPER_BOUND_EXCEEDED,
                           f"{ref.name!r} holds at most {ref.upper_bound} target(s)", **where))
        return False, diags
    owner.ref_targets.setdefault(ref.name, []).append(spec.target_id)
    if ref.is_containment:
        target.container = (owner.id, ref.name)
    return True, diags


def _links(spec: ObjectSpec) -> Iterator[tuple[str, int, LinkSpec]]:
    for i, link in enumerate(spec.compositions):
        yield "composition", i, link
    for i, link in enumerate(spec.references):
        yield "reference", i, link


def _lower_bound_warnings(obj: InstanceObject, m: MetaModel) -> list[Diagnostic]:
    out = []
    attrs, refs = all_features(m.eclass(obj.eclass), m)
    for f in (*attrs, *refs):
        have = len(obj.attr_values.get(f.name, ())) + len(obj.ref_targets.get(f.name, ()))
        if have < f.lower_bound:
            out.append(warning(Code.LOWER_BOUND_VIOLATED,
                               f"{f.name!r} needs at least {f.lower_bound} value(s), has {have}",
                               instance_id=obj.id, feature_name=f.name))
    return out


def compile_cim(m: MetaModel, cim: ConceptualInstanceModel) -> CompileReport:
    counts = {c: ElementCount() for c in CATEGORIES}
    objects, diags = instantiate_objects(m, cim)
    counts["objects"] = ElementCount(accepted=len(objects), attempted=len(cim.objects))

    for iid, spec in cim.objects.items():
        owner = objects.get(iid)
        if owner is None:
            for i, attr in enumerate(spec.attributes):
                counts["attributes"].add(False)
                diags.append(error(Code.OWNER_MISSING, "owner object was not instantiated",
                                   instance_id=iid, feature_name=attr.attribute_name, index=i))
            for kind, i, link in _links(spec):
                counts["associations"].add(False)
                diags.append(error(Code.OWNER_MISSING, f"owner of this {kind} was not instantiated",
                                   instance_id=iid, feature_name=link.association_name, index=i))
            continue
        for i, attr in enumerate(spec.attributes):
            ok, d = set_attribute(owner, attr, m, index=i)
            counts["attributes"].add(ok)
            diags.extend(d)
        for kind, i, link in _links(spec):
            ok, d = set_association(owner, link, kind, objects, m, index=i)
            counts["associations"].add(ok)
            diags.extend(d)

    for obj in objects.values():
        diags.extend(_lower_bound_warnings(obj, m))
    roots = [iid for iid, obj in objects.items() if obj.container is None]
    return CompileReport(InstanceModel(objects, roots), diags, counts)


# short public alias; the module itself uses compile_cim to avoid the builtin
compile = compile_cim  # noqa: A001


def model_to_cim(model: InstanceModel, m: MetaModel) -> ConceptualInstanceModel:
    """Describe an instance model as a CIM (used to build few-shot examples)."""
    objects = {}
    for obj in model.document_order(m):
        eclass = m.eclass(obj.eclass)
        attrs, refs = all_features(eclass, m)
        attributes = tuple(
            AttributeSpec(a.name, render_value(v), a.type_name)
            for a in attrs
            for v in obj.attr_values.get(a.name, ())
        )
        comps, plain = [], []
        for r in refs:
            for tid in obj.ref_targets.get(r.name, ()):
                link = LinkSpec(r.name, tid, m.eclass(model.objects[tid].eclass).name)
                (comps if r.is_containment else plain).append(link)
        objects[obj.id] = ObjectSpec(eclass.name, attributes, tuple(comps), tuple(plain))
    return ConceptualInstanceModel(objects)
