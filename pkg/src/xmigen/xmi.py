"""XMI 2.0 reading and writing for compiled instance models.

The writer follows EMF's default conventions: a single root object becomes
the document element, several roots are wrapped in ``xmi:XMI``, contained
objects nest under elements named by their containment feature, and
non-containment references are written as space-separated fragment paths
(``/``, ``//@cpu.0/@core.1``, ``/1/@apps.0``).
"""

from __future__ import annotations

import io
import xml.etree.ElementTree as ET
from typing import Optional, Union
from xml.sax.saxutils import escape

from .compiler import CompileReport, InstanceModel, InstanceObject, coerce_value, render_value
from .ecore import XMI_NS, XSI_NS, EClass, EPackage, MetaModel, all_features, find_attribute, find_reference
from .exceptions import (
    MalformedXmi,
    NamespaceMismatch,
    NoNamespace,
    UnknownElementClass,
    UnresolvableFragmentPath,
    XmiConformanceError,
)

_ATTR_ESCAPES = {'"': "&quot;", "\n": "&#10;", "\r": "&#13;", "\t": "&#9;"}
_TEXT_ESCAPES = {"\r": "&#13;"}
INDENT = "  "


def _attr(name: str, value: str) -> str:
    return f'{name}="{escape(value, _ATTR_ESCAPES)}"'


def fragment_paths(model: InstanceModel, m: MetaModel) -> dict[str, str]:
    """EMF-style URI fragment for every object, keyed by object id."""
    paths: dict[str, str] = {}
    multi = len(model.roots) != 1

    def visit(obj: InstanceObject, path: str) -> None:
        paths[obj.id] = path
        refs = all_features(m.eclass(obj.eclass), m)[1]
        for ref in refs:
            if not ref.is_containment:
                continue
            for i, cid in enumerate(obj.ref_targets.get(ref.name, ())):
                seg = f"@{ref.name}.{i}" if ref.many else f"@{ref.name}"
                visit(model.objects[cid], f"{path}/{seg}")

    for i, rid in enumerate(model.roots):
        visit(model.objects[rid], f"/{i}" if multi else "/")
    return paths


class _Writer:
    def __init__(self, model: InstanceModel, m: MetaModel) -> None:
        self.model = model
        self.m = m
        self.paths = fragment_paths(model, m)
        self.lines: list[str] = []

    def packages(self) -> list[EPackage]:
        used = {self.m.eclass(o.eclass).package_path for o in self.model.objects.values()}
        used.add("")
        return [p for p in self.m.root_package.walk() if p.path in used]

    def ns_attrs(self) -> list[str]:
        out = [_attr("xmi:version", "2.0"), _attr("xmlns:xmi", XMI_NS), _attr("xmlns:xsi", XSI_NS)]
        for pkg in self.packages():
            if not pkg.ns_uri:
                raise NoNamespace(f"package {pkg.name!r} has no nsURI")
            out.append(_attr(f"xmlns:{pkg.ns_prefix}", pkg.ns_uri))
        return out

    def qname(self, eclass: EClass) -> str:
        return f"{self.m.package_of(eclass).ns_prefix}:{eclass.name}"

    def element(self, obj: InstanceObject, tag: str, depth: int, head: list[str]) -> None:
        m = self.m
        eclass = m.eclass(obj.eclass)
        attrs, refs = all_features(eclass, m)
        parts = list(head)
        for a in attrs:
            values = obj.attr_values.get(a.name)
            if values and not a.many:
                parts.append(_attr(a.name, render_value(values[0])))
        for r in refs:
            targets = obj.ref_targets.get(r.name)
            if targets and not r.is_containment:
                parts.append(_attr(r.name, " ".join(self.paths[t] for t in targets)))

        pad = INDENT * depth
        body: list[tuple] = []
        for a in attrs:
            if a.many:
                body.extend(("value", a.name, v) for v in obj.attr_values.get(a.name, ()))
        for r in refs:
            if r.is_containment:
                body.extend(("child", r, cid) for cid in obj.ref_targets.get(r.name, ()))

        open_tag = "<" + " ".join([tag, *parts])
        if not body:
            self.lines.append(f"{pad}{open_tag}/>")
            return
        self.lines.append(f"{pad}{open_tag}>")
        for kind, feat, item in body:
            if kind == "value":
                self.lines.append(f"{pad}{INDENT}<{feat}>{escape(render_value(item), _TEXT_ESCAPES)}</{feat}>")
            else:
                child = self.model.objects[item]
                child_head = []
                if child.eclass != feat.target_class:
                    child_head.append(_attr("xsi:type", self.qname(m.eclass(child.eclass))))
                self.element(child, feat.name, depth + 1, child_head)
        self.lines.append(f"{pad}</{tag}>")

    def write(self) -> str:
        self.lines.append('<?xml version="1.0" encoding="UTF-8"?>')
        roots = [self.model.objects[r] for r in self.model.roots]
        if len(roots) == 1:
            root = roots[0]
            self.element(root, self.qname(self.m.eclass(root.eclass)), 0, self.ns_attrs())
        else:
            head = "<" + " ".join(["xmi:XMI", *self.ns_attrs()])
            if not roots:
                self.lines.append(head + "/>")
            else:
                self.lines.append(head + ">")
                for root in roots:
                    self.element(root, self.qname(self.m.eclass(root.eclass)), 1, [])
                self.lines.append("</xmi:XMI>")
        return "\n".join(self.lines) + "\n"


def serialize_xmi(report: Union[CompileReport, InstanceModel], m: MetaModel) -> str:
    model = report.model if isinstance(report, CompileReport) else report
    return _Writer(model, m).write()


# -- reading -----------------------------------------------------------------


def _split(tag: str) -> tuple[Optional[str], str]:
    if tag.startswith("{"):
        uri, local = tag[1:].split("}", 1)
        return uri, local
    return None, tag


class _Reader:
    def __init__(self, m: MetaModel, prefixes: dict[str, str]) -> None:
        self.m = m
        self.prefixes = prefixes
        self.objects: dict[str, InstanceObject] = {}
        self.roots: list[str] = []
        self.by_xmi_id: dict[str, str] = {}
        # (owner id, reference name, raw tokens)
        self.pending: list[tuple[str, str, list[str]]] = []

    def class_in(self, uri: str, name: str) -> EClass:
        pkg = self.m.package_by_uri(uri)
        if pkg is None:
            raise NamespaceMismatch(f"namespace {uri!r} does not belong to metamodel {self.m.root_package.ns_uri!r}")
        qname = f"{pkg.path}/{name}" if pkg.path else name
        found = self.m.classifier_index.get(qname)
        if not isinstance(found, EClass):
            raise UnknownElementClass(f"no class {name!r} in package {pkg.name!r}")
        return found

    def xsi_class(self, value: str) -> EClass:
        prefix, _, name = value.rpartition(":")
        uri = self.prefixes.get(prefix)
        if uri is None:
            raise UnknownElementClass(f"xsi:type {value!r} uses an undeclared prefix")
        return self.class_in(uri, name)

    def read(self, el: ET.Element, eclass: EClass, path: str) -> InstanceObject:
        m = self.m
        if eclass.is_abstract or eclass.is_interface:
            raise XmiConformanceError(f"{path}: class {eclass.name!r} cannot be instantiated")
        obj = InstanceObject(path, eclass.qualified_name)
        self.objects[path] = obj
        for key, raw in el.attrib.items():
            uri, local = _split(key)
            if uri == XMI_NS and local == "id":
                self.by_xmi_id[raw] = path
            if uri is not None:
                continue
            attr = find_attribute(eclass, m, local)
            if attr is not None:
                try:
                    obj.attr_values[local] = [coerce_value(attr, raw, m)]
                except ValueError as exc:
                    raise XmiConformanceError(f"{path}: {local}: {exc}") from exc
                continue
            ref = find_reference(eclass, m, local)
            if ref is None or ref.is_containment:
                raise XmiConformanceError(f"{path}: class {eclass.name!r} has no attribute or reference {local!r}")
            self.pending.append((path, local, raw.split()))

        counters: dict[str, int] = {}
        for child in el:
            _, local = _split(child.tag)
            attr = find_attribute(eclass, m, local)
            if attr is not None:
                try:
                    obj.attr_values.setdefault(local, []).append(coerce_value(attr, child.text or "", m))
                except ValueError as exc:
                    raise XmiConformanceError(f"{path}: {local}: {exc}") from exc
                continue
            ref = find_reference(eclass, m, local)
            if ref is None:
                raise XmiConformanceError(f"{path}: class {eclass.name!r} has no feature {local!r}")
            if not ref.is_containment:
                if child.get("href") is not None:
                    raise UnresolvableFragmentPath(f"{path}: cross-document reference {child.get('href')!r}")
                raise XmiConformanceError(f"{path}: non-containment {local!r} written as an element")
            xsi = child.get(f"{{{XSI_NS}}}type")
            child_class = self.xsi_class(xsi) if xsi else m.eclass(ref.target_class)
            if not m.conforms(child_class.qualified_name, ref.target_class):
                raise XmiConformanceError(
                    f"{path}: {local!r} expects {m.eclass(ref.target_class).name}, got {child_class.name}"
                )
            i = counters.get(local, 0)
            counters[local] = i + 1
            seg = f"@{local}.{i}" if ref.many else f"@{local}"
            child_obj = self.read(child, child_class, f"{path}/{seg}")
            child_obj.container = (path, local)
            obj.ref_targets.setdefault(local, []).append(child_obj.id)

        for feat, values in (*obj.attr_values.items(), *obj.ref_targets.items()):
            f = find_attribute(eclass, m, feat) or find_reference(eclass, m, feat)
            if f.upper_bound != -1 and len(values) > f.upper_bound:
                raise XmiConformanceError(f"{path}: {feat!r} holds {len(values)} values, at most {f.upper_bound} allowed")
        return obj

    def resolve(self, token: str) -> str:
        if token in self.by_xmi_id:
            return self.by_xmi_id[token]
        if "#" in token:
            doc, _, frag = token.partition("#")
            if doc:
                raise UnresolvableFragmentPath(f"cross-document reference {token!r}")
            token = frag
        if not token.startswith("/"):
            raise UnresolvableFragmentPath(f"cannot resolve {token!r}")
        segments = token[1:].split("/")
        head = segments[0]
        try:
            root_index = int(head) if head else 0
            obj = self.objects[self.roots[root_index]]
        except (ValueError, IndexError):
            raise UnresolvableFragmentPath(f"no root {head!r} in {token!r}") from None
        for seg in segments[1:]:
            if not seg.startswith("@"):
                raise UnresolvableFragmentPath(f"unsupported segment {seg!r} in {token!r}")
            feat, _, idx = seg[1:].rpartition(".")
            if not feat or not idx.isdigit():
                feat, idx = seg[1:], "0"
            children = obj.ref_targets.get(feat, [])
            ref = find_reference(self.m.eclass(obj.eclass), self.m, feat)
            if ref is None or not ref.is_containment or int(idx) >= len(children):
                raise UnresolvableFragmentPath(f"segment {seg!r} of {token!r} does not exist")
            obj = self.objects[children[int(idx)]]
        return obj.id

    def link(self) -> None:
        m = self.m
        for owner_id, feat, tokens in self.pending:
            owner = self.objects[owner_id]
            ref = find_reference(m.eclass(owner.eclass), m, feat)
            targets = [self.resolve(t) for t in tokens]
            for t in targets:
                if not m.conforms(self.objects[t].eclass, ref.target_class):
                    raise XmiConformanceError(
                        f"{owner_id}: {feat!r} expects {m.eclass(ref.target_class).name}, "
                        f"got {m.eclass(self.objects[t].eclass).name}"
                    )
            if ref.upper_bound != -1 and len(targets) > ref.upper_bound:
                raise XmiConformanceError(f"{owner_id}: {feat!r} holds at most {ref.upper_bound} target(s)")
            owner.ref_targets[feat] = targets


def _prefix_map(data: bytes) -> dict[str, str]:
    prefixes: dict[str, str] = {}
    for _, (prefix, uri) in ET.iterparse(io.BytesIO(data), events=("start-ns",)):
        prefixes.setdefault(prefix, uri)
    return prefixes


def parse_xmi(text: Union[str, bytes], m: MetaModel) -> InstanceModel:
    """Load an XMI document against `m`, checking it conforms to the metamodel."""
    data = text.encode("utf-8") if isinstance(text, str) else text
    try:
        prefixes = _prefix_map(data)
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise MalformedXmi(str(exc)) from exc

    uri, local = _split(root.tag)
    top = list(root) if (uri == XMI_NS and local == "XMI") else [root]
    reader = _Reader(m, prefixes)
    multi = len(top) != 1
    for i, el in enumerate(top):
        el_uri, el_local = _split(el.tag)
        if el_uri is None:
            raise UnknownElementClass(f"root element <{el_local}> has no namespace")
        xsi = el.get(f"{{{XSI_NS}}}type")
        eclass = reader.xsi_class(xsi) if xsi else reader.class_in(el_uri, el_local)
        path = f"/{i}" if multi else "/"
        reader.roots.append(path)
        reader.read(el, eclass, path)
    reader.link()
    return InstanceModel(reader.objects, reader.roots)


def load_xmi(path, m: MetaModel) -> InstanceModel:
    with open(path, "rb") as fp:
        return parse_xmi(fp.read(), m)
