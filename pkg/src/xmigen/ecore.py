"""Loading Ecore metamodels.

Only the structural subset needed to instantiate models is kept: packages,
classes, attributes, references, enums, inheritance and multiplicities.
Operations, annotations and generic type parameters are skipped with a
warning.
"""

from __future__ import annotations

import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional, Union

from .diagnostics import Code, Diagnostic, warning
from .exceptions import (
    DuplicateName,
    InheritanceCycle,
    MalformedXml,
    MissingNsURI,
    UnresolvableTypeRef,
)

logger = logging.getLogger(__name__)

ECORE_NS = "http://www.eclipse.org/emf/2002/Ecore"
XMI_NS = "http://www.omg.org/XMI"
XSI_NS = "http://www.w3.org/2001/XMLSchema-instance"

UNBOUNDED = -1

SCALAR_KINDS = ("string", "int", "float", "boolean")

BUILTIN_TYPES = {
    "EString": "string",
    "EInt": "int",
    "EIntegerObject": "int",
    "EBigInteger": "int",
    "ELong": "int",
    "ELongObject": "int",
    "EShort": "int",
    "EShortObject": "int",
    "EByte": "int",
    "EByteObject": "int",
    "EFloat": "float",
    "EFloatObject": "float",
    "EDouble": "float",
    "EDoubleObject": "float",
    "EBigDecimal": "float",
    "EBoolean": "boolean",
    "EBooleanObject": "boolean",
}

# instanceClassName values of locally declared EDataTypes
_JAVA_TYPES = {
    "java.lang.String": "string",
    "int": "int",
    "long": "int",
    "short": "int",
    "byte": "int",
    "java.lang.Integer": "int",
    "java.lang.Long": "int",
    "java.lang.Short": "int",
    "java.math.BigInteger": "int",
    "float": "float",
    "double": "float",
    "java.lang.Float": "float",
    "java.lang.Double": "float",
    "java.math.BigDecimal": "float",
    "boolean": "boolean",
    "java.lang.Boolean": "boolean",
}

_BUILTIN_PREFIX = ECORE_NS + "#//"


@dataclass(frozen=True)
class EAttribute:
    name: str
    # one of "string", "int", "float", "boolean" or "enum:<EnumName>"
    data_type: str
    # the type name as written in the metamodel, e.g. "EInt" or an enum name
    type_name: str
    lower_bound: int = 0
    upper_bound: int = 1

    @property
    def many(self) -> bool:
        return self.upper_bound == UNBOUNDED or self.upper_bound > 1

    @property
    def kind(self) -> str:
        return "enum" if self.data_type.startswith("enum:") else self.data_type

    @property
    def enum_name(self) -> Optional[str]:
        return self.data_type[5:] if self.data_type.startswith("enum:") else None


@dataclass(frozen=True)
class EReference:
    name: str
    # qualified key of the target class, see MetaModel.classifier_index
    target_class: str
    is_containment: bool = False
    lower_bound: int = 0
    upper_bound: int = 1

    @property
    def many(self) -> bool:
        return self.upper_bound == UNBOUNDED or self.upper_bound > 1


@dataclass(frozen=True)
class EClass:
    name: str
    qualified_name: str
    package_path: str
    is_abstract: bool = False
    is_interface: bool = False
    super_types: tuple[str, ...] = ()
    attributes: tuple[EAttribute, ...] = ()
    references: tuple[EReference, ...] = ()


@dataclass(frozen=True)
class EEnum:
    name: str
    qualified_name: str
    package_path: str
    literals: tuple[str, ...] = ()


Classifier = Union[EClass, EEnum]


@dataclass(frozen=True)
class EPackage:
    name: str
    ns_uri: str
    ns_prefix: str
    # "" for the root package, "sub" or "sub/inner" for nested ones
    path: str = ""
    classifiers: tuple[Classifier, ...] = ()
    subpackages: tuple["EPackage", ...] = ()

    def walk(self) -> Iterator["EPackage"]:
        yield self
        for sub in self.subpackages:
            yield from sub.walk()


@dataclass(frozen=True)
class MetaModel:
    root_package: EPackage
    # qualified name ("Board", "sub/Board") -> classifier, in declaration order
    classifier_index: Mapping[str, Classifier]
    warnings: tuple[Diagnostic, ...] = ()
    _features: Mapping[str, tuple[tuple[EAttribute, ...], tuple[EReference, ...]]] = field(
        default_factory=dict, repr=False, compare=False
    )
    _ancestors: Mapping[str, frozenset[str]] = field(default_factory=dict, repr=False, compare=False)

    def classes(self) -> Iterator[EClass]:
        for c in self.classifier_index.values():
            if isinstance(c, EClass):
                yield c

    def enums(self) -> Iterator[EEnum]:
        for c in self.classifier_index.values():
            if isinstance(c, EEnum):
                yield c

    def eclass(self, qualified_name: str) -> EClass:
        c = self.classifier_index[qualified_name]
        assert isinstance(c, EClass)
        return c

    def package(self, path: str) -> EPackage:
        for pkg in self.root_package.walk():
            if pkg.path == path:
                return pkg
        raise KeyError(path)

    def package_of(self, classifier: Classifier) -> EPackage:
        return self.package(classifier.package_path)

    def package_by_uri(self, ns_uri: str) -> Optional[EPackage]:
        for pkg in self.root_package.walk():
            if pkg.ns_uri == ns_uri:
                return pkg
        return None

    def conforms(self, class_name: str, target_class: str) -> bool:
        """True if `class_name` equals `target_class` or is a subtype of it."""
        return target_class in self._ancestors.get(class_name, ())

    def subclasses(self, class_name: str) -> list[EClass]:
        return [c for c in self.classes() if self.conforms(c.qualified_name, class_name)]


def resolve_classifier(m: MetaModel, name: str) -> Optional[Classifier]:
    """Exact, case-sensitive lookup.

    A qualified key such as ``"sub/Board"`` is tried first, then the plain
    name is searched in the root package and its subpackages in declaration
    order. Returns None when nothing matches.
    """
    found = m.classifier_index.get(name)
    if found is not None:
        return found
    for c in m.classifier_index.values():
        if c.name == name:
            return c
    return None


def all_features(c: EClass, m: MetaModel) -> tuple[tuple[EAttribute, ...], tuple[EReference, ...]]:
    """Own plus inherited features, supertypes first."""
    return m._features[c.qualified_name]


def find_attribute(c: EClass, m: MetaModel, name: str) -> Optional[EAttribute]:
    for a in all_features(c, m)[0]:
        if a.name == name:
            return a
    return None


def find_reference(c: EClass, m: MetaModel, name: str) -> Optional[EReference]:
    for r in all_features(c, m)[1]:
        if r.name == name:
            return r
    return None


def is_instantiable(c: Classifier) -> bool:
    return isinstance(c, EClass) and not c.is_abstract and not c.is_interface


# -- parsing -----------------------------------------------------------------


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _xsi_type(el: ET.Element) -> str:
    t = el.get(f"{{{XSI_NS}}}type", "")
    return t.rsplit(":", 1)[-1]


def _bool(value: Optional[str]) -> bool:
    return (value or "").strip().lower() == "true"


def _bound(value: Optional[str], default: int) -> int:
    if value is None or value.strip() == "":
        return default
    n = int(value)
    # -2 is Ecore's "unspecified" marker; treat it as unbounded
    return UNBOUNDED if n < 0 else n


class _Parser:
    def __init__(self) -> None:
        self.warnings: list[Diagnostic] = []
        self.index: dict[str, Classifier] = {}
        # qualified name -> (element, package path) for the second pass
        self.pending_classes: dict[str, tuple[ET.Element, str]] = {}
        self.enums: dict[str, EEnum] = {}
        self.datatypes: dict[str, str] = {}
        self.order: list[str] = []

    def warn(self, detail: str, code: Code = Code.UNSUPPORTED_CONSTRUCT) -> None:
        logger.warning(detail)
        self.warnings.append(warning(code, detail))

    # first pass: names only, so forward references resolve
    def scan_package(self, el: ET.Element, path: str) -> None:
        names: set[str] = set()
        pkg_name = el.get("name", "")
        for child in el:
            tag = _local(child.tag)
            if tag == "eClassifiers":
                kind = _xsi_type(child)
                name = child.get("name", "")
                if not name:
                    raise MalformedXml(f"unnamed classifier in package {pkg_name!r}")
                if name in names:
                    raise DuplicateName(f"classifier {name!r} declared twice in package {pkg_name!r}")
                names.add(name)
                qname = f"{path}/{name}" if path else name
                if kind == "EClass":
                    self.pending_classes[qname] = (child, path)
                    self.order.append(qname)
                elif kind == "EEnum":
                    literals = tuple(lit.get("name", "") for lit in child if _local(lit.tag) == "eLiterals")
                    if not literals or len(set(literals)) != len(literals) or "" in literals:
                        raise MalformedXml(f"enum {name!r} needs distinct, non-empty literals")
                    self.enums[qname] = EEnum(name, qname, path, literals)
                    self.order.append(qname)
                elif kind == "EDataType":
                    java = child.get("instanceClassName", "")
                    mapped = _JAVA_TYPES.get(java)
                    if mapped is None:
                        mapped = "string"
                        self.warn(
                            f"data type {name!r} ({java or 'no instance class'}) is handled as string",
                            Code.UNKNOWN_DATA_TYPE,
                        )
                    self.datatypes[qname] = mapped
                else:
                    self.warn(f"skipping classifier {name!r} of kind {kind or '?'}")
            elif tag == "eSubpackages":
                sub = child.get("name", "")
                self.scan_package(child, f"{path}/{sub}" if path else sub)
            elif tag == "eAnnotations":
                self.warn(f"skipping annotation on package {pkg_name!r}")
            else:
                self.warn(f"skipping <{tag}> in package {pkg_name!r}")

    def _href_key(self, href: str, where: str) -> tuple[str, str]:
        """Map an eType href to ("builtin", kind) or ("local", qualified name)."""
        token = href.split()[-1] if href.split() else ""
        if token.startswith("#//"):
            return "local", token[3:]
        if token.startswith(_BUILTIN_PREFIX):
            name = token[len(_BUILTIN_PREFIX):]
            return "builtin", name
        raise UnresolvableTypeRef(href, where)

    def _feature_type(self, el: ET.Element, where: str) -> str:
        href = el.get("eType")
        if href is None:
            generic = next((g for g in el if _local(g.tag) == "eGenericType"), None)
            if generic is not None and generic.get("eClassifier"):
                href = generic.get("eClassifier")
                if len(generic):
                    self.warn(f"ignoring generic type arguments of {where}")
            else:
                raise UnresolvableTypeRef("", where)
        return href

    def build_class(self, qname: str) -> EClass:
        el, path = self.pending_classes[qname]
        name = el.get("name", "")
        supers: list[str] = []
        for href in (el.get("eSuperTypes") or "").split():
            kind, key = self._href_key(href, name)
            if kind != "local" or key not in self.pending_classes:
                raise UnresolvableTypeRef(href, f"supertypes of {name}")
            supers.append(key)
        attributes: list[EAttribute] = []
        references: list[EReference] = []
        for child in el:
            tag = _local(child.tag)
            if tag != "eStructuralFeatures":
                if tag == "eGenericSuperTypes":
                    for g in child.iter():
                        if g.get("eClassifier"):
                            key = self._href_key(g.get("eClassifier", ""), name)[1]
                            if key in self.pending_classes and key not in supers:
                                supers.append(key)
                            break
                    self.warn(f"generic supertype of {name!r} reduced to its raw class")
                else:
                    self.warn(f"skipping <{tag}> in class {name!r}")
                continue
            fname = child.get("name", "")
            where = f"{name}.{fname}"
            kind = _xsi_type(child)
            href = self._feature_type(child, where)
            tkind, key = self._href_key(href, where)
            lower = _bound(child.get("lowerBound"), 0)
            upper = _bound(child.get("upperBound"), 1)
            if upper != UNBOUNDED and lower > upper:
                raise MalformedXml(f"{where}: lowerBound {lower} exceeds upperBound {upper}")
            for sub in child:
                if _local(sub.tag) != "eGenericType":
                    self.warn(f"skipping <{_local(sub.tag)}> on feature {where}")
            if kind == "EAttribute":
                if tkind == "builtin":
                    dt = BUILTIN_TYPES.get(key)
                    if dt is None:
                        dt = "string"
                        self.warn(f"{where}: Ecore type {key} is handled as string", Code.UNKNOWN_DATA_TYPE)
                    type_name = key
                elif key in self.enums:
                    dt = f"enum:{key}"
                    type_name = self.enums[key].name
                elif key in self.datatypes:
                    dt = self.datatypes[key]
                    type_name = key.rsplit("/", 1)[-1]
                else:
                    raise UnresolvableTypeRef(href, where)
                attributes.append(EAttribute(fname, dt, type_name, lower, upper))
            elif kind == "EReference":
                if tkind != "local" or key not in self.pending_classes:
                    raise UnresolvableTypeRef(href, where)
                references.append(
                    EReference(fname, key, _bool(child.get("containment")), lower, upper)
                )
            else:
                self.warn(f"skipping feature {where} of kind {kind or '?'}")
        return EClass(
            name=name,
            qualified_name=qname,
            package_path=path,
            is_abstract=_bool(el.get("abstract")),
            is_interface=_bool(el.get("interface")),
            super_types=tuple(supers),
            attributes=tuple(attributes),
            references=tuple(references),
        )

    def build_package(self, el: ET.Element, path: str) -> EPackage:
        name = el.get("name", "")
        uri = el.get("nsURI", "")
        if not uri:
            raise MissingNsURI(f"package {name or '<unnamed>'!r} has no nsURI")
        classifiers = []
        subs = []
        for child in el:
            tag = _local(child.tag)
            if tag == "eClassifiers":
                cname = child.get("name", "")
                qname = f"{path}/{cname}" if path else cname
                if qname in self.index:
                    classifiers.append(self.index[qname])
            elif tag == "eSubpackages":
                sub = child.get("name", "")
                subs.append(self.build_package(child, f"{path}/{sub}" if path else sub))
        return EPackage(name, uri, el.get("nsPrefix") or name, path, tuple(classifiers), tuple(subs))


def _check_acyclic(classes: Mapping[str, EClass]) -> None:
    WHITE, GREY, BLACK = 0, 1, 2
    colour = {k: WHITE for k in classes}
    stack: list[str] = []

    def visit(k: str) -> None:
        colour[k] = GREY
        stack.append(k)
        for s in classes[k].super_types:
            if colour[s] == GREY:
                raise InheritanceCycle(stack[stack.index(s):] + [s])
            if colour[s] == WHITE:
                visit(s)
        stack.pop()
        colour[k] = BLACK

    for k in classes:
        if colour[k] == WHITE:
            visit(k)


def _linearize(classes: Mapping[str, EClass], key: str) -> list[str]:
    order: list[str] = []
    seen: set[str] = set()

    def visit(k: str) -> None:
        if k in seen:
            return
        seen.add(k)
        for s in classes[k].super_types:
            visit(s)
        order.append(k)

    visit(key)
    return order


def parse_ecore(text: Union[str, bytes]) -> MetaModel:
    """Parse Ecore XML into a MetaModel.

    Raises MalformedXml, MissingNsURI, UnresolvableTypeRef, InheritanceCycle
    or DuplicateName.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise MalformedXml(str(exc)) from exc

    p = _Parser()
    if _local(root.tag) == "XMI":
        packages = [c for c in root if _local(c.tag) == "EPackage"]
        if not packages:
            raise MalformedXml("XMI document contains no EPackage")
        if len(packages) > 1:
            p.warn("only the first of several top-level packages is loaded")
        root = packages[0]
    if _local(root.tag) != "EPackage":
        raise MalformedXml(f"expected an EPackage root element, got <{_local(root.tag)}>")

    p.scan_package(root, "")
    classes = {q: p.build_class(q) for q in p.pending_classes}
    _check_acyclic(classes)

    for q in p.order:
        p.index[q] = classes.get(q) or p.enums[q]
    package = p.build_package(root, "")

    features = {}
    ancestors = {}
    for q, c in classes.items():
        lin = _linearize(classes, q)
        ancestors[q] = frozenset(lin)
        attrs: list[EAttribute] = []
        refs: list[EReference] = []
        seen: dict[str, str] = {}
        for k in lin:
            for f in (*classes[k].attributes, *classes[k].references):
                if f.name in seen:
                    raise DuplicateName(
                        f"class {c.name!r}: feature {f.name!r} defined in both "
                        f"{seen[f.name]!r} and {k!r}"
                    )
                seen[f.name] = k
            attrs.extend(classes[k].attributes)
            refs.extend(classes[k].references)
        features[q] = (tuple(attrs), tuple(refs))

    return MetaModel(
        root_package=package,
        classifier_index=dict(p.index),
        warnings=tuple(p.warnings),
        _features=features,
        _ancestors=ancestors,
    )


def load_ecore(path) -> MetaModel:
    with open(path, "rb") as fp:
        return parse_ecore(fp.read())
