"""PlantUML class-diagram rendering of a metamodel, used as prompt context."""

from __future__ import annotations

import re

from .ecore import UNBOUNDED, EClass, EEnum, MetaModel

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def _q(name: str) -> str:
    return name if _IDENT.match(name) else '"' + name.replace('"', "'") + '"'


def _mult(lower: int, upper: int) -> str:
    hi = "*" if upper == UNBOUNDED else str(upper)
    return f"{lower}..{hi}"


def _class_block(c: EClass, m: MetaModel) -> list[str]:
    head = "abstract class" if (c.is_abstract or c.is_interface) else "class"
    stereo = " <<interface>>" if c.is_interface else ""
    if not c.attributes:
        return [f"{head} {_q(c.name)}{stereo}"]
    lines = [f"{head} {_q(c.name)}{stereo} {{"]
    for a in c.attributes:
        suffix = f" [{_mult(a.lower_bound, a.upper_bound)}]" if a.many else ""
        lines.append(f"  {_q(a.name)} : {_q(a.type_name)}{suffix}")
    lines.append("}")
    return lines


def _enum_block(e: EEnum) -> list[str]:
    return [f"enum {_q(e.name)} {{", *(f"  {_q(lit)}" for lit in e.literals), "}"]


def render_plantuml(m: MetaModel) -> str:
    pkg = m.root_package
    lines = ["@startuml", f"' metamodel {pkg.name} ({pkg.ns_uri})"]
    for c in m.classifier_index.values():
        lines.extend(_enum_block(c) if isinstance(c, EEnum) else _class_block(c, m))
    for c in m.classes():
        for s in c.super_types:
            lines.append(f"{_q(m.eclass(s).name)} <|-- {_q(c.name)}")
    for c in m.classes():
        for r in c.references:
            target = _q(m.eclass(r.target_class).name)
            mult = _mult(r.lower_bound, r.upper_bound)
            arrow = "*--" if r.is_containment else "-->"
            lines.append(f"{_q(c.name)} {arrow} {target} : {_q(r.name)} [{mult}]")
    lines.append("@enduml")
    return "\n".join(lines) + "\n"
