"""Fixture builders shared by the test modules."""

from __future__ import annotations

import json
import random
from functools import lru_cache
from pathlib import Path

from xmigen.cim import parse_cim
from xmigen.compiler import compile_cim
from xmigen.ecore import UNBOUNDED, MetaModel, all_features, load_ecore, parse_ecore

FIXTURES = Path(__file__).parent / "fixtures"
METAMODELS = ("alloc", "library", "statechart")


def ecore_doc(body: str, name: str = "t", uri: str = "http://example.org/t", prefix: str = "t") -> str:
    uri_attr = f' nsURI="{uri}"' if uri else ""
    return (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        '<ecore:EPackage xmi:version="2.0" xmlns:xmi="http://www.omg.org/XMI" '
        'xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance" '
        f'xmlns:ecore="http://www.eclipse.org/emf/2002/Ecore" name="{name}"{uri_attr} nsPrefix="{prefix}">\n'
        f"{body}\n</ecore:EPackage>\n"
    )


def eclass(name: str, features: str = "", **flags) -> str:
    extra = "".join(f' {k}="{v}"' for k, v in flags.items())
    return f'<eClassifiers xsi:type="ecore:EClass" name="{name}"{extra}>{features}</eClassifiers>'


def eattr(name: str, etype: str = "EString", **extra) -> str:
    more = "".join(f' {k}="{v}"' for k, v in extra.items())
    href = etype if etype.startswith("#") else f"ecore:EDataType http://www.eclipse.org/emf/2002/Ecore#//{etype}"
    return f'<eStructuralFeatures xsi:type="ecore:EAttribute" name="{name}" eType="{href}"{more}/>'


def eref(name: str, target: str, containment: bool = False, **extra) -> str:
    more = "".join(f' {k}="{v}"' for k, v in extra.items())
    cont = ' containment="true"' if containment else ""
    return f'<eStructuralFeatures xsi:type="ecore:EReference" name="{name}" eType="#//{target}"{cont}{more}/>'


def cim_of(data: dict):
    cim, diags = parse_cim(json.dumps(data))
    assert not [d for d in diags if d.is_error], diags
    return cim


def obj(type_name: str, attrs=(), comps=(), refs=()) -> dict:
    """CIM object entry; attrs as (name, value[, dataType]), links as (assoc, target)."""
    return {
        "type": type_name,
        "attributes": [
            {"dataType": a[2] if len(a) > 2 else "", "attributeName": a[0], "value": a[1]} for a in attrs
        ],
        "associations": {
            "compositions": [{"associationName": n, "associatedClassName": "", "instanceID": t} for n, t in comps],
            "references": [{"associationName": n, "associatedClassName": "", "instanceID": t} for n, t in refs],
        },
    }


# -- random CIMs -------------------------------------------------------------

_STRINGS = ["", "x", "core0", "  padded ", "tab\there", "line\nbreak", 'quo"te', "<&>", "ünïcødé", "a b c", "0"]


def random_value(rng: random.Random, attr, m: MetaModel):
    kind = attr.kind
    if kind == "string":
        return rng.choice(_STRINGS) + (str(rng.randrange(100)) if rng.random() < 0.5 else "")
    if kind == "int":
        return rng.choice([str(rng.randint(-10**6, 10**6)), rng.randint(-50, 50), "+7", "-0", "007"])
    if kind == "float":
        return rng.choice([str(rng.uniform(-1e3, 1e3)), rng.random(), "1e-7", "2", ".5", "-3.25E+2"])
    if kind == "boolean":
        return rng.choice(["true", "false", "TRUE", "False", True, False])
    return rng.choice(m.classifier_index[attr.enum_name].literals)


def random_cim_json(rng: random.Random, m: MetaModel, max_objects: int = 12, noise: float = 0.0) -> dict:
    """A random CIM document over `m`.

    With noise > 0 some entries are deliberately wrong (unknown classes,
    bad values, dangling ids) so rejection paths are exercised too.
    """
    concrete = [c for c in m.classes() if not (c.is_abstract or c.is_interface)]
    n = rng.randint(0, max_objects)
    ids = [f"o{i}" for i in range(n)]
    classes = {}
    doc: dict = {}
    for iid in ids:
        c = rng.choice(concrete)
        if rng.random() < noise:
            type_name = rng.choice(["Spaceship", *(k.name for k in m.classes() if k.is_abstract)] or ["Spaceship"])
        else:
            type_name = c.name
        classes[iid] = c
        attrs, _ = all_features(c, m)
        entries = []
        for a in attrs:
            if rng.random() < 0.35:
                continue
            count = rng.randint(1, 3) if a.many else 1
            for _ in range(count):
                value = random_value(rng, a, m)
                if rng.random() < noise:
                    value = "not-a-" + a.kind if a.kind != "string" else value
                entries.append({"dataType": a.type_name, "attributeName": a.name, "value": value})
        doc[iid] = {"type": type_name, "attributes": entries,
                    "associations": {"compositions": [], "references": []}}

    order = ids[:]
    rng.shuffle(order)
    for child in order:
        if rng.random() < 0.3:
            continue
        options = []
        for parent in ids:
            if parent == child and rng.random() > noise:
                continue
            for r in all_features(classes[parent], m)[1]:
                if r.is_containment and m.conforms(classes[child].qualified_name, r.target_class):
                    options.append((parent, r.name))
        if options:
            parent, ref = rng.choice(options)
            doc[parent]["associations"]["compositions"].append(
                {"associationName": ref, "associatedClassName": classes[child].name, "instanceID": child}
            )
    for iid in ids:
        for r in all_features(classes[iid], m)[1]:
            if r.is_containment:
                continue
            targets = [t for t in ids if m.conforms(classes[t].qualified_name, r.target_class)]
            if not targets:
                continue
            limit = 3 if r.upper_bound == UNBOUNDED else r.upper_bound
            for t in rng.sample(targets, k=min(len(targets), rng.randint(0, limit))):
                doc[iid]["associations"]["references"].append(
                    {"associationName": r.name, "associatedClassName": classes[t].name, "instanceID": t}
                )
        if rng.random() < noise:
            doc[iid]["associations"]["references"].append(
                {"associationName": "ghost", "associatedClassName": "X", "instanceID": "missing"}
            )
    return doc



# -- compiler guardrails -----------------------------------------------------
# (expected code, metamodel, clean CIM, the same CIM plus exactly one bad element)

GUARDRAILS = [
    (
        "AbstractClass", "library",
        {"lib": obj("Library", [("name", "city")])},
        {"lib": obj("Library", [("name", "city")]), "it": obj("Item")},
    ),
    (
        "UnknownClass", "alloc",
        {"b": obj("Board", [("name", "b0")])},
        {"b": obj("Board", [("name", "b0")]), "s": obj("Spaceship")},
    ),
    (
        "UnknownAttribute", "alloc",
        {"b": obj("Board", [("name", "b0")])},
        {"b": obj("Board", [("name", "b0"), ("colour", "red")])},
    ),
    (
        "ValueCoercionFailed", "alloc",
        {"c": obj("Core", [("name", "core0")])},
        {"c": obj("Core", [("name", "core0"), ("frequency", "fast", "EInt")])},
    ),
    (
        "DanglingTarget", "alloc",
        {"b": obj("Board", [("name", "b0")])},
        {"b": obj("Board", [("name", "b0")], comps=[("cpu", "x9")])},
    ),
    (
        "SecondContainer", "alloc",
        {"b1": obj("Board", comps=[("cpu", "c")]), "b2": obj("Board"), "c": obj("CPU")},
        {"b1": obj("Board", comps=[("cpu", "c")]), "b2": obj("Board", comps=[("cpu", "c")]), "c": obj("CPU")},
    ),
    (
        "ContainmentCycle", "statechart",
        {"r": obj("Region", comps=[("vertices", "s")]), "s": obj("State")},
        {"r": obj("Region", comps=[("vertices", "s")]), "s": obj("State", comps=[("regions", "r")])},
    ),
]


# -- matching fixtures and oracle --------------------------------------------


def max_matching(left, right, compatible) -> int:
    """Maximum bipartite matching by exhaustive search over used-sets."""
    edges = [[j for j, r in enumerate(right) if compatible(l, r)] for l in left]

    @lru_cache(maxsize=None)
    def best(i: int, used: int) -> int:
        if i == len(left):
            return 0
        top = best(i + 1, used)
        for j in edges[i]:
            if not used >> j & 1:
                top = max(top, 1 + best(i + 1, used | 1 << j))
        return top

    return best(0, 0)


def _alloc_base(rng: random.Random, n_objects: int) -> dict:
    classes = ["Board", "CPU", "Core", "RAM", "VM", "APP"]
    extra = {"Core": [("frequency", lambda: str(rng.randint(1, 3)))],
             "RAM": [("size", lambda: rng.choice(["8", "16"]))],
             "APP": [("critical", lambda: rng.choice(["true", "false"])),
                     ("priority", lambda: rng.choice(["LOW", "HIGH"]))]}
    doc = {}
    for i in range(n_objects):
        cls = rng.choice(classes)
        attrs = [("name", f"{cls.lower()}{i}")]
        attrs += [(a, make()) for a, make in extra.get(cls, []) if rng.random() < 0.7]
        doc[f"o{i}"] = obj(cls, attrs)
    by_class = {}
    for iid, o in doc.items():
        by_class.setdefault(o["type"], []).append(iid)
    contain = {"Board": [("cpu", "CPU"), ("ram", "RAM")], "CPU": [("core", "Core")]}
    for iid, o in doc.items():
        for ref, target_cls in contain.get(o["type"], []):
            for t in by_class.get(target_cls, []):
                if rng.random() < 0.3 and not any(
                    c["instanceID"] == t for x in doc.values() for c in x["associations"]["compositions"]
                ):
                    o["associations"]["compositions"].append(
                        {"associationName": ref, "associatedClassName": target_cls, "instanceID": t})
        plain = {"Core": ("assignedTo", "VM", 1), "VM": ("hosts", "APP", 3)}.get(o["type"])
        if plain:
            ref, target_cls, limit = plain
            pool = by_class.get(target_cls, [])
            for t in rng.sample(pool, k=min(len(pool), rng.randint(0, limit))):
                o["associations"]["references"].append(
                    {"associationName": ref, "associatedClassName": target_cls, "instanceID": t})
    return doc


def _drop_objects(doc: dict, ids) -> dict:
    out = {}
    for iid, o in doc.items():
        if iid in ids:
            continue
        o = json.loads(json.dumps(o))
        for section in ("compositions", "references"):
            o["associations"][section] = [k for k in o["associations"][section] if k["instanceID"] not in ids]
        out[iid] = o
    return out


def _perturb(rng: random.Random, doc: dict) -> dict:
    doc = json.loads(json.dumps(doc))
    for o in doc.values():
        kept = [a for a in o["attributes"] if a["attributeName"] == "name" or rng.random() > 0.2]
        for a in kept:
            if a["attributeName"] == "frequency" and rng.random() < 0.2:
                a["value"] = str(int(a["value"]) + 10)
        o["attributes"] = kept
        for section in ("compositions", "references"):
            o["associations"][section] = [k for k in o["associations"][section] if rng.random() > 0.2]
    return doc


def matching_pair(rng: random.Random, m: MetaModel, exact: bool = True, max_objects: int = 8):
    """Two compiled alloc models derived from one random base.

    In the exact regime objects of a given class are only ever removed from
    one side, so every object correspondence is an exact key match.
    """
    base = _alloc_base(rng, rng.randint(0, max_objects))
    gen_side = {c: rng.random() < 0.5 for c in ("Board", "CPU", "Core", "RAM", "VM", "APP")}
    drop_gen, drop_truth = set(), set()
    for iid, o in base.items():
        if rng.random() < 0.25:
            if not exact:
                (drop_gen if rng.random() < 0.5 else drop_truth).add(iid)
            else:
                (drop_gen if gen_side[o["type"]] else drop_truth).add(iid)
    gen = _perturb(rng, _drop_objects(base, drop_gen))
    truth = _perturb(rng, _drop_objects(base, drop_truth))
    if not exact:
        # rename some objects so the key-equality step misses them
        for o in gen.values():
            if rng.random() < 0.3:
                o["attributes"][0]["value"] += "x"
    return compile_cim(m, cim_of(gen)).model, compile_cim(m, cim_of(truth)).model
