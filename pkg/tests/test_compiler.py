from __future__ import annotations

import json
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import FIXTURES, GUARDRAILS, METAMODELS, cim_of, eattr, eclass, ecore_doc, obj, random_cim_json
from xmigen.cim import ConceptualInstanceModel, dump_cim, parse_cim
from xmigen.compiler import (
    CATEGORIES,
    coerce_value,
    compile_cim,
    instantiate_objects,
    model_to_cim,
    render_value,
)
from xmigen.diagnostics import Code
from xmigen.ecore import find_attribute, load_ecore, parse_ecore, resolve_classifier


def codes(diags):
    return [d.code for d in diags]


def counts(report):
    return {c: (report.counts[c].accepted, report.counts[c].attempted) for c in CATEGORIES}


def test_allocation_scenario(alloc, alloc_cim_text):
    cim, diags = parse_cim(alloc_cim_text)
    assert diags == []
    report = compile_cim(alloc, cim)
    assert report.errors == []
    assert counts(report) == {"objects": (9, 9), "attributes": (15, 15), "associations": (8, 8)}
    model = report.model
    assert model.roots == ["board", "vm1", "vm2", "app1", "app2"]
    assert model.objects["core0"].ref_targets["assignedTo"] == ["vm1"]
    assert model.objects["core0"].container == ("cpu0", "core")
    assert model.objects["vm1"].ref_targets["hosts"] == ["app1"]
    assert report.grammatical_accuracy() == 1


def test_two_concrete_objects(alloc):
    objects, diags = instantiate_objects(alloc, cim_of({"b": obj("Board"), "c": obj("CPU")}))
    assert list(objects) == ["b", "c"] and diags == []


def test_abstract_object(library):
    objects, diags = instantiate_objects(library, cim_of({"i": obj("Item")}))
    assert objects == {}
    assert codes(diags) == [Code.ABSTRACT_CLASS]


def test_unknown_class_agrees_with_lookup(alloc):
    assert resolve_classifier(alloc, "Spaceship") is None
    _, diags = instantiate_objects(alloc, cim_of({"s": obj("Spaceship")}))
    assert codes(diags) == [Code.UNKNOWN_CLASS]


def test_enum_used_as_class(alloc):
    _, diags = instantiate_objects(alloc, cim_of({"p": obj("Priority")}))
    assert codes(diags) == [Code.UNKNOWN_CLASS]


def test_empty_cim(alloc):
    report = compile_cim(alloc, ConceptualInstanceModel({}))
    assert report.model.objects == {} and report.diagnostics == []
    assert report.grammatical_accuracy() == Fraction(1)


def test_abstract_owner_counts(library):
    report = compile_cim(library, cim_of({"i": obj("Item", [("year", "1999"), ("tags", "x")])}))
    assert counts(report) == {"objects": (0, 1), "attributes": (0, 2), "associations": (0, 0)}
    assert codes(report.diagnostics) == [Code.ABSTRACT_CLASS, Code.OWNER_MISSING, Code.OWNER_MISSING]


@pytest.mark.parametrize("code, mm, clean, bad", GUARDRAILS, ids=[g[0] for g in GUARDRAILS])
def test_guardrail(code, mm, clean, bad, metamodels):
    m = metamodels[mm]
    before = compile_cim(m, cim_of(clean))
    after = compile_cim(m, cim_of(bad))
    assert before.diagnostics == []
    assert [d.code.value for d in after.diagnostics] == [code]
    b, a = counts(before), counts(after)
    changed = [c for c in CATEGORIES if a[c] != b[c]]
    assert len(changed) == 1
    cat = changed[0]
    assert a[cat] == (b[cat][0], b[cat][1] + 1)
    assert after.grammatical_accuracy() == Fraction(sum(x for x, _ in b.values()), sum(y for _, y in b.values()) + 1)


# -- values ------------------------------------------------------------------


def _int_oracle(raw: str):
    text = raw.strip()
    body = text[1:] if text[:1] in ("+", "-") else text
    if body and all(ch in "0123456789" for ch in body):
        return int(text)
    return None


@settings(max_examples=300)
@given(st.one_of(st.integers().map(str), st.text(max_size=6), st.from_regex(r"\s*[+-]?[0-9_]{1,4}\s*", fullmatch=True)))
def test_int_coercion_matches_oracle(alloc, raw):
    attr = find_attribute(alloc.eclass("Core"), alloc, "frequency")
    expected = _int_oracle(raw)
    if expected is None:
        with pytest.raises(ValueError):
            coerce_value(attr, raw, alloc)
    else:
        assert coerce_value(attr, raw, alloc) == expected


@pytest.mark.parametrize("raw, ok", [
    ("2", True), ("-0.5", True), (".5", True), ("1e-7", True), ("3.", True), ("-3.25E+2", True),
    ("nan", False), ("inf", False), ("1_0", False), ("", False), ("e3", False), ("0x10", False),
])
def test_float_coercion(alloc, raw, ok):
    attr = find_attribute(alloc.eclass("RAM"), alloc, "size")
    if ok:
        assert coerce_value(attr, raw, alloc) == float(raw)
    else:
        with pytest.raises(ValueError):
            coerce_value(attr, raw, alloc)


def test_other_coercions(alloc):
    app = alloc.eclass("APP")
    crit = find_attribute(app, alloc, "critical")
    prio = find_attribute(app, alloc, "priority")
    name = find_attribute(app, alloc, "name")
    assert coerce_value(crit, " TRUE ", alloc) is True
    assert coerce_value(prio, "HIGH", alloc) == "HIGH"
    assert coerce_value(name, "", alloc) == ""
    assert coerce_value(name, "  spaced ", alloc) == "  spaced "
    for attr, raw in [(crit, "yes"), (prio, "high"), (name, "bell\x07")]:
        with pytest.raises(ValueError):
            coerce_value(attr, raw, alloc)


def test_attribute_outcomes(alloc):
    report = compile_cim(alloc, cim_of({"c": obj("Core", [
        ("frequency", "2", "int"),
        ("name", "core0", "EInt"),
        ("name", "again"),
    ])}))
    core = report.model.objects["c"]
    assert core.attr_values == {"frequency": [2], "name": ["core0"]}
    assert codes(report.diagnostics) == [Code.TYPE_MISMATCH_DECLARED, Code.UPPER_BOUND_EXCEEDED]
    assert counts(report)["attributes"] == (2, 3)


def test_reference_outcomes(alloc):
    doc = {
        "board": obj("Board", comps=[("cpu", "cpu0")]),
        "cpu0": obj("CPU", comps=[("core", "core0")]),
        "core0": obj("Core", refs=[("assignedTo", "vm1"), ("assignedTo", "vm2")]),
        "vm1": obj("VM", comps=[("hosts", "app1")], refs=[("hosts", "app1"), ("hosts", "core0")]),
        "vm2": obj("VM"),
        "app1": obj("APP"),
    }
    report = compile_cim(alloc, cim_of(doc))
    objs = report.model.objects
    assert objs["core0"].container == ("cpu0", "core")
    assert objs["core0"].ref_targets["assignedTo"] == ["vm1"]
    assert objs["vm1"].ref_targets["hosts"] == ["app1"]
    assert objs["app1"].container is None
    assert codes(report.diagnostics) == [
        Code.UPPER_BOUND_EXCEEDED,
        Code.KIND_MISMATCH,
        Code.DUPLICATE_LINK,
        Code.TYPE_NON_CONFORMING,
    ]


def test_unknown_reference_and_class_name_hint(alloc):
    doc = {
        "v": obj("VM", refs=[("runs", "a")]),
        "a": obj("APP"),
        "c": {"type": "Core", "associations": {"references": [
            {"associationName": "assignedTo", "associatedClassName": "VirtualMachine", "instanceID": "v"}]}},
    }
    report = compile_cim(alloc, cim_of(doc))
    assert codes(report.diagnostics) == [Code.UNKNOWN_REFERENCE, Code.CLASS_NAME_MISMATCH]
    assert report.model.objects["c"].ref_targets == {"assignedTo": ["v"]}


def test_lower_bound_warning(statechart):
    report = compile_cim(statechart, cim_of({"t": obj("Transition")}))
    assert codes(report.diagnostics) == [Code.LOWER_BOUND_VIOLATED] * 2
    assert not report.errors


def test_forward_references_resolve(alloc):
    doc = {"core": obj("Core", refs=[("assignedTo", "vm")]), "vm": obj("VM")}
    report = compile_cim(alloc, cim_of(doc))
    assert report.diagnostics == []


def test_subpackage_class_by_simple_name(library):
    report = compile_cim(library, cim_of({
        "lib": obj("Library", [("name", "L")], comps=[("members", "p")]),
        "p": obj("Person", [("name", "ada"), ("active", "true")]),
    }))
    assert report.diagnostics == []
    assert report.model.objects["p"].eclass == "people/Person"


# -- properties over random CIMs ---------------------------------------------


def _random_reports(n_per_mm: int, noise: float):
    for name in METAMODELS:
        m = load_ecore(FIXTURES / f"{name}.ecore")
        rng = random.Random(f"{name}-{noise}")
        for _ in range(n_per_mm):
            cim, _ = parse_cim(json.dumps(random_cim_json(rng, m, noise=noise)))
            yield m, cim, compile_cim(m, cim)


@pytest.mark.parametrize("noise", [0.0, 0.3])
def test_accounting_and_forest_invariants(noise):
    for m, cim, report in _random_reports(60, noise):
        objs = report.model.objects
        for c in CATEGORIES:
            assert report.counts[c].accepted <= report.counts[c].attempted
        rejected = sum(report.counts[c].attempted - report.counts[c].accepted for c in CATEGORIES)
        # every rejected element carries exactly one error, at a distinct location
        assert rejected == len(report.errors)
        spots = {(d.instance_id, d.feature_name, d.index, d.code) for d in report.errors}
        assert len(spots) == len(report.errors)
        # containment is a forest whose roots are exactly the uncontained objects
        parents = {}
        for o in objs.values():
            for feat, child in report.model.children(o, m):
                assert child.id not in parents
                parents[child.id] = (o.id, feat)
                assert child.container == (o.id, feat)
        assert {i for i, o in objs.items() if o.container is not None} == set(parents)
        assert report.model.roots == [i for i in cim.objects if i in objs and objs[i].container is None]
        seen = [o.id for o in report.model.document_order(m)]
        assert sorted(seen) == sorted(objs)


def test_compile_is_deterministic(alloc, alloc_cim_text):
    a = compile_cim(alloc, parse_cim(alloc_cim_text)[0])
    b = compile_cim(alloc, parse_cim(alloc_cim_text)[0])
    assert a.diagnostics == b.diagnostics
    assert dump_cim(model_to_cim(a.model, alloc)) == dump_cim(model_to_cim(b.model, alloc))


def test_model_to_cim_recompiles_identically():
    for m, _, report in _random_reports(20, 0.0):
        back = model_to_cim(report.model, m)
        again = compile_cim(m, back)
        assert again.errors == []
        assert dump_cim(model_to_cim(again.model, m)) == dump_cim(back)


def test_render_value():
    assert [render_value(v) for v in (True, False, 3, 0.1, 1e-7, "x")] == ["true", "false", "3", "0.1", "1e-07", "x"]


def test_local_datatype_maps_through_instance_class():
    body = (
        '<eClassifiers xsi:type="ecore:EDataType" name="Money" instanceClassName="java.math.BigDecimal"/>'
        + eclass("Account", eattr("balance", "#//Money"))
    )
    m = parse_ecore(ecore_doc(body))
    report = compile_cim(m, cim_of({"a": obj("Account", [("balance", "12.50")])}))
    assert report.model.objects["a"].attr_values == {"balance": [12.5]}
