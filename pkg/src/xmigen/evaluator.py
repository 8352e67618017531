"""Validity and semantic-quality metrics for generated instance models.

Elements are objects, attribute values and links. A generated model and a
ground-truth model are reduced to canonical element sets, objects are
matched between the two, and precision/recall/accuracy are computed per
element category and overall. All ratios are exact Fractions; 0/0 is 1.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional, Sequence

from .cim import load_cim
from .compiler import CATEGORIES, CompileReport, InstanceModel, compile_cim, render_value
from .diagnostics import write_jsonl
from .ecore import MetaModel, all_features, load_ecore
from .exceptions import DatasetLayoutError, GenerationFailed, XmigenError
from .llm import FewShotExample, GenerationTrace, LlmConfig, Messages, generate_instance_model
from .xmi import load_xmi, parse_xmi, serialize_xmi

logger = logging.getLogger(__name__)

NAME_ATTRIBUTES = ("name", "id", "label")
METRICS = ("GA", "SP", "SR", "SA")
ALL = "overall"

ObjectKey = tuple[str, str]  # (class name, name key)


@dataclass(frozen=True)
class CanonicalElementSet:
    objects: tuple[ObjectKey, ...] = ()
    attributes: tuple[tuple[ObjectKey, str, str], ...] = ()
    associations: tuple[tuple[ObjectKey, str, ObjectKey], ...] = ()
    # set when some object had to be keyed by a positional signature
    ambiguous: bool = field(default=False, compare=False)
    # the keys that are ordinals rather than names
    positional: frozenset = field(default=frozenset(), compare=False)

    def size(self, category: str) -> int:
        return len(getattr(self, category))


def canonicalize(model: InstanceModel, m: MetaModel) -> CanonicalElementSet:
    order = model.document_order(m)
    keys: dict[str, ObjectKey] = {}
    taken: set[ObjectKey] = set()
    unnamed: Counter = Counter()
    positional = set()
    for obj in order:
        eclass = m.eclass(obj.eclass)
        name = None
        for attr in NAME_ATTRIBUTES:
            values = obj.attr_values.get(attr)
            if values:
                name = render_value(values[0]).strip()
                break
        if name is None:
            name = f"{eclass.name}#{unnamed[eclass.name]}"
            unnamed[eclass.name] += 1
            positional.add((eclass.name, name))
        key = (eclass.name, name)
        if key in taken:
            n = 1
            while (eclass.name, f"{name}#{n}") in taken:
                n += 1
            key = (eclass.name, f"{name}#{n}")
            positional.add(key)
        taken.add(key)
        keys[obj.id] = key

    attributes = []
    associations = []
    for obj in order:
        attrs, refs = all_features(m.eclass(obj.eclass), m)
        for a in attrs:
            for v in obj.attr_values.get(a.name, ()):
                attributes.append((keys[obj.id], a.name, render_value(v)))
        for r in refs:
            for t in obj.ref_targets.get(r.name, ()):
                associations.append((keys[obj.id], r.name, keys[t]))
    return CanonicalElementSet(
        tuple(keys[o.id] for o in order), tuple(attributes), tuple(associations),
        bool(positional), frozenset(positional),
    )


@dataclass
class MatchResult:
    object_pairs: list[tuple[ObjectKey, ObjectKey]]
    matched: dict[str, int]
    unmatched_generated: dict[str, list]
    unmatched_truth: dict[str, list]

    @property
    def total_matched(self) -> int:
        return sum(self.matched.values())


def _by_owner(elements) -> dict[ObjectKey, Counter]:
    out: dict[ObjectKey, Counter] = {}
    for owner, *rest in elements:
        out.setdefault(owner, Counter())[tuple(rest)] += 1
    return out


def match_elements(gen: CanonicalElementSet, truth: CanonicalElementSet) -> MatchResult:
    """Greedy object matching, then element matching between matched owners.

    Objects pair on equal (class, name key) first. Leftover objects of the
    same class pair by descending number of shared attribute values (at
    least one), ties broken by document order. Positional keys never pair
    in the first step; an equal positional key only breaks ties in the
    second, where it also admits pairs that share no attribute.
    """
    gen_attrs = _by_owner(gen.attributes)
    truth_attrs = _by_owner(truth.attributes)

    pairs: dict[ObjectKey, ObjectKey] = {}
    truth_set = set(truth.objects)
    for g in gen.objects:
        if g in truth_set and g not in gen.positional and g not in truth.positional:
            pairs[g] = g
    paired_truth = set(pairs.values())

    left_gen = [(i, g) for i, g in enumerate(gen.objects) if g not in pairs]
    left_truth = [(j, t) for j, t in enumerate(truth.objects) if t not in paired_truth]
    candidates = []
    for i, g in left_gen:
        for j, t in left_truth:
            if g[0] != t[0]:
                continue
            score = sum((gen_attrs.get(g, Counter()) & truth_attrs.get(t, Counter())).values())
            same = g == t
            if score > 0 or same:
                candidates.append((-score, not same, i, j, g, t))
    for *_, g, t in sorted(candidates):
        if g not in pairs and t not in paired_truth:
            pairs[g] = t
            paired_truth.add(t)

    matched_attr: list[tuple] = []
    for g, t in pairs.items():
        common = gen_attrs.get(g, Counter()) & truth_attrs.get(t, Counter())
        matched_attr.extend((g, *rest) for rest in common.elements())

    truth_assoc = _by_owner(truth.associations)
    matched_assoc: list[tuple] = []
    for g, t in pairs.items():
        mapped = Counter()
        originals: dict[tuple, list] = {}
        for owner, ref, target in gen.associations:
            if owner == g and target in pairs:
                mapped[(ref, pairs[target])] += 1
                originals.setdefault((ref, pairs[target]), []).append(target)
        common = mapped & truth_assoc.get(t, Counter())
        for (ref, tt), n in common.items():
            matched_assoc.extend((g, ref, originals[(ref, tt)][k]) for k in range(n))

    def rest(all_elems, used) -> list:
        remaining = Counter(used)
        out = []
        for e in all_elems:
            if remaining[e]:
                remaining[e] -= 1
            else:
                out.append(e)
        return out

    inv = {t: g for g, t in pairs.items()}
    truth_attr_used = [(pairs[g], *r) for g, *r in matched_attr]
    truth_assoc_used = [(pairs[g], ref, pairs[tg]) for g, ref, tg in matched_assoc]
    return MatchResult(
        object_pairs=list(pairs.items()),
        matched={
            "objects": len(pairs),
            "attributes": len(matched_attr),
            "associations": len(matched_assoc),
        },
        unmatched_generated={
            "objects": [g for g in gen.objects if g not in pairs],
            "attributes": rest(gen.attributes, matched_attr),
            "associations": rest(gen.associations, matched_assoc),
        },
        unmatched_truth={
            "objects": [t for t in truth.objects if t not in inv],
            "attributes": rest(truth.attributes, truth_attr_used),
            "associations": rest(truth.associations, truth_assoc_used),
        },
    )


# -- metrics -----------------------------------------------------------------


def _ratio(num: int, den: int) -> Fraction:
    return Fraction(num, den) if den else Fraction(1)


@dataclass(frozen=True)
class Scores:
    GA: Optional[Fraction]
    SP: Fraction
    SR: Fraction
    SA: Fraction

    @classmethod
    def from_counts(cls, intersection: int, n_gen: int, n_truth: int, ga: Optional[Fraction] = None) -> "Scores":
        union = n_gen + n_truth - intersection
        return cls(ga, _ratio(intersection, n_gen), _ratio(intersection, n_truth), _ratio(intersection, union))

    def as_dict(self) -> dict[str, Optional[float]]:
        return {k: (None if getattr(self, k) is None else float(getattr(self, k))) for k in METRICS}


@dataclass(frozen=True)
class MetricsReport:
    # keyed by "objects", "attributes", "associations" and "overall"
    scores: dict[str, Scores]

    def __getitem__(self, category: str) -> Scores:
        return self.scores[category]

    def to_dict(self) -> dict:
        return {cat: s.as_dict() for cat, s in self.scores.items()}


def compute_metrics(
    match: MatchResult,
    gen: CanonicalElementSet,
    truth: CanonicalElementSet,
    report: Optional[CompileReport] = None,
) -> MetricsReport:
    scores = {}
    for cat in CATEGORIES:
        ga = report.grammatical_accuracy(cat) if report is not None else None
        scores[cat] = Scores.from_counts(match.matched[cat], gen.size(cat), truth.size(cat), ga)
    ga = report.grammatical_accuracy() if report is not None else None
    scores[ALL] = Scores.from_counts(
        match.total_matched,
        sum(gen.size(c) for c in CATEGORIES),
        sum(truth.size(c) for c in CATEGORIES),
        ga,
    )
    return MetricsReport(scores)


def evaluate(
    generated: InstanceModel, reference: InstanceModel, m: MetaModel, report: Optional[CompileReport] = None
) -> tuple[MetricsReport, MatchResult, CanonicalElementSet, CanonicalElementSet]:
    gen = canonicalize(generated, m)
    truth = canonicalize(reference, m)
    match = match_elements(gen, truth)
    return compute_metrics(match, gen, truth, report), match, gen, truth


# -- benchmark ---------------------------------------------------------------

TASK_FILES = ("metamodel.ecore", "spec.txt", "reference.xmi")

# (task name, messages) -> assistant text
TaskCompleter = Callable[[str, Messages], str]


@dataclass
class TaskResult:
    name: str
    valid: bool
    attempts: Optional[int] = None
    metrics: Optional[MetricsReport] = None
    compile_errors: int = 0
    ambiguous: bool = False
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "taskName": self.name,
            "valid": self.valid,
            "attempts": self.attempts,
            "compileErrors": self.compile_errors,
            "ambiguousKeys": self.ambiguous,
            "metrics": self.metrics.to_dict() if self.metrics else None,
            "note": self.note,
        }


@dataclass
class BatchReport:
    tasks: list[TaskResult]

    @property
    def task_count(self) -> int:
        return len(self.tasks)

    @property
    def valid_count(self) -> int:
        return sum(t.valid for t in self.tasks)

    @property
    def validity_rate(self) -> Fraction:
        return _ratio(self.valid_count, self.task_count)

    @property
    def clean_count(self) -> int:
        """Valid tasks whose compile also raised no error diagnostic."""
        return sum(t.valid and t.metrics is not None and t.compile_errors == 0 for t in self.tasks)

    def means(self) -> dict[str, dict[str, Optional[float]]]:
        """Per-category metric means over tasks that produced a model."""
        scored = [t.metrics for t in self.tasks if t.metrics is not None]
        out = {}
        for cat in (ALL, *CATEGORIES):
            row = {}
            for metric in METRICS:
                vals = [getattr(r[cat], metric) for r in scored if getattr(r[cat], metric) is not None]
                row[metric] = float(sum(vals, Fraction(0)) / len(vals)) if vals else None
            out[cat] = row
        return out

    def to_dict(self) -> dict:
        return {
            "taskCount": self.task_count,
            "validCount": self.valid_count,
            "VR": float(self.validity_rate),
            "cleanCount": self.clean_count,
            "means": self.means(),
            "excludedFromMeans": [t.name for t in self.tasks if t.metrics is None],
            "tasks": [t.to_dict() for t in self.tasks],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        cols = [f"{metric}_{cat}" for cat in (ALL, *CATEGORIES) for metric in METRICS]
        writer.writerow(["taskName", "valid", "attempts", *cols])
        for t in self.tasks:
            values = []
            for cat in (ALL, *CATEGORIES):
                for metric in METRICS:
                    v = getattr(t.metrics[cat], metric) if t.metrics else None
                    values.append("" if v is None else f"{float(v):.6f}")
            writer.writerow([t.name, int(t.valid), "" if t.attempts is None else t.attempts, *values])
        return buf.getvalue()


def discover_tasks(dataset_dir) -> list[Path]:
    root = Path(dataset_dir)
    if not root.is_dir():
        raise DatasetLayoutError(f"{root} is not a directory")
    tasks = sorted(p for p in root.iterdir() if p.is_dir())
    if not tasks:
        raise DatasetLayoutError(f"{root} contains no task directories")
    for task in tasks:
        missing = [f for f in TASK_FILES if not (task / f).is_file()]
        if missing:
            raise DatasetLayoutError(f"task {task.name!r} is missing {', '.join(missing)}")
    return tasks


def _write_task_outputs(out: Path, trace: Optional[GenerationTrace], xmi: Optional[str], report) -> None:
    out.mkdir(parents=True, exist_ok=True)
    if trace is not None:
        (out / "trace.json").write_text(json.dumps(trace.to_dict(), indent=2) + "\n", encoding="utf-8")
    if xmi is not None:
        (out / "generated.xmi").write_text(xmi, encoding="utf-8")
    if report is not None:
        with open(out / "diagnostics.jsonl", "w", encoding="utf-8") as fp:
            write_jsonl(report.diagnostics, fp)


def run_task(
    task: Path,
    config: Optional[LlmConfig],
    examples: Sequence[FewShotExample],
    complete: Optional[TaskCompleter],
    out_dir: Optional[Path],
) -> TaskResult:
    m = load_ecore(task / "metamodel.ecore")
    reference = load_xmi(task / "reference.xmi", m)
    trace = None
    report = None
    attempts = None

    if config is not None or complete is not None:
        spec = (task / "spec.txt").read_text(encoding="utf-8")
        cfg = config or LlmConfig(endpoint_base_url="mock://", model_name="mock")
        bound = (lambda msgs: complete(task.name, msgs)) if complete is not None else None
        try:
            trace = generate_instance_model(m, spec, examples, cfg, complete=bound)
        except GenerationFailed as exc:
            if out_dir is not None and exc.trace is not None:
                _write_task_outputs(out_dir / task.name, exc.trace, None, None)
            attempts = exc.trace.attempts if exc.trace is not None else None
            return TaskResult(task.name, valid=False, attempts=attempts, note=str(exc))
        report = trace.report
        attempts = trace.attempts
    elif (task / "generated.cim.json").is_file():
        cim, _ = load_cim(task / "generated.cim.json")
        report = compile_cim(m, cim)
    elif (task / "generated.xmi").is_file():
        try:
            generated = load_xmi(task / "generated.xmi", m)
        except XmigenError as exc:
            return TaskResult(task.name, valid=False, note=f"{type(exc).__name__}: {exc}")
        metrics, _, gen, _ = evaluate(generated, reference, m)
        return TaskResult(task.name, valid=True, metrics=metrics, ambiguous=gen.ambiguous)
    else:
        raise DatasetLayoutError(f"task {task.name!r} has no generated.cim.json or generated.xmi to evaluate")

    xmi = serialize_xmi(report, m)
    try:
        parse_xmi(xmi, m)
        valid, note = True, ""
    except XmigenError as exc:
        valid, note = False, f"{type(exc).__name__}: {exc}"
    if out_dir is not None:
        _write_task_outputs(out_dir / task.name, trace, xmi, report)
    metrics, _, gen, truth = evaluate(report.model, reference, m, report)
    return TaskResult(
        task.name,
        valid=valid,
        attempts=attempts,
        metrics=metrics,
        compile_errors=len(report.errors),
        ambiguous=gen.ambiguous or truth.ambiguous,
        note=note,
    )


def run_benchmark(
    dataset_dir,
    config: Optional[LlmConfig] = None,
    *,
    examples: Sequence[FewShotExample] = (),
    complete: Optional[TaskCompleter] = None,
    out_dir=None,
    jobs: int = 1,
) -> BatchReport:
    """Evaluate every task under `dataset_dir`.

    With a config (or a `complete` stand-in for the endpoint) each task is
    generated from its spec; otherwise pre-generated ``generated.cim.json``
    or ``generated.xmi`` files are evaluated. Writes ``report.json``,
    ``tasks.csv`` and per-task artifacts when `out_dir` is given.
    """
    tasks = discover_tasks(dataset_dir)
    out = Path(out_dir) if out_dir is not None else None

    def one(task: Path) -> TaskResult:
        return run_task(task, config, examples, complete, out)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, tasks))
    else:
        results = [one(t) for t in tasks]
    batch = BatchReport(results)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(batch.to_json(), encoding="utf-8")
        (out / "tasks.csv").write_text(batch.to_csv(), encoding="utf-8")
    return batch


class ReplayCompleter:
    """Serves canned responses from ``<dir>/<task>.txt``.

    Successive attempts read ``<task>.2.txt``, ``<task>.3.txt`` ... when
    present, falling back to the last available file.
    """

    def __init__(self, directory) -> None:
        self.directory = Path(directory)

    def __call__(self, task: str, messages: Messages) -> str:
        attempt = 1 + sum(1 for msg in messages if msg["role"] == "assistant")
        for n in range(attempt, 0, -1):
            path = self.directory / (f"{task}.txt" if n == 1 else f"{task}.{n}.txt")
            if path.is_file():
                return path.read_text(encoding="utf-8")
        raise DatasetLayoutError(f"no canned response for task {task!r} in {self.directory}")
