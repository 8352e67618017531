"""Prompt assembly, chat-completion calls and the generate -> compile loop."""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import httpx

from .cim import (
    ConceptualInstanceModel,
    LinkSpec,
    ObjectSpec,
    cim_to_json,
    dump_cim,
    extract_json_payload,
    parse_cim,
)
from .compiler import CompileReport, InstanceModel, compile_cim, model_to_cim, render_value
from .diagnostics import Diagnostic
from .ecore import MetaModel, all_features, load_ecore
from .exceptions import (
    CimError,
    ConfigError,
    EmptyCompletion,
    GenerationFailed,
    HttpStatusError,
    LlmError,
    LlmTimeout,
    TransportError,
)
from .plantuml import render_plantuml
from .xmi import load_xmi

logger = logging.getLogger(__name__)

Messages = list[dict[str, str]]
Completer = Callable[[Messages], str]

CIM_TEMPLATE = """\
{
 "<InstanceID>": {
  "type": "<ClassName>",
  "attributes": [
   {
    "dataType": "<DataType>",
    "attributeName": "<AttributeName>",
    "value": "<Value>"
   }
  ],
  "associations": {
   "compositions": [
    {
     "associationName": "<AssociationName>",
     "associatedClassName": "<ClassName>",
     "instanceID": "<InstanceID>"
    }
   ],
   "references": [
    {
     "associationName": "<AssociationName>",
     "associatedClassName": "<ClassName>",
     "instanceID": "<InstanceID>"
    }
   ]
  }
 }
}"""

SYSTEM_TEMPLATE = """\
You are given a meta-model, which defines ONLY the allowed classes, attributes, and associations. \
Additionally, you are provided with a scenario description, which explicitly specifies the valid instances \
and relationships. Your task is to generate a Conceptual Instance Model by structuring the information from \
the scenario description strictly according to the provided meta-model and Json template.

### STRICT RULES
- DO NOT infer missing details.
- ONLY include what is explicitly provided in the scenario.
- ONLY include what is explicitly provided in the meta model.
- DO NOT create objects from abstract class.

### Output Json Format - Conceptual Instance Model (STRICT TEMPLATE)
{{Template of conceptual instance model}}
"""

FEW_SHOT_HEADER = """
### Few-shot Examples
You are provided with the following few-shot examples to help you understand the task.
"""

EXAMPLE_TEMPLATE = """
#### Example
Meta-model information:
{{textual meta-model information}}

Scenario description:
{{textual specifications}}

Generated Conceptual Instance Model:
{{conceptual instance model example}}
"""

USER_TEMPLATE = """\
#### Please generate the Conceptual Instance Model follow the template
Meta-model information:
{{Meta-model}}

Scenario description:
{{Scenario description}}

Generated Conceptual Instance Model:
"""

RETRY_MESSAGE = (
    "Your previous output was not a single valid JSON object conforming to the template. "
    "Error: {code}. Output only the JSON object."
)
COMPILE_RETRY_MESSAGE = (
    "Your previous output did not conform to the meta-model. Problems: {codes}. "
    "Output only the corrected JSON object."
)

_SLOT = re.compile(r"\{\{([^{}]+)\}\}")


def _fill(template: str, values: dict[str, str]) -> str:
    # single pass, so braces inside substituted text are never re-expanded
    return _SLOT.sub(lambda mt: values.get(mt.group(1), mt.group(0)), template)


@dataclass(frozen=True)
class FewShotExample:
    metamodel_text: str
    spec_text: str
    cim_text: str


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    user_text: str

    def messages(self) -> Messages:
        return [
            {"role": "system", "content": self.system_text},
            {"role": "user", "content": self.user_text},
        ]


def build_prompt(
    metamodel_puml: str,
    spec: str,
    examples: Sequence[FewShotExample] = (),
    template: str = CIM_TEMPLATE,
) -> PromptBundle:
    system = _fill(SYSTEM_TEMPLATE, {"Template of conceptual instance model": template.rstrip("\n")})
    if examples:
        system += FEW_SHOT_HEADER
        for ex in examples:
            system += _fill(EXAMPLE_TEMPLATE, {
                "textual meta-model information": ex.metamodel_text.rstrip("\n"),
                "textual specifications": ex.spec_text.rstrip("\n"),
                "conceptual instance model example": ex.cim_text.rstrip("\n"),
            })
    user = _fill(USER_TEMPLATE, {"Meta-model": metamodel_puml.rstrip("\n"), "Scenario description": spec.rstrip("\n")})
    return PromptBundle(system, user)


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class LlmConfig:
    endpoint_base_url: str
    model_name: str
    temperature: float = 0.0
    max_output_tokens: int = 4096
    # name of the environment variable holding the key, never the key itself
    api_key_env_var: Optional[str] = "OPENAI_API_KEY"
    max_retries: int = 2
    timeout_seconds: float = 120.0
    omit_temperature: bool = False
    retry_on_compile_errors: bool = False

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise ConfigError("maxOutputTokens must be positive")
        if self.max_retries < 0:
            raise ConfigError("maxRetries must be >= 0")
        if self.timeout_seconds <= 0:
            raise ConfigError("timeoutSeconds must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "LlmConfig":
        if any(k.lower() in ("apikey", "api_key", "key", "token") for k in data):
            raise ConfigError("put the API key in an environment variable and name it with apiKeyEnvVar")
        names = {_camel(f.name): f.name for f in fields(cls)}
        unknown = set(data) - set(names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            return cls(**{names[k]: v for k, v in data.items()})
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {_camel(f.name): getattr(self, f.name) for f in fields(self)}


def _camel(name: str) -> str:
    head, *rest = name.split("_")
    return head + "".join(p.capitalize() for p in rest)


def load_config(path) -> LlmConfig:
    with open(path, encoding="utf-8") as fp:
        try:
            data = json.load(fp)
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return LlmConfig.from_dict(data)


# -- HTTP --------------------------------------------------------------------


def _endpoint(base: str) -> str:
    base = base.rstrip("/")
    return base if base.endswith("/chat/completions") else base + "/chat/completions"


def chat_messages(config: LlmConfig, messages: Messages, client: Optional[httpx.Client] = None) -> str:
    """POST a chat-completion request and return the assistant text."""
    payload: dict[str, Any] = {
        "model": config.model_name,
        "messages": messages,
        "max_tokens": config.max_output_tokens,
    }
    if not config.omit_temperature:
        payload["temperature"] = config.temperature
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(config.api_key_env_var) if config.api_key_env_var else None
    if key:
        headers["Authorization"] = f"Bearer {key}"

    own = client is None
    client = client or httpx.Client(timeout=config.timeout_seconds)
    try:
        resp = client.post(_endpoint(config.endpoint_base_url), json=payload, headers=headers,
                           timeout=config.timeout_seconds)
    except httpx.TimeoutException as exc:
        raise LlmTimeout(f"no answer within {config.timeout_seconds}s") from exc
    except httpx.HTTPError as exc:
        raise TransportError(str(exc)) from exc
    finally:
        if own:
            client.close()
    if resp.status_code >= 400:
        raise HttpStatusError(resp.status_code, resp.text)
    try:
        data = resp.json()
    except ValueError as exc:
        raise TransportError(f"response is not JSON: {resp.text[:200]!r}") from exc
    choices = data.get("choices") if isinstance(data, dict) else None
    if not choices:
        raise EmptyCompletion("response has no choices")
    content = (choices[0].get("message") or {}).get("content")
    if isinstance(content, list):
        content = "".join(part.get("text", "") for part in content if isinstance(part, dict))
    if not content:
        raise EmptyCompletion("assistant message is empty")
    return content


def chat_complete(config: LlmConfig, bundle: PromptBundle, client: Optional[httpx.Client] = None) -> str:
    return chat_messages(config, bundle.messages(), client)


# -- generation loop ---------------------------------------------------------


@dataclass
class GenerationTrace:
    prompt: PromptBundle
    raw_responses: list[str] = field(default_factory=list)
    attempts: int = 0
    # failure code per rejected attempt, e.g. "NoJsonFound"
    failures: list[str] = field(default_factory=list)
    final_cim: Optional[ConceptualInstanceModel] = None
    parse_diagnostics: list[Diagnostic] = field(default_factory=list)
    report: Optional[CompileReport] = None
    error: Optional[str] = None

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "prompt": {"system": self.prompt.system_text, "user": self.prompt.user_text},
            "attempts": self.attempts,
            "rawResponses": self.raw_responses,
            "failures": self.failures,
            "finalCim": cim_to_json(self.final_cim) if self.final_cim is not None else None,
            "parseDiagnostics": [d.to_dict() for d in self.parse_diagnostics],
            "error": self.error,
        }
        if self.report is not None:
            out["compileDiagnostics"] = [d.to_dict() for d in self.report.diagnostics]
            out["elementCounts"] = {
                k: {"accepted": c.accepted, "attempted": c.attempted} for k, c in self.report.counts.items()
            }
        return out


def generate_instance_model(
    m: MetaModel,
    spec: str,
    examples: Sequence[FewShotExample],
    config: LlmConfig,
    complete: Optional[Completer] = None,
) -> GenerationTrace:
    """Prompt the model for a CIM and compile it.

    Unparseable answers are retried up to ``config.max_retries`` times with a
    corrective follow-up message. Raises GenerationFailed (carrying the trace)
    when every attempt failed or the endpoint errored.
    """
    bundle = build_prompt(render_plantuml(m), spec, examples)
    if complete is None:
        def complete(msgs: Messages) -> str:
            return chat_messages(config, msgs)

    trace = GenerationTrace(bundle)
    messages = bundle.messages()
    for attempt in range(config.max_retries + 1):
        try:
            raw = complete(list(messages))
        except LlmError as exc:
            trace.error = f"{type(exc).__name__}: {exc}"
            raise GenerationFailed(trace.error, trace) from exc
        trace.attempts += 1
        trace.raw_responses.append(raw)
        try:
            cim, diags = parse_cim(extract_json_payload(raw))
        except CimError as exc:
            logger.info("attempt %d rejected: %s", attempt + 1, exc.code)
            trace.failures.append(exc.code)
            messages += [
                {"role": "assistant", "content": raw},
                {"role": "user", "content": RETRY_MESSAGE.format(code=exc.code)},
            ]
            continue
        report = compile_cim(m, cim)
        trace.final_cim, trace.parse_diagnostics, trace.report = cim, diags, report
        if config.retry_on_compile_errors and report.errors and attempt < config.max_retries:
            codes = sorted({d.code.value for d in report.errors})
            trace.failures.append("CompileErrors")
            messages += [
                {"role": "assistant", "content": raw},
                {"role": "user", "content": COMPILE_RETRY_MESSAGE.format(codes=", ".join(codes))},
            ]
            continue
        return trace
    trace.error = f"no usable model after {trace.attempts} attempt(s)"
    raise GenerationFailed(trace.error, trace)


# -- few-shot examples -------------------------------------------------------

_ID_CHARS = re.compile(r"[^A-Za-z0-9_]+")


def readable_cim(model: InstanceModel, m: MetaModel) -> ConceptualInstanceModel:
    """model_to_cim with instance ids taken from object names where possible."""
    cim = model_to_cim(model, m)
    used: set[str] = set()
    counters: dict[str, int] = {}
    mapping: dict[str, str] = {}
    for obj in model.document_order(m):
        eclass = m.eclass(obj.eclass)
        base = ""
        for a in all_features(eclass, m)[0]:
            if a.name in ("name", "id", "label") and obj.attr_values.get(a.name):
                base = _ID_CHARS.sub("_", render_value(obj.attr_values[a.name][0])).strip("_")
                break
        if not base or base in used:
            n = counters.get(eclass.name, 0)
            while f"{eclass.name.lower()}{n}" in used:
                n += 1
            counters[eclass.name] = n + 1
            base = f"{eclass.name.lower()}{n}"
        used.add(base)
        mapping[obj.id] = base

    def relink(links):
        return tuple(LinkSpec(k.association_name, mapping[k.target_id], k.associated_class_name) for k in links)

    return ConceptualInstanceModel({
        mapping[iid]: ObjectSpec(s.type, s.attributes, relink(s.compositions), relink(s.references))
        for iid, s in cim.objects.items()
    })


def load_example(directory) -> FewShotExample:
    """Read one example directory.

    It holds ``metamodel.ecore``, ``spec.txt`` and either ``example.cim.json``
    or ``reference.xmi`` (converted to a CIM).
    """
    d = Path(directory)
    m = load_ecore(d / "metamodel.ecore")
    spec = (d / "spec.txt").read_text(encoding="utf-8")
    if (d / "example.cim.json").exists():
        cim_text = (d / "example.cim.json").read_text(encoding="utf-8")
        cim, _ = parse_cim(cim_text)
    else:
        cim = readable_cim(load_xmi(d / "reference.xmi", m), m)
        cim_text = dump_cim(cim)
    report = compile_cim(m, cim)
    if report.errors:
        raise ValueError(f"few-shot example {d.name}: CIM does not compile cleanly: {report.errors[0]}")
    return FewShotExample(render_plantuml(m), spec, cim_text)


def load_examples(directory) -> list[FewShotExample]:
    subdirs = sorted(p for p in Path(directory).iterdir() if p.is_dir())
    return [load_example(p) for p in subdirs]
