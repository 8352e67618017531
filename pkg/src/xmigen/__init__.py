"""Generate XMI instance models from Ecore metamodels via a JSON conceptual
instance model produced by an LLM and compiled deterministically."""

__version__ = "0.1.0"

from .cim import ConceptualInstanceModel, dump_cim, extract_json_payload, parse_cim, validate_structure
from .compiler import CompileReport, InstanceModel, compile_cim, model_to_cim
from .ecore import MetaModel, all_features, is_instantiable, load_ecore, parse_ecore, resolve_classifier
from .evaluator import canonicalize, compute_metrics, evaluate, match_elements, run_benchmark
from .llm import LlmConfig, build_prompt, chat_complete, generate_instance_model
from .plantuml import render_plantuml
from .xmi import parse_xmi, serialize_xmi

__all__ = [
    "CompileReport",
    "ConceptualInstanceModel",
    "InstanceModel",
    "LlmConfig",
    "MetaModel",
    "all_features",
    "build_prompt",
    "canonicalize",
    "chat_complete",
    "compile_cim",
    "compute_metrics",
    "dump_cim",
    "evaluate",
    "extract_json_payload",
    "generate_instance_model",
    "is_instantiable",
    "load_ecore",
    "match_elements",
    "model_to_cim",
    "parse_cim",
    "parse_ecore",
    "parse_xmi",
    "render_plantuml",
    "resolve_classifier",
    "run_benchmark",
    "serialize_xmi",
    "validate_structure",
]
