"""Detect library misuse in Solidity contracts."""

__version__ = "0.1.0"

from .evaluation import (  # noqa: E402
    EvalReport,
    LabeledContract,
    accuracy,
    classify_outcome,
    evaluate_channel,
    load_manifest,
    macro_metrics,
    stratified_sample,
)
from .forest import Forest, ForestConfig, TrainingSample, fit_forest, fit_tree, gini, predict  # noqa: E402
from .kb import PatternLabel, PatternRecord, decode_label, encode_label, load_kb  # noqa: E402
from .llm import (  # noqa: E402
    LlmVerdict,
    ReplayBackend,
    ScriptedBackend,
    generate_feedback_prompt,
    generate_initial_prompt,
    parse_structured_response,
    query_majority,
    run_feedback_loop,
)
from .rules import AnalysisMode, Finding, StaticVerdict, static_verdict  # noqa: E402
from .similarity import SnippetMatcher, match, tokenize  # noqa: E402
from .solidity import SourceUnit, call_sites, parse, parse_file, pragma_allows  # noqa: E402

__all__ = [
    "AnalysisMode", "EvalReport", "Finding", "Forest", "ForestConfig", "LabeledContract",
    "LlmVerdict", "PatternLabel", "PatternRecord", "ReplayBackend", "ScriptedBackend",
    "SnippetMatcher", "SourceUnit", "StaticVerdict", "TrainingSample", "accuracy",
    "call_sites", "classify_outcome", "decode_label", "encode_label", "evaluate_channel",
    "fit_forest", "fit_tree", "generate_feedback_prompt", "generate_initial_prompt", "gini",
    "load_kb", "load_manifest", "macro_metrics", "match", "parse", "parse_file",
    "parse_structured_response", "pragma_allows", "predict", "query_majority",
    "run_feedback_loop", "static_verdict", "stratified_sample", "tokenize",
]
