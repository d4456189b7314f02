"""Decoding engine: tokenizer, sampler, tool dispatch, scripted stubs."""

from .scripted import ReasoningLengthScriptedModel, ScriptedModel
from .session import (
    GenerationResult,
    SamplerConfig,
    SamplerConfigError,
    Session,
    generate,
    sample_token,
)
from .tokenizer import ToyTokenizer
from .tools import (
    CORPUS,
    ToolError,
    ToolRegistry,
    builtin_registry,
    calc_tool,
    clock_tool,
    dispatch_tool_call,
    echo_tool,
    open_tool,
    search_tool,
)

__all__ = [
    "CORPUS",
    "GenerationResult",
    "ReasoningLengthScriptedModel",
    "SamplerConfig",
    "SamplerConfigError",
    "ScriptedModel",
    "Session",
    "ToolError",
    "ToolRegistry",
    "ToyTokenizer",
    "builtin_registry",
    "calc_tool",
    "clock_tool",
    "dispatch_tool_call",
    "echo_tool",
    "generate",
    "open_tool",
    "sample_token",
    "search_tool",
]
