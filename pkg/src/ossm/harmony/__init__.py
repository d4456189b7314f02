"""Role/channel chat protocol: messages, wire format, hierarchy rules."""

from .lexicon import (
    CALL,
    CHANNEL,
    END,
    MESSAGE,
    REASONING_PREFIX,
    RETURN,
    SPECIAL_TOKENS,
    START,
    TOOLS,
)
from .messages import (
    REASONING_LEVELS,
    Channel,
    ContentKind,
    Conversation,
    Message,
    Role,
    ToolParam,
    ToolSchema,
    ValidationError,
    resolve_conflict,
    strip_prior_cot,
)
from .serial import (
    TranscriptError,
    dumps_conversation,
    load_conversation,
    loads_conversation,
    save_conversation,
)
from .wire import (
    GENERATION_CUE,
    ParsedOutput,
    ParseError,
    PartialSegment,
    parse_conversation,
    parse_model_output,
    render_conversation,
    render_message,
    render_tool_result,
    render_tool_schema,
)

__all__ = [
    "CALL",
    "CHANNEL",
    "END",
    "GENERATION_CUE",
    "MESSAGE",
    "REASONING_LEVELS",
    "REASONING_PREFIX",
    "RETURN",
    "SPECIAL_TOKENS",
    "START",
    "TOOLS",
    "Channel",
    "ContentKind",
    "Conversation",
    "Message",
    "ParseError",
    "ParsedOutput",
    "PartialSegment",
    "Role",
    "ToolParam",
    "ToolSchema",
    "TranscriptError",
    "ValidationError",
    "dumps_conversation",
    "load_conversation",
    "loads_conversation",
    "parse_conversation",
    "parse_model_output",
    "render_conversation",
    "render_message",
    "render_tool_result",
    "render_tool_schema",
    "resolve_conflict",
    "save_conversation",
    "strip_prior_cot",
]
