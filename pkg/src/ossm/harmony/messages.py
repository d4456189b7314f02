"""Message, conversation, and tool-schema types with their invariants.

Roles form a strict authority order (System over Developer over User over
Assistant over Tool) used to resolve conflicting instructions. Assistant
messages carry exactly one visibility channel: analysis for raw
reasoning, commentary for tool calls and action preambles, final for
user-facing answers. All values are immutable; helpers return fresh
objects.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace

from .lexicon import SPECIAL_TOKENS


class ValidationError(ValueError):
    """A message or conversation violates a structural invariant."""

    def __init__(self, detail: str, message_index: int | None = None):
        self.message_index = message_index
        where = f"message {message_index}: " if message_index is not None else ""
        super().__init__(f"{where}{detail}")


class Role(enum.Enum):
    SYSTEM = "system"
    DEVELOPER = "developer"
    USER = "user"
    ASSISTANT = "assistant"
    TOOL = "tool"

    @property
    def rank(self) -> int:
        return _RANK[self]

    @property
    def wire(self) -> str:
        return self.value


_RANK = {Role.SYSTEM: 4, Role.DEVELOPER: 3, Role.USER: 2, Role.ASSISTANT: 1, Role.TOOL: 0}

ROLES_BY_WIRE = {r.value: r for r in Role}


class Channel(enum.Enum):
    ANALYSIS = "analysis"
    COMMENTARY = "commentary"
    FINAL = "final"

    @property
    def wire(self) -> str:
        return self.value


CHANNELS_BY_WIRE = {c.value: c for c in Channel}

REASONING_LEVELS = ("low", "medium", "high")


class ContentKind(enum.Enum):
    TEXT = "text"
    TOOL_CALL_ARGS = "tool_call_args"
    TOOL_RESULT = "tool_result"


_RECIPIENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")
_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def _reject_special_tokens(text: str, what: str) -> None:
    for tok in SPECIAL_TOKENS:
        if tok in text:
            raise ValidationError(f"{what} may not contain the reserved delimiter {tok!r}")


@dataclass(frozen=True)
class Message:
    role: Role
    content: str
    channel: Channel | None = None
    recipient: str | None = None
    content_kind: ContentKind = ContentKind.TEXT

    def __post_init__(self):
        if not isinstance(self.content, str):
            raise ValidationError("content must be text")
        _reject_special_tokens(self.content, "content")
        if self.role is Role.ASSISTANT:
            if self.channel is None:
                raise ValidationError("assistant messages carry exactly one channel")
        elif self.channel is not None:
            raise ValidationError(f"{self.role.wire} messages carry no channel")
        if (self.recipient is not None) != (self.content_kind is ContentKind.TOOL_CALL_ARGS):
            raise ValidationError("recipient is present exactly on tool_call_args messages")
        if self.recipient is not None and not _RECIPIENT_RE.match(self.recipient):
            raise ValidationError(f"invalid tool recipient {self.recipient!r}")
        if self.content_kind is ContentKind.TOOL_CALL_ARGS:
            if self.role is not Role.ASSISTANT:
                raise ValidationError("tool calls are assistant messages")
            if self.channel is not Channel.COMMENTARY:
                raise ValidationError("tool calls live on the commentary channel")
        if (self.content_kind is ContentKind.TOOL_RESULT) != (self.role is Role.TOOL):
            raise ValidationError("tool_result is the kind of Tool-role messages, and only theirs")

    def is_analysis(self) -> bool:
        return self.role is Role.ASSISTANT and self.channel is Channel.ANALYSIS


@dataclass(frozen=True)
class ToolParam:
    name: str
    type_tag: str
    required: bool = True

    def __post_init__(self):
        if not _IDENT_RE.match(self.name):
            raise ValidationError(f"invalid parameter name {self.name!r}")
        if not _IDENT_RE.match(self.type_tag):
            raise ValidationError(f"invalid type tag {self.type_tag!r}")


@dataclass(frozen=True)
class ToolSchema:
    name: str
    description: str = ""
    parameters: tuple = ()

    def __post_init__(self):
        if not _RECIPIENT_RE.match(self.name):
            raise ValidationError(f"invalid tool name {self.name!r}")
        if "\n" in self.description:
            raise ValidationError("tool descriptions are single-line")
        _reject_special_tokens(self.description, "tool description")
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate parameter names in tool {self.name!r}")


@dataclass(frozen=True)
class Conversation:
    messages: tuple = ()
    reasoning_level: str = "medium"
    tool_schemas: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        object.__setattr__(self, "tool_schemas", tuple(self.tool_schemas))
        if self.reasoning_level not in REASONING_LEVELS:
            raise ValidationError(
                f"reasoning level must be one of {REASONING_LEVELS}, got {self.reasoning_level!r}"
            )
        for i, msg in enumerate(self.messages):
            if not isinstance(msg, Message):
                raise ValidationError("conversations hold Message values", message_index=i)
            if msg.role is Role.SYSTEM and i != 0:
                raise ValidationError("the system message must come first", message_index=i)
        names = [s.name for s in self.tool_schemas]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate tool names: {sorted(names)}")

    def with_message(self, *msgs: Message) -> "Conversation":
        return replace(self, messages=self.messages + tuple(msgs))

    def system_message(self) -> Message | None:
        if self.messages and self.messages[0].role is Role.SYSTEM:
            return self.messages[0]
        return None


def resolve_conflict(instructions) -> object:
    """Winning directive among (Role, directive) pairs.

    The highest-ranked role wins; among equal ranks the latest entry wins.
    """
    items = list(instructions)
    if not items:
        raise ValidationError("resolve_conflict needs at least one instruction")
    best = None
    best_key = None
    for position, (role, directive) in enumerate(items):
        key = (role.rank, position)
        if best_key is None or key > best_key:
            best, best_key = directive, key
    return best


def _current_turn_start(messages) -> int:
    """Index where the trailing in-progress assistant turn begins.

    The current turn is the maximal run of assistant/tool messages that
    reaches the end of the conversation; if the conversation ends with
    any other role there is no current turn and everything is prior.
    """
    i = len(messages)
    while i > 0 and messages[i - 1].role in (Role.ASSISTANT, Role.TOOL):
        i -= 1
    if i == len(messages):
        return len(messages)  # no trailing assistant run
    return i


def strip_prior_cot(conv: Conversation) -> Conversation:
    """Drop analysis messages from every assistant turn except the current one.

    Final and commentary messages are always retained, order is never
    changed, and applying the operation twice changes nothing more.
    """
    cutoff = _current_turn_start(conv.messages)
    kept = tuple(
        msg for i, msg in enumerate(conv.messages) if i >= cutoff or not msg.is_analysis()
    )
    if kept == conv.messages:
        return conv
    return replace(conv, messages=kept)
