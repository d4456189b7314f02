"""Deterministic rendering to, and parsing of, the delimited chat stream.

Frame grammar (terminators: `<|end|>` normally, `<|call|>` for tool
calls, `<|return|>` when the model closes its final message):

    <|start|>{role}[ to={recipient}][<|channel|>{channel}]<|message|>{content}{terminator}

A rendered conversation always begins with a system frame whose body
ends with the line `Reasoning: {level}`, embeds tool schemas into the
first developer frame behind a `<|tools|>` marker, omits analysis
messages from completed assistant turns, and ends with the generation
cue `<|start|>assistant`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .lexicon import (
    CALL,
    CHANNEL,
    END,
    MESSAGE,
    REASONING_PREFIX,
    RECIPIENT_MARK,
    RETURN,
    SPECIAL_TOKENS,
    START,
    TOOLS,
)
from .messages import (
    CHANNELS_BY_WIRE,
    REASONING_LEVELS,
    ROLES_BY_WIRE,
    Channel,
    ContentKind,
    Conversation,
    Message,
    Role,
    ToolParam,
    ToolSchema,
    ValidationError,
    strip_prior_cot,
)


class ParseError(ValueError):
    """The stream violates the frame grammar."""

    def __init__(self, detail: str, offset: int):
        self.offset = offset
        super().__init__(f"at byte {offset}: {detail}")


GENERATION_CUE = START + Role.ASSISTANT.wire


def render_tool_schema(schema: ToolSchema) -> str:
    """Canonical single block: name line, description line, one line per parameter."""
    lines = [f"tool {schema.name}", f"description: {schema.description}"]
    for p in schema.parameters:
        lines.append(f"param {p.name}: {p.type_tag} {'required' if p.required else 'optional'}")
    return "\n".join(lines)


def render_tool_result(name: str, payload: str) -> Message:
    """Wrap a tool's output as the Tool-role message fed back to the assistant."""
    if not name:
        raise ValidationError("tool result needs the originating tool's name")
    return Message(role=Role.TOOL, content=payload, content_kind=ContentKind.TOOL_RESULT)


def _frame(role: Role, body: str, channel: Channel | None = None, recipient: str | None = None,
           terminator: str = END) -> str:
    header = role.wire
    if recipient is not None:
        header += RECIPIENT_MARK + recipient
    channel_part = CHANNEL + channel.wire if channel is not None else ""
    return START + header + channel_part + MESSAGE + body + terminator


def render_message(msg: Message) -> str:
    terminator = CALL if msg.content_kind is ContentKind.TOOL_CALL_ARGS else END
    return _frame(msg.role, msg.content, msg.channel, msg.recipient, terminator)


def render_conversation(conv: Conversation, generation_cue: bool = True) -> str:
    """Render the full prompt stream; identical conversations give identical bytes."""
    conv = strip_prior_cot(conv)
    parts = []
    remaining = list(conv.messages)

    sys_msg = conv.system_message()
    level_line = REASONING_PREFIX + conv.reasoning_level
    if sys_msg is not None:
        remaining.pop(0)
        body = sys_msg.content + "\n" + level_line
    else:
        body = level_line
    parts.append(_frame(Role.SYSTEM, body))

    schema_text = "\n".join(render_tool_schema(s) for s in conv.tool_schemas)
    tools_pending = bool(conv.tool_schemas)
    if tools_pending and not any(m.role is Role.DEVELOPER for m in remaining):
        parts.append(_frame(Role.DEVELOPER, TOOLS + schema_text))
        tools_pending = False
    for msg in remaining:
        if msg.role is Role.DEVELOPER and tools_pending:
            parts.append(_frame(Role.DEVELOPER, msg.content + "\n" + TOOLS + schema_text))
            tools_pending = False
        else:
            parts.append(render_message(msg))
    if generation_cue:
        parts.append(GENERATION_CUE)
    return "".join(parts)


@dataclass(frozen=True)
class PartialSegment:
    """An unterminated trailing segment, kept for streaming consumers."""

    channel: Channel | None
    recipient: str | None
    content: str
    reached_content: bool  # the <|message|> marker was seen


@dataclass(frozen=True)
class ParsedOutput:
    messages: tuple
    partial: PartialSegment | None


_LEX_RE = re.compile("|".join(re.escape(t) for t in SPECIAL_TOKENS))


def _lex(stream: str):
    """Yield (kind, text, offset) where kind is a special token or "text"."""
    pos = 0
    for m in _LEX_RE.finditer(stream):
        if m.start() > pos:
            yield "text", stream[pos : m.start()], pos
        yield m.group(0), m.group(0), m.start()
        pos = m.end()
    if pos < len(stream):
        yield "text", stream[pos:], pos


def _split_header(header: str, offset: int, implicit_role: Role | None = None):
    """Header text -> (role, recipient). Implicit role covers the first model segment."""
    if implicit_role is not None:
        if header == "":
            return implicit_role, None
        if header.startswith(RECIPIENT_MARK):
            return implicit_role, header[len(RECIPIENT_MARK) :]
        raise ParseError(f"unexpected text {header!r} before the channel tag", offset)
    if RECIPIENT_MARK in header:
        role_text, recipient = header.split(RECIPIENT_MARK, 1)
    else:
        role_text, recipient = header, None
    role = ROLES_BY_WIRE.get(role_text)
    if role is None:
        raise ParseError(f"unknown role {role_text!r}", offset)
    return role, recipient


def _parse_channel(name: str, offset: int) -> Channel:
    channel = CHANNELS_BY_WIRE.get(name)
    if channel is None:
        raise ParseError(f"unknown channel name {name!r}", offset)
    return channel


class _SegmentReader:
    """Walk lexed items into raw frames; shared by both parsers."""

    def __init__(self, stream: str):
        self.items = list(_lex(stream))
        self.i = 0
        self.end_offset = len(stream)

    def done(self) -> bool:
        return self.i >= len(self.items)

    def peek(self):
        return self.items[self.i]

    def take(self):
        item = self.items[self.i]
        self.i += 1
        return item

    def take_text(self) -> tuple:
        """Consume one optional text item; returns (text, offset_of_next)."""
        if not self.done() and self.peek()[0] == "text":
            _, text, off = self.take()
            return text, off
        off = self.peek()[2] if not self.done() else self.end_offset
        return "", off

    def read_segment(self, implicit_role: Role | None):
        """One frame -> dict, or a PartialSegment at end of stream, or None on the cue.

        Grammar violations raise ParseError mid-stream; an incomplete
        tail at end of stream is always a partial, never an error.
        """
        if implicit_role is None:
            kind, _, off = self.take()
            if kind != START:
                raise ParseError(f"expected {START}, found {kind!r}", off)
            header, hoff = self.take_text()
            if self.done():
                try:
                    role, recipient = _split_header(header, hoff) if header else (None, None)
                except ParseError:
                    role, recipient = None, None  # half-written header
                if role is Role.ASSISTANT and recipient is None:
                    return None  # bare generation cue
                return PartialSegment(None, recipient, "", False)
            role, recipient = _split_header(header, hoff)
        else:
            header, hoff = self.take_text()
            if self.done():
                try:
                    _, recipient = _split_header(header, hoff, implicit_role=implicit_role)
                except ParseError:
                    recipient = None
                return PartialSegment(None, recipient, "", False)
            role, recipient = _split_header(header, hoff, implicit_role=implicit_role)

        channel = None
        kind, _, off = self.take()
        if kind == CHANNEL:
            name, noff = self.take_text()
            if self.done():
                return PartialSegment(None, recipient, "", False)  # channel name may be cut short
            channel = _parse_channel(name, noff)
            kind, _, off = self.take()
        if kind != MESSAGE:
            raise ParseError(f"expected {MESSAGE}, found {kind!r}", off)
        # The body runs to the frame terminator; the tools marker is a
        # body-level separator (developer frames), not a frame delimiter.
        pieces = []
        while not self.done() and self.peek()[0] in ("text", TOOLS):
            pieces.append(self.take()[1])
        content = "".join(pieces)
        if self.done():
            return PartialSegment(channel, recipient, content, True)
        kind, _, off = self.take()
        if kind not in (END, CALL, RETURN):
            raise ParseError(f"expected a frame terminator, found {kind!r}", off)
        return {
            "role": role,
            "recipient": recipient,
            "channel": channel,
            "content": content,
            "terminator": kind,
            "offset": off,
        }


def parse_model_output(stream: str) -> ParsedOutput:
    """Split generated text into channel-tagged assistant messages.

    The first segment may omit its `<|start|>assistant` header (the
    prompt's generation cue already provided it). A `<|call|>` terminator
    yields a tool_call_args message and requires a recipient. A trailing
    segment without a terminator comes back as `partial`, not an error.
    """
    reader = _SegmentReader(stream)
    messages = []
    partial = None
    first = True
    while not reader.done():
        implicit = first and reader.peek()[0] != START
        seg = reader.read_segment(Role.ASSISTANT if implicit else None)
        first = False
        if seg is None:
            break
        if isinstance(seg, PartialSegment):
            partial = seg
            break
        if seg["role"] is not Role.ASSISTANT:
            raise ParseError(
                f"model output may only carry assistant frames, got {seg['role'].wire!r}",
                seg["offset"],
            )
        if seg["channel"] is None:
            raise ParseError("assistant segment lacks a channel tag", seg["offset"])
        is_call = seg["terminator"] == CALL
        if is_call and seg["recipient"] is None:
            raise ParseError("tool call lacks a to= recipient", seg["offset"])
        if not is_call and seg["recipient"] is not None:
            raise ParseError("recipient given but the segment is not a tool call", seg["offset"])
        try:
            messages.append(
                Message(
                    role=Role.ASSISTANT,
                    channel=seg["channel"],
                    recipient=seg["recipient"] if is_call else None,
                    content=seg["content"],
                    content_kind=ContentKind.TOOL_CALL_ARGS if is_call else ContentKind.TEXT,
                )
            )
        except ValidationError as exc:
            raise ParseError(str(exc), seg["offset"]) from exc
    return ParsedOutput(messages=tuple(messages), partial=partial)


def parse_tool_schemas(text: str, offset: int = 0) -> tuple:
    """Inverse of render_tool_schema over a concatenated block list."""
    schemas = []
    name = None
    description = ""
    params = []

    def flush():
        nonlocal name, description, params
        if name is not None:
            schemas.append(ToolSchema(name=name, description=description, parameters=tuple(params)))
        name, description, params = None, "", []

    for line in text.split("\n") if text else []:
        if line.startswith("tool "):
            flush()
            name = line[len("tool ") :]
        elif line.startswith("description:"):
            if name is None:
                raise ParseError("description line outside a tool block", offset)
            description = line[len("description:") :].removeprefix(" ")
        elif line.startswith("param "):
            if name is None:
                raise ParseError("param line outside a tool block", offset)
            m = re.match(r"^param ([A-Za-z_][A-Za-z0-9_]*): (\w+) (required|optional)$", line)
            if m is None:
                raise ParseError(f"malformed parameter line {line!r}", offset)
            params.append(ToolParam(name=m.group(1), type_tag=m.group(2), required=m.group(3) == "required"))
        elif line == "":
            continue
        else:
            raise ParseError(f"unrecognized schema line {line!r}", offset)
    flush()
    return tuple(schemas)


def parse_system_body(body: str, offset: int = 0) -> tuple:
    """System frame body -> (content or None, reasoning level)."""
    if "\n" in body:
        content, last = body.rsplit("\n", 1)
        has_content = True
    else:
        content, last = None, body
        has_content = False
    if not last.startswith(REASONING_PREFIX):
        raise ParseError("system frame must end with the reasoning line", offset)
    level = last[len(REASONING_PREFIX) :]
    if level not in REASONING_LEVELS:
        raise ParseError(f"unknown reasoning level {level!r}", offset)
    return (content if has_content else None), level


def parse_conversation(stream: str) -> Conversation:
    """Inverse of render_conversation (up to the prior-CoT strip it applies)."""
    reader = _SegmentReader(stream)
    messages = []
    reasoning_level = None
    tool_schemas = ()
    saw_tools = False
    index = 0
    while not reader.done():
        seg = reader.read_segment(None)
        if seg is None:
            if not reader.done():
                raise ParseError("content after the generation cue", reader.end_offset)
            break
        if isinstance(seg, PartialSegment):
            raise ParseError("conversation stream ends mid-frame", reader.end_offset)
        role, content, off = seg["role"], seg["content"], seg["offset"]
        if index == 0:
            if role is not Role.SYSTEM:
                raise ParseError("conversation must open with the system frame", off)
            sys_content, reasoning_level = parse_system_body(content, off)
            if sys_content is not None:
                messages.append(Message(role=Role.SYSTEM, content=sys_content))
            index += 1
            continue
        if role is Role.SYSTEM:
            raise ParseError("second system frame", off)
        if role is Role.DEVELOPER and TOOLS in content:
            if saw_tools:
                raise ParseError("second tools section", off)
            saw_tools = True
            before, schema_text = content.split(TOOLS, 1)
            tool_schemas = parse_tool_schemas(schema_text, off)
            if before == "":
                index += 1
                continue  # synthesized carrier frame
            if not before.endswith("\n"):
                raise ParseError("developer content and tools section are newline-separated", off)
            content = before[:-1]
        try:
            if seg["terminator"] == CALL:
                msg = Message(
                    role=role,
                    channel=seg["channel"],
                    recipient=seg["recipient"],
                    content=content,
                    content_kind=ContentKind.TOOL_CALL_ARGS,
                )
            elif role is Role.TOOL:
                msg = Message(role=role, content=content, content_kind=ContentKind.TOOL_RESULT)
            else:
                msg = Message(role=role, channel=seg["channel"], content=content)
        except ValidationError as exc:
            raise ParseError(str(exc), off) from exc
        messages.append(msg)
        index += 1
    if reasoning_level is None:
        raise ParseError("stream holds no system frame", 0)
    return Conversation(
        messages=tuple(messages), reasoning_level=reasoning_level, tool_schemas=tool_schemas
    )
