"""Transcript files: one JSON record per line, first line holds the header.

    {"record": "conversation", "reasoning_level": "...", "tool_schemas": [...]}
    {"record": "message", "role": "...", "channel": ..., "recipient": ...,
     "content_kind": "...", "content": "..."}

Loading re-runs full validation, so a transcript that loads is a valid
conversation.
"""

from __future__ import annotations

import json

from .messages import (
    CHANNELS_BY_WIRE,
    ROLES_BY_WIRE,
    ContentKind,
    Conversation,
    Message,
    ToolParam,
    ToolSchema,
    ValidationError,
)


class TranscriptError(ValueError):
    """Transcript file is structurally invalid."""


def schema_to_dict(s: ToolSchema) -> dict:
    return {
        "name": s.name,
        "description": s.description,
        "parameters": [
            {"name": p.name, "type": p.type_tag, "required": p.required} for p in s.parameters
        ],
    }


def schema_from_dict(data: dict) -> ToolSchema:
    return ToolSchema(
        name=data["name"],
        description=data.get("description", ""),
        parameters=tuple(
            ToolParam(name=p["name"], type_tag=p["type"], required=p["required"])
            for p in data.get("parameters", [])
        ),
    )


def message_to_dict(m: Message) -> dict:
    return {
        "record": "message",
        "role": m.role.wire,
        "channel": m.channel.wire if m.channel else None,
        "recipient": m.recipient,
        "content_kind": m.content_kind.value,
        "content": m.content,
    }


def message_from_dict(data: dict) -> Message:
    role = ROLES_BY_WIRE.get(data.get("role"))
    if role is None:
        raise TranscriptError(f"unknown role {data.get('role')!r}")
    channel = data.get("channel")
    if channel is not None:
        channel = CHANNELS_BY_WIRE.get(channel)
        if channel is None:
            raise TranscriptError(f"unknown channel {data.get('channel')!r}")
    try:
        kind = ContentKind(data.get("content_kind", "text"))
    except ValueError as exc:
        raise TranscriptError(str(exc)) from exc
    return Message(
        role=role,
        channel=channel,
        recipient=data.get("recipient"),
        content_kind=kind,
        content=data.get("content", ""),
    )


def dumps_conversation(conv: Conversation) -> str:
    lines = [
        json.dumps(
            {
                "record": "conversation",
                "reasoning_level": conv.reasoning_level,
                "tool_schemas": [schema_to_dict(s) for s in conv.tool_schemas],
            },
            sort_keys=True,
        )
    ]
    lines += [json.dumps(message_to_dict(m), sort_keys=True) for m in conv.messages]
    return "\n".join(lines) + "\n"


def loads_conversation(text: str) -> Conversation:
    lines = [ln for ln in text.split("\n") if ln.strip()]
    if not lines:
        raise TranscriptError("empty transcript")
    try:
        records = [json.loads(ln) for ln in lines]
    except json.JSONDecodeError as exc:
        raise TranscriptError(f"line {exc.lineno}: not valid JSON: {exc.msg}") from exc
    head = records[0]
    if head.get("record") != "conversation":
        raise TranscriptError("first record must be the conversation header")
    messages = []
    for i, rec in enumerate(records[1:], start=2):
        if rec.get("record") != "message":
            raise TranscriptError(f"line {i}: expected a message record")
        try:
            messages.append(message_from_dict(rec))
        except ValidationError as exc:
            raise TranscriptError(f"line {i}: {exc}") from exc
    try:
        return Conversation(
            messages=tuple(messages),
            reasoning_level=head.get("reasoning_level", "medium"),
            tool_schemas=tuple(schema_from_dict(s) for s in head.get("tool_schemas", [])),
        )
    except ValidationError as exc:
        raise TranscriptError(str(exc)) from exc


def save_conversation(conv: Conversation, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_conversation(conv))


def load_conversation(path) -> Conversation:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_conversation(fh.read())
