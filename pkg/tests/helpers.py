"""Shared test fixtures: seeded random conversations and the golden transcript."""

import numpy as np

from ossm.harmony import (
    Channel,
    ContentKind,
    Conversation,
    Message,
    Role,
    ToolParam,
    ToolSchema,
)

WORDS = [
    "alpha", "bravo", "tide", "sum", "river", "quart", "nine", "lamp",
    "echo?", "42", "x=1", "ok.", "so,", "why", "(note)", "done!",
]


def random_text(rng: np.random.Generator, max_words: int = 6) -> str:
    n = int(rng.integers(1, max_words + 1))
    return " ".join(WORDS[int(i)] for i in rng.integers(0, len(WORDS), size=n))


def random_schema(rng: np.random.Generator, idx: int) -> ToolSchema:
    params = tuple(
        ToolParam(
            name=f"arg{j}",
            type_tag=str(rng.choice(["string", "number", "integer", "boolean"])),
            required=bool(rng.integers(0, 2)),
        )
        for j in range(int(rng.integers(0, 4)))
    )
    return ToolSchema(name=f"tool{idx}", description=random_text(rng), parameters=params)


def random_conversation(rng: np.random.Generator) -> Conversation:
    """A structurally valid conversation exercising every frame variant."""
    messages = []
    if rng.integers(0, 2):
        messages.append(Message(role=Role.SYSTEM, content=random_text(rng)))
    if rng.integers(0, 2):
        messages.append(Message(role=Role.DEVELOPER, content=random_text(rng)))
    schemas = tuple(random_schema(rng, i) for i in range(int(rng.integers(0, 3))))

    n_turns = int(rng.integers(1, 4))
    for _ in range(n_turns):
        messages.append(Message(role=Role.USER, content=random_text(rng)))
        if rng.integers(0, 2):
            messages.append(
                Message(role=Role.ASSISTANT, channel=Channel.ANALYSIS, content=random_text(rng))
            )
        if schemas.__len__() and rng.integers(0, 2):
            tool = schemas[int(rng.integers(0, len(schemas)))]
            messages.append(
                Message(
                    role=Role.ASSISTANT,
                    channel=Channel.COMMENTARY,
                    recipient=tool.name,
                    content=random_text(rng),
                    content_kind=ContentKind.TOOL_CALL_ARGS,
                )
            )
            messages.append(
                Message(role=Role.TOOL, content=random_text(rng), content_kind=ContentKind.TOOL_RESULT)
            )
        elif rng.integers(0, 2):
            messages.append(
                Message(role=Role.ASSISTANT, channel=Channel.COMMENTARY, content=random_text(rng))
            )
        messages.append(Message(role=Role.ASSISTANT, channel=Channel.FINAL, content=random_text(rng)))

    level = str(rng.choice(["low", "medium", "high"]))
    return Conversation(messages=tuple(messages), reasoning_level=level, tool_schemas=schemas)


def golden_five_turn_conversation() -> Conversation:
    """Five user/assistant turns; only the last turn's analysis may survive a strip."""

    def turn(i, extra_commentary=False):
        msgs = [
            Message(role=Role.USER, content=f"question {i}"),
            Message(role=Role.ASSISTANT, channel=Channel.ANALYSIS, content=f"thinking {i}"),
        ]
        if extra_commentary:
            msgs.append(
                Message(role=Role.ASSISTANT, channel=Channel.COMMENTARY, content=f"plan {i}")
            )
        msgs.append(Message(role=Role.ASSISTANT, channel=Channel.FINAL, content=f"answer {i}"))
        return msgs

    messages = [Message(role=Role.SYSTEM, content="Answer tersely.")]
    for i in range(1, 5):
        messages += turn(i, extra_commentary=(i == 3))
    messages += turn(5)
    return Conversation(messages=tuple(messages), reasoning_level="medium")
