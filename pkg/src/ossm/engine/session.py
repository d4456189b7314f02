"""Autoregressive decoding loop with tool-call pauses.

A session owns one conversation, one sampler state, and one KV cache at
a time. `generate` renders the conversation (prior reasoning stripped),
prefills the model, and samples until the final-message terminator,
the token budget, or a structurally broken span. Tool calls pause the
loop, run the handler, splice the Tool frame plus a fresh assistant cue
into the token stream, and resume with the same cache.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..harmony.messages import Conversation, Message, strip_prior_cot
from ..harmony.wire import (
    GENERATION_CUE,
    ParseError,
    PartialSegment,
    parse_model_output,
    render_conversation,
    render_message,
)
from .tokenizer import ToyTokenizer
from .tools import ToolRegistry, dispatch_tool_call


class SamplerConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    mode: str = "greedy"  # "greedy" or "temperature"
    temperature: float = 1.0
    seed: int = 0
    max_tokens: int = 256

    def __post_init__(self):
        if self.mode not in ("greedy", "temperature"):
            raise SamplerConfigError(f"unknown sampling mode {self.mode!r}")
        if self.mode == "temperature" and self.temperature <= 0:
            raise SamplerConfigError("temperature must be positive")
        if self.max_tokens < 0:
            raise SamplerConfigError("max_tokens must be non-negative")


def sample_token(logits: np.ndarray, cfg: SamplerConfig, rng: np.random.Generator) -> int:
    """Greedy argmax (first maximum wins) or inverse-CDF temperature sampling."""
    if cfg.mode == "greedy":
        return int(np.argmax(logits))
    z = np.asarray(logits, dtype=np.float64) / cfg.temperature
    z -= z.max()
    p = np.exp(z)
    p /= p.sum()
    r = rng.random()
    cum = np.cumsum(p)
    return int(min(np.searchsorted(cum, r, side="right"), len(p) - 1))


@dataclass(frozen=True)
class GenerationResult:
    """One assistant turn: its messages plus how the loop ended."""

    messages: tuple
    conversation: Conversation
    partial: PartialSegment | None = None
    truncated: bool = False
    malformed: bool = False
    raw_spans: tuple = ()
    tokens_generated: int = 0


@dataclass
class Session:
    conversation: Conversation
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    tools: ToolRegistry | None = None
    cache: object = None
    transcript_log: list = field(default_factory=list)
    _rng: np.random.Generator = None

    def __post_init__(self):
        if self._rng is None:
            self._rng = np.random.default_rng(self.sampler.seed)

    def add_user_message(self, msg: Message) -> None:
        self.conversation = self.conversation.with_message(msg)


def _partial_as_message(partial: PartialSegment) -> Message | None:
    """A truncated plain segment still carries usable content; calls do not."""
    if partial is None or not partial.reached_content or partial.channel is None:
        return None
    if partial.recipient is not None:
        return None  # an unterminated tool call never dispatches
    from ..harmony.messages import Role

    return Message(role=Role.ASSISTANT, channel=partial.channel, content=partial.content)


def generate(model, session: Session, tokenizer: ToyTokenizer | None = None) -> GenerationResult:
    """Produce one assistant turn and append it to the session's conversation.

    Greedy mode is a pure function of (model weights, conversation,
    sampler config): reruns yield byte-identical turns. A span that
    fails to parse marks the turn malformed and leaves the conversation
    unchanged by that span; the raw text stays available in raw_spans.
    """
    tok = tokenizer or ToyTokenizer(vocab_size=model.vocab_size)
    conv = strip_prior_cot(session.conversation)
    session.cache = model.new_cache()
    budget = session.sampler.max_tokens

    prompt_ids = tok.encode(render_conversation(conv))
    turn_messages = []
    raw_spans = []
    span_ids = []
    tokens_generated = 0
    truncated = False
    malformed = False
    partial = None

    if budget == 0:
        session.conversation = conv
        result = GenerationResult(
            messages=(), conversation=conv, truncated=True, tokens_generated=0
        )
        session.transcript_log.append(result)
        return result

    logits = model.prefill(prompt_ids, session.cache)
    done = False
    while not done:
        token = sample_token(logits, session.sampler, session._rng)
        span_ids.append(token)
        tokens_generated += 1

        if token == tok.return_id or token == tok.call_id:
            span_text = tok.decode(span_ids)
            raw_spans.append(span_text)
            try:
                parsed = parse_model_output(span_text)
            except ParseError:
                malformed = True
                break
            turn_messages.extend(parsed.messages)
            conv = conv.with_message(*parsed.messages)
            if token == tok.return_id:
                done = True
                break
            # Tool call: dispatch, splice the result frame plus a fresh cue
            # into the stream, and resume against the same cache.
            call_msg = parsed.messages[-1] if parsed.messages else None
            if call_msg is None or call_msg.recipient is None:
                malformed = True
                break
            tool_msg = dispatch_tool_call(call_msg, session.tools)
            turn_messages.append(tool_msg)
            conv = conv.with_message(tool_msg)
            span_ids = []
            if tokens_generated >= budget:
                truncated = True
                break
            logits = model.step(token, session.cache)
            inject = render_message(tool_msg) + GENERATION_CUE
            logits = model.prefill(tok.encode(inject), session.cache)
            continue

        if tokens_generated >= budget:
            truncated = True
            break
        logits = model.step(token, session.cache)

    if not done and not malformed and span_ids:
        span_text = tok.decode(span_ids)
        raw_spans.append(span_text)
        try:
            parsed = parse_model_output(span_text)
            turn_messages.extend(parsed.messages)
            conv = conv.with_message(*parsed.messages)
            partial = parsed.partial
            tail = _partial_as_message(parsed.partial)
            if tail is not None:
                turn_messages.append(tail)
                conv = conv.with_message(tail)
        except ParseError:
            malformed = True

    session.conversation = conv
    result = GenerationResult(
        messages=tuple(turn_messages),
        conversation=conv,
        partial=partial,
        truncated=truncated,
        malformed=malformed,
        raw_spans=tuple(raw_spans),
        tokens_generated=tokens_generated,
    )
    session.transcript_log.append(result)
    return result
