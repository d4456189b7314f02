"""Scripted stand-ins for the transformer, used by tests and the CLI bench.

They satisfy the decoding-engine protocol (vocab_size, new_cache,
prefill, step) and emit a predetermined token sequence through one-hot
logits, which makes tool-call plumbing and token-count sweeps exactly
reproducible without real weights.
"""

from __future__ import annotations

import re

import numpy as np

from .tokenizer import ToyTokenizer

_LEVEL_RE = re.compile(r"Reasoning: (low|medium|high)")


class ScriptedModel:
    """Plays a fixed token script; the prompt is ignored.

    The engine advances the script by calling step() once per sampled
    token; prefill() never advances it. Exhausted scripts keep asking to
    stop by favoring the final-terminator token.
    """

    def __init__(self, script_ids, vocab_size: int = 512):
        self.script = [int(t) for t in script_ids]
        self.vocab_size = vocab_size
        self.ptr = 0
        self._stop_id = ToyTokenizer(vocab_size).return_id

    @classmethod
    def from_text(cls, text: str, vocab_size: int = 512) -> "ScriptedModel":
        return cls(ToyTokenizer(vocab_size).encode(text), vocab_size)

    def new_cache(self):
        return None

    def _logits(self) -> np.ndarray:
        z = np.full(self.vocab_size, -100.0, dtype=np.float32)
        target = self.script[self.ptr] if self.ptr < len(self.script) else self._stop_id
        z[target] = 100.0
        return z

    def prefill(self, ids, cache) -> np.ndarray:
        return self._logits()

    def step(self, token, cache) -> np.ndarray:
        self.ptr += 1
        return self._logits()


class ReasoningLengthScriptedModel(ScriptedModel):
    """Emits one analysis segment whose length tracks the reasoning level.

    The script is fixed on first prefill by reading `Reasoning: <level>`
    out of the rendered prompt: `counts[level]` single-byte filler tokens
    of analysis, then a short final message. Single-use: one instance per
    generation.
    """

    def __init__(self, counts: dict, vocab_size: int = 512, filler: str = "t",
                 final_text: str = "ok"):
        super().__init__([], vocab_size)
        if sorted(counts) != ["high", "low", "medium"]:
            raise ValueError("counts must map exactly low/medium/high")
        if len(filler.encode("utf-8")) != 1:
            raise ValueError("filler must be a single byte so counts equal token counts")
        self.counts = dict(counts)
        self.filler = filler
        self.final_text = final_text
        self._tok = ToyTokenizer(vocab_size)
        self._armed = False

    def prefill(self, ids, cache) -> np.ndarray:
        if not self._armed:
            m = _LEVEL_RE.search(self._tok.decode(ids))
            if m is None:
                raise ValueError("prompt carries no reasoning level")
            n = self.counts[m.group(1)]
            self.script = self._tok.encode(
                f"<|channel|>analysis<|message|>{self.filler * n}<|end|>"
                f"<|start|>assistant<|channel|>final<|message|>{self.final_text}<|return|>"
            )
            self._armed = True
        return self._logits()
