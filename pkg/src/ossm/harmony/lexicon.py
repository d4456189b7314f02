"""The delimiter lexicon for the chat wire format.

These strings behave like special tokens: message content may never
contain them, so every occurrence in a stream is structural. The
tokenizer assigns each one a dedicated token id.
"""

START = "<|start|>"
CHANNEL = "<|channel|>"
MESSAGE = "<|message|>"
END = "<|end|>"
CALL = "<|call|>"
RETURN = "<|return|>"
TOOLS = "<|tools|>"

SPECIAL_TOKENS = (START, CHANNEL, MESSAGE, END, CALL, RETURN, TOOLS)

RECIPIENT_MARK = " to="

REASONING_PREFIX = "Reasoning: "
