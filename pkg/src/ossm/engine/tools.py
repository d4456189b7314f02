"""Tool handlers and the dispatch step of the generation loop.

Every built-in is a deterministic fixture: no network, no wall clock, no
real interpreter. A handler maps the call's argument text to a result
text; failures never propagate out of dispatch, they come back to the
model as error text in the Tool message.
"""

from __future__ import annotations

import ast
import operator

from ..harmony.messages import ContentKind, Message
from ..harmony.wire import render_tool_result


class ToolError(Exception):
    """A handler rejected its arguments."""


class ToolRegistry:
    def __init__(self, handlers: dict | None = None):
        self._handlers = {}
        for name, fn in (handlers or {}).items():
            self.register(name, fn)

    def register(self, name: str, handler) -> None:
        if name in self._handlers:
            raise ValueError(f"tool {name!r} already registered")
        self._handlers[name] = handler

    def get(self, name: str):
        return self._handlers.get(name)

    def names(self) -> tuple:
        return tuple(self._handlers)

    def __len__(self) -> int:
        return len(self._handlers)


def echo_tool(args: str) -> str:
    return args


def clock_tool(args: str) -> str:
    # Frozen timestamp: transcripts must replay byte-identically.
    return "2025-01-01T00:00:00Z"


_BIN_OPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.FloorDiv: operator.floordiv,
    ast.Mod: operator.mod,
    ast.Pow: operator.pow,
}
_UNARY_OPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}


def _eval_node(node):
    if isinstance(node, ast.Expression):
        return _eval_node(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return node.value
    if isinstance(node, ast.BinOp) and type(node.op) in _BIN_OPS:
        return _BIN_OPS[type(node.op)](_eval_node(node.left), _eval_node(node.right))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY_OPS:
        return _UNARY_OPS[type(node.op)](_eval_node(node.operand))
    raise ToolError(f"unsupported expression element {type(node).__name__}")


def calc_tool(args: str) -> str:
    """Arithmetic expressions only; anything else is rejected."""
    try:
        tree = ast.parse(args.strip(), mode="eval")
        value = _eval_node(tree)
    except (SyntaxError, ValueError, ZeroDivisionError, ToolError) as exc:
        raise ToolError(f"cannot evaluate {args.strip()!r}: {exc}") from exc
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    return str(value)


# Canned document corpus backing the search/open pair.
CORPUS = {
    "doc-1": (
        "assistant notes",
        "This toy assistant runs fully offline. Its knowledge cutoff is the canned "
        "corpus itself; nothing newer exists here.",
    ),
    "doc-2": (
        "window band",
        "The banded window keeps only the most recent 128 entries in view.",
    ),
    "doc-3": (
        "quartz clock",
        "A quartz clock drifts less than one second per day.",
    ),
}


def search_tool(args: str) -> str:
    query = args.strip().lower()
    if not query:
        raise ToolError("empty query")
    hits = [
        f"{doc_id}: {title}"
        for doc_id, (title, text) in sorted(CORPUS.items())
        if query in title.lower() or query in text.lower()
    ]
    return "\n".join(hits) if hits else "no results"


def open_tool(args: str) -> str:
    doc_id = args.strip()
    if doc_id not in CORPUS:
        raise ToolError(f"unknown document {doc_id!r}")
    title, text = CORPUS[doc_id]
    return f"{title}\n{text}"


def builtin_registry() -> ToolRegistry:
    return ToolRegistry(
        {
            "echo": echo_tool,
            "clock": clock_tool,
            "calc": calc_tool,
            "search": search_tool,
            "open": open_tool,
        }
    )


def dispatch_tool_call(msg: Message, registry: ToolRegistry | None) -> Message:
    """Route a tool_call_args message to its handler; errors become Tool text.

    The returned Tool message always exists: an empty registry, an unknown
    recipient, or a throwing handler yield a structured `error:` body the
    model can read and recover from.
    """
    if msg.content_kind is not ContentKind.TOOL_CALL_ARGS:
        raise ValueError("dispatch_tool_call expects a tool_call_args message")
    name = msg.recipient
    if registry is None or len(registry) == 0:
        return render_tool_result(name, "error: no tools are available in this session")
    handler = registry.get(name)
    if handler is None:
        return render_tool_result(name, f"error: unknown tool: {name}")
    try:
        return render_tool_result(name, handler(msg.content))
    except Exception as exc:  # handler bugs must not kill the loop
        return render_tool_result(name, f"error: tool {name} failed: {exc}")
