"""Byte-level toy tokenizer with one dedicated id per chat delimiter.

Ids 0..255 are raw UTF-8 bytes; the delimiter specials follow from 256.
The remaining ids up to the vocabulary size are reserved, so any model
logit index decodes to something. Delimiters never appear as byte runs
because message validation keeps them out of content.
"""

from __future__ import annotations

from ..harmony.lexicon import CALL, END, RETURN, SPECIAL_TOKENS


class ToyTokenizer:
    def __init__(self, vocab_size: int = 512):
        if vocab_size < 256 + len(SPECIAL_TOKENS):
            raise ValueError(f"vocab_size {vocab_size} too small for bytes plus specials")
        self.vocab_size = vocab_size
        self.special_to_id = {tok: 256 + i for i, tok in enumerate(SPECIAL_TOKENS)}
        self.id_to_special = {i: tok for tok, i in self.special_to_id.items()}
        self.end_id = self.special_to_id[END]
        self.call_id = self.special_to_id[CALL]
        self.return_id = self.special_to_id[RETURN]
        self.terminator_ids = frozenset((self.end_id, self.call_id, self.return_id))

    def encode(self, text: str) -> list:
        ids = []
        i = 0
        while i < len(text):
            for tok, tid in self.special_to_id.items():
                if text.startswith(tok, i):
                    ids.append(tid)
                    i += len(tok)
                    break
            else:
                ids.extend(text[i].encode("utf-8"))
                i += 1
        return ids

    def decode(self, ids) -> str:
        parts = []
        buf = bytearray()
        for tid in ids:
            tid = int(tid)
            if tid < 256:
                buf.append(tid)
            else:
                if buf:
                    parts.append(buf.decode("utf-8", errors="replace"))
                    buf = bytearray()
                parts.append(self.id_to_special.get(tid, ""))
        if buf:
            parts.append(buf.decode("utf-8", errors="replace"))
        return "".join(parts)
