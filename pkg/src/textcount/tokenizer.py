"""Fixed-length tokenization of class descriptions.

The model treats the tokenizer as an opaque callable with one contract:
``tokenize(texts) -> int64 array of shape (batch, context_length)`` with a
start marker, an end marker, and zero padding.  :class:`HashTokenizer` is the
self-contained default used for training from scratch and for tests.  When a
pretrained text tower is used, plug in the byte-pair tokenizer shipped with
its weight release instead (any callable with the same contract works, e.g.
``open_clip.tokenize``).
"""

from __future__ import annotations

import hashlib
import re

import numpy as np

PAD_ID = 0
START_ID = 1
END_ID = 2
_WORD_RE = re.compile(r"[a-z0-9]+")


class HashTokenizer:
    """Deterministic word-hash tokenizer with the fixed-length contract.

    Words are lowercased, split on non-alphanumerics, and mapped into the
    vocabulary by a stable hash, so the same description always yields the
    same token sequence across runs and machines.
    """

    def __init__(self, vocab_size: int = 49408, context_length: int = 77):
        if vocab_size <= 3:
            raise ValueError(f"vocab_size must exceed the 3 reserved ids, got {vocab_size}")
        self.vocab_size = vocab_size
        self.context_length = context_length

    def _word_id(self, word: str) -> int:
        digest = hashlib.md5(word.encode("utf-8")).digest()
        span = self.vocab_size - 3
        return 3 + int.from_bytes(digest[:8], "big") % span

    def __call__(self, texts: str | list[str]) -> np.ndarray:
        if isinstance(texts, str):
            texts = [texts]
        out = np.full((len(texts), self.context_length), PAD_ID, dtype=np.int64)
        for row, text in enumerate(texts):
            words = _WORD_RE.findall(text.lower())
            ids = [START_ID] + [self._word_id(w) for w in words]
            # keep room for the end marker; truncate long descriptions
            ids = ids[: self.context_length - 1]
            ids.append(END_ID)
            out[row, : len(ids)] = ids
        return out
