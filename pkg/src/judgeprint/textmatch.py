"""Provenance matching: does a quoted span actually occur in its source?

Quotes and sources are normalized (lowercase, punctuation stripped,
whitespace collapsed). An exact verdict means the normalized quote is a
contiguous substring of the normalized source. Otherwise similarity is
1 - d/len(quote) where d is the minimum edit distance (unit-cost
insert/delete/substitute) between the quote and any substring of the
source, i.e. the best local window alignment.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass

import numpy as np

MATCH_EXACT = "exact"
MATCH_FUZZY = "fuzzy"
MATCH_NONE = "none"

DEFAULT_PRESENCE_THRESHOLD = 0.90


@dataclass(frozen=True)
class PresenceVerdict:
    match_type: str  # exact | fuzzy | none
    similarity: float
    degenerate: bool = False  # empty normalized quote

    @property
    def valid(self) -> bool:
        return self.match_type != MATCH_NONE


def normalize_text(s: str) -> str:
    """Lowercase, drop punctuation, collapse whitespace runs, trim."""
    lowered = s.lower()
    stripped = "".join(ch for ch in lowered if not unicodedata.category(ch).startswith("P"))
    return " ".join(stripped.split())


def _codepoints(s: str) -> np.ndarray:
    return np.frombuffer(s.encode("utf-32-le"), dtype=np.uint32)


def substring_edit_distance(needle: str, haystack: str) -> int:
    """Minimum edit distance between needle and any substring of haystack.

    Row-wise DP with a free start anywhere in the haystack; the
    left-neighbor dependency is resolved with a running minimum so each
    row is fully vectorized.
    """
    n = len(needle)
    if n == 0:
        return 0
    m = len(haystack)
    if m == 0:
        return n
    hs = _codepoints(haystack)
    nd = _codepoints(needle)
    offsets = np.arange(m + 1, dtype=np.int64)
    prev = np.zeros(m + 1, dtype=np.int64)  # matching may start at any position
    for i in range(1, n + 1):
        sub = prev[:-1] + (hs != nd[i - 1])
        up = prev[1:] + 1
        best = np.minimum(sub, up)
        t = np.empty(m + 1, dtype=np.int64)
        t[0] = i
        t[1:] = best
        prev = np.minimum.accumulate(t - offsets) + offsets
    return int(prev.min())


def window_similarity(needle: str, haystack: str) -> float:
    """1 - d/len(needle) for the best-aligned source window; 0 for empty needle."""
    if len(needle) == 0:
        return 0.0
    d = substring_edit_distance(needle, haystack)
    return 1.0 - d / len(needle)


def match_quote(quote_norm: str, source_norms: list[str],
                threshold: float = DEFAULT_PRESENCE_THRESHOLD) -> PresenceVerdict:
    """Verdict for a normalized quote against one or more normalized substrates
    (best match wins). threshold=1.0 makes fuzzy matches impossible."""
    if quote_norm == "":
        return PresenceVerdict(MATCH_NONE, 0.0, degenerate=True)
    best = 0.0
    for src in source_norms:
        if quote_norm in src:
            return PresenceVerdict(MATCH_EXACT, 1.0)
        best = max(best, window_similarity(quote_norm, src))
    if best >= threshold and best < 1.0:
        return PresenceVerdict(MATCH_FUZZY, best)
    return PresenceVerdict(MATCH_NONE, best)
