"""Rule-based sentence segmentation.

Deterministic and locale-free so cached embeddings stay reproducible:
a sentence ends at {., !, ?} (plus trailing quotes/brackets) followed by
whitespace and an uppercase letter or digit, or at end of text.  A short
abbreviation guard list suppresses false breaks after common titles.
"""

from __future__ import annotations

_CLOSERS = "\"')]”’"

# Lowercased tokens that end with '.' without ending a sentence.
ABBREVIATIONS = {
    "mr", "mrs", "ms", "dr", "prof", "st", "vs", "etc", "e.g", "i.e",
    "no", "fig", "approx", "jr", "sr", "inc", "co", "corp", "dept", "est",
}


def _is_abbreviation(text: str, dot: int) -> bool:
    j = dot
    while j > 0 and (text[j - 1].isalpha() or text[j - 1] == "."):
        j -= 1
    token = text[j:dot].lower().lstrip(".")
    if not token:
        return False
    # Single letters are treated as initials ("J. Smith").
    return token in ABBREVIATIONS or (len(token) == 1 and token.isalpha())


def split_sentences(text: str, require_capital: bool = True) -> list[tuple[int, int]]:
    """Return sorted, non-overlapping, non-empty [start, end) sentence ranges.

    With ``require_capital=False`` any terminator followed by whitespace ends a
    sentence; use this for pre-tokenized lowercased corpora.
    """
    ranges: list[tuple[int, int]] = []
    n = len(text)
    start = 0
    i = 0
    while i < n:
        ch = text[i]
        if ch in ".!?":
            if ch == "." and _is_abbreviation(text, i):
                i += 1
                continue
            j = i + 1
            while j < n and text[j] in _CLOSERS:
                j += 1
            k = j
            while k < n and text[k].isspace():
                k += 1
            at_end = k >= n
            next_ok = k > j and (
                at_end or not require_capital or text[k].isupper() or text[k].isdigit()
            )
            if j >= n or next_ok:
                ranges.append((start, j))
                start = k
                i = k
                continue
        i += 1
    if start < n:
        ranges.append((start, n))

    trimmed = []
    for s, e in ranges:
        while s < e and text[s].isspace():
            s += 1
        while e > s and text[e - 1].isspace():
            e -= 1
        if e > s:
            trimmed.append((s, e))
    return trimmed
