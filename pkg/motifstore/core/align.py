"""Unit-cost alignment kernels used by library design and motif search."""

from __future__ import annotations

from collections.abc import Sequence


def hamming_distance(a: str, b: str) -> int:
    """Mismatch count between two equal-length strings."""
    if len(a) != len(b):
        msg = f"Hamming distance needs equal lengths, got {len(a)} and {len(b)}"
        raise ValueError(msg)
    return sum(x != y for x, y in zip(a, b, strict=True))


def edit_distance(a: Sequence[object], b: Sequence[object]) -> int:
    """Levenshtein distance with unit substitution, insertion and deletion costs.

    Works on any sequences whose items compare with ``==``: bases or token ids.
    """
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,
                    current[j - 1] + 1,
                    previous[j - 1] + (ca != cb),
                )
            )
        previous = current
    return previous[-1]


def banded_edit_distance(a: str, b: str, band: int) -> int:
    """Global unit-cost alignment restricted to cells with |i - j| <= band.

    Cells outside the band are unreachable. When the length difference exceeds
    the band the end cell is unreachable too and ``len(a) + len(b) + 1`` is
    returned, which is larger than any real alignment cost.
    """
    if band < 0:
        msg = f"band must be non-negative, got {band}"
        raise ValueError(msg)
    n, m = len(a), len(b)
    unreachable = n + m + 1
    if abs(n - m) > band:
        return unreachable

    previous = [j if j <= band else unreachable for j in range(m + 1)]
    for i in range(1, n + 1):
        current = [unreachable] * (m + 1)
        if i <= band:
            current[0] = i
        ca = a[i - 1]
        for j in range(max(1, i - band), min(m, i + band) + 1):
            current[j] = min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (ca != b[j - 1]),
            )
        previous = current
    return min(previous[m], unreachable)
