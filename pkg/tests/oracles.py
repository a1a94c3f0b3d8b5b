"""Independent reference implementations used to check the package.

None of these import appqual; they recompute the same quantities by a
different route (exact fractions, brute-force ranking, calendar walking).
"""

from __future__ import annotations

import math
from datetime import date
from fractions import Fraction


def brute_ranks(values):
    """Average ranks by counting: rank = (#smaller) + (#equal + 1) / 2."""
    out = []
    for v in values:
        less = sum(1 for w in values if w < v)
        equal = sum(1 for w in values if w == v)
        out.append(less + (equal + 1) / 2)
    return out


def brute_spearman(x, y):
    """Pearson correlation of brute-force average ranks, in exact fractions."""
    rx = [Fraction(r).limit_denominator() for r in brute_ranks(x)]
    ry = [Fraction(r).limit_denominator() for r in brute_ranks(y)]
    n = len(rx)
    mx, my = sum(rx) / n, sum(ry) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    sxx = sum((a - mx) ** 2 for a in rx)
    syy = sum((b - my) ** 2 for b in ry)
    return float(sxy) / math.sqrt(float(sxx) * float(syy))


def composite_fraction(s_cq, s_rp, alpha=Fraction(4, 5)):
    return alpha * Fraction(s_cq) + (1 - alpha) * Fraction(s_rp)


def decay_oracle(quarters, beta):
    omega = 1.0
    for _ in range(quarters - 1):
        omega *= beta
    return omega


def months_by_walking(start: date, end: date) -> int:
    """Count month anniversaries of ``start`` that fall on or before ``end``."""
    count = 0
    y, m = start.year, start.month
    while True:
        m += 1
        if m > 12:
            y, m = y + 1, 1
        # an anniversary on a day the month lacks is reached at month end
        day = min(start.day, _days_in(y, m))
        if date(y, m, day) > end:
            return count
        if start.day > _days_in(y, m) and date(y, m, day) == end:
            # Feb 28 is not yet a full month after Jan 31
            return count
        count += 1


def _days_in(y, m):
    nxt = date(y + (m == 12), m % 12 + 1, 1)
    return (nxt - date(y, m, 1)).days


def band_oracle(eta):
    # Table-driven lower edges, inclusive
    if eta >= 25:
        return 5
    if eta >= 20:
        return 4
    if eta >= 15:
        return 3
    if eta >= 10:
        return 2
    return 1
