"""Slow, obviously-correct reference implementations used as test oracles."""

import math


def mse(p, t):
    return math.fsum((a - b) ** 2 for a, b in zip(p, t)) / len(p)


def pearson(x, y):
    n = len(x)
    mx, my = math.fsum(x) / n, math.fsum(y) / n
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = math.fsum((a - mx) ** 2 for a in x)
    syy = math.fsum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def ranks(x):
    # rank = 1 + (#smaller) + (#equal - 1) / 2
    return [1 + sum(b < a for b in x) + (sum(b == a for b in x) - 1) / 2 for a in x]


def spearman(x, y):
    return pearson(ranks(x), ranks(y))


def kendall_tau_b(x, y):
    n = len(x)
    conc = disc = tx = ty = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx, dy = x[i] - x[j], y[i] - y[j]
            if dx == 0 and dy == 0:
                continue
            if dx == 0:
                tx += 1
            elif dy == 0:
                ty += 1
            elif (dx > 0) == (dy > 0):
                conc += 1
            else:
                disc += 1
    return (conc - disc) / math.sqrt((conc + disc + tx) * (conc + disc + ty))


def best_single_split(x, r):
    """Enumerate every threshold between distinct sorted values; return (sse, threshold)."""
    pts = sorted(set(x))
    best = (math.inf, None)
    for lo, hi in zip(pts, pts[1:]):
        thr = 0.5 * (lo + hi)
        left = [v for a, v in zip(x, r) if a <= thr]
        right = [v for a, v in zip(x, r) if a > thr]
        sse = sum((v - sum(left) / len(left)) ** 2 for v in left) \
            + sum((v - sum(right) / len(right)) ** 2 for v in right)
        if sse < best[0]:
            best = (sse, thr)
    return best
