"""Independent reference computations used to freeze expected values."""

import itertools


def otsu_bruteforce(counts):
    """Scan every threshold in double precision; class 0 is ``<= t``.

    Zero-weight classes score 0; ties keep the smallest t; if nothing beats 0
    the lowest populated bin is returned.
    """
    total = float(sum(counts))
    grand = float(sum(i * c for i, c in enumerate(counts)))
    best_t, best_var = None, 0.0
    n0 = s0 = 0.0
    for t in range(256):
        n0 += counts[t]
        s0 += t * counts[t]
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        w0, w1 = n0 / total, n1 / total
        mu0, mu1 = s0 / n0, (grand - s0) / n1
        var = w0 * w1 * (mu0 - mu1) ** 2
        if var > best_var:
            best_t, best_var = t, var
    if best_t is None:
        return next(i for i, c in enumerate(counts) if c)
    return best_t


def iou_by_pixels(a, b):
    """IoU by enumerating integer pixel cells of ``(x, y, w, h)`` boxes."""
    pa = set(itertools.product(range(a[0], a[0] + a[2]), range(a[1], a[1] + a[3])))
    pb = set(itertools.product(range(b[0], b[0] + b[2]), range(b[1], b[1] + b[3])))
    return len(pa & pb) / len(pa | pb)


def edit_distance_recursive(a, b, memo=None):
    memo = {} if memo is None else memo
    key = (a, b)
    if key not in memo:
        if not a or not b:
            memo[key] = len(a) + len(b)
        else:
            memo[key] = min(
                edit_distance_recursive(a[1:], b, memo) + 1,
                edit_distance_recursive(a, b[1:], memo) + 1,
                edit_distance_recursive(a[1:], b[1:], memo) + (a[0] != b[0]),
            )
    return memo[key]
