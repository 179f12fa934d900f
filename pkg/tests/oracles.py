"""Slow, obviously-correct reference implementations used as test oracles."""
import numpy as np


def fps_oracle(coords, m):
    n = len(coords)
    chosen = [0]
    for _ in range(1, m):
        best, best_d = None, -1.0
        for i in range(n):
            d = min(float(np.sum((coords[i] - coords[j]) ** 2)) for j in chosen)
            if d > best_d:  # strict: lowest index wins ties
                best, best_d = i, d
        chosen.append(best)
    return np.array(chosen)


def knn_oracle(queries, refs, k):
    out = []
    for q in queries:
        d = [(float(np.sum((r - q) ** 2)), j) for j, r in enumerate(refs)]
        out.append([j for _, j in sorted(d)[:k]])
    return np.array(out, dtype=np.int64).reshape(len(queries), k)


def chamfer_oracle(p, q):
    to_q = [min(float(np.sum((a - b) ** 2)) for b in q) for a in p]
    to_p = [min(float(np.sum((a - b) ** 2)) for a in p) for b in q]
    return sum(to_q) / len(to_q) + sum(to_p) / len(to_p)


def partition_sizes_oracle(m, ratios):
    from fractions import Fraction

    drop, mask = (Fraction(str(r)) for r in ratios[:2])
    n_drop, n_mask = int(drop * m), int(mask * m)
    return n_drop, n_mask, m - n_drop - n_mask
