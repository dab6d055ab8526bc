"""Pure-Python twin of the compiled ``_kernels`` extension (same signatures, same results)."""
from collections import Counter

import numpy as np

BACKEND = "python"


def edit_ops(a, b):
    """(substitutions, insertions, deletions) turning reference ``a`` into hypothesis ``b``."""
    a = list(a)
    b = list(b)
    n, m = len(a), len(b)
    # each cell holds (edits, insertions + deletions); tuple order is the tie-break
    prev = [(j, j) for j in range(m + 1)]
    for i in range(1, n + 1):
        cur = [(i, i)] + [None] * m
        ai = a[i - 1]
        for j in range(1, m + 1):
            dc, dd = prev[j - 1]
            best = (dc + (ai != b[j - 1]), dd)
            dele = (prev[j][0] + 1, prev[j][1] + 1)
            if dele < best:
                best = dele
            ins = (cur[j - 1][0] + 1, cur[j - 1][1] + 1)
            if ins < best:
                best = ins
            cur[j] = best
        prev = cur
    total, indels = prev[m]
    diff = m - n
    return total - indels, (indels + diff) // 2, (indels - diff) // 2


def count_pairs(seq, offsets, freqs, n_pieces):
    seq = [int(x) for x in seq]
    offsets = [int(x) for x in offsets]
    piece_counts = [0] * n_pieces
    pairs = Counter()
    for w, f in enumerate(int(x) for x in freqs):
        start, end = offsets[w], offsets[w + 1]
        for k in range(start, end):
            piece_counts[seq[k]] += f
            if k + 1 < end:
                pairs[seq[k] * n_pieces + seq[k + 1]] += f
    keys = sorted(pairs)
    return (
        np.asarray(piece_counts, dtype=np.int64),
        np.asarray(keys, dtype=np.int64),
        np.asarray([pairs[k] for k in keys], dtype=np.int64),
    )


def merge_pair(seq, offsets, left, right, new_id):
    seq = [int(x) for x in seq]
    offsets = [int(x) for x in offsets]
    out = []
    new_off = [0]
    for w in range(len(offsets) - 1):
        k, end = offsets[w], offsets[w + 1]
        while k < end:
            if k + 1 < end and seq[k] == left and seq[k + 1] == right:
                out.append(new_id)
                k += 2
            else:
                out.append(seq[k])
                k += 1
        new_off.append(len(out))
    return np.asarray(out, dtype=np.int32), np.asarray(new_off, dtype=np.int64)
