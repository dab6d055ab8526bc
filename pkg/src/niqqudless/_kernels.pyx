# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled hot loops. ``_kernels_py`` is the behavioural twin; keep them in sync."""
import numpy as np
cimport numpy as cnp
from libcpp.unordered_map cimport unordered_map
from libcpp.vector cimport vector
from cython.operator cimport dereference as deref, preincrement as inc

cnp.import_array()

BACKEND = "cython"


def edit_ops(a, b):
    """(substitutions, insertions, deletions) turning reference ``a`` into hypothesis ``b``.

    Minimises total edits, then the number of insertions+deletions, so a
    substitution always beats an insertion/deletion pair at equal cost.
    """
    cdef cnp.int64_t[::1] ra = np.ascontiguousarray(a, dtype=np.int64)
    cdef cnp.int64_t[::1] hb = np.ascontiguousarray(b, dtype=np.int64)
    cdef Py_ssize_t n = ra.shape[0], m = hb.shape[0], i, j
    cdef vector[long] cost_prev, cost_cur, ind_prev, ind_cur
    cdef long c, d, best_c, best_d
    cost_prev.resize(m + 1)
    cost_cur.resize(m + 1)
    ind_prev.resize(m + 1)
    ind_cur.resize(m + 1)
    for j in range(m + 1):
        cost_prev[j] = j
        ind_prev[j] = j
    for i in range(1, n + 1):
        cost_cur[0] = i
        ind_cur[0] = i
        for j in range(1, m + 1):
            # diagonal: match or substitution
            best_c = cost_prev[j - 1] + (0 if ra[i - 1] == hb[j - 1] else 1)
            best_d = ind_prev[j - 1]
            # deletion (reference token dropped)
            c = cost_prev[j] + 1
            d = ind_prev[j] + 1
            if c < best_c or (c == best_c and d < best_d):
                best_c = c
                best_d = d
            # insertion (extra hypothesis token)
            c = cost_cur[j - 1] + 1
            d = ind_cur[j - 1] + 1
            if c < best_c or (c == best_c and d < best_d):
                best_c = c
                best_d = d
            cost_cur[j] = best_c
            ind_cur[j] = best_d
        cost_prev.swap(cost_cur)
        ind_prev.swap(ind_cur)
    cdef long total = cost_prev[m], indels = ind_prev[m]
    cdef long diff = m - n
    return int(total - indels), int((indels + diff) // 2), int((indels - diff) // 2)


def count_pairs(seq, offsets, freqs, Py_ssize_t n_pieces):
    """Weighted piece and adjacent-pair counts over a packed word list.

    Words are ``seq[offsets[w]:offsets[w+1]]`` with weight ``freqs[w]``. Pairs
    never straddle two words. Returns ``(piece_counts, pair_keys, pair_counts)``
    where ``key = left * n_pieces + right`` and keys are ascending.
    """
    cdef cnp.int32_t[::1] s = np.ascontiguousarray(seq, dtype=np.int32)
    cdef cnp.int64_t[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef cnp.int64_t[::1] fr = np.ascontiguousarray(freqs, dtype=np.int64)
    piece_counts = np.zeros(n_pieces, dtype=np.int64)
    cdef cnp.int64_t[::1] pc = piece_counts
    cdef unordered_map[long long, long long] pairs
    cdef Py_ssize_t w, k, n_words = fr.shape[0]
    cdef long long f, key
    for w in range(n_words):
        f = fr[w]
        for k in range(off[w], off[w + 1]):
            pc[s[k]] += f
            if k + 1 < off[w + 1]:
                key = <long long>s[k] * n_pieces + s[k + 1]
                pairs[key] += f
    keys = np.empty(pairs.size(), dtype=np.int64)
    counts = np.empty(pairs.size(), dtype=np.int64)
    cdef cnp.int64_t[::1] kv = keys
    cdef cnp.int64_t[::1] cv = counts
    cdef unordered_map[long long, long long].iterator it = pairs.begin()
    k = 0
    while it != pairs.end():
        kv[k] = deref(it).first
        cv[k] = deref(it).second
        k += 1
        inc(it)
    order = np.argsort(keys, kind="stable")
    return piece_counts, keys[order], counts[order]


def merge_pair(seq, offsets, int left, int right, int new_id):
    """Replace every non-overlapping ``left right`` run, scanning each word left to right."""
    cdef cnp.int32_t[::1] s = np.ascontiguousarray(seq, dtype=np.int32)
    cdef cnp.int64_t[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef Py_ssize_t n_words = off.shape[0] - 1, w, k, end, pos = 0
    out = np.empty(s.shape[0], dtype=np.int32)
    new_off = np.empty(n_words + 1, dtype=np.int64)
    cdef cnp.int32_t[::1] o = out
    cdef cnp.int64_t[::1] no = new_off
    no[0] = 0
    for w in range(n_words):
        k = off[w]
        end = off[w + 1]
        while k < end:
            if k + 1 < end and s[k] == left and s[k + 1] == right:
                o[pos] = new_id
                k += 2
            else:
                o[pos] = s[k]
                k += 1
            pos += 1
        no[w + 1] = pos
    return out[:pos].copy(), new_off
