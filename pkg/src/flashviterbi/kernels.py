"""Compiled inner loops shared by every decoder.

All decoders in the package run the same dense dynamic-programming step so
their floating-point trajectories (and therefore argmax tie-breaks) are
bit-identical wherever they compute the same quantity. Every argmax resolves
to the lowest qualifying state index. Kernels are compiled ``nogil`` so
worker threads can overlap them.
"""

from __future__ import annotations

import numpy as np
from numba import njit

NEG_INF = -np.inf


@njit(cache=True, nogil=True)
def dp_step(delta_prev, trans_t, em_col, delta_out, pre_out):
    """One Viterbi timestep on the full state space.

    ``trans_t`` is the transposed transition matrix (row i = log A[., i]).
    Writes the new score column and the per-state best predecessor
    (lowest index among ties).
    """
    k = delta_prev.shape[0]
    for i in range(k):
        row = trans_t[i]
        best = NEG_INF
        arg = 0
        for j in range(k):
            v = delta_prev[j] + row[j]
            if v > best:
                best = v
                arg = j
        delta_out[i] = best + em_col[i]
        pre_out[i] = arg


@njit(cache=True, nogil=True)
def _heap_less(prob, state, a, b):
    # (opt_prob, state) lexicographic order; state breaks exact score ties
    # so eviction is deterministic.
    if prob[a] < prob[b]:
        return True
    return prob[a] == prob[b] and state[a] < state[b]


@njit(cache=True, nogil=True)
def _heap_swap(prob, state, mid, a, b):
    prob[a], prob[b] = prob[b], prob[a]
    state[a], state[b] = state[b], state[a]
    for j in range(mid.shape[1]):
        mid[a, j], mid[b, j] = mid[b, j], mid[a, j]


@njit(cache=True, nogil=True)
def _sift_down(prob, state, mid, size, i):
    while True:
        left = 2 * i + 1
        right = left + 1
        smallest = i
        if left < size and _heap_less(prob, state, left, smallest):
            smallest = left
        if right < size and _heap_less(prob, state, right, smallest):
            smallest = right
        if smallest == i:
            return
        _heap_swap(prob, state, mid, i, smallest)
        i = smallest


@njit(cache=True, nogil=True)
def _heapify(prob, state, mid, size):
    for i in range(size // 2 - 1, -1, -1):
        _sift_down(prob, state, mid, size, i)


@njit(cache=True, nogil=True)
def heap_push(prob, state, mid, size, capacity, new_prob, new_state, new_mid):
    """Insert one candidate into a capacity-bounded min-heap.

    Three cases: below capacity-1 the element is appended unordered; the
    element that reaches capacity triggers a heapify; at capacity the
    candidate replaces the root only if strictly larger (an exact tie keeps
    the incumbent). Returns the new size.
    """
    if size < capacity:
        prob[size] = new_prob
        state[size] = new_state
        for j in range(mid.shape[1]):
            mid[size, j] = new_mid[j]
        size += 1
        if size == capacity:
            _heapify(prob, state, mid, size)
        return size
    if new_prob > prob[0]:
        prob[0] = new_prob
        state[0] = new_state
        for j in range(mid.shape[1]):
            mid[0, j] = new_mid[j]
        _sift_down(prob, state, mid, size, 0)
    return size


@njit(cache=True, nogil=True)
def heap_fill(prob, state, mid, capacity, cand):
    """Populate an empty heap from a full-width candidate column.

    Pushes every finite candidate in ascending state order with all
    division-point slots unset. Returns the heap size.
    """
    scratch = np.full(mid.shape[1], -1, dtype=np.int32)
    size = 0
    for s in range(cand.shape[0]):
        if cand[s] > NEG_INF:
            size = heap_push(prob, state, mid, size, capacity, cand[s], s, scratch)
    return size


@njit(cache=True, nogil=True)
def beam_step_kernel(
    pre_prob,
    pre_state,
    pre_mid,
    pre_size,
    out_prob,
    out_state,
    out_mid,
    capacity,
    trans_t,
    em_col,
    points,
    t,
):
    """One dynamic-beam timestep: heap_pre -> heap_total.

    For each state, scores only the transitions out of the retained
    candidates (lowest predecessor state wins ties), propagates the tracked
    division-point states, and pushes finite results through the bounded
    heap. Returns the new heap size (0 means beam collapse).
    """
    k = trans_t.shape[0]
    n_mid = points.shape[0]
    mids = np.empty(n_mid, dtype=np.int32)
    size = 0
    for i in range(k):
        row = trans_t[i]
        best = NEG_INF
        arg = -1
        arg_state = 0
        for e in range(pre_size):
            v = pre_prob[e] + row[pre_state[e]]
            if v > best:
                best = v
                arg = e
                arg_state = pre_state[e]
            elif arg >= 0 and v == best and pre_state[e] < arg_state:
                arg = e
                arg_state = pre_state[e]
        if arg < 0:
            continue
        score = best + em_col[i]
        if score == NEG_INF:
            continue
        for j in range(n_mid):
            d = points[j]
            if t == d + 1:
                mids[j] = arg_state
            elif t > d + 1:
                mids[j] = pre_mid[arg, j]
            else:
                mids[j] = -1
        size = heap_push(out_prob, out_state, out_mid, size, capacity, score, i, mids)
    return size
