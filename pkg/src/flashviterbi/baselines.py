"""Comparison decoders: checkpointing, recursive midpoint divide-and-conquer,
and static top-B beam filtering.

All three return the same path as ``vanilla_viterbi`` where exactness is
claimed (checkpoint and the midpoint recursion are exact; the static beam is
exact only at B = K), because they run the same compiled DP step and the same
lowest-index tie-break.
"""

from __future__ import annotations

import math

import numpy as np

from . import kernels
from .errors import (
    BeamExhaustedError,
    ConfigurationError,
    InfeasibleDecodeError,
)
from .metering import PROB_BYTES, STATE_BYTES, Meter, as_meter
from .model import NEG_INF, HmmModel, ObservationSequence
from .oracle import DecodedPath, path_score


def checkpoint_window(seq_len: int) -> int:
    """Spacing between stored score columns: ceil(sqrt(T))."""
    w = math.isqrt(seq_len)
    if w * w < seq_len:
        w += 1
    return w


def checkpoint_viterbi(model: HmmModel, obs: ObservationSequence, meter: Meter | None = None) -> DecodedPath:
    """Viterbi storing score columns only at ~sqrt(T) evenly spaced timesteps.

    The forward pass keeps no backpointers; traceback re-runs the DP inside
    each inter-checkpoint window to rebuild them locally, so the working set
    is O(K sqrt(T)) instead of O(KT).
    """
    meter = as_meter(meter)
    obs.check_against(model)
    k = model.num_states
    seq_len = len(obs)
    trans_t = model.log_transition_t
    em_t = model.log_emission_t
    x = obs.symbols

    window = checkpoint_window(seq_len)
    cps = list(range(0, seq_len, window))

    meter.alloc("scratch_prob", 2 * k * PROB_BYTES)
    delta = np.empty(k, dtype=np.float64)
    delta_next = np.empty(k, dtype=np.float64)
    pre_scratch = np.empty(k, dtype=np.int32)
    stored: dict[int, np.ndarray] = {}

    np.add(model.log_initial, em_t[x[0]], out=delta)
    meter.add_updates(k)
    stored[0] = delta.copy()
    meter.alloc("checkpoint_bytes", k * PROB_BYTES)
    for t in range(1, seq_len):
        kernels.dp_step(delta, trans_t, em_t[x[t]], delta_next, pre_scratch)
        meter.add_updates(k * k)
        delta, delta_next = delta_next, delta
        if t % window == 0:
            stored[t] = delta.copy()
            meter.alloc("checkpoint_bytes", k * PROB_BYTES)

    q = int(np.argmax(delta))
    if delta[q] == NEG_INF:
        meter.free("scratch_prob", 2 * k * PROB_BYTES)
        meter.free("checkpoint_bytes", len(stored) * k * PROB_BYTES)
        raise InfeasibleDecodeError("no state sequence has positive probability")

    states = np.empty(seq_len, dtype=np.int32)
    states[seq_len - 1] = q
    hi, q_hi = seq_len - 1, q
    for j in range(len(cps) - 1, -1, -1):
        lo = cps[j]
        if lo >= hi:
            continue
        width = hi - lo
        meter.alloc("psi_table_bytes", width * k * STATE_BYTES)
        psi_win = np.empty((width, k), dtype=np.int32)
        delta[:] = stored[lo]
        for t in range(lo + 1, hi + 1):
            kernels.dp_step(delta, trans_t, em_t[x[t]], delta_next, psi_win[t - lo - 1])
            meter.add_updates(k * k)
            delta, delta_next = delta_next, delta
        qq = q_hi
        for t in range(hi, lo, -1):
            qq = int(psi_win[t - lo - 1, qq])
            states[t - 1] = qq
        meter.free("psi_table_bytes", width * k * STATE_BYTES)
        hi, q_hi = lo, qq

    meter.free("scratch_prob", 2 * k * PROB_BYTES)
    meter.free("checkpoint_bytes", len(stored) * k * PROB_BYTES)
    return DecodedPath(states=states, log_likelihood=path_score(model, obs, states))


def sieve_mp_decode(model: HmmModel, obs: ObservationSequence, meter: Meter | None = None) -> DecodedPath:
    """Recursive midpoint divide-and-conquer without pruning.

    Each call receives the score column before the start of its segment,
    recomputes its own start column from it, emits the optimal state at the
    segment midpoint, and recurses on both halves with O(K) arrays per
    recursion level. Exactly reproduces the vanilla path.
    """
    meter = as_meter(meter)
    obs.check_against(model)
    k = model.num_states
    seq_len = len(obs)
    trans_t = model.log_transition_t
    em_t = model.log_emission_t
    x = obs.symbols
    states = np.full(seq_len, -1, dtype=np.int32)

    def segment(m: int, n: int, boundary: np.ndarray | None) -> None:
        # boundary is the score column at m-1 (None iff m == 0)
        meter.enter_frame()
        meter.alloc("scratch_prob", 2 * k * PROB_BYTES)
        meter.alloc("scratch_state", 2 * k * STATE_BYTES)
        delta = np.empty(k, dtype=np.float64)
        delta_next = np.empty(k, dtype=np.float64)
        pre = np.empty(k, dtype=np.int32)
        mid = np.full(k, -1, dtype=np.int32)
        t_mid = (m + n) // 2

        if m == 0:
            np.add(model.log_initial, em_t[x[0]], out=delta)
            meter.add_updates(k)
        else:
            kernels.dp_step(boundary, trans_t, em_t[x[m]], delta, pre)
            meter.add_updates(k * k)

        # the right child re-initializes from the column at t_mid; only keep
        # a copy when that child will actually recurse
        saved = None
        for t in range(m + 1, n + 1):
            kernels.dp_step(delta, trans_t, em_t[x[t]], delta_next, pre)
            meter.add_updates(k * k)
            delta, delta_next = delta_next, delta
            if t == t_mid + 1:
                mid[:] = pre
            elif t > t_mid + 1:
                mid[:] = mid[pre]
            if t == t_mid and n - t_mid >= 2:
                saved = delta.copy()
                meter.alloc("scratch_prob", k * PROB_BYTES)

        if m == 0 and n == seq_len - 1:
            q_n = int(np.argmax(delta))
            if delta[q_n] == NEG_INF:
                raise InfeasibleDecodeError("no state sequence has positive probability")
            states[n] = q_n
        else:
            q_n = int(states[n])
        if t_mid < n:
            states[t_mid] = int(mid[q_n])

        # recurse on children with >= 2 timesteps
        if t_mid - m + 1 >= 2:
            segment(m, t_mid, boundary)
        if n - t_mid >= 2:
            segment(t_mid + 1, n, saved)

        if saved is not None:
            meter.free("scratch_prob", k * PROB_BYTES)
        meter.free("scratch_prob", 2 * k * PROB_BYTES)
        meter.free("scratch_state", 2 * k * STATE_BYTES)
        meter.exit_frame()

    if seq_len == 1:
        meter.alloc("scratch_prob", k * PROB_BYTES)
        delta0 = model.log_initial + em_t[x[0]]
        meter.add_updates(k)
        q = int(np.argmax(delta0))
        meter.free("scratch_prob", k * PROB_BYTES)
        if delta0[q] == NEG_INF:
            raise InfeasibleDecodeError("no state sequence has positive probability")
        states[0] = q
    else:
        segment(0, seq_len - 1, None)

    return DecodedPath(states=states, log_likelihood=path_score(model, obs, states))


def _keep_top(scores: np.ndarray, beam_width: int) -> np.ndarray:
    """Indices of the top-B entries; exact ties keep the lowest state index."""
    k = scores.shape[0]
    order = np.lexsort((np.arange(k), -scores))
    return order[:beam_width]


def static_beam_decode(
    model: HmmModel,
    obs: ObservationSequence,
    beam_width: int,
    meter: Meter | None = None,
    retained_trace: list | None = None,
) -> DecodedPath:
    """Beam search that prunes after computing all K candidate scores.

    Every timestep fills a full-width score buffer, then masks all but the
    top-B entries to -inf; the full backpointer table is kept for traceback.
    ``retained_trace``, when given, collects the per-timestep retained state
    index arrays.
    """
    meter = as_meter(meter)
    obs.check_against(model)
    k = model.num_states
    if not (1 <= beam_width <= k):
        raise ConfigurationError(f"beam width must be in [1, {k}], got {beam_width}")
    seq_len = len(obs)
    trans_t = model.log_transition_t
    em_t = model.log_emission_t
    x = obs.symbols

    meter.alloc("scratch_prob", 2 * k * PROB_BYTES)
    meter.alloc("psi_table_bytes", k * seq_len * STATE_BYTES)
    delta = np.empty(k, dtype=np.float64)
    delta_next = np.empty(k, dtype=np.float64)
    psi = np.zeros((seq_len, k), dtype=np.int32)

    def fail(exc):
        meter.free("scratch_prob", 2 * k * PROB_BYTES)
        meter.free("psi_table_bytes", k * seq_len * STATE_BYTES)
        raise exc

    def prune(col: np.ndarray) -> None:
        keep = _keep_top(col, beam_width)
        kept = np.zeros(k, dtype=bool)
        kept[keep] = True
        col[~kept] = NEG_INF
        if retained_trace is not None:
            retained_trace.append(np.sort(keep[col[keep] > NEG_INF]))

    np.add(model.log_initial, em_t[x[0]], out=delta)
    meter.add_updates(k)
    if not np.any(delta > NEG_INF):
        fail(InfeasibleDecodeError("no state sequence has positive probability"))
    prune(delta)
    for t in range(1, seq_len):
        kernels.dp_step(delta, trans_t, em_t[x[t]], delta_next, psi[t])
        meter.add_updates(k * k)
        delta, delta_next = delta_next, delta
        if not np.any(delta > NEG_INF):
            if beam_width == k:
                fail(InfeasibleDecodeError("no state sequence has positive probability"))
            fail(BeamExhaustedError(f"beam collapsed at timestep {t} with B={beam_width}"))
        prune(delta)

    q = int(np.argmax(delta))
    states = np.empty(seq_len, dtype=np.int32)
    states[seq_len - 1] = q
    for t in range(seq_len - 1, 0, -1):
        q = int(psi[t, q])
        states[t - 1] = q

    meter.free("scratch_prob", 2 * k * PROB_BYTES)
    meter.free("psi_table_bytes", k * seq_len * STATE_BYTES)
    return DecodedPath(states=states, log_likelihood=path_score(model, obs, states))
