"""Dynamic beam search over dual bounded min-heaps (FLASH-BS).

Per timestep only the transitions out of the retained candidates are scored,
and the survivors are maintained incrementally in a capacity-B min-heap, so
per-task state drops from K to B entries. Two physically separate heap
buffers swap roles every timestep (double buffering, no copying). Scheduling
is shared with the exact decoder; division-point states on the output board
are taken as given, so accuracy is measured end to end.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import BeamExhaustedError, ConfigurationError, InfeasibleDecodeError
from .flash import (
    OutputBoard,
    _division_points,
    _initial_segments,
    run_schedule,
)
from .metering import PROB_BYTES, STATE_BYTES, Meter, as_meter
from .model import HmmModel, ObservationSequence
from .oracle import DecodedPath, path_score

UNSET = -1


@dataclass
class BeamElement:
    """One retained candidate: state, score, tracked division-point states."""

    state: int
    opt_prob: float
    mid_states: np.ndarray = field(default_factory=lambda: np.full(1, UNSET, dtype=np.int32))


def element_bytes(n_tracked: int) -> int:
    """Logical footprint of one heap element."""
    return PROB_BYTES + STATE_BYTES + n_tracked * STATE_BYTES


class BeamHeap:
    """Capacity-B min-heap keyed on opt_prob (root = smallest retained score).

    Elements are stored as parallel arrays so the buffer-role swap between
    timesteps is a handle exchange. Exact score ties at the root keep the
    incumbent; among equal scores the heap orders by state index, which makes
    eviction deterministic.
    """

    def __init__(self, capacity: int, n_tracked: int = 1):
        if capacity < 1:
            raise ConfigurationError(f"beam width must be >= 1, got {capacity}")
        self.capacity = capacity
        self.n_tracked = n_tracked
        self.prob = np.empty(capacity, dtype=np.float64)
        self.state = np.empty(capacity, dtype=np.int32)
        self.mid = np.empty((capacity, n_tracked), dtype=np.int32)
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def clear(self) -> None:
        self.size = 0

    def root(self) -> BeamElement:
        if self.size == 0:
            raise IndexError("empty heap")
        return BeamElement(int(self.state[0]), float(self.prob[0]), self.mid[0].copy())

    def elements(self) -> list[BeamElement]:
        return [
            BeamElement(int(self.state[i]), float(self.prob[i]), self.mid[i].copy())
            for i in range(self.size)
        ]

    def scores(self) -> np.ndarray:
        return np.sort(self.prob[: self.size])

    def find_state(self, state: int) -> int:
        """Slot holding ``state``, or -1 (states are unique within a step)."""
        for i in range(self.size):
            if self.state[i] == state:
                return i
        return -1

    def best_slot(self) -> int:
        """Slot of the maximum score; exact ties go to the lowest state."""
        best = 0
        for i in range(1, self.size):
            if self.prob[i] > self.prob[best] or (
                self.prob[i] == self.prob[best] and self.state[i] < self.state[best]
            ):
                best = i
        return best

    def satisfies_heap_property(self) -> bool:
        """Parent key <= child keys; vacuous below capacity, where the buffer
        is an unordered fill by the three-case insertion rule."""
        if self.size < self.capacity:
            return True
        for i in range(1, self.size):
            if self.prob[(i - 1) // 2] > self.prob[i]:
                return False
        return True


def beam_push(heap: BeamHeap, element: BeamElement) -> BeamHeap:
    """Insert a candidate under the three-case rule; returns the heap.

    Unordered fill below capacity, heapify on reaching capacity, then
    replace-root only for a strictly larger score (ties keep the incumbent).
    """
    if not np.isfinite(element.opt_prob):
        raise ConfigurationError("only finite scores may enter the beam")
    mids = np.asarray(element.mid_states, dtype=np.int32)
    if mids.shape != (heap.n_tracked,):
        raise ConfigurationError(
            f"element tracks {mids.shape} division points, heap expects ({heap.n_tracked},)"
        )
    heap.size = int(
        kernels.heap_push(
            heap.prob,
            heap.state,
            heap.mid,
            heap.size,
            heap.capacity,
            float(element.opt_prob),
            int(element.state),
            mids,
        )
    )
    return heap


def beam_step(
    model: HmmModel,
    obs: ObservationSequence,
    t: int,
    heap_pre: BeamHeap,
    heap_total: BeamHeap,
    division_points,
) -> BeamHeap:
    """Advance the beam one timestep: heap_pre -> heap_total.

    Scores every state's best transition out of the retained candidates
    (lowest predecessor state on ties), propagates tracked division-point
    states, and pushes the finite results. Raises when no state survives.
    The caller swaps the two buffers afterwards.
    """
    if heap_pre.size == 0:
        raise ConfigurationError("heap_pre is empty")
    points = np.asarray(division_points, dtype=np.int64)
    if heap_pre.n_tracked != points.shape[0] or heap_total.n_tracked != points.shape[0]:
        raise ConfigurationError("heap buffers do not track the given division points")
    heap_total.clear()
    heap_total.size = int(
        kernels.beam_step_kernel(
            heap_pre.prob,
            heap_pre.state,
            heap_pre.mid,
            heap_pre.size,
            heap_total.prob,
            heap_total.state,
            heap_total.mid,
            heap_total.capacity,
            model.log_transition_t,
            model.log_emission_t[obs.symbols[t]],
            points,
            t,
        )
    )
    if heap_total.size == 0:
        raise BeamExhaustedError(f"beam collapsed at timestep {t}")
    return heap_total


def relative_error(opt_ll: float, beam_ll: float) -> float:
    """Log-likelihood gap of a beam path relative to the exact optimum."""
    if not np.isfinite(opt_ll) or opt_ll == 0.0:
        raise ValueError(
            f"relative error undefined for optimal log-likelihood {opt_ll}; "
            "report the absolute gap instead"
        )
    return abs(opt_ll - beam_ll) / abs(opt_ll)


@dataclass
class BeamDiagnostics:
    """Counters surfaced in reports; nonzero inexact_traceback flags a run
    whose subtask endpoint fell out of the final beam (fallback traceback)."""

    inexact_traceback: int = 0


class _BeamContext:
    """A worker's double-buffered heap pair plus its diagnostic counters."""

    def __init__(self, capacity: int, n_tracked: int, meter: Meter):
        self._meter = meter
        self._bytes = 2 * capacity * element_bytes(n_tracked)
        meter.alloc("heap_elements", self._bytes)
        self.front = BeamHeap(capacity, n_tracked)
        self.back = BeamHeap(capacity, n_tracked)
        self.inexact = 0

    def release(self) -> None:
        self._meter.free("heap_elements", self._bytes)


def _beam_segment(
    model: HmmModel,
    obs: ObservationSequence,
    t_start: int,
    t_end: int,
    q_prev: int | None,
    points: list[int],
    ctx: _BeamContext,
    meter: Meter,
) -> BeamHeap:
    """Run the beam over one segment; returns the final heap buffer."""
    k = model.num_states
    em_t = model.log_emission_t
    x = obs.symbols
    pre, total = ctx.front, ctx.back
    pre.clear()

    if t_start == 0:
        cand = model.log_initial + em_t[x[0]]
    else:
        cand = model.log_transition[q_prev] + em_t[x[t_start]]
    meter.add_updates(k)
    pre.size = int(kernels.heap_fill(pre.prob, pre.state, pre.mid, pre.capacity, cand))
    if pre.size == 0:
        if t_start == 0:
            raise InfeasibleDecodeError("no state sequence has positive probability")
        raise BeamExhaustedError(f"beam collapsed at timestep {t_start}")

    for t in range(t_start + 1, t_end + 1):
        meter.add_updates(pre.size * k)
        beam_step(model, obs, t, pre, total, points)
        pre, total = total, pre
    return pre


def flash_bs_decode(
    model: HmmModel,
    obs: ObservationSequence,
    parallelism: int = 1,
    beam_width: int | None = None,
    meter: Meter | None = None,
    diagnostics: BeamDiagnostics | None = None,
) -> DecodedPath:
    """Divide-and-conquer decode with dynamic beam search subtasks.

    Same scheduling as the exact decoder with the DP scratch replaced by a
    dual-heap pair per worker. Subtask traceback selects the heap element
    matching the known endpoint state; if pruning evicted it, the run falls
    back to the best retained element and counts an inexact traceback in
    ``diagnostics``. At B = K the result is identical to the exact decoder.
    """
    meter = as_meter(meter)
    obs.check_against(model)
    seq_len = len(obs)
    k = model.num_states
    if beam_width is None or not (1 <= beam_width <= k):
        raise ConfigurationError(f"beam width must be in [1, {k}], got {beam_width}")
    if not (1 <= parallelism <= seq_len):
        raise ConfigurationError(
            f"parallelism must be in [1, {seq_len}], got {parallelism}"
        )
    diag = diagnostics if diagnostics is not None else BeamDiagnostics()
    points = _division_points(seq_len, parallelism)

    init_ctx = _BeamContext(beam_width, len(points), meter)
    try:
        final = _beam_segment(model, obs, 0, seq_len - 1, None, points, init_ctx, meter)
        slot = final.best_slot()
        q_final = int(final.state[slot])
        point_states = [int(final.mid[slot, j]) for j in range(len(points))]
    finally:
        init_ctx.release()

    board = OutputBoard(seq_len, threadsafe=parallelism > 1)
    board.write(seq_len - 1, q_final)
    for d, s in zip(points, point_states):
        board.write(d, s)

    segments = _initial_segments(seq_len, points)

    def make_context():
        return _BeamContext(beam_width, 1, meter)

    def run(ctx, spec, q_prev, q_end):
        heap = _beam_segment(
            model, obs, spec.t_start, spec.t_end, q_prev, [spec.t_mid], ctx, meter
        )
        slot = heap.find_state(q_end)
        if slot < 0:
            ctx.inexact += 1
            slot = heap.best_slot()
        return int(heap.mid[slot, 0])

    contexts = run_schedule(board, segments, parallelism, meter, make_context, run)
    diag.inexact_traceback += sum(ctx.inexact for ctx in contexts)
    states = board.states.copy()
    return DecodedPath(states=states, log_likelihood=path_score(model, obs, states))
