"""Non-recursive divide-and-conquer Viterbi with pruning and parallel workers.

The full sequence is decoded once by an initial task that emits the final
state plus the states at a set of division points, after which a FIFO task
queue drives midpoint subtasks. A subtask starting at timestep m >= 1 keeps
only the transitions out of the already-known optimal state at m-1 and drops
that state's accumulated score entirely (a constant shift that cannot change
any argmax), which removes every cross-subtask data dependency: any number of
workers may process the queue concurrently and the output is identical to the
serial order and to textbook Viterbi.

Termination is "output board full" (every timestep written exactly once);
the queue's enqueue counter is kept only as a diagnostic.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigurationError, InfeasibleDecodeError, InternalConsistencyError
from .metering import PROB_BYTES, QUEUE_ENTRY_BYTES, STATE_BYTES, Meter, as_meter
from .model import NEG_INF, HmmModel, ObservationSequence
from .oracle import DecodedPath, path_score

UNSET = -1


@dataclass(frozen=True)
class SubtaskSpec:
    """Half-open unit of scheduling: decode [t_start, t_end], emit t_mid."""

    t_start: int
    t_end: int

    def __post_init__(self):
        if not (0 <= self.t_start <= self.t_end):
            raise ConfigurationError(f"invalid subtask ({self.t_start}, {self.t_end})")

    @property
    def t_mid(self) -> int:
        return (self.t_start + self.t_end) // 2

    def __len__(self) -> int:
        return self.t_end - self.t_start + 1


def subtask_children(spec: SubtaskSpec) -> list[SubtaskSpec]:
    """Bisection children that still contain undecoded timesteps.

    A child is spawned only when it spans >= 2 timesteps; this reproduces the
    enqueue rule (both children when the segment has more than 3 timesteps,
    only the left one at exactly 3 because the right child would share its
    parent's midpoint, none below that).
    """
    mid = spec.t_mid
    out = []
    if mid - spec.t_start + 1 >= 2:
        out.append(SubtaskSpec(spec.t_start, mid))
    if spec.t_end - mid >= 2:
        out.append(SubtaskSpec(mid + 1, spec.t_end))
    return out


class OutputBoard:
    """Length-T array of optimal-state slots, each written exactly once."""

    def __init__(self, length: int, threadsafe: bool = False):
        self.states = np.full(length, UNSET, dtype=np.int32)
        self.filled = 0
        self._lock = threading.Lock() if threadsafe else None

    def __len__(self) -> int:
        return int(self.states.shape[0])

    @property
    def is_full(self) -> bool:
        return self.filled == len(self)

    def read(self, t: int) -> int:
        return int(self.states[t])

    def write(self, t: int, state: int) -> bool:
        """Publish one slot; returns True when the board just became full."""
        if self._lock is None:
            return self._write(t, state)
        with self._lock:
            return self._write(t, state)

    def _write(self, t: int, state: int) -> bool:
        if self.states[t] != UNSET:
            raise InternalConsistencyError(f"output slot {t} written twice")
        self.states[t] = state
        self.filled += 1
        return self.filled == len(self)


class TaskQueue:
    """FIFO of subtasks; optionally thread-safe with a blocking dequeue.

    Wake-up is a broadcast after every enqueue / completion so idle workers
    re-check for work. ``total_enqueued`` is a diagnostic counter only;
    termination is decided by the output board, not by a task count.
    """

    def __init__(self, meter: Meter | None = None, threadsafe: bool = False):
        self._items: deque[SubtaskSpec] = deque()
        self._meter = as_meter(meter)
        self._cond = threading.Condition() if threadsafe else None
        self._closed = False
        self._in_flight = 0
        self.total_enqueued = 0

    def __len__(self) -> int:
        return len(self._items)

    def enqueue(self, spec: SubtaskSpec) -> None:
        if self._cond is not None:
            with self._cond:
                self._items.append(spec)
                self.total_enqueued += 1
                self._cond.notify_all()
        else:
            self._items.append(spec)
            self.total_enqueued += 1
        self._meter.alloc("queue_bytes", QUEUE_ENTRY_BYTES)

    def dequeue(self) -> SubtaskSpec | None:
        """Non-blocking pop for the serial path."""
        if not self._items:
            return None
        self._meter.free("queue_bytes", QUEUE_ENTRY_BYTES)
        return self._items.popleft()

    def dequeue_blocking(self) -> SubtaskSpec | None:
        """Wait for a task; None means the queue was closed (decode done)."""
        with self._cond:
            while True:
                if self._closed:
                    return None
                if self._items:
                    self._in_flight += 1
                    return self._items.popleft()
                if self._in_flight == 0:
                    # nothing queued, nothing running, board not full:
                    # unreachable unless the task tree lost coverage
                    self._closed = True
                    self._cond.notify_all()
                    return None
                self._cond.wait()

    def task_done(self) -> None:
        with self._cond:
            self._in_flight -= 1
            self._cond.notify_all()

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()


def plan_segments(seq_len: int, parallelism: int) -> list[int]:
    """Interior boundaries of a split into ``parallelism`` near-equal segments.

    Segment lengths differ by at most one (the first T mod P segments are one
    longer); returns the last index of every segment except the final one.
    """
    if not (1 <= parallelism <= seq_len):
        raise ConfigurationError(
            f"parallelism must be in [1, {seq_len}], got {parallelism}"
        )
    base, rem = divmod(seq_len, parallelism)
    boundaries = []
    pos = 0
    for i in range(parallelism - 1):
        pos += base + (1 if i < rem else 0)
        boundaries.append(pos - 1)
    return boundaries


def _division_points(seq_len: int, parallelism: int) -> list[int]:
    # P = 1 falls back to pure bisection: the initial task is the top
    # bisection node and tracks the global midpoint.
    if parallelism == 1:
        return [] if seq_len < 2 else [(seq_len - 1) // 2]
    return plan_segments(seq_len, parallelism)


def _initial_segments(seq_len: int, points: list[int]) -> list[SubtaskSpec]:
    bounds = [-1] + list(points) + [seq_len - 1]
    out = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if hi - (lo + 1) >= 1:  # length-1 segments are already on the board
            out.append(SubtaskSpec(lo + 1, hi))
    return out


class _Scratch:
    """Per-worker DP buffers, allocated once and reused across subtasks."""

    def __init__(self, num_states: int, n_tracked: int, meter: Meter):
        self._meter = meter
        self._prob_bytes = 2 * num_states * PROB_BYTES
        self._state_bytes = (1 + n_tracked) * num_states * STATE_BYTES
        meter.alloc("scratch_prob", self._prob_bytes)
        meter.alloc("scratch_state", self._state_bytes)
        self.delta = np.empty(num_states, dtype=np.float64)
        self.delta_next = np.empty(num_states, dtype=np.float64)
        self.pre = np.empty(num_states, dtype=np.int32)
        self.mids = np.full((n_tracked, num_states), UNSET, dtype=np.int32)

    def release(self) -> None:
        self._meter.free("scratch_prob", self._prob_bytes)
        self._meter.free("scratch_state", self._state_bytes)


def decode_initial_task(
    model: HmmModel,
    obs: ObservationSequence,
    division_points: list[int],
    meter: Meter | None = None,
    scratch: _Scratch | None = None,
) -> tuple[int, list[int]]:
    """Full-sequence DP emitting the final state and each division point.

    One tracked state array per division point, updated by the standard rule
    (copy the predecessor column right after the point, compose through it
    afterwards). Working set is independent of T.
    """
    meter = as_meter(meter)
    seq_len = len(obs)
    points = sorted(division_points)
    if any(not 0 <= d < seq_len - 1 for d in points):
        raise ConfigurationError(f"division points {points} outside [0, {seq_len - 1})")
    k = model.num_states
    own_scratch = scratch is None
    if own_scratch:
        scratch = _Scratch(k, len(points), meter)
    trans_t = model.log_transition_t
    em_t = model.log_emission_t
    x = obs.symbols

    cur, nxt, pre, mids = scratch.delta, scratch.delta_next, scratch.pre, scratch.mids
    mids[:] = UNSET
    np.add(model.log_initial, em_t[x[0]], out=cur)
    meter.add_updates(k)
    for t in range(1, seq_len):
        kernels.dp_step(cur, trans_t, em_t[x[t]], nxt, pre)
        meter.add_updates(k * k)
        cur, nxt = nxt, cur
        for j, d in enumerate(points):
            if t == d + 1:
                mids[j, :] = pre
            elif t > d + 1:
                mids[j, :] = mids[j, pre]

    q_final = int(np.argmax(cur))
    feasible = cur[q_final] != NEG_INF
    point_states = [int(mids[j, q_final]) for j in range(len(points))]
    if own_scratch:
        scratch.release()
    if not feasible:
        raise InfeasibleDecodeError("no state sequence has positive probability")
    return q_final, point_states


def decode_subtask(
    model: HmmModel,
    obs: ObservationSequence,
    t_start: int,
    t_end: int,
    q_prev: int | None,
    q_end: int,
    meter: Meter | None = None,
    scratch: _Scratch | None = None,
) -> int:
    """Decode one segment given its boundary states; return the midpoint state.

    For t_start >= 1 the score column is initialized from ``q_prev`` alone
    with the boundary log-probability dropped (pruned initialization), so the
    subtask reads nothing produced by any sibling. t_start = 0 uses the
    initial-distribution base case and takes ``q_prev=None``.
    """
    meter = as_meter(meter)
    if t_end - t_start < 1:
        raise ConfigurationError("subtask must span at least two timesteps")
    if (q_prev is None) != (t_start == 0):
        raise ConfigurationError("q_prev must be given exactly when t_start >= 1")
    k = model.num_states
    if not 0 <= q_end < k or (q_prev is not None and not 0 <= q_prev < k):
        raise ConfigurationError("boundary state out of range")
    own_scratch = scratch is None
    if own_scratch:
        scratch = _Scratch(k, 1, meter)
    trans_t = model.log_transition_t
    em_t = model.log_emission_t
    x = obs.symbols
    t_mid = (t_start + t_end) // 2

    cur, nxt, pre = scratch.delta, scratch.delta_next, scratch.pre
    mid = scratch.mids[0]
    mid[:] = UNSET
    if t_start == 0:
        np.add(model.log_initial, em_t[x[0]], out=cur)
    else:
        np.add(model.log_transition[q_prev], em_t[x[t_start]], out=cur)
    meter.add_updates(k)
    for t in range(t_start + 1, t_end + 1):
        kernels.dp_step(cur, trans_t, em_t[x[t]], nxt, pre)
        meter.add_updates(k * k)
        cur, nxt = nxt, cur
        if t == t_mid + 1:
            mid[:] = pre
        elif t > t_mid + 1:
            mid[:] = mid[pre]

    end_score = cur[q_end]
    result = int(mid[q_end])
    if own_scratch:
        scratch.release()
    if end_score == NEG_INF:
        raise InternalConsistencyError(
            f"boundary state {q_end} unreachable inside subtask ({t_start}, {t_end})"
        )
    return result


def _replay_queue_profile(meter: Meter, segments: list[SubtaskSpec]) -> None:
    """Charge the canonical FIFO enqueue/dequeue trajectory to the meter.

    Under preemptive threading the realtime pending depth is not reproducible,
    so queue bytes are accounted by replaying the schedule-independent task
    multiset in FIFO order (the order the serial path actually uses).
    """
    sim: deque[SubtaskSpec] = deque()
    for s in segments:
        sim.append(s)
        meter.alloc("queue_bytes", QUEUE_ENTRY_BYTES)
    while sim:
        spec = sim.popleft()
        meter.free("queue_bytes", QUEUE_ENTRY_BYTES)
        for child in subtask_children(spec):
            sim.append(child)
            meter.alloc("queue_bytes", QUEUE_ENTRY_BYTES)


def _process_one(board, queue, spec, ctx, run_subtask, subtask_hook, close_on_full):
    m, n = spec.t_start, spec.t_end
    q_prev = board.read(m - 1) if m > 0 else None
    q_end = board.read(n)
    if q_end == UNSET or (m > 0 and q_prev == UNSET):
        raise InternalConsistencyError(
            f"subtask ({m}, {n}) dequeued before its boundary states were published"
        )
    state = run_subtask(ctx, spec, q_prev, q_end)
    if subtask_hook is not None:
        subtask_hook(spec, state)
    full = board.write(spec.t_mid, state)
    if full:
        if close_on_full:
            queue.close()
        return
    for child in subtask_children(spec):
        queue.enqueue(child)


def run_schedule(
    board: OutputBoard,
    segments: list[SubtaskSpec],
    parallelism: int,
    meter: Meter,
    make_context,
    run_subtask,
    subtask_hook=None,
) -> list:
    """Drive the task queue with 1 or P workers; returns the worker contexts.

    The serial path takes no locks at all. In the threaded path all worker
    contexts are allocated up front (deterministic metering) and children are
    enqueued only after the parent's midpoint state is board-visible.
    """
    contexts = []
    if not segments:
        return contexts
    if parallelism == 1:
        queue = TaskQueue(meter=meter)
        for s in segments:
            queue.enqueue(s)
        ctx = make_context()
        contexts.append(ctx)
        try:
            while True:
                spec = queue.dequeue()
                if spec is None:
                    break
                _process_one(board, queue, spec, ctx, run_subtask, subtask_hook, False)
        finally:
            ctx.release()
        return contexts

    queue = TaskQueue(threadsafe=True)
    contexts = [make_context() for _ in range(parallelism)]
    _replay_queue_profile(meter, segments)
    for s in segments:
        queue.enqueue(s)
    errors: list[BaseException] = []

    def work(ctx):
        try:
            while True:
                spec = queue.dequeue_blocking()
                if spec is None:
                    return
                try:
                    _process_one(board, queue, spec, ctx, run_subtask, subtask_hook, True)
                finally:
                    queue.task_done()
        except BaseException as exc:  # propagate to the caller after join
            errors.append(exc)
            queue.close()

    threads = [
        threading.Thread(target=work, args=(ctx,), name=f"flash-worker-{i}")
        for i, ctx in enumerate(contexts)
    ]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    for ctx in contexts:
        ctx.release()
    if errors:
        raise errors[0]
    return contexts


def flash_decode(
    model: HmmModel,
    obs: ObservationSequence,
    parallelism: int = 1,
    meter: Meter | None = None,
    subtask_hook=None,
) -> DecodedPath:
    """Exact Viterbi decode via pruned non-recursive divide-and-conquer.

    The result is independent of the parallelism degree and of worker
    interleaving; the returned log-likelihood is recomputed from the final
    path. ``subtask_hook(spec, state)`` is a diagnostic callback invoked after
    every worker subtask (must be thread-safe when parallelism > 1).
    """
    meter = as_meter(meter)
    obs.check_against(model)
    seq_len = len(obs)
    if not (1 <= parallelism <= seq_len):
        raise ConfigurationError(
            f"parallelism must be in [1, {seq_len}], got {parallelism}"
        )
    k = model.num_states
    points = _division_points(seq_len, parallelism)

    init_scratch = _Scratch(k, len(points), meter)
    try:
        q_final, point_states = decode_initial_task(model, obs, points, meter, init_scratch)
    finally:
        init_scratch.release()

    board = OutputBoard(seq_len, threadsafe=parallelism > 1)
    board.write(seq_len - 1, q_final)
    for d, s in zip(points, point_states):
        board.write(d, s)

    segments = _initial_segments(seq_len, points)

    def make_context():
        return _Scratch(k, 1, meter)

    def run(ctx, spec, q_prev, q_end):
        return decode_subtask(
            model, obs, spec.t_start, spec.t_end, q_prev, q_end, meter, ctx
        )

    run_schedule(board, segments, parallelism, meter, make_context, run, subtask_hook)
    if not board.is_full:
        raise InternalConsistencyError("decode finished with unwritten output slots")
    states = board.states.copy()
    return DecodedPath(states=states, log_likelihood=path_score(model, obs, states))
