"""Logical memory accounting and timing.

Memory claims are tested against deterministic logical byte counts, not
allocator-dependent RSS: 8 bytes per log-probability slot, 4 per state-index
slot, 8 per pending queue entry, a flat 64-byte charge per live recursion
frame. The model, observation sequence, and final output path are shared by
all algorithms and are excluded from the tracked categories.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass

from .errors import ConfigurationError

PROB_BYTES = 8
STATE_BYTES = 4
QUEUE_ENTRY_BYTES = 8
RECURSION_FRAME_BYTES = 64

CATEGORIES = (
    "scratch_prob",
    "scratch_state",
    "heap_elements",
    "queue_bytes",
    "recursion_bytes",
    "checkpoint_bytes",
    "psi_table_bytes",
)


@dataclass(frozen=True)
class MemoryReport:
    """Peak logical bytes per category plus the peak of their running sum."""

    scratch_prob: int = 0
    scratch_state: int = 0
    heap_elements: int = 0
    queue_bytes: int = 0
    recursion_bytes: int = 0
    checkpoint_bytes: int = 0
    psi_table_bytes: int = 0
    peak_total: int = 0

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in CATEGORIES + ("peak_total",)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class TimingReport:
    wall_seconds: float
    dp_cell_updates: int

    def to_dict(self) -> dict:
        return {"wall_seconds": self.wall_seconds, "dp_cell_updates": self.dp_cell_updates}


class Meter:
    """Counting facade the decoders route their tracked allocations through.

    Safe for concurrent workers; the peak total is refreshed from a category
    sum snapshot at every allocation event.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._current = dict.fromkeys(CATEGORIES, 0)
        self._peak = dict.fromkeys(CATEGORIES, 0)
        self._peak_total = 0
        self._updates = 0
        self._depth = 0

    def alloc(self, category: str, nbytes: int) -> None:
        with self._lock:
            cur = self._current[category] + nbytes
            self._current[category] = cur
            if cur > self._peak[category]:
                self._peak[category] = cur
            total = sum(self._current.values())
            if total > self._peak_total:
                self._peak_total = total

    def free(self, category: str, nbytes: int) -> None:
        with self._lock:
            self._current[category] -= nbytes

    def enter_frame(self) -> None:
        self._depth += 1
        self.alloc("recursion_bytes", RECURSION_FRAME_BYTES)

    def exit_frame(self) -> None:
        self._depth -= 1
        self.free("recursion_bytes", RECURSION_FRAME_BYTES)

    @property
    def max_recursion_depth(self) -> int:
        return self._peak["recursion_bytes"] // RECURSION_FRAME_BYTES

    def add_updates(self, n: int) -> None:
        with self._lock:
            self._updates += n

    @property
    def dp_cell_updates(self) -> int:
        return self._updates

    def report(self) -> MemoryReport:
        with self._lock:
            return MemoryReport(peak_total=self._peak_total, **self._peak)


class _NullMeter(Meter):
    """No-op meter used when a decoder runs unmetered."""

    def alloc(self, category, nbytes):
        pass

    def free(self, category, nbytes):
        pass

    def enter_frame(self):
        pass

    def exit_frame(self):
        pass

    def add_updates(self, n):
        pass


NULL_METER = _NullMeter()


def as_meter(meter: Meter | None) -> Meter:
    return NULL_METER if meter is None else meter


ALGORITHMS = ("vanilla", "checkpoint", "sieve-mp", "static-bs", "flash", "flash-bs")
_BEAM_ALGOS = ("static-bs", "flash-bs")
_PARALLEL_ALGOS = ("flash", "flash-bs")


def metered_run(
    algo: str,
    model,
    obs,
    *,
    parallelism: int = 1,
    beam_width: int | None = None,
    diagnostics=None,
):
    """Decode with a fresh meter; returns (path, MemoryReport, TimingReport).

    Wall time covers the decode only. Decoder errors propagate with the
    partial reports attached as ``memory_report`` / ``timing_report``.
    """
    from . import baselines, beam, flash, oracle

    if algo not in ALGORITHMS:
        raise ConfigurationError(f"unknown algorithm {algo!r}")
    if beam_width is not None and algo not in _BEAM_ALGOS:
        raise ConfigurationError(f"{algo} does not take a beam width")
    if beam_width is None and algo in _BEAM_ALGOS:
        raise ConfigurationError(f"{algo} requires a beam width")
    if parallelism != 1 and algo not in _PARALLEL_ALGOS:
        raise ConfigurationError(f"{algo} does not take a parallelism degree")

    meter = Meter()
    start = time.perf_counter()
    try:
        if algo == "vanilla":
            path = oracle.vanilla_viterbi(model, obs, meter=meter)
        elif algo == "checkpoint":
            path = baselines.checkpoint_viterbi(model, obs, meter=meter)
        elif algo == "sieve-mp":
            path = baselines.sieve_mp_decode(model, obs, meter=meter)
        elif algo == "static-bs":
            path = baselines.static_beam_decode(model, obs, beam_width, meter=meter)
        elif algo == "flash":
            path = flash.flash_decode(model, obs, parallelism=parallelism, meter=meter)
        else:
            path = beam.flash_bs_decode(
                model,
                obs,
                parallelism=parallelism,
                beam_width=beam_width,
                meter=meter,
                diagnostics=diagnostics,
            )
    except Exception as exc:
        wall = time.perf_counter() - start
        exc.memory_report = meter.report()
        exc.timing_report = TimingReport(wall_seconds=wall, dp_cell_updates=meter.dp_cell_updates)
        raise
    wall = time.perf_counter() - start
    return (
        path,
        meter.report(),
        TimingReport(wall_seconds=wall, dp_cell_updates=meter.dp_cell_updates),
    )
