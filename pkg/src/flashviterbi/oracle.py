"""Ground-truth decoders: textbook Viterbi and exhaustive enumeration.

Both serve as baselines and as correctness oracles for every other decoder
in the package. They share the global tie-break rule (every argmax resolves
to the lowest state index), which makes all decoders path-deterministic and
mutually comparable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigurationError, InfeasibleDecodeError
from .metering import PROB_BYTES, STATE_BYTES, Meter, as_meter
from .model import NEG_INF, HmmModel, ObservationSequence

BRUTE_FORCE_CAP = 1_000_000


@dataclass(frozen=True)
class DecodedPath:
    """A length-T state sequence and its path log-likelihood."""

    states: np.ndarray
    log_likelihood: float

    def __post_init__(self):
        arr = np.ascontiguousarray(self.states, dtype=np.int32)
        arr.setflags(write=False)
        object.__setattr__(self, "states", arr)

    def __len__(self) -> int:
        return int(self.states.shape[0])


def path_score(model: HmmModel, obs: ObservationSequence, states) -> float:
    """Log-likelihood of one state sequence: log pi + sum log B + sum log A.

    Returns -inf when any factor along the path is absent.
    """
    s = np.asarray(states, dtype=np.int64)
    x = obs.symbols
    if s.shape[0] != x.shape[0]:
        raise ConfigurationError("path length does not match observation length")
    total = float(model.log_initial[s[0]]) + float(np.sum(model.log_emission[s, x]))
    if s.shape[0] > 1:
        total += float(np.sum(model.log_transition[s[:-1], s[1:]]))
    return total


def vanilla_viterbi(model: HmmModel, obs: ObservationSequence, meter: Meter | None = None) -> DecodedPath:
    """Standard Viterbi with the full backpointer table retained.

    Deliberately keeps the K x T psi table (this decoder doubles as the
    memory baseline) and a double-buffered score column pair.
    """
    meter = as_meter(meter)
    obs.check_against(model)
    k = model.num_states
    seq_len = len(obs)
    trans_t = model.log_transition_t
    em_t = model.log_emission_t
    x = obs.symbols

    meter.alloc("scratch_prob", 2 * k * PROB_BYTES)
    meter.alloc("psi_table_bytes", k * seq_len * STATE_BYTES)
    delta = np.empty(k, dtype=np.float64)
    delta_next = np.empty(k, dtype=np.float64)
    psi = np.zeros((seq_len, k), dtype=np.int32)

    np.add(model.log_initial, em_t[x[0]], out=delta)
    meter.add_updates(k)
    for t in range(1, seq_len):
        kernels.dp_step(delta, trans_t, em_t[x[t]], delta_next, psi[t])
        meter.add_updates(k * k)
        delta, delta_next = delta_next, delta

    q = int(np.argmax(delta))
    if delta[q] == NEG_INF:
        meter.free("scratch_prob", 2 * k * PROB_BYTES)
        meter.free("psi_table_bytes", k * seq_len * STATE_BYTES)
        raise InfeasibleDecodeError("no state sequence has positive probability")

    states = np.empty(seq_len, dtype=np.int32)
    states[seq_len - 1] = q
    for t in range(seq_len - 1, 0, -1):
        q = int(psi[t, q])
        states[t - 1] = q

    meter.free("scratch_prob", 2 * k * PROB_BYTES)
    meter.free("psi_table_bytes", k * seq_len * STATE_BYTES)
    return DecodedPath(states=states, log_likelihood=path_score(model, obs, states))


def brute_force_decode(
    model: HmmModel,
    obs: ObservationSequence,
    enumeration_cap: int = BRUTE_FORCE_CAP,
) -> DecodedPath:
    """Score every one of the K**T state sequences and take the best.

    The argmax over the lexicographically ordered enumeration picks the
    lexicographically smallest path among exact score ties, consistent with
    the lowest-index argmax rule of the DP decoders. Refuses when K**T
    exceeds the cap.
    """
    obs.check_against(model)
    k = model.num_states
    seq_len = len(obs)
    total = k**seq_len
    if total > enumeration_cap:
        raise ConfigurationError(
            f"exhaustive enumeration of {total} paths exceeds the cap {enumeration_cap}"
        )
    x = obs.symbols
    idx = np.arange(total, dtype=np.int64)

    prev_col = (idx // k ** (seq_len - 1)) % k
    scores = model.log_initial[prev_col] + model.log_emission[prev_col, x[0]]
    for t in range(1, seq_len):
        col = (idx // k ** (seq_len - 1 - t)) % k
        scores = scores + model.log_transition[prev_col, col] + model.log_emission[col, x[t]]
        prev_col = col

    best = int(np.argmax(scores))
    if scores[best] == NEG_INF:
        raise InfeasibleDecodeError("no state sequence has positive probability")
    states = np.empty(seq_len, dtype=np.int32)
    rem = best
    for t in range(seq_len - 1, -1, -1):
        states[t] = rem % k
        rem //= k
    return DecodedPath(states=states, log_likelihood=path_score(model, obs, states))
