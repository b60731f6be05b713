import numpy as np
import pytest

from flashviterbi import (
    GeneratorConfig,
    HmmModel,
    ObservationSequence,
    generate_er_hmm,
    sample_observations,
)

def build_model(initial, transition, emission):
    initial = np.asarray(initial, dtype=np.float64)
    transition = np.asarray(transition, dtype=np.float64)
    emission = np.asarray(emission, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return HmmModel(
            num_states=transition.shape[0],
            num_symbols=emission.shape[1],
            log_initial=np.log(initial),
            log_transition=np.log(transition),
            log_emission=np.log(emission),
        )


@pytest.fixture
def h2_model():
    """Two-state reference model used in worked examples."""
    return build_model(
        [0.6, 0.4],
        [[0.7, 0.3], [0.4, 0.6]],
        [[0.9, 0.1], [0.2, 0.8]],
    )


@pytest.fixture
def identity_model():
    """Deterministic dynamics: starts in state 0, stays there, emits its index."""
    return build_model([1.0, 0.0], np.eye(2), np.eye(2))


def make_instance(num_states, seq_len, edge_prob, seed, num_symbols=4):
    config = GeneratorConfig(
        num_states=num_states,
        num_symbols=num_symbols,
        seq_len=seq_len,
        edge_prob=edge_prob,
        seed=seed,
    )
    model = generate_er_hmm(config)
    obs = sample_observations(model, seq_len, seed + 1)
    return model, obs


def random_instances(count, rng, k_range=(2, 8), t_range=(2, 16), p_choices=(0.1, 0.3, 1.0)):
    """Yield (model, obs) pairs drawn uniformly from the given ranges."""
    for _ in range(count):
        k = int(rng.integers(k_range[0], k_range[1] + 1))
        t = int(rng.integers(t_range[0], t_range[1] + 1))
        p = float(rng.choice(p_choices))
        yield make_instance(k, t, p, int(rng.integers(0, 2**62)))


def obs_of(symbols):
    return ObservationSequence(symbols=np.asarray(symbols, dtype=np.int32))


def beam_trap_model():
    """B=1 keeps state 0 at t=0, but state 0 only reaches state 1, which
    cannot emit the second symbol; exact decoding goes through state 1."""
    return build_model(
        [0.9, 0.1],
        [[0.0, 1.0], [0.5, 0.5]],
        [[0.5, 0.5], [1.0, 0.0]],
    )


def strict_backtrack_margin(model, obs, margin=1e-9):
    """True when every argmax along the optimal backtrack wins by > margin.

    Independent numpy trellis (no shared code with the decoders). Instances
    failing this have exactly or nearly tied optimal paths; the divide-and-
    conquer tie-break is only guaranteed to reproduce the textbook path on
    tie-free instances, so path-identity tests filter on this predicate.
    Score assertions never need the filter.
    """
    transition = model.log_transition
    emission = model.log_emission
    x = obs.symbols
    deltas = [model.log_initial + emission[:, x[0]]]
    for t in range(1, len(obs)):
        cand = deltas[-1][:, None] + transition
        deltas.append(cand.max(axis=0) + emission[:, x[t]])

    def wins(scores, w):
        others = np.delete(scores, w)
        return others.size == 0 or scores[w] - others.max() > margin

    last = deltas[-1]
    if not np.any(np.isfinite(last)):
        return False
    q = int(np.argmax(last))
    if not wins(last, q):
        return False
    for t in range(len(obs) - 1, 0, -1):
        cand = deltas[t - 1] + transition[:, q]
        w = int(np.argmax(cand))
        if not wins(cand, w):
            return False
        q = w
    return True
