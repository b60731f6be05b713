"""Hidden Markov model representation, random generation, and serialization.

All probabilities live in natural-log space with ``-inf`` marking absent
edges / zero-probability entries. Models are dense K x K / K x M arrays and
are frozen (read-only numpy buffers) after construction so they can be shared
across decoder worker threads without copying.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, ModelFormatError

NEG_INF = float("-inf")

# Tolerance for "rows are normalized" checks (logsumexp of a row vs. 0).
NORMALIZATION_TOL = 1e-9

_U64 = (1 << 64) - 1


def _logsumexp(row: np.ndarray) -> float:
    m = float(np.max(row))
    if m == NEG_INF:
        return NEG_INF
    return m + math.log(float(np.sum(np.exp(row - m))))


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass
class HmmModel:
    """Log-domain (initial, transition, emission) triplet.

    Invariants (checked by :meth:`validate`, which runs on construction):
    the initial vector and every emission row are normalized distributions;
    every transition row with at least one finite entry is normalized; and
    every state has at least one finite outgoing transition.
    """

    num_states: int
    num_symbols: int
    log_initial: np.ndarray
    log_transition: np.ndarray
    log_emission: np.ndarray

    def __post_init__(self):
        self.log_initial = _freeze(self.log_initial)
        self.log_transition = _freeze(self.log_transition)
        self.log_emission = _freeze(self.log_emission)
        self.validate()

    def validate(self) -> None:
        k, m = self.num_states, self.num_symbols
        if not (isinstance(k, int) and k >= 1):
            raise ModelFormatError(f"num_states must be >= 1, got {k!r}", field="num_states")
        if not (isinstance(m, int) and m >= 1):
            raise ModelFormatError(f"num_symbols must be >= 1, got {m!r}", field="num_symbols")
        if self.log_initial.shape != (k,):
            raise ModelFormatError(
                f"log_initial must have shape ({k},), got {self.log_initial.shape}",
                field="log_initial",
            )
        if self.log_transition.shape != (k, k):
            raise ModelFormatError(
                f"log_transition must have shape ({k},{k}), got {self.log_transition.shape}",
                field="log_transition",
            )
        if self.log_emission.shape != (k, m):
            raise ModelFormatError(
                f"log_emission must have shape ({k},{m}), got {self.log_emission.shape}",
                field="log_emission",
            )
        for name, arr in (
            ("log_initial", self.log_initial),
            ("log_transition", self.log_transition),
            ("log_emission", self.log_emission),
        ):
            if np.any(np.isnan(arr)) or np.any(arr == np.inf):
                raise ModelFormatError(f"{name} contains NaN or +inf entries", field=name)

        if abs(_logsumexp(self.log_initial)) > NORMALIZATION_TOL:
            raise ModelFormatError("log_initial is not normalized", field="log_initial")
        for i in range(k):
            row = self.log_transition[i]
            if not np.any(np.isfinite(row)):
                raise ModelFormatError(
                    f"state {i} has no outgoing transition", field="log_transition"
                )
            if abs(_logsumexp(row)) > NORMALIZATION_TOL:
                raise ModelFormatError(
                    f"log_transition row {i} is not normalized", field="log_transition"
                )
            if abs(_logsumexp(self.log_emission[i])) > NORMALIZATION_TOL:
                raise ModelFormatError(
                    f"log_emission row {i} is not normalized", field="log_emission"
                )

    @cached_property
    def log_transition_t(self) -> np.ndarray:
        """Transposed transitions, row ``i`` holding log A[., i] contiguously."""
        return _freeze(self.log_transition.T)

    @cached_property
    def log_emission_t(self) -> np.ndarray:
        """Transposed emissions, row ``o`` holding log B[., o] contiguously."""
        return _freeze(self.log_emission.T)


@dataclass(frozen=True)
class ObservationSequence:
    """Length-T sequence of symbol indices in ``[0, num_symbols)``."""

    symbols: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.symbols, dtype=np.int32)
        if arr.ndim != 1 or arr.shape[0] < 1:
            raise ModelFormatError("symbols must be a non-empty 1-d sequence", field="symbols")
        if np.any(arr < 0):
            raise ModelFormatError("symbols must be non-negative", field="symbols")
        arr.setflags(write=False)
        object.__setattr__(self, "symbols", arr)

    def __len__(self) -> int:
        return int(self.symbols.shape[0])

    def check_against(self, model: HmmModel) -> None:
        if int(self.symbols.max()) >= model.num_symbols:
            raise ModelFormatError(
                "observation symbol out of range for the model", field="symbols"
            )


@dataclass(frozen=True)
class GeneratorConfig:
    """Parameters for Erdos-Renyi HMM synthesis."""

    num_states: int
    num_symbols: int
    seq_len: int
    edge_prob: float
    seed: int

    def __post_init__(self):
        if self.num_states < 1 or self.num_symbols < 1 or self.seq_len < 1:
            raise ConfigurationError("num_states, num_symbols, and seq_len must all be >= 1")
        if not (0.0 < self.edge_prob <= 1.0):
            raise ConfigurationError(f"edge_prob must be in (0, 1], got {self.edge_prob}")


def _log_normalize_rows(weights: np.ndarray) -> np.ndarray:
    probs = weights / weights.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore"):
        return np.log(probs)


def _er_structure(config: GeneratorConfig):
    """Draw the edge mask, weights, and fallback self-loop rows for a config.

    Split out of :func:`generate_er_hmm` so tests can distinguish sampled
    edges from fallback self-loops when checking the edge-density statistic.
    """
    rng = np.random.default_rng(config.seed & _U64)
    k = config.num_states
    edge_mask = rng.random((k, k)) < config.edge_prob
    weights = rng.random((k, k))
    fallback_rows = np.flatnonzero(~edge_mask.any(axis=1))
    return rng, edge_mask, weights, fallback_rows


def generate_er_hmm(config: GeneratorConfig) -> HmmModel:
    """Build a random HMM on a directed Erdos-Renyi transition graph.

    Each ordered state pair gets an edge with probability ``edge_prob``;
    present edges take i.i.d. Uniform(0,1) weights, rows are normalized
    before taking logs. A row that drew no edges gets a self-loop first so
    every state keeps at least one outgoing transition. The initial vector
    and emission rows are normalized positive random vectors. Deterministic
    per seed.
    """
    rng, edge_mask, weights, fallback_rows = _er_structure(config)
    k, m = config.num_states, config.num_symbols
    edge_mask = edge_mask.copy()
    edge_mask[fallback_rows, fallback_rows] = True
    log_transition = _log_normalize_rows(np.where(edge_mask, weights, 0.0))
    log_initial = _log_normalize_rows(rng.random(k))
    log_emission = _log_normalize_rows(rng.random((k, m)))
    return HmmModel(
        num_states=k,
        num_symbols=m,
        log_initial=log_initial,
        log_transition=log_transition,
        log_emission=log_emission,
    )


def sample_observations(model: HmmModel, seq_len: int, seed: int) -> ObservationSequence:
    """Sample a length-T observation sequence by simulating the chain."""
    if seq_len < 1:
        raise ConfigurationError(f"seq_len must be >= 1, got {seq_len}")
    rng = np.random.default_rng(seed & _U64)
    cum_initial = np.cumsum(np.exp(model.log_initial))
    cum_transition = np.cumsum(np.exp(model.log_transition), axis=1)
    cum_emission = np.cumsum(np.exp(model.log_emission), axis=1)
    last_state = model.num_states - 1
    last_symbol = model.num_symbols - 1

    symbols = np.empty(seq_len, dtype=np.int32)
    state = min(int(np.searchsorted(cum_initial, rng.random(), side="right")), last_state)
    for t in range(seq_len):
        symbols[t] = min(
            int(np.searchsorted(cum_emission[state], rng.random(), side="right")), last_symbol
        )
        if t + 1 < seq_len:
            state = min(
                int(np.searchsorted(cum_transition[state], rng.random(), side="right")),
                last_state,
            )
    return ObservationSequence(symbols=symbols)


# ---------------------------------------------------------------------------
# Serialization. Model files are JSON with -inf encoded as the string "-inf";
# finite floats round-trip exactly (json emits shortest repr).
# ---------------------------------------------------------------------------

MODEL_FILE_VERSION = 1


def _encode_row(row: np.ndarray) -> list:
    return [v if v != NEG_INF else "-inf" for v in row.tolist()]


def _decode_row(raw, field: str, length: int) -> np.ndarray:
    if not isinstance(raw, list) or len(raw) != length:
        raise ModelFormatError(f"{field} must be a list of {length} entries", field=field)
    out = np.empty(len(raw), dtype=np.float64)
    for j, v in enumerate(raw):
        if v == "-inf":
            out[j] = NEG_INF
        elif isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v):
            out[j] = float(v)
        else:
            raise ModelFormatError(f"{field} entry {j} is not a finite number or '-inf'", field=field)
    return out


def _decode_matrix(raw, field: str, rows: int, cols: int) -> np.ndarray:
    if not isinstance(raw, list) or len(raw) != rows:
        raise ModelFormatError(f"{field} must be a list of {rows} rows", field=field)
    return np.stack([_decode_row(r, field, cols) for r in raw])


def save_model(model: HmmModel, path) -> None:
    doc = {
        "version": MODEL_FILE_VERSION,
        "num_states": model.num_states,
        "num_symbols": model.num_symbols,
        "log_initial": _encode_row(model.log_initial),
        "log_transition": [_encode_row(r) for r in model.log_transition],
        "log_emission": [_encode_row(r) for r in model.log_emission],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> HmmModel:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"model file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError("model file must contain a JSON object")
    if doc.get("version") != MODEL_FILE_VERSION:
        raise ModelFormatError(f"unsupported model file version {doc.get('version')!r}", field="version")
    for name in ("num_states", "num_symbols"):
        v = doc.get(name)
        if not isinstance(v, int) or isinstance(v, bool) or v < 1:
            raise ModelFormatError(f"{name} must be a positive integer", field=name)
    k, m = doc["num_states"], doc["num_symbols"]
    return HmmModel(
        num_states=k,
        num_symbols=m,
        log_initial=_decode_row(doc.get("log_initial"), "log_initial", k),
        log_transition=_decode_matrix(doc.get("log_transition"), "log_transition", k, k),
        log_emission=_decode_matrix(doc.get("log_emission"), "log_emission", k, m),
    )


def save_observations(obs: ObservationSequence, path) -> None:
    with open(path, "w") as fh:
        json.dump({"symbols": obs.symbols.tolist()}, fh)


def load_observations(path) -> ObservationSequence:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"observation file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "symbols" not in doc:
        raise ModelFormatError("observation file must be an object with a 'symbols' field", field="symbols")
    raw = doc["symbols"]
    if not isinstance(raw, list) or not all(
        isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in raw
    ):
        raise ModelFormatError("symbols must be a list of non-negative integers", field="symbols")
    return ObservationSequence(symbols=np.asarray(raw, dtype=np.int32))
