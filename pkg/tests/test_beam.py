import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flashviterbi import (
    BeamDiagnostics,
    BeamElement,
    BeamExhaustedError,
    BeamHeap,
    ConfigurationError,
    Meter,
    beam_push,
    beam_step,
    flash_bs_decode,
    flash_decode,
    relative_error,
    static_beam_decode,
    vanilla_viterbi,
)
from flashviterbi.beam import element_bytes
from flashviterbi.model import NEG_INF

from conftest import (
    beam_trap_model,
    make_instance,
    obs_of,
    random_instances,
    strict_backtrack_margin,
)


def elem(state, prob, mids=(-1,)):
    return BeamElement(state=state, opt_prob=prob, mid_states=np.asarray(mids, dtype=np.int32))


class TestBeamPush:
    def test_push_into_empty_heap(self):
        heap = BeamHeap(3)
        beam_push(heap, elem(5, -1.5))
        assert len(heap) == 1
        assert heap.root().state == 5
        assert heap.root().opt_prob == -1.5

    def test_capacity_eviction(self):
        heap = BeamHeap(2)
        beam_push(heap, elem(0, -1.0))
        beam_push(heap, elem(1, -2.0))
        beam_push(heap, elem(2, -0.5))
        assert sorted(heap.prob[: heap.size].tolist()) == [-1.0, -0.5]
        assert heap.root().opt_prob == -1.0

    def test_root_tie_keeps_incumbent(self):
        heap = BeamHeap(2)
        beam_push(heap, elem(0, -1.0))
        beam_push(heap, elem(1, -0.5))
        before = (heap.prob[: heap.size].copy(), heap.state[: heap.size].copy())
        beam_push(heap, elem(2, -1.0))
        assert np.array_equal(heap.prob[: heap.size], before[0])
        assert np.array_equal(heap.state[: heap.size], before[1])

    def test_rejects_non_finite(self):
        heap = BeamHeap(2)
        with pytest.raises(ConfigurationError):
            beam_push(heap, elem(0, NEG_INF))

    @settings(max_examples=200, deadline=None)
    @given(
        capacity=st.integers(1, 8),
        scores=st.lists(
            st.floats(-100, 0, allow_nan=False, allow_infinity=False), min_size=1, max_size=40
        ),
    )
    def test_retains_top_b_multiset_and_heap_property(self, capacity, scores):
        heap = BeamHeap(capacity)
        for i, score in enumerate(scores):
            beam_push(heap, elem(i, score))
            assert heap.satisfies_heap_property()
        want = sorted(scores, reverse=True)[: min(capacity, len(scores))]
        got = sorted(heap.prob[: heap.size].tolist(), reverse=True)
        assert got == pytest.approx(want, abs=0)


def reference_delta_columns(model, obs):
    """Independent full-width trellis used as the beam-step oracle."""
    columns = [model.log_initial + model.log_emission[:, obs.symbols[0]]]
    for t in range(1, len(obs)):
        cand = columns[-1][:, None] + model.log_transition
        columns.append(cand.max(axis=0) + model.log_emission[:, obs.symbols[t]])
    return columns


def seed_heap(heap, column):
    heap.clear()
    for state in np.flatnonzero(column > NEG_INF):
        beam_push(heap, elem(int(state), float(column[state]), [-1] * heap.n_tracked))
    return heap


class TestBeamStep:
    def test_full_width_equals_viterbi_columns(self):
        model, obs = make_instance(8, 16, 0.5, seed=20)
        columns = reference_delta_columns(model, obs)
        k = model.num_states
        pre, total = BeamHeap(k), BeamHeap(k)
        seed_heap(pre, columns[0])
        for t in range(1, len(obs)):
            total = beam_step(model, obs, t, pre, total, [7])
            want = np.sort(columns[t][columns[t] > NEG_INF])
            assert np.array_equal(total.scores(), want)
            pre, total = total, pre

    def test_retained_multiset_is_top_b_of_all_candidates(self):
        rng = np.random.default_rng(8)
        for model, obs in random_instances(20, rng, k_range=(3, 16), t_range=(4, 12)):
            k = model.num_states
            width = max(1, k // 2)
            pre, total = BeamHeap(width), BeamHeap(width)
            column = model.log_initial + model.log_emission[:, obs.symbols[0]]
            seed_heap(pre, np.where(top_b_mask(column, width), column, NEG_INF))
            for t in range(1, len(obs)):
                # recompute every candidate from the current beam contents
                probs = pre.prob[: pre.size]
                states = pre.state[: pre.size]
                cand = (probs[:, None] + model.log_transition[states, :]).max(axis=0)
                cand = cand + model.log_emission[:, obs.symbols[t]]
                finite = np.sort(cand[cand > NEG_INF])[::-1]
                if finite.size == 0:
                    with pytest.raises(BeamExhaustedError):
                        beam_step(model, obs, t, pre, total, [1])
                    break
                total = beam_step(model, obs, t, pre, total, [1])
                want = np.sort(finite[: min(width, finite.size)])
                assert np.array_equal(total.scores(), want)
                pre, total = total, pre

    def test_b1_matches_static_beam_trajectory(self):
        model, obs = make_instance(6, 24, 0.8, seed=33)
        trace = []
        static_beam_decode(model, obs, 1, retained_trace=trace)
        pre, total = BeamHeap(1), BeamHeap(1)
        column = model.log_initial + model.log_emission[:, obs.symbols[0]]
        beam_push(pre, elem(int(np.argmax(column)), float(column.max())))
        assert pre.state[0] == trace[0][0]
        for t in range(1, len(obs)):
            total = beam_step(model, obs, t, pre, total, [len(obs) // 2])
            pre, total = total, pre
            assert pre.state[0] == trace[t][0]

    def test_identity_model_forced_chain(self, identity_model):
        obs = obs_of([0, 0, 0, 0])
        pre, total = BeamHeap(1), BeamHeap(1)
        seed_heap(pre, identity_model.log_initial + identity_model.log_emission[:, 0])
        for t in range(1, 4):
            total = beam_step(identity_model, obs, t, pre, total, [1])
            pre, total = total, pre
            assert pre.size == 1 and pre.state[0] == 0 and pre.prob[0] == 0.0

    def test_tracked_states_stay_unset_before_the_division_point(self):
        model, obs = make_instance(6, 10, 1.0, seed=90)
        k = model.num_states
        pre, total = BeamHeap(k), BeamHeap(k)
        seed_heap(pre, model.log_initial + model.log_emission[:, obs.symbols[0]])
        division = 5
        for t in range(1, len(obs)):
            total = beam_step(model, obs, t, pre, total, [division])
            pre, total = total, pre
            mids = pre.mid[: pre.size, 0]
            if t <= division:
                assert np.all(mids == -1)
            else:
                assert np.all(mids >= 0)

    def test_rejects_empty_pre_heap(self, h2_model):
        with pytest.raises(ConfigurationError):
            beam_step(h2_model, obs_of([0, 1]), 1, BeamHeap(2), BeamHeap(2), [0])


def top_b_mask(column, width):
    order = np.lexsort((np.arange(column.shape[0]), -column))[:width]
    mask = np.zeros(column.shape[0], dtype=bool)
    mask[order] = True
    return mask


class TestFlashBs:
    def test_full_beam_equals_flash_exactly(self):
        rng = np.random.default_rng(55)
        parallelisms = (1, 2, 4)
        for i, (model, obs) in enumerate(
            random_instances(300, rng, k_range=(2, 16), t_range=(2, 64))
        ):
            parallelism = min(parallelisms[i % 3], len(obs))
            want = flash_decode(model, obs, parallelism=parallelism)
            got = flash_bs_decode(
                model, obs, parallelism=parallelism, beam_width=model.num_states
            )
            assert np.array_equal(got.states, want.states)
            assert got.log_likelihood == want.log_likelihood

    def test_full_beam_matches_vanilla_on_tie_free_instances(self):
        rng = np.random.default_rng(56)
        checked = 0
        for model, obs in random_instances(40, rng, k_range=(2, 16), t_range=(2, 64)):
            if not strict_backtrack_margin(model, obs):
                continue
            checked += 1
            want = vanilla_viterbi(model, obs)
            for parallelism in (1, 3):
                if parallelism > len(obs):
                    continue
                got = flash_bs_decode(
                    model, obs, parallelism=parallelism, beam_width=model.num_states
                )
                assert np.array_equal(got.states, want.states)
        assert checked >= 25

    def test_b1_identity_model_is_exact(self, identity_model):
        path = flash_bs_decode(identity_model, obs_of([0, 0, 0]), beam_width=1)
        assert path.states.tolist() == [0, 0, 0]
        assert path.log_likelihood == 0.0

    def test_beam_collapse_raises(self):
        model = beam_trap_model()
        with pytest.raises(BeamExhaustedError):
            flash_bs_decode(model, obs_of([0, 1]), beam_width=1)

    def test_score_never_exceeds_optimum(self):
        rng = np.random.default_rng(77)
        for model, obs in random_instances(30, rng, k_range=(3, 12), t_range=(4, 32)):
            opt = vanilla_viterbi(model, obs).log_likelihood
            for width in (1, 2, model.num_states):
                try:
                    got = flash_bs_decode(model, obs, beam_width=width)
                except BeamExhaustedError:
                    continue
                assert got.log_likelihood <= opt + 1e-9

    def test_inexact_traceback_is_flagged_or_exact(self):
        rng = np.random.default_rng(70)
        flagged = exact = 0
        for model, obs in random_instances(40, rng, k_range=(4, 12), t_range=(8, 32)):
            diag = BeamDiagnostics()
            try:
                flash_bs_decode(model, obs, beam_width=2, diagnostics=diag)
            except BeamExhaustedError:
                continue
            if diag.inexact_traceback:
                flagged += 1
            else:
                exact += 1
        assert exact > 0  # most runs back-track exactly

    def test_beam_width_validation(self, h2_model):
        obs = obs_of([0, 1])
        with pytest.raises(ConfigurationError):
            flash_bs_decode(h2_model, obs, beam_width=0)
        with pytest.raises(ConfigurationError):
            flash_bs_decode(h2_model, obs, beam_width=3)
        with pytest.raises(ConfigurationError):
            flash_bs_decode(h2_model, obs)  # beam width is required


class TestBeamMemory:
    def test_heap_bytes_scale_with_b_not_k(self):
        results = {}
        for k in (128, 512, 2048):
            model, obs = make_instance(k, 64, 0.3, seed=6, num_symbols=8)
            per_width = []
            for width in (32, 64, 128):
                meter = Meter()
                flash_bs_decode(model, obs, beam_width=width, meter=meter)
                per_width.append(meter.report().heap_elements)
            results[k] = per_width
        for k, (a, b, c) in results.items():
            assert (a, b, c) == (32 * 2 * element_bytes(1), 64 * 2 * element_bytes(1), 128 * 2 * element_bytes(1))
        assert len(set(map(tuple, results.values()))) == 1

    def test_heap_bytes_independent_of_t(self):
        sizes = set()
        for seq_len in (32, 256):
            model, obs = make_instance(32, seq_len, 0.5, seed=2)
            meter = Meter()
            flash_bs_decode(model, obs, beam_width=8, meter=meter)
            sizes.add(meter.report().heap_elements)
        assert len(sizes) == 1


class TestRelativeError:
    def test_exact_match_is_zero(self):
        assert relative_error(-10.0, -10.0) == 0.0

    def test_small_gap(self):
        assert relative_error(-10.0, -10.05) == pytest.approx(0.005, abs=1e-12)

    def test_scale_invariance_of_formula(self):
        assert relative_error(-200.0, -201.0) == pytest.approx(0.005, abs=1e-12)

    def test_zero_optimum_is_an_error(self):
        with pytest.raises(ValueError):
            relative_error(0.0, -1.0)
        with pytest.raises(ValueError):
            relative_error(NEG_INF, -1.0)


def test_eta_sweep_endpoints_at_benchmark_scale():
    model, obs = make_instance(512, 512, 0.253, seed=13, num_symbols=50)
    opt = vanilla_viterbi(model, obs).log_likelihood
    etas = {}
    for width in (32, 64, 128, 256, 512):
        got = flash_bs_decode(model, obs, beam_width=width)
        eta = relative_error(opt, got.log_likelihood)
        assert eta >= 0.0
        etas[width] = eta
    assert etas[512] == 0.0
