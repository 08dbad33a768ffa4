import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from spikedx.decoding import (
    AssignmentVector,
    LogisticModel,
    ResponseMatrix,
    build_assignment,
    compute_firing_average,
    decode_class_average,
    decode_firing_average,
    decode_population_vector,
    decode_wta,
    logistic_predict,
    logistic_update,
    read_assignment,
    read_responses,
    write_assignment,
    write_responses,
)
from spikedx.errors import AllZeroResponse, EmptyResponses, LengthMismatch


def R(counts, labels):
    return ResponseMatrix(np.array(counts), np.array(labels))


# --- assignment -------------------------------------------------------------


def test_assignment_direct_argmax():
    Z = build_assignment(R([[2], [3], [1], [2]], [0, 0, 1, 1]))
    assert Z.Z.tolist() == [0] and Z.M.tolist() == [[5, 3]]


def test_assignment_tie_goes_to_class0():
    assert build_assignment(R([[2], [2]], [0, 1])).Z.tolist() == [0]


def test_assignment_sum_pathology():
    counts = [[1]] * 10 + [[2]] * 3
    Z = build_assignment(R(counts, [0] * 10 + [1] * 3))
    assert Z.M.tolist() == [[10, 6]] and Z.Z.tolist() == [0]


def test_assignment_counts_and_collapse_flag():
    Z = build_assignment(R([[5, 0, 1], [0, 1, 0]], [0, 1]))
    assert Z.class_counts.sum() == 3
    assert Z.Z.tolist() == [0, 1, 0] and not Z.mode_collapse
    assert Z.assignment_alpha() == pytest.approx(0.5)
    collapsed = build_assignment(R([[5, 3], [1, 1]], [0, 1]))
    assert collapsed.mode_collapse and collapsed.assignment_alpha() == 0.0


def test_assignment_empty():
    with pytest.raises(EmptyResponses):
        build_assignment(R(np.zeros((0, 3), dtype=int), []))


# --- decoders: worked examples ------------------------------------------------


def test_wta_examples():
    assert decode_wta([5, 2, 1], [1, 0, 0]) == 1
    assert decode_wta([3, 3], [0, 1]) == 0
    with pytest.raises(AllZeroResponse):
        decode_wta([0, 0, 0], [0, 1, 0])


def test_population_vector_examples():
    assert decode_population_vector([2, 3, 4], [0, 0, 1]) == 0
    assert decode_population_vector([1, 1, 1, 1], [0, 0, 0, 1]) == 0
    for r in ([9, 1], [0, 4], [3, 3]):
        assert decode_population_vector(r, [0, 0]) == 0


def test_class_average_examples():
    assert decode_class_average([2, 3, 4], [0, 0, 1]) == 1
    assert decode_class_average([1, 1, 1, 4], [0, 0, 0, 1]) == 1
    assert decode_class_average([2, 2, 2], [1, 0, 1]) == 0
    # collapse: only class 0 represented
    assert decode_class_average([0, 7], [0, 0]) == 0


def test_class_average_ignores_empty_class():
    Z = AssignmentVector(np.array([1, 1]), np.array([0, 2]), np.zeros((2, 2), dtype=int))
    assert decode_class_average([1, 2], Z) == 1


def test_firing_average_examples():
    assert compute_firing_average(R([[2, 0], [4, 2]], [0, 1])).F.tolist() == [3.0, 1.0]
    assert compute_firing_average(R([[7, 1]], [0])).F.tolist() == [7.0, 1.0]
    assert compute_firing_average(R([[0, 0], [0, 0]], [0, 1])).F.tolist() == [0.0, 0.0]
    assert decode_firing_average([5, 1], [0, 1], [3, 1]) == 0
    assert decode_firing_average([3, 1], [0, 1], [3, 1]) == 0
    assert decode_firing_average([10, 3], [0, 1], [9, 1]) == 1
    assert decode_population_vector([10, 3], [0, 1]) == 0


def test_firing_average_rounding_tie():
    # -0.1 - 0.2 and -0.3 are equal in rationals but not in floats
    F = np.array([0.1, 0.2, 0.3])
    assert np.bincount([0, 0, 1], weights=-F)[0] < -0.3
    assert decode_firing_average([0, 0, 0], [0, 0, 1], F) == 0


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        decode_wta([1, 2], [0, 1, 0])


# --- logistic ---------------------------------------------------------------


def test_logistic_single_step():
    m = LogisticModel.zeros(2, eta=0.1)
    logistic_update(m, [1, 0], 1)
    assert m.w.tolist() == pytest.approx([0.05, 0.0]) and m.b == pytest.approx(0.05)
    assert m.updates_seen == 1


def test_logistic_zero_input_moves_bias_only():
    m = LogisticModel.zeros(3, eta=0.2)
    logistic_update(m, [0, 0, 0], 1)
    logistic_update(m, [0, 0, 0], 0)
    assert m.w.tolist() == [0.0, 0.0, 0.0] and m.b != 0.0


def test_logistic_predict_examples():
    assert logistic_predict(LogisticModel.zeros(2), [4, 9]) == (0.5, 1)
    p, c = logistic_predict(LogisticModel(np.zeros(2), 20.0), [1, 1])
    assert p > 0.999 and c == 1
    p, c = logistic_predict(LogisticModel(np.array([1.0, -1.0]), 0.0), [3, 1])
    assert p == pytest.approx(0.8808, abs=1e-4) and c == 1


def test_logistic_saturation_is_finite():
    p, c = logistic_predict(LogisticModel(np.array([1.0]), 0.0), [-5000])
    assert p == 0.0 and c == 0


# --- oracle agreement -------------------------------------------------------


@settings(max_examples=300, deadline=None)
@given(st.data())
def test_decoders_match_oracles(data):
    n = data.draw(st.integers(1, 10))
    C = data.draw(st.integers(1, 3))
    hi = data.draw(st.sampled_from([1, 3, 20]))
    s = data.draw(st.integers(1, 8))
    counts = data.draw(st.lists(st.lists(st.integers(0, hi), min_size=n, max_size=n), min_size=s, max_size=s))
    labels = data.draw(st.lists(st.integers(0, C - 1), min_size=s, max_size=s))
    r = data.draw(st.lists(st.integers(0, hi), min_size=n, max_size=n))

    Zv = build_assignment(R(counts, labels), C)
    Zo, Mo = oracles.assignment(counts, labels, C)
    assert Zv.Z.tolist() == Zo and Zv.M.tolist() == Mo

    def lib(fn, *args):
        try:
            return fn(*args)
        except AllZeroResponse:
            return oracles.ALL_ZERO

    assert lib(decode_wta, r, Zv) == oracles.wta(r, Zo)
    assert lib(decode_population_vector, r, Zv) == oracles.population_vector(r, Zo, C)
    assert lib(decode_class_average, r, Zv) == oracles.class_average(r, Zo, C)
    F = compute_firing_average(R(counts, labels))
    assert decode_firing_average(r, Zv, F) == oracles.firing_average(r, Zo, oracles.firing_average_vector(counts), C)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.tuples(st.lists(st.integers(0, 20), min_size=3, max_size=3), st.integers(0, 1)), min_size=1, max_size=6),
    st.floats(0.001, 0.5),
)
def test_logistic_matches_oracle(steps, eta):
    m = LogisticModel.zeros(3, eta)
    w, b = [0.0, 0.0, 0.0], 0.0
    for r, y in steps:
        logistic_update(m, r, y)
        w, b = oracles.logistic_step(w, b, eta, r, y)
        np.testing.assert_allclose(m.w, w, rtol=1e-12, atol=1e-12)
        assert m.b == pytest.approx(b, rel=1e-12, abs=1e-12)
    for r, _ in steps:
        assert logistic_predict(m, r)[1] == oracles.logistic_class(w, b, r)


# --- I/O --------------------------------------------------------------------


def test_assignment_and_responses_round_trip(tmp_path):
    Rm = R([[1, 0, 3], [2, 2, 0]], [0, 1])
    Z = build_assignment(Rm)
    F = compute_firing_average(Rm)
    write_assignment(Z, F, tmp_path / "z.csv")
    Z2, F2 = read_assignment(tmp_path / "z.csv")
    assert Z2.tolist() == Z.Z.tolist() and F2.F.tolist() == F.F.tolist()
    write_responses(Rm, tmp_path / "r.csv")
    back = read_responses(tmp_path / "r.csv")
    np.testing.assert_array_equal(back.counts, Rm.counts)
    np.testing.assert_array_equal(back.labels, Rm.labels)
