"""Testes dos limites sequenciais de correlação."""

import numpy as np
import pytest

from src.synth.corrbounds import (
    REALIZABLE_RESIDUAL,
    begin,
    bounds_for_next,
    choose,
    complete,
    finalize,
    sample_random,
    tolerant_cholesky,
)
from src.synth.errors import CorrelationRangeError, InvalidCorrelationMatrixError, ProtocolError


def random_correlation(rng: np.random.Generator, m: int) -> np.ndarray:
    A = rng.normal(size=(m, m + 2))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    C = A @ A.T
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, 1.0)
    return C


def min_eigenvalue(C: np.ndarray, indices, values) -> float:
    """Menor autovalor da submatriz de C nos índices dados, expandida com a amostra."""
    idx = list(indices)
    k = len(idx)
    M = np.eye(k + 1)
    M[:k, :k] = C[np.ix_(idx, idx)]
    M[:k, k] = values
    M[k, :k] = values
    return float(np.linalg.eigvalsh(M)[0])


def test_identity_basis_bounds() -> None:
    session = begin(np.eye(2))

    assert bounds_for_next(session) == pytest.approx((-1.0, 1.0))
    choose(session, 0.6)
    assert bounds_for_next(session) == pytest.approx((-0.8, 0.8))


def test_full_correlation_pins_remaining_entry() -> None:
    session = begin([[1.0, 0.5], [0.5, 1.0]])

    choose(session, 1.0)

    assert bounds_for_next(session) == pytest.approx((0.5, 0.5), abs=1e-12)


def test_duplicate_fidelities_collapse_interval() -> None:
    C = np.array([[1.0, 1.0, 0.3], [1.0, 1.0, 0.3], [0.3, 0.3, 1.0]])
    session = begin(C)

    choose(session, 0.4)
    lower, upper = bounds_for_next(session)

    assert lower == pytest.approx(0.4, abs=1e-9)
    assert upper == pytest.approx(0.4, abs=1e-9)
    choose(session, 0.4)
    spec = complete(session)
    assert spec.realizable


@pytest.mark.parametrize("m", [2, 3, 4, 5])
def test_chosen_values_keep_expanded_matrix_psd(m: int) -> None:
    rng = np.random.default_rng(m)
    for _ in range(250):
        C = random_correlation(rng, m)
        session = begin(C)
        chosen = []
        while not session.exhausted:
            lower, upper = bounds_for_next(session)
            value = rng.choice([lower, upper, rng.uniform(lower, upper)])
            chosen.append(session.next_index)
            choose(session, value)
            assert min_eigenvalue(C, chosen, session.values) >= -1e-9

        spec = finalize(session)
        assert np.linalg.eigvalsh(spec.expanded_correlation())[0] >= -1e-9


@pytest.mark.parametrize("m", [2, 3, 4])
def test_values_beyond_bounds_break_psd(m: int) -> None:
    rng = np.random.default_rng(50 + m)
    delta = 1e-3
    for _ in range(334):
        C = random_correlation(rng, m)
        session = begin(C)
        chosen = []
        while not session.exhausted:
            lower, upper = bounds_for_next(session)
            candidate = chosen + [session.next_index]
            if upper + delta <= 1.0:
                assert min_eigenvalue(C, candidate, session.values + [upper + delta]) < -1e-12
            if lower - delta >= -1.0:
                assert min_eigenvalue(C, candidate, session.values + [lower - delta]) < -1e-12
            chosen.append(session.next_index)
            choose(session, rng.uniform(lower, upper))


def test_custom_order_returns_values_in_basis_order() -> None:
    C = np.array([[1.0, 0.2, 0.1], [0.2, 1.0, 0.4], [0.1, 0.4, 1.0]])
    session = begin(C, order=[1, 0])

    assert session.next_index == 1
    choose(session, 0.7)
    assert session.next_index == 0
    choose(session, -0.1)
    assert session.is_final_entry
    spec = complete(session)

    assert spec.values[1] == pytest.approx(0.7)
    assert spec.values[0] == pytest.approx(-0.1)
    assert spec.order == (1, 0, 2)
    assert spec.bounds[1] == pytest.approx((-1.0, 1.0))


def test_out_of_range_value_reports_basis_index() -> None:
    session = begin(np.eye(3), order=[1, 0])
    choose(session, 0.8)

    with pytest.raises(CorrelationRangeError) as info:
        choose(session, 0.7)

    assert info.value.index == 0
    assert info.value.upper == pytest.approx(0.6)
    assert info.value.exit_code == 2
    assert session.cursor == 1


def test_value_at_endpoint_within_slack_is_accepted() -> None:
    session = begin(np.eye(2))
    choose(session, 0.6)

    choose(session, 0.8 + 1e-13)

    assert finalize(session).realizable


def test_protocol_misuse() -> None:
    session = begin(np.eye(2))

    with pytest.raises(ProtocolError):
        finalize(session)
    complete(session)
    with pytest.raises(ProtocolError):
        bounds_for_next(session)
    with pytest.raises(ProtocolError):
        begin(np.eye(3), order=[0, 0])
    with pytest.raises(ProtocolError):
        begin(np.eye(3), order=[0, 2])


@pytest.mark.parametrize(
    "C",
    [
        [[1.0, 0.5], [0.4, 1.0]],
        [[1.0, 0.5], [0.5, 0.9]],
        [[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]],
    ],
)
def test_invalid_correlation_matrix_is_rejected(C) -> None:
    with pytest.raises(InvalidCorrelationMatrixError):
        begin(C)


def test_tolerant_cholesky_handles_rank_deficiency() -> None:
    C = np.array([[1.0, 1.0, 0.5], [1.0, 1.0, 0.5], [0.5, 0.5, 1.0]])

    L = tolerant_cholesky(C)

    np.testing.assert_allclose(L @ L.T, C, atol=1e-12)
    assert L[1, 1] == 0.0


def test_complete_uses_centers_and_realizable_final_entry() -> None:
    rng = np.random.default_rng(9)
    C = random_correlation(rng, 4)

    spec = complete(begin(C))

    for index in range(3):
        lower, upper = spec.bounds[index]
        assert spec.values[index] == pytest.approx(0.5 * (lower + upper))
    assert spec.values[3] == pytest.approx(spec.bounds[3][1])
    assert spec.realizable
    assert spec.residual <= REALIZABLE_RESIDUAL


def test_sample_random_is_seeded_and_realizable() -> None:
    C = random_correlation(np.random.default_rng(4), 4)

    first = sample_random(begin(C), seed=3)
    second = sample_random(begin(C), seed=3)

    np.testing.assert_array_equal(first.values, second.values)
    assert first.realizable
    for value, (lower, upper) in zip(first.values, first.bounds):
        assert lower - 1e-12 <= value <= upper + 1e-12
    assert min(abs(first.values[3] - end) for end in first.bounds[3]) <= 1e-12


def test_partial_session_can_be_completed_randomly() -> None:
    C = random_correlation(np.random.default_rng(6), 3)
    session = begin(C)
    choose(session, 0.0)

    spec = sample_random(session, seed=1)

    assert spec.values[0] == 0.0
    assert spec.realizable
