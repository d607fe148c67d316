import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from segbeam.linalg import (
    ContractError,
    HermitianState,
    NumericError,
    hermitian_solve,
    rank1_update,
    regularized_gram_solve,
)

from conftest import crandn


def run_updates(X, delta):
    state = HermitianState.initial(X.shape[0], delta)
    for t in range(X.shape[1]):
        state, _, _ = rank1_update(state, X[:, t])
    return state


def test_zero_update_is_identity():
    state = HermitianState.initial(3, 0.5)
    new, k, gamma = rank1_update(state, np.zeros(3, dtype=complex))
    assert gamma == 1.0
    np.testing.assert_array_equal(new.inv, state.inv)
    np.testing.assert_array_equal(k, 0)


def test_unit_basis_update():
    state = HermitianState.initial(4, 1.0)
    e1 = np.zeros(4, dtype=complex)
    e1[0] = 1
    new, k, gamma = rank1_update(state, e1)
    assert gamma == pytest.approx(2.0)
    np.testing.assert_allclose(new.inv, np.eye(4) - np.outer(e1, e1) / 2, atol=1e-15)
    np.testing.assert_allclose(k, e1)


def test_fifty_updates_match_direct_inverse(rng):
    X = crandn(rng, 6, 50)
    state = run_updates(X, 0.3)
    direct = np.linalg.inv(0.3 * np.eye(6) + X @ X.conj().T)
    err = np.linalg.norm(state.inv - direct) / np.linalg.norm(direct)
    assert err < 1e-8


@given(
    p=st.integers(1, 16),
    T=st.integers(0, 500),
    log_delta=st.floats(-2, 1),
    seed=st.integers(0, 2**32 - 1),
)
def test_recursive_inverse_property(p, T, log_delta, seed):
    rng = np.random.default_rng(seed)
    X = crandn(rng, p, T)
    delta = 10.0**log_delta
    state = run_updates(X, delta)
    direct = np.linalg.inv(delta * np.eye(p) + X @ X.conj().T)
    assert np.linalg.norm(state.inv - direct) / np.linalg.norm(direct) < 1e-8
    herm = np.linalg.norm(state.inv - state.inv.conj().T) / np.linalg.norm(state.inv)
    assert herm < 1e-10
    assert np.all(np.linalg.eigvalsh(state.inv) > 0)


@given(seed=st.integers(0, 2**32 - 1), p=st.integers(1, 8))
def test_gamma_real_and_at_least_one(seed, p):
    rng = np.random.default_rng(seed)
    state = HermitianState.initial(p, 0.1)
    for _ in range(20):
        state, _, gamma = rank1_update(state, 10 * crandn(rng, p))
        assert isinstance(gamma, float)
        assert gamma >= 1.0


def test_symmetrization_changes_little(rng):
    # Compare against an unsymmetrized Woodbury recursion.
    X = crandn(rng, 8, 300)
    delta = 0.05
    state = HermitianState.initial(8, delta)
    raw = np.eye(8, dtype=complex) / delta
    worst = 0.0
    for t in range(300):
        x = X[:, t]
        state, _, _ = rank1_update(state, x)
        u = raw @ x
        raw = raw - np.outer(u, u.conj()) / (1 + np.real(np.vdot(x, u)))
        worst = max(worst, np.linalg.norm(state.inv - raw) / np.linalg.norm(raw))
        raw = state.inv.copy()
    assert worst < 1e-9


def test_rank1_update_contracts():
    state = HermitianState.initial(3, 1.0)
    with pytest.raises(ContractError):
        rank1_update(state, np.ones(4))
    with pytest.raises(NumericError):
        rank1_update(state, np.array([1.0, np.nan, 0.0]))
    with pytest.raises(ContractError):
        HermitianState.initial(3, 0.0)
    with pytest.raises(ContractError):
        HermitianState.initial(0, 1.0)


def test_gram_solve_without_data():
    nu = np.array([1, 1j, -1], dtype=complex)
    np.testing.assert_allclose(regularized_gram_solve(np.zeros((3, 0)), nu, 0.25), nu / 0.25)
    np.testing.assert_allclose(regularized_gram_solve(np.zeros((3, 7)), nu, 0.25), nu / 0.25)


def test_gram_solve_matches_explicit_inverse(rng):
    X = crandn(rng, 5, 20)
    b = crandn(rng, 5)
    expected = np.linalg.inv(X @ X.conj().T + 0.1 * np.eye(5)) @ b
    got = regularized_gram_solve(X, b, 0.1)
    assert np.linalg.norm(got - expected) / np.linalg.norm(expected) < 1e-10


def test_gram_solve_errors():
    with pytest.raises(NumericError):
        regularized_gram_solve(np.array([[np.inf, 0]]), np.ones(1), 1.0)
    with pytest.raises(ContractError):
        regularized_gram_solve(np.ones((2, 3)), np.ones(2), 0.0)
    with pytest.raises(ContractError):
        regularized_gram_solve(np.ones((2, 3)), np.ones(3), 1.0)


def test_hermitian_solve_rejects_indefinite():
    with pytest.raises(NumericError):
        hermitian_solve(np.diag([1.0, -1.0]), np.ones(2))
