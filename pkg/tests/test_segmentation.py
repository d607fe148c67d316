import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from segbeam.beamformers import adaptive_mvdr_run, batch_capon_run
from segbeam.linalg import ContractError
from segbeam.scenarios import ArrayGeometry, ScenarioConfig, generate, steering_matrix
from segbeam.segmentation import (
    MAX_ORACLE_HORIZON,
    OnlineSegmenter,
    batch_cost_table,
    bellman_residuals,
    bsb,
    bsb_table,
    exhaustive_dp_oracle,
    noise_floor,
    osb_run,
    osb_step,
    osrls,
    relative_penalty,
    segment_ls_cost,
    segment_output_power,
    sls_batch,
    sls_table,
    split_starts,
)

from conftest import crandn


def ls_cost(X, d, delta):
    return lambda i, j: segment_ls_cost(X[:, i:j], d[i:j], delta)


def two_state_scene(seed, T=400, p=4, inr_db=25.0):
    """Two interferers before T/2, two others after; four exceed the array's DOF."""
    rng = np.random.default_rng(seed)
    geo = ArrayGeometry(p, 0.5, 1.0, 1.0)
    nu = np.ones(p, dtype=complex)
    A = steering_matrix(geo, [30.0, 60.0, 120.0, 150.0])
    X = crandn(rng, p, T) + 0.3 * np.outer(nu, crandn(rng, T))
    g = 10 ** (inr_db / 20)
    h = T // 2
    X[:, :h] += g * A[:, :2] @ crandn(rng, 2, h)
    X[:, h:] += g * A[:, 2:] @ crandn(rng, 2, T - h)
    return X, nu


# --- exhaustive oracle ---------------------------------------------------------


def test_oracle_single_sample():
    best, starts = exhaustive_dp_oracle(lambda i, j: 2.5, 1, 0.7)
    assert best == pytest.approx(3.2)
    assert starts == [0]


def test_oracle_zero_cost_prefers_one_segment():
    best, starts = exhaustive_dp_oracle(lambda i, j: 0.0, 9, 1.3)
    assert best == pytest.approx(1.3)
    assert starts == [0]


def test_oracle_refuses_long_horizon():
    with pytest.raises(ContractError):
        exhaustive_dp_oracle(lambda i, j: 0.0, MAX_ORACLE_HORIZON + 1, 1.0)


def test_oracle_matches_bsb_on_random_table(rng):
    X = crandn(rng, 3, 8)
    nu = np.exp(1j * rng.uniform(0, 6, 3))
    best, starts = exhaustive_dp_oracle(batch_cost_table(X, nu, 0.1), 8, 0.4)
    _, part = bsb(X, nu, 0.4, 0.1)
    assert part.total_cost == pytest.approx(best, rel=1e-10)
    assert part.starts == starts


# --- batch SLS -----------------------------------------------------------------


def test_sls_single_model_noiseless(rng):
    X = crandn(rng, 3, 60)
    w = crandn(rng, 3)
    d = w.conj() @ X
    d_hat, part = sls_batch(X, d, 1.0, 1e-12)
    assert len(part) == 1
    assert np.sum(np.abs(d_hat - d) ** 2) < 1e-10


def test_sls_zero_penalty_overfits(rng):
    X = crandn(rng, 2, 12)
    d = crandn(rng, 12)
    costs = []
    for C in (0.0, 1e-3, 1e-1, 10.0):
        _, part = sls_batch(X, d, C, 1e-10)
        costs.append(sum(s.cost for s in part.segments))
    assert all(a <= b + 1e-12 for a, b in zip(costs, costs[1:]))
    assert costs[0] < 1e-8


def test_sls_matches_enumeration_t10(rng):
    X = crandn(rng, 2, 10)
    d = crandn(rng, 10)
    _, part = sls_batch(X, d, 0.5, 0.05)
    best, starts = exhaustive_dp_oracle(ls_cost(X, d, 0.05), 10, 0.5)
    assert part.total_cost == pytest.approx(best, rel=1e-10)
    assert part.starts == starts


# --- batch segmented beamformer ------------------------------------------------


def test_bsb_huge_penalty_is_batch_capon(rng):
    X, nu = two_state_scene(1, T=120)
    C = float(np.sum(np.abs(X) ** 2)) + 1
    z, part = bsb(X, nu, C, 0.1)
    z_ref, _ = batch_capon_run(X, nu, 0.1)
    assert len(part) == 1
    np.testing.assert_allclose(z, z_ref, atol=1e-10)


def test_bsb_matches_enumeration_t10(rng):
    X = crandn(rng, 3, 10)
    nu = np.exp(1j * rng.uniform(0, 6, 3))
    _, part = bsb(X, nu, 0.2, 0.05)
    best, _ = exhaustive_dp_oracle(batch_cost_table(X, nu, 0.05), 10, 0.2)
    assert abs(part.total_cost - best) <= 1e-10 * best


@given(
    seed=st.integers(0, 2**32 - 1),
    p=st.integers(1, 4),
    T=st.integers(1, 9),
    C=st.floats(0.0, 5.0),
    log_delta=st.floats(-2, 0.5),
)
def test_dp_engines_are_optimal(seed, p, T, C, log_delta):
    rng = np.random.default_rng(seed)
    X = crandn(rng, p, T)
    d = crandn(rng, T)
    nu = np.exp(1j * rng.uniform(0, 6, p))
    delta = 10.0**log_delta
    _, part = bsb(X, nu, C, delta)
    best, _ = exhaustive_dp_oracle(batch_cost_table(X, nu, delta), T, C)
    assert abs(part.total_cost - best) <= 1e-10 * max(best, 1.0)
    _, part = sls_batch(X, d, C, delta)
    best, _ = exhaustive_dp_oracle(ls_cost(X, d, delta), T, C)
    assert abs(part.total_cost - best) <= 1e-10 * max(best, 1.0)


@given(seed=st.integers(0, 2**32 - 1), T=st.integers(1, 40))
def test_partition_and_bellman_consistency(seed, T):
    rng = np.random.default_rng(seed)
    X = crandn(rng, 3, T)
    nu = np.ones(3)
    table = bsb_table(X, nu, 0.8, 0.1)
    assert np.all(np.isfinite(table.E))
    part = table.traceback()
    part.validate(T)
    recomputed = sum(segment_output_power(X[:, s.start : s.stop], nu, 0.1) for s in part.segments)
    assert part.total_cost == pytest.approx(recomputed + 0.8 * len(part), rel=1e-6)
    assert np.max(np.abs(bellman_residuals(table, batch_cost_table(X, nu, 0.1)))) < 1e-8 * max(
        1.0, table.E[-1]
    )
    d = crandn(rng, T)
    table = sls_table(X, d, 0.3, 0.1)
    table.traceback().validate(T)
    assert np.max(np.abs(bellman_residuals(table, ls_cost(X, d, 0.1)))) < 1e-8 * max(1.0, table.E[-1])


def test_bsb_finds_switch():
    hits = 0
    for seed in range(20):
        X, nu = two_state_scene(seed)
        _, part = bsb(X, nu, 30.0, 0.1)
        hits += any(abs(b - 200) <= 10 for b in part.boundaries)
    assert hits >= 18


def test_bsb_rejects_empty():
    with pytest.raises(ContractError):
        bsb(np.zeros((2, 0)), np.ones(2), 1.0, 0.1)
    with pytest.raises(ContractError):
        sls_batch(np.zeros((2, 0)), np.zeros(0), 1.0, 0.1)


@given(seed=st.integers(0, 2**32 - 1))
def test_super_additivity_unloaded(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(1, 5))
    T = int(rng.integers(4 * p + 2, 60))
    X = crandn(rng, p, T)
    nu = np.exp(1j * rng.uniform(0, 6, p))
    u = int(rng.integers(2 * p, T - 2 * p + 1))
    whole = _unloaded_power(X, nu)
    split = _unloaded_power(X[:, :u], nu) + _unloaded_power(X[:, u:], nu)
    assert whole >= split - 1e-9


def _unloaded_power(X, nu):
    G = X @ X.conj().T
    num = np.linalg.solve(G, nu)
    return float(1.0 / np.real(np.vdot(nu, num)))


# --- OSB -----------------------------------------------------------------------


def test_osb_huge_penalty_equals_adaptive(rng):
    X, nu = two_state_scene(2, T=200)
    run = osb_run(X, nu, 1e9, 0.1)
    z_ref, W_ref = adaptive_mvdr_run(X, nu, 0.1)
    assert run.changepoints == []
    np.testing.assert_allclose(run.z, z_ref, atol=1e-8)
    np.testing.assert_allclose(run.W, W_ref, atol=1e-8)


def test_osb_guard_blocks_switches(rng):
    X, nu = two_state_scene(3, T=150)
    run = osb_run(X, nu, 0.0, 0.1, tau=150, max_candidates=200)
    z_ref, _ = adaptive_mvdr_run(X, nu, 0.1)
    assert run.changepoints == []
    np.testing.assert_allclose(run.z, z_ref, atol=1e-8)


@given(seed=st.integers(0, 2**32 - 1), C=st.floats(0.0, 20.0), tau=st.integers(0, 10), cap=st.integers(1, 30))
def test_osb_invariants(seed, C, tau, cap):
    rng = np.random.default_rng(seed)
    X = crandn(rng, 3, 60)
    X[:, 30:] += 5 * np.outer(np.exp(1j * rng.uniform(0, 6, 3)), crandn(rng, 30))
    nu = np.ones(3)
    seg = OnlineSegmenter(nu, C, 0.1, tau, cap)
    anchors = []
    for t in range(60):
        w = seg.weights
        assert abs(np.vdot(w, nu) - 1) < 1e-9
        assert seg.cur in seg.candidate_starts or t == 0
        z, seg, _ = osb_step(seg, X[:, t])
        assert z == pytest.approx(np.vdot(w, X[:, t]))
        assert seg.candidate_starts[0] == seg.cur
        assert len(seg.candidate_starts) <= cap
        anchors.append(seg.cur)
    assert np.all(np.diff(anchors) >= 0)
    starts = [c.start for c in seg.changepoints]
    assert starts == sorted(set(starts))
    assert all(c.start - prev > tau for c, prev in zip(seg.changepoints, [0] + starts))


@given(seed=st.integers(0, 2**32 - 1), C=st.floats(0.1, 20.0), tau=st.integers(0, 6))
def test_online_cost_dominates_batch(seed, C, tau):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(2, 5))
    T = int(rng.integers(5, 120))
    X = crandn(rng, p, T)
    X[:, T // 2 :] += 3 * np.outer(np.exp(1j * rng.uniform(0, 6, p)), crandn(rng, T - T // 2))
    nu = np.exp(1j * rng.uniform(0, 6, p))
    run = osb_run(X, nu, C, 0.1, tau)
    _, part = bsb(X, nu, C, 0.1)
    assert run.penalized_cost(C) >= part.total_cost - 1e-9


def test_osb_detects_switch():
    lags = []
    for seed in range(10):
        X, nu = two_state_scene(seed)
        run = osb_run(X, nu, 30.0, 0.1)
        near = [c for c in run.changepoints if abs(c.start - 200) <= 20]
        lags.append(near[0].time - 200 if near else None)
    assert sum(lag is not None for lag in lags) >= 9
    assert max(lag for lag in lags if lag is not None) < 60


def test_osb_cost_conventions_differ(rng):
    X, nu = two_state_scene(4, T=120)
    post = OnlineSegmenter(nu, 5.0, 0.1)
    prior = OnlineSegmenter(nu, 5.0, 0.1, cost="prior")
    for t in range(120):
        post.step(X[:, t])
        prior.step(X[:, t])
    # post-update weights have seen the snapshot, so they score it lower
    assert post.potentials[-1] < prior.potentials[-1]
    with pytest.raises(ContractError):
        OnlineSegmenter(nu, 5.0, 0.1, cost="bogus")


# --- OSRLS ---------------------------------------------------------------------


def test_osrls_stationary_no_changepoints(rng):
    X = crandn(rng, 3, 300)
    w = crandn(rng, 3)
    d = w.conj() @ X + 0.05 * crandn(rng, 300)
    _, starts = osrls(X, d, 1e6, 1e-3)
    assert starts == []


def test_osrls_guard_equal_horizon(rng):
    X = crandn(rng, 2, 80)
    d = crandn(rng, 80)
    _, starts = osrls(X, d, 0.0, 1e-3, tau=80)
    assert starts == []


def test_osrls_detects_sign_flip():
    hits = 0
    tau = 5
    for seed in range(20):
        rng = np.random.default_rng(seed)
        X = crandn(rng, 3, 400)
        w = crandn(rng, 3)
        d = np.r_[w.conj() @ X[:, :200], -w.conj() @ X[:, 200:]] + 0.05 * crandn(rng, 400)
        _, starts = osrls(X, d, 2.0, 1e-3, tau=tau)
        hits += len(starts) == 1 and abs(starts[0] - 200) <= tau + 25
    assert hits == 20


def test_osrls_output_is_causal(rng):
    X = crandn(rng, 2, 40)
    d = crandn(rng, 40)
    d_hat, _ = osrls(X, d, 1.0, 0.1)
    d2 = d.copy()
    d2[20:] = 0
    d_hat2, _ = osrls(X, d2, 1.0, 0.1)
    np.testing.assert_allclose(d_hat[:21], d_hat2[:21])


# --- helpers -------------------------------------------------------------------


def test_split_starts():
    assert split_starts([0, 3, 7], 10) == [(0, 3), (3, 7), (7, 10)]


def test_relative_penalty_scale(rng):
    X = crandn(rng, 8, 2000)
    assert noise_floor(X, 2000) == pytest.approx(1.0, rel=0.1)
    assert relative_penalty(X, 1.5, 2000) == pytest.approx(1.5 * 8 * noise_floor(X, 2000))
    with pytest.raises(ContractError):
        relative_penalty(X, -1.0)


def test_penalty_scenario_noise_floor():
    truth = generate(ScenarioConfig(kind="piecewise_bearing", horizon=500, seed=1))
    assert noise_floor(truth.snapshots) == pytest.approx(1.0, rel=0.35)
