import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crprecoder import InfeasibleZf, InvalidScenario, Scenario, exp_correlation_matrix, generate_channels
from crprecoder.channels import psd_sqrt, trial_rng


def test_correlation_r0_is_identity():
    np.testing.assert_array_equal(exp_correlation_matrix(3, 0.0, 1.3), np.eye(3))


def test_correlation_real_example():
    R = exp_correlation_matrix(3, 0.5, 0.0)
    expected = np.array([[1, .5, .25], [.5, 1, .5], [.25, .5, 1]])
    np.testing.assert_allclose(R, expected, atol=1e-15)


def test_correlation_complex_min_eigenvalue():
    R = exp_correlation_matrix(4, 0.9, np.pi / 3)
    assert np.linalg.eigvalsh(R).min() >= -1e-12


def test_correlation_entry_pattern():
    c = 0.7 * np.exp(1j * 0.4)
    R = exp_correlation_matrix(3, 0.7, 0.4)
    assert R[0, 2] == pytest.approx(c ** 2)
    assert R[2, 0] == pytest.approx(np.conj(c) ** 2)


@pytest.mark.parametrize("r", [-0.1, 1.01])
def test_correlation_rejects_r(r):
    with pytest.raises(InvalidScenario):
        exp_correlation_matrix(3, r, 0.0)


@settings(max_examples=60, deadline=None)
@given(size=st.integers(1, 7), r=st.floats(0.0, 1.0), phase=st.floats(-10.0, 10.0))
def test_correlation_is_hermitian_psd_unit_diagonal(size, r, phase):
    R = exp_correlation_matrix(size, r, phase)
    np.testing.assert_allclose(R, R.conj().T, atol=1e-14)
    np.testing.assert_allclose(np.diag(R), 1.0, atol=1e-14)
    assert np.linalg.eigvalsh(R).min() >= -1e-10


def test_psd_sqrt_clamps_negative_roundoff():
    A = np.diag([4.0, -1e-17])
    np.testing.assert_allclose(psd_sqrt(A), np.diag([2.0, 0.0]))


def test_uncorrelated_entries_have_unit_variance():
    sc = Scenario(N=100, n=(50,), n_pu=(50,), P_total=1.0, I=(1.0,), seed=5)
    ch = generate_channels(sc)
    # 5000 + 5000 entries; 10^5 draws over a few trials
    entries = np.concatenate([np.concatenate([c.H[0].ravel(), c.G[0].ravel()])
                              for c in (generate_channels(sc, t) for t in range(10))])
    assert entries.size == 10 ** 5
    assert np.mean(np.abs(entries) ** 2) == pytest.approx(1.0, rel=0.02)
    assert ch.H[0].shape == (50, 100)


def test_same_seed_is_bitwise_identical():
    sc = Scenario.uniform(8, 2, 2, r=0.6, seed=123)
    a, b = generate_channels(sc, 4), generate_channels(sc, 4)
    for x, y in zip(a.H + a.G, b.H + b.G):
        assert x.tobytes() == y.tobytes()


def test_trials_and_streams_differ():
    sc = Scenario.uniform(8, 2, 1, seed=1)
    a, b = generate_channels(sc, 0), generate_channels(sc, 1)
    c = generate_channels(sc, 0, stream=1)
    assert not np.allclose(a.H[0], b.H[0])
    assert not np.allclose(a.H[0], c.H[0])


def test_trial_rng_is_order_independent():
    x = trial_rng(9, 3).standard_normal(4)
    trial_rng(9, 2).standard_normal(100)
    np.testing.assert_array_equal(x, trial_rng(9, 3).standard_normal(4))


def test_correlated_column_correlation_matches_model():
    # single-antenna receiver, h = w R^{1/2}: E[h^H h] = R, so E[h_0^* h_1] = r e^{j phase}
    r, trials = 0.9, 10_000
    sc = Scenario(N=2, n=(1,), n_pu=(), P_total=1.0, I=(), r=r, seed=11)
    est = []
    for t in range(trials):
        rng = trial_rng(sc.seed, t)
        _, phase = rng.uniform(0.0, 2.0 * np.pi, size=2)
        h = generate_channels(sc, t).H[0][0]
        # rotate out the per-draw phase so every sample targets r
        est.append(h[1] * np.conj(h[0]) * np.exp(-1j * phase))
    assert np.mean(est) == pytest.approx(r, rel=0.05, abs=0.05 * r)


def test_scenario_defaults_and_validation():
    sc = Scenario.uniform(10, 3, 2, P=10.0, I=2.0)
    assert sc.per_antenna == (1.0,) * 10
    assert sc.K == 3 and sc.M == 2 and sc.nbar == [6, 6, 6]
    with pytest.raises(InfeasibleZf):
        Scenario.uniform(5, 3, 0)
    with pytest.raises(InvalidScenario):
        Scenario.uniform(6, 2, 1, P=-1.0)
    with pytest.raises(InvalidScenario):
        Scenario(N=4, n=(1,), n_pu=(1,), P_total=1.0, I=())
    with pytest.raises(InvalidScenario):
        Scenario.uniform(6, 2, 0, power_mode="XYZ")
    assert sc.replace(P_total=20.0).per_antenna == (2.0,) * 10
