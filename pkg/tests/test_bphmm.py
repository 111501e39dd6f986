import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stepparse.bphmm import (
    THETA_EPS,
    Hyperparams,
    ModelState,
    clamp_theta,
    emission_loglik,
    emission_loglik_matrix,
    expected_ibp_features,
    generate_synthetic,
    sample_ibp,
    sample_transitions,
    synthesize_corpus,
    transition_matrix,
)
from stepparse.corpus import ValidationError


def test_hyperparams_defaults_and_validation():
    h = Hyperparams()
    assert (h.gamma, h.beta, h.alpha, h.kappa, h.a0, h.b0) == (
        2.0, 1.0, 1.0, 25.0, 1.0, 1.0
    )
    h.validate()
    with pytest.raises(ValidationError):
        Hyperparams(gamma=0.0).validate()
    with pytest.raises(ValidationError):
        Hyperparams(kappa=-1.0).validate()
    with pytest.raises(ValidationError):
        Hyperparams(a0=float("nan")).validate()


def test_clamp_theta():
    theta = np.array([0.0, 0.5, 1.0, -3.0, 7.0])
    out = clamp_theta(theta)
    assert out.min() == THETA_EPS
    assert out.max() == 1.0 - THETA_EPS
    assert out[1] == 0.5


def test_expected_ibp_features_closed_form():
    assert expected_ibp_features(10, 2.0, 1.0) == pytest.approx(
        2.0 * sum(1.0 / i for i in range(1, 11))
    )
    assert expected_ibp_features(1, 3.0, 2.0) == pytest.approx(3.0)
    assert expected_ibp_features(3, 1.0, 2.0) == pytest.approx(
        2.0 / 2.0 + 2.0 / 3.0 + 2.0 / 4.0
    )


def test_sample_ibp_structure():
    rng = np.random.default_rng(42)
    for _ in range(50):
        f = sample_ibp(5, 2.0, 1.0, rng)
        assert f.dtype == np.uint8
        assert f.shape[0] == 5
        assert set(np.unique(f)) <= {0, 1}
        if f.shape[1]:
            assert f.sum(axis=0).min() >= 1  # no orphan columns
        # the first row's count is the Poisson(gamma) seed of the process
    with pytest.raises(ValidationError):
        sample_ibp(0, 2.0, 1.0, rng)


def test_sample_ibp_mean_matches_expectation():
    rng = np.random.default_rng(2024)
    n, gamma, beta, draws = 6, 2.0, 1.5, 4000
    counts = np.array(
        [sample_ibp(n, gamma, beta, rng).shape[1] for _ in range(draws)]
    )
    mean = expected_ibp_features(n, gamma, beta)
    # total count is a sum of Poissons, so variance equals the mean
    se = math.sqrt(mean / draws)
    assert abs(counts.mean() - mean) < 4.0 * se


def test_sample_transitions_and_matrix():
    rng = np.random.default_rng(0)
    f_row = np.array([1, 0, 1], dtype=np.uint8)
    eta, pi = sample_transitions(f_row, alpha=1.0, kappa=25.0, rng=rng)
    assert eta.shape == pi.shape == (3, 3)
    assert eta[1].sum() == 0.0 and eta[:, 1].sum() == 0.0
    np.testing.assert_allclose(pi[[0, 2]].sum(axis=1), 1.0)
    assert pi[1].sum() == 0.0
    with pytest.raises(ValidationError, match="no steps"):
        sample_transitions(np.zeros(3, dtype=np.uint8), 1.0, 25.0, rng)


def test_transition_matrix_hand_case():
    eta = np.array([[2.0, 1.0], [1.0, 3.0]])
    pi = transition_matrix(eta, np.array([1, 1]))
    np.testing.assert_allclose(pi, [[2 / 3, 1 / 3], [1 / 4, 3 / 4]])
    pi = transition_matrix(eta, np.array([1, 0]))
    np.testing.assert_allclose(pi, [[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(ValidationError, match="sum to zero"):
        transition_matrix(np.zeros((2, 2)), np.array([1, 1]))


def test_kappa_boosts_self_transitions():
    rng = np.random.default_rng(7)
    f_row = np.ones(3, dtype=np.uint8)
    diags = []
    for _ in range(200):
        _, pi = sample_transitions(f_row, alpha=1.0, kappa=25.0, rng=rng)
        diags.append(np.diag(pi).mean())
    # E[diag] = (alpha + kappa) / (K * alpha + kappa) = 26/28
    assert np.mean(diags) == pytest.approx(26.0 / 28.0, abs=0.02)


def test_emission_loglik_hand_case():
    y = np.array([1.0, 0.0, 1.0])
    theta = np.array([0.8, 0.3, 0.5])
    expect = math.log(0.8) + math.log(0.7) + math.log(0.5)
    assert emission_loglik(y, theta) == pytest.approx(expect)
    with pytest.raises(ValidationError, match="shapes differ"):
        emission_loglik(np.zeros(2), np.full(3, 0.5))
    with pytest.raises(ValidationError, match="strictly in"):
        emission_loglik(np.zeros(2), np.array([0.0, 0.5]))


def test_emission_loglik_matrix_matches_loop():
    rng = np.random.default_rng(1)
    y = (rng.random((6, 4)) < 0.5).astype(np.float64)
    thetas = rng.uniform(0.1, 0.9, size=(3, 4))
    table = emission_loglik_matrix(y, thetas)
    assert table.shape == (6, 3)
    for t in range(6):
        for k in range(3):
            assert table[t, k] == pytest.approx(emission_loglik(y[t], thetas[k]))
    with pytest.raises(ValidationError, match="incompatible"):
        emission_loglik_matrix(np.zeros((2, 3)), np.full((2, 4), 0.5))


def _tiny_state(rng=None):
    rng = rng or np.random.default_rng(3)
    hyper = Hyperparams()
    ys, state = generate_synthetic(3, 5, 4, hyper, rng, n_features=2)
    return ys, state


def test_model_state_validate_and_copy():
    _, state = _tiny_state()
    state.validate()
    dup = state.copy()
    dup.thetas[0, 0] = 0.123
    assert state.thetas[0, 0] != 0.123
    assert state.n_videos == 3 and state.n_features == 2 and state.n_dims == 4
    np.testing.assert_array_equal(state.active(0), [0, 1])
    pi = state.pi(1)
    np.testing.assert_allclose(pi.sum(axis=1), 1.0)


def test_model_state_validation_catches_breakage():
    _, state = _tiny_state()
    bad = state.copy()
    bad.z[0][0] = 9
    with pytest.raises(ValidationError, match="inactive steps"):
        bad.validate()
    bad = state.copy()
    bad.thetas[0, 0] = 1.5
    with pytest.raises(ValidationError, match="emission"):
        bad.validate()
    bad = state.copy()
    bad.f[0, :] = 0
    with pytest.raises(ValidationError, match="no active steps"):
        bad.validate()


def test_model_state_payload_roundtrip():
    _, state = _tiny_state()
    payload = state.to_payload()
    again = ModelState.from_payload(payload)
    again.validate()
    np.testing.assert_array_equal(again.f, state.f)
    np.testing.assert_allclose(again.thetas, state.thetas)
    for a, b in zip(again.etas, state.etas):
        mask = np.outer(state.f[0], state.f[0])
        np.testing.assert_allclose(a, b * (b > 0))  # inactive entries masked
    for a, b in zip(again.z, state.z):
        np.testing.assert_array_equal(a, b)


def test_generate_synthetic_shapes_and_support():
    rng = np.random.default_rng(11)
    ys, state = generate_synthetic(4, 7, 5, Hyperparams(), rng)
    assert len(ys) == 4
    for i, y in enumerate(ys):
        assert y.shape == (7, 5)
        assert set(np.unique(y)) <= {0, 1}
        active = set(np.flatnonzero(state.f[i]))
        assert set(state.z[i]) <= active
    assert state.f.sum(axis=1).min() >= 1


def test_generate_synthetic_fixed_features():
    rng = np.random.default_rng(11)
    thetas = np.array([[0.9, 0.1], [0.1, 0.9], [0.5, 0.5]])
    ys, state = generate_synthetic(
        2, 6, 2, Hyperparams(), rng, n_features=3, thetas=thetas
    )
    np.testing.assert_array_equal(state.f, np.ones((2, 3)))
    np.testing.assert_allclose(state.thetas, thetas)
    with pytest.raises(ValidationError, match="thetas shape"):
        generate_synthetic(2, 6, 2, Hyperparams(), rng, n_features=2,
                           thetas=thetas)
    with pytest.raises(ValidationError):
        generate_synthetic(0, 6, 2, Hyperparams(), rng)


def test_synthesize_corpus_consistency():
    videos, gt, state = synthesize_corpus(n_videos=4, n_frames=20, n_steps=3,
                                          seed=5)
    assert len(videos) == 4
    assert state.f.shape == (4, 3)
    for video in videos:
        assert len(video.frames) == 20
        assert video.description_tokens
        video.validate()
    gt.validate()
    for video, z in zip(videos, state.z):
        segs = gt.segments[video.video_id]
        assert segs[0][0] == 0 and segs[-1][1] == 20
        for start, end, label in segs:
            k = int(label.replace("step", ""))
            assert all(z[t] == k for t in range(start, end))


def test_synthesize_corpus_deterministic():
    a = synthesize_corpus(n_videos=3, n_frames=10, seed=9)
    b = synthesize_corpus(n_videos=3, n_frames=10, seed=9)
    for va, vb in zip(a[0], b[0]):
        assert va.description_tokens == vb.description_tokens
        for fa, fb in zip(va.frames, vb.frames):
            assert fa.subtitle_tokens == fb.subtitle_tokens
            np.testing.assert_array_equal(fa.proposals, fb.proposals)
    np.testing.assert_array_equal(a[2].f, b[2].f)


@given(st.integers(min_value=1, max_value=8), st.floats(min_value=0.5, max_value=4.0),
       st.floats(min_value=0.5, max_value=3.0))
@settings(max_examples=25, deadline=None)
def test_sample_ibp_no_orphan_columns(n, gamma, beta):
    rng = np.random.default_rng(abs(hash((n, gamma, beta))) % 2**32)
    f = sample_ibp(n, gamma, beta, rng)
    if f.shape[1]:
        assert f.sum(axis=0).min() >= 1
