import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_tpm
from oracles import pca_scores_mp, same_up_to_sign
from ordertransit import embed
from ordertransit.dtmc import TransitionMatrix
from ordertransit.errors import TooFewObservations
from ordertransit.synth import pattern_tpms

seeds = st.integers(0, 2**32 - 1)


def test_flatten_examples():
    v = embed.flatten(TransitionMatrix(np.eye(10)))
    assert np.flatnonzero(v).tolist() == list(range(0, 100, 11))
    assert (embed.flatten(np.zeros((10, 10))) == 0).all()
    p = random_tpm(np.random.default_rng(1))
    assert np.array_equal(embed.unflatten(embed.flatten(p)), p.probs)


def test_normalize_examples():
    out = embed.normalize(embed.ObservationMatrix(np.array([[1.0], [3.0]]))).data
    assert out[:, 0] == pytest.approx([-np.sqrt(0.5), np.sqrt(0.5)], abs=1e-4)
    assert out[:, 0] == pytest.approx([-0.7071, 0.7071], abs=1e-4)
    const = embed.normalize(embed.ObservationMatrix(np.full((3, 1), 5.0))).data
    assert (const == 0).all()
    with pytest.raises(TooFewObservations):
        embed.normalize(embed.ObservationMatrix(np.ones((1, 4))))


@given(seeds, st.integers(2, 30), st.integers(1, 40))
def test_normalize_centres_and_scales(seed, l, m):
    x = np.random.default_rng(seed).normal(size=(l, m)) * 10 + 3
    y = embed.normalize(embed.ObservationMatrix(x)).data
    assert np.abs(y.mean(axis=0)).max() < 1e-12
    assert np.allclose(y.std(axis=0, ddof=1), 1.0, atol=1e-12)


def test_rank_one_data():
    rng = np.random.default_rng(2)
    direction = rng.normal(size=100)
    x = rng.normal(size=(18, 1)) * direction[None, :] + 1.0
    res = embed.pca(embed.ObservationMatrix(x), 2)
    assert res.eigenvalues[1] / res.eigenvalues[0] < 1e-10
    assert res.cumulative[0] == pytest.approx(1.0, abs=1e-12)


def test_isotropic_sample():
    rng = np.random.default_rng(3)
    x = np.zeros((500, 100))
    x[:, :2] = rng.normal(size=(500, 2))
    res = embed.pca(embed.ObservationMatrix(x), 2)
    assert 0.8 <= res.eigenvalues[0] / res.eigenvalues[1] <= 1.25


@pytest.mark.parametrize("seed", [0, 1])
def test_scores_match_extended_precision_oracle(seed):
    rng = np.random.default_rng(seed)
    mats = [random_tpm(rng, alpha=0.5) for _ in range(18)]
    obs = embed.normalize(embed.observations(mats))
    res = embed.pca(obs, 2)
    scores, lam = pca_scores_mp(obs.data, 2)
    assert np.allclose(res.eigenvalues[:2], lam, rtol=1e-10, atol=0)
    assert same_up_to_sign(res.scores, scores, 1e-8)


@settings(max_examples=30)
@given(seeds, st.integers(3, 25), st.integers(2, 60))
def test_gram_and_covariance_routes_agree(seed, l, m):
    # small covariance problems checked against a direct scipy eigensolve
    from scipy.linalg import eigh

    y = embed.normalize(embed.ObservationMatrix(np.random.default_rng(seed).normal(size=(l, m)))).data
    k = min(2, l - 1, m)
    res = embed.pca(embed.ObservationMatrix(y), k)
    lam, v = eigh(y.T @ y / (l - 1))
    lam, v = lam[::-1], v[:, ::-1]
    n = min(l - 1, m)
    assert np.allclose(res.eigenvalues[:n], lam[:n], atol=1e-9)
    gap_ok = lam[k - 1] - lam[k] > 1e-6 if k < m else True
    if gap_ok and all(lam[i] - lam[i + 1] > 1e-6 for i in range(k - 1)):
        assert same_up_to_sign(res.scores, y @ v[:, :k], 1e-7)


@given(seeds)
def test_contribution_sums_to_one(seed):
    rng = np.random.default_rng(seed)
    obs = embed.normalize(embed.observations([random_tpm(rng) for _ in range(18)]))
    res = embed.pca(obs, 2)
    assert abs(res.contribution.sum() - 1.0) <= 1e-12
    assert (res.eigenvalues >= 0).all()
    assert np.all(np.diff(res.eigenvalues) <= 1e-12)


@settings(max_examples=25)
@given(seeds, st.permutations(range(12)))
def test_scores_follow_row_permutation(seed, perm):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(12, 30))
    a = embed.pca(embed.ObservationMatrix(x), 3)
    b = embed.pca(embed.ObservationMatrix(x[list(perm)]), 3)
    assert same_up_to_sign(a.scores[list(perm)], b.scores, 1e-9)


@settings(max_examples=25)
@given(seeds, st.integers(3, 20), st.integers(2, 40))
def test_full_reconstruction(seed, l, m):
    y = embed.normalize(embed.ObservationMatrix(np.random.default_rng(seed).normal(size=(l, m)))).data
    k = min(l - 1, m)
    res = embed.pca(embed.ObservationMatrix(y), k)
    assert np.linalg.norm(embed.reconstruct(res) - y) < 1e-8


def test_sign_convention():
    res = embed.pca(embed.ObservationMatrix(np.random.default_rng(4).normal(size=(10, 6))), 3)
    for comp in res.components:
        assert comp[np.argmax(np.abs(comp))] > 0
    assert np.allclose(np.linalg.norm(res.components, axis=1), 1.0)


def test_pca_argument_checks():
    obs = embed.ObservationMatrix(np.random.default_rng(0).normal(size=(5, 3)))
    with pytest.raises(ValueError):
        embed.pca(obs, 0)
    with pytest.raises(ValueError):
        embed.pca(obs, 4)
    with pytest.raises(TooFewObservations):
        embed.pca(embed.ObservationMatrix(np.ones((1, 3))), 1)


def test_degenerate_spectrum_still_returns_k_components():
    x = np.zeros((5, 8))
    x[:, 0] = [1, 2, 3, 4, 5]
    res = embed.pca(embed.ObservationMatrix(x), 2)
    assert res.components.shape == (2, 8)
    assert abs(res.components[0] @ res.components[1]) < 1e-12


def test_gate_examples():
    assert embed.cumulative_gate([9, 1] + [0] * 8, 0.8, k=1).passed
    g = embed.cumulative_gate([1, 1, 1, 1, 1], 0.8, k=2)
    assert not g.passed and g.cumulative == pytest.approx(0.4)


@given(st.lists(st.floats(0, 100), min_size=2, max_size=20).filter(lambda v: sum(v) > 1e-6),
       st.integers(1, 5), st.floats(0.05, 1.0))
def test_gate_reports_correctly_on_constructed_spectra(lam, k, thr):
    k = min(k, len(lam))
    g = embed.cumulative_gate(lam, thr, k=k)
    top = sorted(lam, reverse=True)[:k]
    share = sum(top) / sum(lam)
    assert g.cumulative == pytest.approx(share, rel=1e-12, abs=1e-15)
    assert g.passed == (g.cumulative >= thr)


def test_gate_on_pattern_matrices():
    # noiseless pattern matrices: two components carry the bulk of the variance
    tpms = pattern_tpms()
    obs = embed.normalize(embed.observations(list(tpms.values()), [f"{c}-{z}" for c, z in tpms]))
    res = embed.pca(obs, 2)
    assert embed.cumulative_gate(res, 0.8).passed
