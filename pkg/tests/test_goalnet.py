import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ctaf_goalcast import autodiff as ad
from ctaf_goalcast.geometry import Depart, IntentLabel, Landing, LocalPosition
from ctaf_goalcast.goalnet import (
    CheckpointError,
    GoalMixture,
    GoalNet,
    ModelConfig,
    entropy_reg,
    load_params,
    nll,
    sample_goals,
    save_params,
)
from ctaf_goalcast.sim import BenchmarkConfig, ambiguity_benchmark
from ctaf_goalcast.trainer import batch_loss

GOLDEN = Path(__file__).parent / "data" / "golden_mixture.json"
SMALL = ModelConfig(n_traj=16, n_int=4, mlp_hidden=16)


def naive_nll(mix, g):
    dens = 0.0
    for k in range(mix.K):
        v = mix.variances[k]
        dens += mix.weights[k] * np.prod(np.exp(-((g - mix.means[k]) ** 2) / (2 * v)) / np.sqrt(2 * np.pi * v))
    return -math.log(dens)


def random_mixture(rng, K=5):
    w = rng.dirichlet(np.ones(K))
    return GoalMixture(rng.normal(0, 1.5, (K, 3)), rng.uniform(0.2, 3.0, (K, 3)), w)


@pytest.fixture(scope="module")
def bench():
    return ambiguity_benchmark(BenchmarkConfig(n_flights=30))


def window(seed=0, T=11):
    rng = np.random.default_rng(seed)
    return np.cumsum(rng.normal(0, 0.05, (T, 3)), axis=0) + [1.0, -2.0, 0.3]


# -- mixture maths


def test_nll_standard_normal_at_mean():
    mix = GoalMixture(np.zeros((1, 3)), np.ones((1, 3)), [1.0])
    assert nll(mix, LocalPosition(0, 0, 0)) == pytest.approx(1.5 * math.log(2 * math.pi), abs=1e-12)
    assert nll(mix, np.zeros(3)) == pytest.approx(2.75682, abs=1e-5)


def test_nll_mixture_collapse():
    one = GoalMixture([[1, 2, 3]], [[0.5, 1, 2]], [1.0])
    two = GoalMixture([[1, 2, 3]] * 2, [[0.5, 1, 2]] * 2, [0.5, 0.5])
    g = np.array([0.3, 2.5, 2.0])
    assert nll(two, g) == pytest.approx(nll(one, g), abs=1e-14)


def test_nll_matches_direct_density():
    rng = np.random.default_rng(0)
    for _ in range(20):
        mix = random_mixture(rng)
        g = rng.normal(0, 1.5, 3)
        assert abs(nll(mix, g) - naive_nll(mix, g)) < 1e-10


def test_nll_tensor_matches_scalar():
    from ctaf_goalcast.goalnet import mixture_nll_tensor

    rng = np.random.default_rng(3)
    mixes = [random_mixture(rng) for _ in range(4)]
    goals = rng.normal(size=(4, 3))
    out = mixture_nll_tensor(
        ad.Tensor(np.stack([m.means for m in mixes])),
        ad.Tensor(np.log(np.stack([m.variances for m in mixes]))),
        ad.Tensor(np.log(np.stack([m.weights for m in mixes]))),
        goals,
    ).value
    np.testing.assert_allclose(out, [nll(m, g) for m, g in zip(mixes, goals)], atol=1e-12)


def test_mixture_validation():
    with pytest.raises(ValueError):
        GoalMixture(np.zeros((2, 3)), np.ones((2, 3)), [0.5, 0.6])
    with pytest.raises(ValueError):
        GoalMixture(np.zeros((1, 3)), np.zeros((1, 3)), [1.0])


def test_entropy_reg_examples():
    one = GoalMixture(np.zeros((1, 3)), np.ones((1, 3)), [1.0])
    assert entropy_reg(one) == 0.0
    same = GoalMixture(np.zeros((2, 3)), np.ones((2, 3)), [0.5, 0.5])
    assert entropy_reg(same) == pytest.approx(0.01)
    far = GoalMixture([[0, 0, 0], [10, 0, 0]], np.ones((2, 3)), [0.5, 0.5])
    assert entropy_reg(far) < 1e-40


def test_entropy_tensor_matches_scalar():
    from ctaf_goalcast.goalnet import entropy_reg_tensor

    rng = np.random.default_rng(4)
    mixes = [random_mixture(rng) for _ in range(3)]
    for mode in ("repulsion", "weight_entropy"):
        cfg = ModelConfig(entropy_mode=mode)
        out = entropy_reg_tensor(ad.Tensor(np.stack([m.means for m in mixes])),
                                 ad.Tensor(np.log(np.stack([m.weights for m in mixes]))), cfg).value
        np.testing.assert_allclose(out, [entropy_reg(m, mode=mode) for m in mixes], atol=1e-14)


# -- sampling


def test_sampling_degenerate_and_single_component():
    tight = GoalMixture([[1.0, 2.0, 0.5]], np.full((1, 3), 1e-14), [1.0])
    s = sample_goals(tight, 50, 0)
    assert np.abs(s - [1.0, 2.0, 0.5]).max() < 1e-5
    mix = GoalMixture([[0, 0, 0], [100, 100, 100]], np.full((2, 3), 0.01), [1.0, 0.0])
    assert np.abs(sample_goals(mix, 200, 1)).max() < 1.0


def test_sample_mean_clt():
    mix = GoalMixture([[0, 0, 0], [4, -2, 1]], [[1, 1, 1], [0.5, 2, 0.1]], [0.3, 0.7])
    n = 100_000
    s = sample_goals(mix, n, 0)
    mu = mix.mean()
    var = mix.weights @ (mix.variances + mix.means**2) - mu**2
    assert np.all(np.abs(s.mean(axis=0) - mu) < 3 * np.sqrt(var / n))


@given(st.integers(1, 30), st.integers(1, 30), st.integers(0, 2**31))
def test_sample_prefix_property(m, n, seed):
    mix = GoalMixture([[0, 0, 0], [3, 1, 0], [-2, 2, 1]], np.ones((3, 3)), [0.2, 0.5, 0.3])
    a, b = sorted((m, n))
    np.testing.assert_array_equal(sample_goals(mix, a, seed), sample_goals(mix, b, seed)[:a])


def test_sample_requires_positive_n():
    with pytest.raises(ValueError):
        sample_goals(GoalMixture(np.zeros((1, 3)), np.ones((1, 3)), [1.0]), 0, 0)


# -- model


def test_encoder_shape_and_translation_invariance(labels):
    m = GoalNet(ModelConfig(), labels)
    obs = window(1)
    h = m.encode_trajectory(obs)
    assert h.shape == (128,) and np.all(np.isfinite(h))
    np.testing.assert_allclose(m.encode_trajectory(obs + [5.0, 0, 0]), h, atol=1e-12)
    with pytest.raises(ValueError):
        m.encode_trajectory([])


def test_batch_matches_single(labels):
    m = GoalNet(SMALL, labels)
    ws = [window(i) for i in range(4)]
    ls = [labels[i] for i in range(4)]
    batch = m.predict_batch(ws, ls)
    for w, l, mix in zip(ws, ls, batch):
        single = m.predict(w, l)
        np.testing.assert_allclose(single.means, mix.means, atol=1e-12)
    flipped = m.predict_batch(ws[::-1], ls[::-1])
    np.testing.assert_allclose(flipped[0].means, batch[-1].means, atol=1e-12)


def test_embedding(labels):
    m = GoalNet(ModelConfig(), labels)
    assert m.params["embed"].shape == (17, 32)
    np.testing.assert_array_equal(m.embed_intent(Landing("08")), m.embed_intent(Landing("08")))
    assert m.embed_intent(Depart("N")).shape == (32,)
    with pytest.raises(KeyError):
        m.embed_intent(Landing("17"))


def test_predict_validity_and_k1(labels):
    m = GoalNet(ModelConfig(K=1), labels)
    mix = m.predict(window(2), Depart("E"))
    assert mix.weights.tolist() == [1.0]
    big = GoalNet(SMALL, labels)
    for i, l in enumerate(labels):
        mix = big.predict(window(i), l)
        assert abs(mix.weights.sum() - 1) <= 1e-12 and np.all(mix.variances > 0)


def test_no_intent_variant_ignores_label(labels):
    from dataclasses import replace

    m = GoalNet(replace(SMALL, use_intent=False), labels)
    assert "embed" not in m.params
    a, b = m.predict(window(3), Landing("08")), m.predict(window(3), Depart("N"))
    np.testing.assert_array_equal(a.means, b.means)


def test_golden_mixture(labels):
    gold = json.loads(GOLDEN.read_text())
    m = GoalNet(ModelConfig(init_seed=gold["init_seed"]), labels)
    mix = m.predict(np.array(gold["obs"]), IntentLabel.parse(gold["label"]))
    again = m.predict(np.array(gold["obs"]), IntentLabel.parse(gold["label"]))
    assert mix.means.tobytes() == again.means.tobytes()
    np.testing.assert_allclose(mix.means, gold["means"], rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(mix.variances, gold["variances"], rtol=1e-12)
    np.testing.assert_allclose(mix.weights, gold["weights"], rtol=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(K=0)
    with pytest.raises(ValueError):
        ModelConfig(dilations=(1, 4, 2))
    assert ModelConfig().receptive_field == 15


def test_full_loss_gradient_check(labels, bench):
    m = GoalNet(ModelConfig(), labels)
    rng = np.random.default_rng(0)
    for p in m.params.values():  # move biases off ReLU kinks
        p.value += rng.normal(0, 0.02, p.shape)
    batch = bench.split.train[:6]
    assert ad.grad_check(lambda: batch_loss(m, batch), m.param_list(), samples=200, seed=1) < 1e-4


# -- checkpoints


def test_checkpoint_roundtrip(tmp_path, labels):
    m = GoalNet(SMALL, labels)
    save_params(tmp_path / "m.ckpt", m)
    back = load_params(tmp_path / "m.ckpt", expect_config=SMALL, expect_labels=labels)
    assert back.labels == labels
    for k in m.params:
        assert back.params[k].value.tobytes() == m.params[k].value.tobytes()


def test_checkpoint_mismatches(tmp_path, labels):
    m = GoalNet(SMALL, labels)
    p = tmp_path / "m.ckpt"
    save_params(p, m)
    with pytest.raises(CheckpointError, match="label set mismatch"):
        load_params(p, expect_labels=labels[:12])
    with pytest.raises(CheckpointError, match="config mismatch"):
        load_params(p, expect_config=ModelConfig())
    data = p.read_bytes()
    (tmp_path / "cut.ckpt").write_bytes(data[: len(data) - 100])
    with pytest.raises(CheckpointError, match="truncated"):
        load_params(tmp_path / "cut.ckpt")
    (tmp_path / "junk.ckpt").write_bytes(b"hello\n")
    with pytest.raises(CheckpointError):
        load_params(tmp_path / "junk.ckpt")
