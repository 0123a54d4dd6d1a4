import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

from ewcgan.autodiff import grad_check, ops
from ewcgan.datasets import sample
from ewcgan.errors import DivergenceError, InputError
from ewcgan.gan import Adam, Regularizer, TrainConfig, TrainState, d_loss, g_loss, pretrain, train_step
from ewcgan.models import discriminator_spec, generator_spec


@pytest.fixture
def linear_d():
    return discriminator_spec(hidden=())


def test_undecided_discriminator_loss(rng):
    spec = discriminator_spec()
    loss = d_loss(spec, np.zeros(spec.n_params), rng.standard_normal((8, 2)), rng.standard_normal((8, 2)))
    assert loss.item() == pytest.approx(2 * math.log(2.0), abs=1e-12)


def test_perfect_discriminator_loss(linear_d):
    theta = np.array([50.0, 0.0, 0.0])
    real = np.tile([1.0, 0.0], (4, 1))
    fake = np.tile([-1.0, 0.0], (4, 1))
    assert d_loss(linear_d, theta, real, fake).item() < 1e-20


def test_empty_batch_is_input_error(linear_d):
    with pytest.raises(InputError):
        d_loss(linear_d, np.zeros(3), np.zeros((0, 2)), np.zeros((3, 2)))


def test_generator_loss_variants(rng):
    g, d = generator_spec(hidden=(4,)), discriminator_spec(hidden=(4,))
    z = rng.standard_normal((6, 4))
    theta_g = rng.standard_normal(g.n_params)
    assert g_loss(g, d, theta_g, np.zeros(d.n_params), z).item() == pytest.approx(math.log(2.0), abs=1e-12)
    minimax = g_loss(g, d, theta_g, np.zeros(d.n_params), z, "minimax").item()
    assert minimax == pytest.approx(-math.log(2.0), abs=1e-12)
    with pytest.raises(InputError):
        g_loss(g, d, theta_g, np.zeros(d.n_params), z, "wasserstein")


def test_fooled_discriminator(rng, linear_d):
    g = generator_spec(hidden=(4,))
    theta_d = np.array([0.0, 0.0, 50.0])
    loss = g_loss(g, linear_d, rng.standard_normal(g.n_params), theta_d, rng.standard_normal((5, 4)))
    assert loss.item() < 1e-20


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_discriminator_loss_gradient(seed):
    rng = np.random.default_rng(seed)
    d = discriminator_spec(hidden=(8,))
    real, fake = rng.standard_normal((6, 2)), rng.standard_normal((6, 2))
    theta_d = 0.5 * rng.standard_normal(d.n_params)
    assert grad_check(lambda theta: d_loss(d, theta, real, fake), theta_d) < 1e-4


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1), st.sampled_from(["non_saturating", "minimax"]))
def test_generator_loss_gradient(seed, variant):
    rng = np.random.default_rng(seed)
    g, d = generator_spec(latent_dim=3, hidden=(8,)), discriminator_spec(hidden=(8,))
    z = rng.standard_normal((6, 3))
    theta_g, theta_d = 0.5 * rng.standard_normal(g.n_params), 0.5 * rng.standard_normal(d.n_params)
    assert grad_check(lambda theta: g_loss(g, d, theta, theta_d, z, variant), theta_g) < 1e-4


def test_adam_refuses_non_finite_gradient():
    opt = Adam(2, 0.1)
    with pytest.raises(DivergenceError) as info:
        opt.step(np.zeros(2), np.array([np.nan, 0.0]), "generator")
    assert info.value.diagnostics["label"] == "generator"
    assert opt.t == 0


def test_adam_snapshot_restore():
    opt = Adam(3, 0.01)
    params = opt.step(np.ones(3), np.array([1.0, -2.0, 0.5]))
    other = Adam(3, 0.01).restore(opt.snapshot())
    assert np.array_equal(opt.step(params, np.ones(3)), other.step(params, np.ones(3)))


def test_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(iterations=0)
    with pytest.raises(ValidationError):
        TrainConfig(beta1=1.0)


def test_zero_learning_rates_leave_parameters(tiny_config, ring):
    state = TrainState.initial(tiny_config.model_copy(update={"lr_g": 0.0, "lr_d": 0.0}))
    theta_g, theta_d = state.theta_g.copy(), state.theta_d.copy()
    train_step(state, sample(ring, 16, 0))
    assert np.array_equal(state.theta_g, theta_g)
    assert np.array_equal(state.theta_d, theta_d)
    assert state.iteration == 1


def test_train_steps_are_deterministic(tiny_config, ring):
    def run():
        state = TrainState.initial(tiny_config)
        data = np.random.default_rng(0)
        for _ in range(100):
            train_step(state, sample(ring, 16, data))
        return state

    a, b = run(), run()
    assert np.array_equal(a.theta_g, b.theta_g)
    assert np.array_equal(a.theta_d, b.theta_d)
    assert a.iteration == 100
    assert len(a.history) == 1


def test_train_step_moves_both_networks(tiny_config, ring):
    state = TrainState.initial(tiny_config)
    theta_g, theta_d = state.theta_g.copy(), state.theta_d.copy()
    train_step(state, sample(ring, 16, 0))
    assert not np.array_equal(state.theta_g, theta_g)
    assert not np.array_equal(state.theta_d, theta_d)


def test_divergence_carries_diagnostics(tiny_config, ring):
    state = TrainState.initial(tiny_config)
    blowup = Regularizer(1.0, lambda theta: ops.scale(ops.total(ops.square(theta)), 1e308))
    with pytest.raises(DivergenceError) as info:
        train_step(state, sample(ring, 16, 0), g_regularizer=blowup)
    assert info.value.diagnostics["phase"] == "generator"
    assert info.value.diagnostics["iteration"] == 0
    assert info.value.exit_code == 4


def test_zero_weight_regularizer_is_reported_not_applied(tiny_config, ring):
    plain, regularized = TrainState.initial(tiny_config), TrainState.initial(tiny_config)
    real = sample(ring, 16, 0)
    train_step(plain, real)
    train_step(plain, real)
    penalty = Regularizer(0.0, lambda theta: ops.total(ops.square(theta)))
    train_step(regularized, real, g_regularizer=penalty)
    train_step(regularized, real, g_regularizer=penalty)
    assert np.array_equal(plain.theta_g, regularized.theta_g)
    assert regularized.history[-1].penalty > 0
    assert regularized.history[-1].total_g_loss == regularized.history[-1].g_loss


def test_pretrain_is_reproducible(tiny_config, ring):
    records = []
    first = pretrain(tiny_config, ring, on_log=records.append)
    second = pretrain(tiny_config, ring)
    assert first.digest() == second.digest()
    assert first.iteration == 20 and first.stage == "pretrain"
    assert [r.iteration for r in records] == [10, 20]
    assert all(math.isfinite(r.fd) for r in records)


def test_resume_matches_uninterrupted_run(tiny_config, ring):
    saved = []
    full = pretrain(tiny_config, ring, on_checkpoint=saved.append)
    assert [c.iteration for c in saved] == [10, 20]
    resumed = pretrain(tiny_config, ring, resume_from=saved[0])
    assert resumed.params_equal(full)
    assert resumed.digest() == full.digest()


def test_resume_with_nothing_left(tiny_checkpoint, tiny_config, ring):
    again = pretrain(tiny_config, ring, resume_from=tiny_checkpoint)
    assert again.params_equal(tiny_checkpoint)
