import numpy as np
import pytest
from pydantic import ValidationError

from ewcgan.autodiff import Tape, grad_check, ops
from ewcgan.errors import ContractError, DimensionError
from ewcgan.models import (
    Checkpoint,
    MlpSpec,
    OptimizerSnapshot,
    ParamVector,
    checkpoint_from_bytes,
    discriminate,
    discriminator_spec,
    file_digest,
    forward,
    generate,
    generator_spec,
    init_params,
    layer_slices,
    load_checkpoint,
    save_checkpoint,
)


def test_parameter_count():
    assert MlpSpec(layer_widths=(2, 64, 64, 2)).n_params == 4482
    assert generator_spec().n_params == 4 * 64 + 64 + 64 * 64 + 64 + 64 * 2 + 2
    assert discriminator_spec().n_params == 2 * 64 + 64 + 64 * 64 + 64 + 64 + 1


def test_spec_rejects_bad_widths():
    with pytest.raises(ValidationError):
        MlpSpec(layer_widths=(2,))
    with pytest.raises(ValidationError):
        MlpSpec(layer_widths=(2, 0, 1))


def test_layout_is_contiguous():
    layout = generator_spec(latent_dim=3, hidden=(5,)).layout()
    assert [(e.layer, e.kind) for e in layout] == [
        ("layer_0", "weight"), ("layer_0", "bias"), ("layer_1", "weight"), ("layer_1", "bias"),
    ]
    assert [e.offset for e in layout] == [0, 15, 20, 30]


def test_init_params_is_deterministic():
    spec = generator_spec()
    assert np.array_equal(init_params(spec, 7).values, init_params(spec, 7).values)
    assert not np.array_equal(init_params(spec, 7).values, init_params(spec, 8).values)


def test_init_params_zero_biases():
    theta = init_params(discriminator_spec(), 0)
    for _, sl in layer_slices(theta, "bias"):
        assert not theta.values[sl].any()


def test_zero_generator_outputs_zero(rng):
    spec = generator_spec()
    out = generate(spec, np.zeros(spec.n_params), rng.standard_normal((9, 4)))
    assert out.shape == (9, 2)
    assert not out.data.any()


def test_zero_discriminator_is_undecided(rng):
    spec = discriminator_spec()
    logits = discriminate(spec, np.zeros(spec.n_params), rng.standard_normal((5, 2)))
    assert logits.shape == (5,)
    assert np.array_equal(ops.sigmoid(logits).data, np.full(5, 0.5))


def test_forward_is_batch_independent(rng):
    spec = generator_spec()
    theta = init_params(spec, 1)
    z = rng.standard_normal((6, 4))
    batch = generate(spec, theta, z).data
    for i in range(6):
        np.testing.assert_allclose(generate(spec, theta, z[i:i + 1]).data[0], batch[i], rtol=1e-12, atol=1e-12)


def test_forward_shape_errors(rng):
    spec = generator_spec()
    theta = init_params(spec, 1)
    with pytest.raises(DimensionError):
        generate(spec, theta, rng.standard_normal((3, 5)))
    with pytest.raises(DimensionError):
        generate(spec, np.zeros(spec.n_params - 1), rng.standard_normal((3, 4)))
    with pytest.raises(ContractError):
        generate(spec, init_params(discriminator_spec(), 0), rng.standard_normal((3, 4)))


def test_layer_slices():
    theta = init_params(MlpSpec(layer_widths=(2, 64, 2)), 0)
    slices = layer_slices(theta)
    assert [name for name, _ in slices] == ["layer_0", "layer_1"]
    assert [sl.stop - sl.start for _, sl in slices] == [128, 128]
    assert [sl.stop - sl.start for _, sl in layer_slices(theta, "bias")] == [64, 2]


def test_flatten_unflatten(rng):
    spec = discriminator_spec(hidden=(3, 4))
    theta = ParamVector.for_spec(spec, rng.standard_normal(spec.n_params))
    arrays = theta.unflatten()
    assert arrays[("layer_1", "weight")].shape == (3, 4)
    assert np.array_equal(ParamVector.flatten(arrays, theta.layout).values, theta.values)


def test_param_vector_size_must_match_layout():
    with pytest.raises(DimensionError):
        ParamVector.for_spec(generator_spec(), np.zeros(3))


def test_network_losses_pass_grad_check(rng):
    spec = discriminator_spec(hidden=(6, 6))
    x = rng.standard_normal((8, 2))
    theta = init_params(spec, 3).values

    def loss(t):
        return ops.mean(ops.square(forward(spec, t, x)))

    assert grad_check(loss, theta) < 1e-4


def test_generator_gradient_reaches_every_layer(rng):
    spec = generator_spec(hidden=(4,))
    tape = Tape()
    theta = tape.variable(init_params(spec, 2).values)
    grads = tape.backward(ops.total(ops.square(generate(spec, theta, rng.standard_normal((5, 4))))))
    for _, sl in layer_slices(init_params(spec, 2)):
        assert np.abs(grads[theta][sl]).sum() > 0


def _checkpoint() -> Checkpoint:
    g, d = generator_spec(hidden=(8,)), discriminator_spec(hidden=(8,))
    return Checkpoint(
        g_spec=g,
        d_spec=d,
        theta_g=init_params(g, 0),
        theta_d=init_params(d, 1),
        config_digest="abc",
        iteration=12,
        seed=5,
        optimizer_g=OptimizerSnapshot(np.ones(g.n_params), np.full(g.n_params, 2.0), 12),
        rng_state={"data": {"state": 1}},
    )


def test_checkpoint_round_trip(tmp_path):
    ckpt = _checkpoint()
    path = save_checkpoint(tmp_path / "a.ckpt", ckpt)
    loaded = load_checkpoint(path)
    assert loaded.params_equal(ckpt)
    assert loaded.iteration == 12 and loaded.seed == 5
    assert loaded.optimizer_g.t == 12 and loaded.optimizer_d is None
    assert np.array_equal(loaded.optimizer_g.v, ckpt.optimizer_g.v)
    assert loaded.rng_state == ckpt.rng_state
    assert file_digest(path) == ckpt.digest() == loaded.digest()


def test_checkpoint_bytes_round_trip():
    ckpt = _checkpoint()
    assert checkpoint_from_bytes(ckpt.to_bytes()).digest() == ckpt.digest()


def test_checkpoint_rejects_wrong_sizes():
    g, d = generator_spec(hidden=(8,)), discriminator_spec(hidden=(8,))
    with pytest.raises(ContractError):
        Checkpoint(g_spec=g, d_spec=d, theta_g=init_params(d, 0), theta_d=init_params(d, 0), config_digest="x")


def test_param_vector_is_read_only():
    theta = init_params(generator_spec(hidden=(3,)), 0)
    with pytest.raises(ValueError):
        theta.values[0] = 1.0
    assert np.array_equal(theta.with_values(theta.values * 2).values, theta.values * 2)
