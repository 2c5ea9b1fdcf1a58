import numpy as np
import pytest
from conftest import max_rel_error, numeric_grad

from lpl.errors import ConfigError, ContractError, NumericError, ShapeError
from lpl.nn import (
    LayerSpec,
    MlpNetwork,
    RmsPropState,
    apply_activation_grad,
    compose,
    gaussian_sample,
    init_network,
    mlp_specs,
    network_backward,
    network_forward,
    rmsprop_step,
)


class TestInit:
    def test_same_seed_is_bitwise_identical(self):
        a = init_network([LayerSpec(2, 2)], seed=7)
        b = init_network([LayerSpec(2, 2)], seed=7)
        assert a.equal(b)

    def test_biases_start_at_zero(self):
        net = init_network(mlp_specs([4, 6, 3], "relu"), seed=0)
        assert all(np.all(b == 0.0) for b in net.biases)

    def test_relu_weight_variance_matches_he_scale(self):
        net = init_network([LayerSpec(1000, 1000, "relu")], seed=3)
        var = net.weights[0].var()
        assert abs(var - 2.0 / 1000) < 0.1 * 2.0 / 1000

    def test_broken_chain_rejected(self):
        with pytest.raises(ConfigError):
            init_network([LayerSpec(2, 3), LayerSpec(4, 1)], seed=0)

    def test_unknown_activation_rejected(self):
        with pytest.raises(ConfigError):
            LayerSpec(2, 2, "swish")

    def test_parameters_are_read_only(self):
        net = init_network([LayerSpec(2, 2)], seed=0)
        with pytest.raises(ValueError):
            net.weights[0][0, 0] = 1.0


class TestForward:
    def test_identity_layer(self, identity_layer):
        out, _ = network_forward(identity_layer, [[3.0, -1.0]])
        np.testing.assert_array_equal(out, [[3.0, -1.0]])

    def test_relu(self):
        net = MlpNetwork((LayerSpec(2, 2, "relu"),), (np.eye(2),), (np.zeros(2),))
        np.testing.assert_array_equal(net([[-1.0, 2.0]]), [[0.0, 2.0]])

    def test_tanh_net_matches_reimplementation(self, small_tanh_net):
        x = np.random.default_rng(0).normal(size=(4, 3))
        w0, w1 = small_tanh_net.weights
        b0, b1 = small_tanh_net.biases
        expected = np.tanh(np.tanh(x @ w0 + b0) @ w1 + b1)
        np.testing.assert_allclose(small_tanh_net(x), expected, rtol=0, atol=1e-15)

    def test_wrong_width_rejected(self, small_tanh_net):
        with pytest.raises(ShapeError):
            network_forward(small_tanh_net, np.zeros((2, 4)))

    def test_compose_chains_networks(self, small_tanh_net):
        head = init_network([LayerSpec(2, 3, "relu")], seed=2)
        x = np.random.default_rng(1).normal(size=(5, 3))
        np.testing.assert_allclose(compose(small_tanh_net, head)(x), head(small_tanh_net(x)))


class TestBackward:
    def test_zero_output_grad_gives_zero_gradients(self, small_tanh_net):
        x = np.ones((2, 3))
        out, tr = network_forward(small_tanh_net, x)
        grads, gin = network_backward(small_tanh_net, tr, np.zeros_like(out))
        assert all(np.all(g == 0.0) for g in grads)
        assert np.all(gin == 0.0)

    def test_identity_layer_input_grad_is_weight_row_sums(self):
        w = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        net = MlpNetwork((LayerSpec(2, 3),), (w,), (np.zeros(3),))
        _, tr = network_forward(net, [[0.5, -0.5]])
        _, gin = network_backward(net, tr, np.ones((1, 3)))
        np.testing.assert_array_equal(gin, [[6.0, 15.0]])

    @pytest.mark.parametrize("hidden,output", [("tanh", "tanh"), ("sigmoid", "identity"),
                                               ("relu", "sigmoid"), ("leaky_relu", "tanh")])
    def test_matches_finite_differences(self, hidden, output):
        rng = np.random.default_rng(11)
        net = init_network(mlp_specs([3, 4, 4, 2], hidden, output), seed=5)
        x = rng.normal(size=(3, 3))
        target = rng.normal(size=(3, 2))

        def loss_of(params, xx):
            return 0.5 * np.sum((net.with_params(params)(xx) - target) ** 2)

        out, tr = network_forward(net, x)
        grads, gin = network_backward(net, tr, out - target)
        params = list(net.params)
        for i, p in enumerate(params):
            def f(v, i=i):
                ps = list(params)
                ps[i] = v
                return loss_of(ps, x)
            assert max_rel_error(grads[i], numeric_grad(f, p)) < 1e-4
        assert max_rel_error(gin, numeric_grad(lambda v: loss_of(params, v), x)) < 1e-4

    def test_stale_trace_rejected(self, small_tanh_net):
        _, tr = network_forward(small_tanh_net, np.ones((1, 3)))
        other = small_tanh_net.with_params(small_tanh_net.params)
        with pytest.raises(ContractError):
            network_backward(other, tr, np.ones((1, 2)))


class TestActivationGrad:
    def test_sigmoid_at_zero(self):
        assert apply_activation_grad("sigmoid", np.array(0.0)) == 0.25

    def test_leaky_relu_slope(self):
        assert apply_activation_grad("leaky_relu", np.array(-3.0), leak=0.2) == pytest.approx(0.2)

    def test_tanh_at_one(self):
        assert apply_activation_grad("tanh", np.array(1.0)) == pytest.approx(0.41997, abs=1e-5)
        assert apply_activation_grad("tanh", np.array(1.0)) == 1.0 - np.tanh(1.0) ** 2


class TestRmsProp:
    def test_zero_gradient_decays_accumulator_only(self):
        p = [np.array([1.0, -2.0])]
        st = RmsPropState((np.array([0.5, 1.0]),))
        new_p, new_st = rmsprop_step(p, [np.zeros(2)], st)
        np.testing.assert_array_equal(new_p[0], p[0])
        np.testing.assert_allclose(new_st.accumulators[0], [0.45, 0.9])

    def test_scalar_hand_computation(self):
        st = RmsPropState((np.zeros(1),), decay=0.9, epsilon=1e-8, step_size=3e-4)
        new_p, new_st = rmsprop_step([np.zeros(1)], [np.ones(1)], st)
        assert new_st.accumulators[0][0] == pytest.approx(0.1)
        assert new_p[0][0] == pytest.approx(-3e-4 / (np.sqrt(0.1) + 1e-8), rel=1e-12)
        assert new_p[0][0] == pytest.approx(-9.4868e-4, abs=1e-8)

    def test_second_identical_step_is_smaller(self):
        st = RmsPropState.zeros_like([np.zeros(1)])
        p1, st = rmsprop_step([np.zeros(1)], [np.ones(1)], st)
        p2, _ = rmsprop_step(p1, [np.ones(1)], st)
        assert abs(p2[0][0] - p1[0][0]) < abs(p1[0][0])

    def test_non_finite_gradient_names_layer(self):
        params = [np.zeros((2, 2)), np.zeros(2), np.zeros((2, 1)), np.zeros(1)]
        grads = [np.zeros((2, 2)), np.zeros(2), np.full((2, 1), np.nan), np.zeros(1)]
        with pytest.raises(NumericError) as e:
            rmsprop_step(params, grads, RmsPropState.zeros_like(params))
        assert e.value.layer == 1


class TestGaussianSample:
    def test_zero_stddev_is_constant(self):
        assert np.all(gaussian_sample(3, 4, 0.0, 0.0, seed=1) == 0.0)

    def test_reproducible(self):
        np.testing.assert_array_equal(gaussian_sample(5, 2, seed=9), gaussian_sample(5, 2, seed=9))

    def test_moments(self):
        s = gaussian_sample(1000, 1000, 0.0, 1.0, seed=2)
        assert abs(s.mean()) < 0.01
        assert abs(s.std() - 1.0) < 0.01
