import math

import numpy as np
import pytest

from prodrop import autodiff as ad
from prodrop.errors import ConfigError, DimensionError, DomainError, InvalidMaskError, NumericalError
from prodrop.gradcheck import check_gradients


def leaf(x):
    return ad.Tensor(x, requires_grad=True)


@pytest.mark.parametrize("a, b, expected", [
    ([[1, 2], [3, 4]], np.eye(2), [[1, 2], [3, 4]]),
    ([[1, 0], [0, 1]], [[5], [6]], [[5], [6]]),
    ([[1, 2]], [[3], [4]], [[11]]),
])
def test_matmul_examples(a, b, expected):
    np.testing.assert_array_equal(ad.matmul(ad.Tensor(a), ad.Tensor(b)).data, expected)


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        ad.matmul(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((2, 3))))


def test_elementwise_examples():
    assert ad.sigmoid(ad.Tensor(0.0)).item() == 0.5
    assert ad.relu(ad.Tensor(-3.0)).item() == 0.0
    np.testing.assert_array_equal(ad.mul(ad.Tensor([1, 2]), ad.Tensor([3, 4])).data, [3, 8])
    np.testing.assert_array_equal(ad.elementwise("tanh", ad.Tensor([0.0])).data, [0.0])


def test_binary_shape_mismatch():
    with pytest.raises(DimensionError):
        ad.add(ad.Tensor([1.0, 2.0]), ad.Tensor([1.0, 2.0, 3.0]))


def test_softmax_examples():
    np.testing.assert_allclose(ad.softmax(ad.Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3)
    p = ad.softmax(ad.Tensor([5.0, 7.0, 9.0]), mask=[True, False, False])
    np.testing.assert_array_equal(p.data, [1.0, 0.0, 0.0])
    np.testing.assert_allclose(ad.softmax(ad.Tensor([1.0, 2.0])).data,
                               [0.26894, 0.73106], atol=1e-5)


def test_softmax_empty_mask_row():
    with pytest.raises(InvalidMaskError):
        ad.softmax(ad.Tensor([[1.0, 2.0], [3.0, 4.0]]), mask=[[True, False], [False, False]])


def test_softmax_masked_positions_get_zero_gradient():
    x = leaf([1.0, 2.0, 3.0])
    p = ad.softmax(x, mask=[True, False, True])
    ad.backward(ad.cross_entropy(p, 0))
    assert x.grad[1] == 0.0


def test_softmax_large_inputs_stable():
    p = ad.softmax(ad.Tensor([1000.0, 1000.0]))
    np.testing.assert_allclose(p.data, [0.5, 0.5])


def test_cross_entropy_examples():
    assert math.isclose(ad.cross_entropy(ad.Tensor([0.25] * 4), 2).item(), math.log(4))
    assert ad.cross_entropy(ad.Tensor([1.0, 0.0, 0.0]), 0).item() == 0.0
    assert abs(ad.cross_entropy(ad.Tensor([0.26894, 0.73106]), 0).item() - 1.31326) < 1e-4


def test_cross_entropy_zero_probability():
    with pytest.raises(DomainError):
        ad.cross_entropy(ad.Tensor([1.0, 0.0]), 1)


def test_log_domain():
    with pytest.raises(DomainError):
        ad.log(ad.Tensor([1.0, 0.0]))


def test_backward_examples():
    x = leaf([1.0, 2.0, 3.0])
    ad.backward(ad.sum_all(x))
    np.testing.assert_array_equal(x.grad, [1, 1, 1])
    y = leaf(3.0)
    ad.backward(y * y)
    assert y.grad == 6.0


def test_backward_needs_scalar():
    with pytest.raises(DimensionError):
        ad.backward(leaf([1.0, 2.0]) * 2.0)


def test_shared_subexpression_accumulates():
    x = leaf(2.0)
    y = x * x              # used twice below
    loss = y + y * x       # x^2 + x^3 -> grad 2x + 3x^2 = 16
    ad.backward(loss)
    assert x.grad == 16.0


def test_leaf_gradients_accumulate_across_calls():
    x = leaf(3.0)
    y = x * x
    ad.backward(y)
    ad.backward(y)
    assert x.grad == 12.0


def test_no_grad_records_nothing():
    x = leaf([1.0])
    with ad.no_grad():
        y = x * 2.0
    assert not y.requires_grad and y._parents == ()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_raises():
    with pytest.raises(NumericalError):
        ad.exp(ad.Tensor([1000.0]))


def test_dropout_identities(rng):
    x = ad.Tensor(rng.normal(size=(3, 4)))
    assert ad.dropout(x, 0.0, True, rng) is x
    assert ad.dropout(x, 0.5, False, rng) is x
    with pytest.raises(ConfigError):
        ad.dropout(x, 1.0, True, rng)


def test_dropout_monte_carlo_mean():
    rng = np.random.default_rng(0)
    x = ad.Tensor(np.array([1.0, 2.0, 3.0, 4.0]))
    total = 0.0
    trials = 100_000
    for _ in range(trials // 1000):
        batch = ad.dropout(ad.Tensor(np.tile(x.data, (1000, 1))), 0.5, True, rng)
        total += batch.data.mean(axis=1).sum()
    assert abs(total / trials - x.data.mean()) <= 0.02 * x.data.mean()


def test_dropout_deterministic_given_seed():
    x = ad.Tensor(np.ones((5, 5)))
    a = ad.dropout(x, 0.3, True, np.random.default_rng(9)).data
    b = ad.dropout(x, 0.3, True, np.random.default_rng(9)).data
    np.testing.assert_array_equal(a, b)


OPS = {
    "tanh": lambda a, b: ad.tanh(a),
    "sigmoid": lambda a, b: ad.sigmoid(a),
    "exp": lambda a, b: ad.exp(a),
    "mul": lambda a, b: ad.mul(a, b),
    "sub": lambda a, b: ad.sub(a, b),
    "matmul": lambda a, b: ad.matmul(a, ad.transpose(b)),
    "add_row": lambda a, b: ad.add_row(a, ad.reshape(ad.gather_rows(b, np.array([1])), (3,))),
    "mul_row": lambda a, b: ad.mul_row(a, ad.reshape(ad.gather_rows(b, np.array([0])), (3,))),
    "mul_col": lambda a, b: ad.mul_col(a, ad.transpose(ad.gather_rows(ad.transpose(b),
                                                                      np.array([2])))),
    "softmax_rows": lambda a, b: ad.softmax(a, mask=[[True, True, False], [True, True, True]]),
    "concat": lambda a, b: ad.concat([a, b], axis=1),
    "gather": lambda a, b: ad.gather_rows(a, np.array([1, 1, 0])),
    "log": lambda a, b: ad.log(ad.sigmoid(a)),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients_match_finite_differences(name):
    rng = np.random.default_rng(42)
    a, b = leaf(rng.normal(size=(2, 3))), leaf(rng.normal(size=(2, 3)))
    weights = ad.Tensor(rng.normal(size=OPS[name](a, b).shape))
    errors = check_gradients(lambda: ad.sum_all(OPS[name](a, b) * weights), {"a": a, "b": b})
    assert max(errors.values()) <= 1e-6


def test_bilinear_gradient():
    rng = np.random.default_rng(5)
    left, w, right = leaf(rng.normal(size=(4, 3))), leaf(rng.normal(size=(2, 3, 5))), leaf(
        rng.normal(size=(4, 5)))
    out = ad.bilinear(left, w, right)
    assert out.shape == (4, 2)
    np.testing.assert_allclose(out.data[1, 0], left.data[1] @ w.data[0] @ right.data[1])
    errors = check_gradients(lambda: ad.sum_all(ad.tanh(ad.bilinear(left, w, right))),
                             {"l": left, "w": w, "r": right})
    assert max(errors.values()) <= 1e-6


def test_relu_gradient_at_zero_is_zero():
    x = leaf([0.0, 1.0, -1.0])
    ad.backward(ad.sum_all(ad.relu(x)))
    np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])


def test_param_store():
    store = ad.ParamStore(seed=1)
    store.glorot("a.W", (3, 4))
    store.zeros("a.b", (4,))
    with pytest.raises(ConfigError):
        store.zeros("a.b", (4,))
    assert list(store) == ["a.W", "a.b"] and "a.W" in store and len(store) == 2
    state = store.state_dict()
    other = ad.ParamStore(seed=2)
    other.glorot("a.W", (3, 4))
    other.zeros("a.b", (4,))
    other.load_state_dict(state)
    np.testing.assert_array_equal(other["a.W"].data, store["a.W"].data)
    with pytest.raises(ConfigError):
        other.load_state_dict({"a.W": state["a.W"]})


def test_param_store_seeded_init_is_deterministic():
    a, b = ad.ParamStore(seed=7), ad.ParamStore(seed=7)
    np.testing.assert_array_equal(a.glorot("W", (5, 5)).data, b.glorot("W", (5, 5)).data)
