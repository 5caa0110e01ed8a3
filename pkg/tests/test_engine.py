import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from vmfgae import engine as ad
from vmfgae.errors import NumericalError, ShapeError


def test_logistic_at_zero():
    x = ad.leaf(np.zeros((1, 1)))
    assert ad.evaluate(ad.logistic(x))[0, 0] == 0.5


def test_identity_matmul():
    m = np.random.default_rng(0).normal(size=(3, 3))
    out = ad.evaluate(ad.leaf(np.eye(3)) @ ad.leaf(m))
    np.testing.assert_array_equal(out, m)


def test_sum_of_product_with_identity():
    a = ad.leaf(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert ad.evaluate(ad.reduce_sum(a @ ad.leaf(np.eye(2))))[0, 0] == 10.0


def test_square_derivative():
    x = ad.leaf(np.array([[3.0]]))
    (g,) = ad.gradient(ad.hadamard(x, x), [x])
    assert g[0, 0] == 6.0


def test_gradient_of_sum_matches_fd_oracle():
    a = ad.leaf(np.random.default_rng(1).normal(size=(3, 3)))
    root = ad.reduce_sum(ad.hadamard(a, ad.leaf(np.eye(3))))
    (g,) = ad.gradient(root, [a])
    # central differences, computed independently of the engine's own checker
    fd = np.zeros((3, 3))
    eps = 1e-5
    for i in range(3):
        for j in range(3):
            base = a.value.copy()
            up, dn = base.copy(), base.copy()
            up[i, j] += eps
            dn[i, j] -= eps
            fd[i, j] = (np.trace(up) - np.trace(dn)) / (2 * eps)
    np.testing.assert_allclose(g, fd, atol=1e-9)
    np.testing.assert_array_equal(g, np.eye(3))


def test_unreachable_leaf_gets_zero_gradient():
    x = ad.leaf(np.ones((1, 1)))
    other = ad.leaf(np.ones((2, 3)))
    gx, go = ad.gradient(ad.reduce_sum(x), [x, other])
    assert gx[0, 0] == 1.0
    assert go.shape == (2, 3) and not go.any()


def test_non_scalar_root_rejected():
    x = ad.leaf(np.ones((2, 2)))
    with pytest.raises(ShapeError):
        ad.gradient(x, [x])


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        ad.leaf(np.ones((2, 3))) @ ad.leaf(np.ones((2, 3)))
    with pytest.raises(ShapeError):
        ad.add(ad.leaf(np.ones((2, 2))), ad.leaf(np.ones((1, 2))))


def test_non_finite_forward_raises():
    x = ad.leaf(np.array([[-1.0]]))
    with pytest.raises(NumericalError, match="log"):
        ad.evaluate(ad.log(x))


def test_fd_check_quadratic():
    rng = np.random.default_rng(2)
    w = ad.leaf(rng.normal(size=(4, 3)))
    t = ad.leaf(rng.normal(size=(4, 3)))
    d = w - t
    assert ad.finite_difference_check(ad.reduce_sum(ad.hadamard(d, d)), w, 1e-5) < 1e-7


def test_fd_check_constant_expression():
    w = ad.leaf(np.ones((2, 2)))
    c = ad.leaf(np.full((1, 1), 3.0))
    assert ad.finite_difference_check(ad.exp(c), w) == 0.0


def _rand(shape, seed):
    return np.random.default_rng(seed).uniform(-1, 1, size=shape)


# one builder per op-kind; each returns (scalar root, leaf to check)
def _op_cases():
    def unary(fn, shift=0.0):
        def build(seed):
            x = ad.leaf(_rand((3, 4), seed) + shift)
            return ad.reduce_sum(ad.hadamard(fn(x), ad.leaf(_rand((3, 4), seed + 100)))), x
        return build

    def matmul(seed):
        a = ad.leaf(_rand((3, 4), seed))
        return ad.reduce_sum(a @ ad.leaf(_rand((4, 2), seed + 1))), a

    def hadamard(seed):
        a = ad.leaf(_rand((3, 3), seed))
        return ad.reduce_sum(ad.hadamard(a, a)), a

    def add(seed):
        a = ad.leaf(_rand((2, 3), seed))
        return ad.squared_norm(a + ad.leaf(_rand((2, 3), seed + 1))), a

    def scalar_mul(seed):
        a = ad.leaf(_rand((2, 3), seed))
        return ad.squared_norm(ad.scalar_mul(a, -1.7)), a

    def reduce_mean(seed):
        a = ad.leaf(_rand((3, 3), seed))
        return ad.reduce_mean(ad.hadamard(a, a)), a

    def squared_norm(seed):
        a = ad.leaf(_rand((3, 2), seed))
        return ad.squared_norm(a), a

    def householder_mu(seed):
        mu = ad.leaf(_rand((4, 3), seed))
        x = ad.leaf(_rand((4, 3), seed + 1))
        w = ad.leaf(_rand((4, 3), seed + 2))
        return ad.reduce_sum(ad.hadamard(ad.householder(ad.row_normalize(mu), ad.row_normalize(x)), w)), mu

    def householder_x(seed):
        mu = ad.leaf(_rand((4, 3), seed))
        x = ad.leaf(_rand((4, 3), seed + 1))
        w = ad.leaf(_rand((4, 3), seed + 2))
        return ad.reduce_sum(ad.hadamard(ad.householder(ad.row_normalize(mu), x), w)), x

    def inf_normalize(seed):
        a = ad.leaf(np.abs(_rand((4, 4), seed)))
        return ad.reduce_sum(ad.hadamard(ad.inf_normalize(a), ad.leaf(_rand((4, 4), seed + 1)))), a

    return {
        "matmul": matmul, "add": add, "hadamard": hadamard, "scalar_mul": scalar_mul,
        "tanh": unary(ad.tanh), "logistic": unary(ad.logistic), "row_normalize": unary(ad.row_normalize),
        "sum": unary(lambda x: x), "mean": reduce_mean, "squared_norm": squared_norm,
        "log": unary(ad.log, shift=2.0), "exp": unary(ad.exp), "transpose": unary(lambda x: ad.transpose(ad.transpose(x))),
        "householder_mu": householder_mu, "householder_x": householder_x, "inf_normalize": inf_normalize,
    }


@pytest.mark.parametrize("name", sorted(_op_cases()))
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_every_op_matches_finite_differences(name, seed):
    root, leaf = _op_cases()[name](seed)
    assert ad.finite_difference_check(root, leaf, 1e-5) < 1e-4


def test_evaluate_is_bit_deterministic():
    a = ad.leaf(_rand((5, 5), 3))
    root = ad.reduce_sum(ad.tanh(a @ a) + ad.logistic(a))
    first = ad.evaluate(root).copy()
    ad.bind(a, _rand((5, 5), 3))
    assert ad.evaluate(root).tobytes() == first.tobytes()


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 3), elements=st.floats(-1e3, 1e3)))
def test_row_normalize_unit_rows(x):
    out = ad.evaluate(ad.row_normalize(ad.leaf(x)))
    norms = np.linalg.norm(out, axis=1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-12)


def test_zero_row_maps_to_first_basis_vector_with_zero_gradient():
    x = ad.leaf(np.array([[0.0, 0.0, 0.0], [3.0, 4.0, 0.0]]))
    out = ad.evaluate(ad.row_normalize(x))
    np.testing.assert_array_equal(out[0], [1.0, 0.0, 0.0])
    (g,) = ad.gradient(ad.reduce_sum(ad.row_normalize(x)), [x])
    assert not g[0].any()


def test_rebinding_reuses_graph():
    x = ad.leaf(shape=(1, 1))
    y = ad.hadamard(x, x)
    assert ad.evaluate(y, {x: np.array([[2.0]])})[0, 0] == 4.0
    assert ad.evaluate(y, {x: np.array([[3.0]])})[0, 0] == 9.0
    with pytest.raises(ShapeError):
        ad.bind(x, np.ones((2, 1)))


def test_adam_zero_gradient_leaves_params():
    p = [np.array([[1.0, -2.0]])]
    state = ad.AdamState(lr=0.1)
    new, _ = ad.adam_step(p, [np.zeros((1, 2))], state)
    np.testing.assert_array_equal(new[0], p[0])


def test_adam_first_step_magnitude():
    # hand evaluation: m = 0.1, v = 0.001, m_hat = 1, v_hat = 1 -> step = lr / (1 + eps)
    p = [np.array([[0.0]])]
    new, state = ad.adam_step(p, [np.array([[1.0]])], ad.AdamState(lr=0.1))
    assert new[0][0, 0] == pytest.approx(-0.1 / (1 + 1e-8), rel=1e-12)
    assert state.step == 1


def test_adam_deterministic_and_pure():
    p = [np.array([[0.5, 0.25]])]
    g = [np.array([[0.3, -0.7]])]
    s = ad.AdamState(lr=0.01)
    a1, s1 = ad.adam_step(p, g, s)
    a2, s2 = ad.adam_step(p, g, s)
    assert a1[0].tobytes() == a2[0].tobytes()
    assert s.step == 0 and s1.step == s2.step == 1
