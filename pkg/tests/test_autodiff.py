import numpy as np
import pytest

from gas_storage import autodiff as ad


def numeric_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        up, dn = x.copy(), x.copy()
        up.flat[i] += h
        dn.flat[i] -= h
        g.flat[i] = (f(up) - f(dn)) / (2 * h)
    return g


def taped_grad(f, x):
    tape = ad.Tape()
    v = tape.var(x)
    out = f(v)
    return tape.backward(out, [v])[0]


CASES = {
    "affine_sigmoid": lambda x, W=np.linspace(-1, 1, 6).reshape(3, 2): ad.total(
        ad.sigmoid(ad.affine(x, W, np.array([0.1, -0.2])))
    ),
    "exp_mean": lambda x: ad.mean(ad.exp(ad.mul(x, 0.3))),
    "abs": lambda x: ad.total(ad.absolute(ad.sub(x, 0.05))),
    "max_min": lambda x: ad.total(ad.minimum(ad.maximum(x, 0.2), 0.9)),
    "where": lambda x: ad.total(ad.where(np.array([[True, False, True]] * 2), ad.mul(x, x), ad.neg(x))),
    "stack_take": lambda x: ad.total(
        ad.mul(ad.stack_columns([ad.take(x, (slice(None), 0)), 2.0, ad.take(x, (slice(None), 2))]), 1.5)
    ),
    "operators": lambda x: ad.total((x * 2.0 - 1.0) * (3.0 - x) / 4.0 + (-x)[0]),
}


@pytest.mark.parametrize("name", sorted(CASES))
def test_op_gradients_match_central_differences(name):
    f = CASES[name]
    x = np.array([[0.31, -0.47, 0.83], [1.2, 0.05, -0.66]])
    g = taped_grad(f, x)
    fd = numeric_grad(lambda a: float(ad.value(f(a))), x)
    np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-8)


def test_untaped_ops_return_plain_arrays():
    out = ad.sigmoid(ad.affine(np.ones((2, 3)), np.ones((3, 1)), np.zeros(1)))
    assert type(out) is np.ndarray


def test_ties_send_gradient_to_first_argument():
    tape = ad.Tape()
    a, b = tape.var(np.array([1.0])), tape.var(np.array([1.0]))
    ga, gb = tape.backward(ad.total(ad.maximum(a, b)), [a, b])
    assert ga[0] == 1.0 and gb[0] == 0.0


def test_abs_derivative_at_zero_is_zero():
    assert taped_grad(lambda x: ad.total(ad.absolute(x)), np.zeros(3)).tolist() == [0.0, 0.0, 0.0]


def test_backward_rejects_nonscalar_and_foreign_nodes():
    tape, other = ad.Tape(), ad.Tape()
    x = tape.var(np.ones(3))
    with pytest.raises(ad.TapeError):
        tape.backward(ad.mul(x, 2.0), [x])
    y = other.var(np.ones(1))
    with pytest.raises(ad.TapeError):
        tape.backward(ad.total(x), [y])


def test_unused_leaf_gets_zero_gradient():
    tape = ad.Tape()
    x, y = tape.var(np.ones(2)), tape.var(np.ones(4))
    _, gy = tape.backward(ad.total(x), [x, y])
    assert np.array_equal(gy, np.zeros(4))


def test_adam_first_step_moves_by_learning_rate_along_sign():
    p = [np.array([1.0, -2.0, 0.5])]
    g = [np.array([3.0, -0.001, 10.0])]
    new, state = ad.adam_step(p, g, ad.AdamState.zeros_like(p), 0.05)
    # bias-corrected m/sqrt(v) equals sign(g) on the first step (up to eps)
    np.testing.assert_allclose(new[0], p[0] - 0.05 * np.sign(g[0]), rtol=0, atol=1e-6)
    assert state.step == 1


def test_adam_matches_hand_rolled_two_steps():
    p0 = np.array([0.3])
    grads = [np.array([0.2]), np.array([-0.1])]
    m = v = 0.0
    x = 0.3
    for t, g in enumerate(grads, start=1):
        m = 0.9 * m + 0.1 * g[0]
        v = 0.999 * v + 0.001 * g[0] ** 2
        x -= 0.01 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    params, state = [p0], ad.AdamState.zeros_like([p0])
    for g in grads:
        params, state = ad.adam_step(params, [g], state, 0.01)
    assert params[0][0] == pytest.approx(x, rel=1e-14)


def test_adam_skips_non_finite_gradient():
    p = [np.array([1.0])]
    state = ad.AdamState.zeros_like(p)
    new, state2 = ad.adam_step(p, [np.array([np.nan])], state, 0.1)
    assert new[0][0] == 1.0
    assert state2.step == 0 and state2.skipped_steps == 1 and state2.incidents
