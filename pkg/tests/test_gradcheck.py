import numpy as np
import pytest

from causerl import tensor as T
from causerl.errors import NonDeterministicError
from causerl.gradcheck import finite_difference_check
from causerl.tensor import Tensor, _record


def test_exact_on_quadratic_form():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(4, 4))
    A = A + A.T
    x = Tensor(rng.normal(size=4), requires_grad=True)

    def f(params):
        ax = T.matmul(params[0], Tensor(A))
        return T.dot(params[0], ax)

    # central differences are exact for quadratics up to roundoff
    assert finite_difference_check(f, [x]) < 1e-8


def test_detects_wrong_backward_rule():
    x = Tensor(np.array([0.7, -0.3]), requires_grad=True)

    def bad_square(a):
        # deliberately wrong: claims d(a^2)/da = 3a
        return _record(a.data * a.data, (a,), lambda g: [(a, 3.0 * g * a.data)])

    def f(params):
        return T.sum_all(bad_square(params[0]))

    assert finite_difference_check(f, [x]) > 1e-2


def test_rejects_nondeterministic_function():
    state = {"n": 0}
    x = Tensor(np.array([1.0]), requires_grad=True)

    def f(params):
        state["n"] += 1
        return T.mul_scalar(T.sum_all(params[0]), float(state["n"]))

    with pytest.raises(NonDeterministicError):
        finite_difference_check(f, [x])


def test_h_outside_range_rejected():
    x = Tensor(np.array([1.0]), requires_grad=True)
    f = lambda params: T.sum_all(params[0])
    with pytest.raises(ValueError):
        finite_difference_check(f, [x], h=1e-2)
    with pytest.raises(ValueError):
        finite_difference_check(f, [x], h=1e-9)


def test_params_restored_after_check():
    x = Tensor(np.array([1.5, -2.5]), requires_grad=True)
    before = x.data.copy()
    finite_difference_check(lambda p: T.sum_all(T.square(p[0])), [x])
    assert np.array_equal(x.data, before)
