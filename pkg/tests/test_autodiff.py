import numpy as np

from grstokes.autodiff import Dual, gradient, lift1, lift2, log, momentum_force, scalar_derivatives, value


def test_first_derivatives_polynomial():
    def f(x, y):
        return x ** 3 * y ** 2 + 2.0 * x - y

    x, y = 0.7, -0.3
    X, Y = lift1(x, y)
    r = f(X, Y)
    assert abs(r.v - f(x, y)) < 1e-15
    assert abs(r.dx - (3 * x ** 2 * y ** 2 + 2.0)) < 1e-14
    assert abs(r.dy - (2 * x ** 3 * y - 1.0)) < 1e-14


def test_second_derivatives_and_mixed():
    def f(x, y):
        return (x * y) ** 2 + x ** 4

    x, y = 0.4, 1.3
    val, grad, hess = scalar_derivatives(f, x, y)
    assert abs(val - f(x, y)) < 1e-15
    assert abs(grad[0] - (2 * x * y ** 2 + 4 * x ** 3)) < 1e-13
    assert abs(hess[0][0] - (2 * y ** 2 + 12 * x ** 2)) < 1e-13
    assert abs(hess[0][1] - 4 * x * y) < 1e-13
    assert abs(hess[1][1] - 2 * x ** 2) < 1e-13


def test_division_and_fractional_powers():
    def f(x, y):
        return (1.0 + y / 3.0) ** 1.4 / x

    x, y = 1.7, 0.5
    X, Y = lift1(x, y)
    r = f(X, Y)
    h = 1e-6
    fd_x = (f(x + h, y) - f(x - h, y)) / (2 * h)
    fd_y = (f(x, y + h) - f(x, y - h)) / (2 * h)
    assert abs(r.dx - fd_x) < 1e-9
    assert abs(r.dy - fd_y) < 1e-9


def test_log_and_array_components():
    x = np.array([0.5, 1.0, 2.0])
    y = np.array([0.1, 0.2, 0.3])
    X, Y = lift1(x, y)
    r = log(X * Y)
    np.testing.assert_allclose(value(r), np.log(x * y), rtol=1e-15)
    np.testing.assert_allclose(r.dx, 1.0 / x, rtol=1e-14)
    np.testing.assert_allclose(r.dy, 1.0 / y, rtol=1e-14)


def test_gradient_helper_under_nesting():
    # gradient() must compose when invoked on already-lifted coordinates
    def f(x, y):
        gx, gy = gradient(lambda a, b: a * a * b, x, y)
        return gx + gy  # = 2xy + x^2

    X, Y = lift2(0.3, 0.9)
    r = f(X, Y)
    assert abs(value(r) - (2 * 0.3 * 0.9 + 0.09)) < 1e-14
    assert abs(value(r.v.dx) - (2 * 0.9 + 2 * 0.3)) < 1e-13


def test_momentum_force_hand_case():
    # u = (y^2, 0), p = x: -div(sigma) + grad p has the closed form
    # f1 = -2 mu + 1, f2 = 0 (div u = 0 kills the lambda terms)
    mu, lam = 0.7, -0.2
    force = momentum_force(lambda x, y: (y * y, x * 0.0), lambda x, y: x, mu, lam)
    f1, f2 = force(np.array([0.3]), np.array([0.8]))
    assert abs(f1[0] - (-2 * mu + 1.0)) < 1e-13
    assert abs(f2[0]) < 1e-13


def test_momentum_force_with_dilatation():
    # u = (x^2, 0): div u = 2x, eps_xx = 2x
    # f1 = -mu*(2 + 2) - lam*2 + 0, f2 = 0
    mu, lam = 1.3, 0.4
    force = momentum_force(lambda x, y: (x * x, x * 0.0), lambda x, y: x * 0.0, mu, lam)
    f1, f2 = force(np.array([0.5]), np.array([0.1]))
    assert abs(f1[0] - (-4 * mu - 2 * lam)) < 1e-13
    assert abs(f2[0]) < 1e-13


def test_integer_negative_power():
    X, Y = lift1(2.0, 1.0)
    r = X ** -2
    assert abs(r.v - 0.25) < 1e-15
    assert abs(r.dx - (-2.0 / 8.0)) < 1e-15


def test_dual_subtraction_and_rsub():
    X, _ = lift1(1.5, 0.0)
    r = 1.0 - X
    assert r.v == -0.5 and r.dx == -1.0
    r2 = X - 1.0
    assert r2.v == 0.5 and r2.dx == 1.0
