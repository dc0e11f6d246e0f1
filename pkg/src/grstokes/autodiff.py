"""Forward-mode dual numbers for exact derivatives of analytic fields.

Problem forcing terms are momentum residuals of closed-form solutions and
require up to third derivatives of the defining expressions.  A small dual
type with two tangent slots (d/dx, d/dy) covers this: nesting duals inside
duals produces second derivatives, and so on.  Components may be floats or
numpy arrays, so a whole batch of quadrature points differentiates in one
vectorized sweep.
"""

from __future__ import annotations

import numpy as np


class Dual:
    """Value with tangents along x and y; components may be Duals again."""

    __slots__ = ("v", "dx", "dy")
    __array_priority__ = 100  # beat ndarray in mixed binary ops

    def __init__(self, v, dx=0.0, dy=0.0):
        self.v = v
        self.dx = dx
        self.dy = dy

    def __repr__(self):
        return f"Dual({self.v!r}, {self.dx!r}, {self.dy!r})"

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.v + other.v, self.dx + other.dx, self.dy + other.dy)
        return Dual(self.v + other, self.dx, self.dy)

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.v, -self.dx, -self.dy)

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.v - other.v, self.dx - other.dx, self.dy - other.dy)
        return Dual(self.v - other, self.dx, self.dy)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.v * other.v,
                self.dx * other.v + self.v * other.dx,
                self.dy * other.v + self.v * other.dy,
            )
        return Dual(self.v * other, self.dx * other, self.dy * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = other._reciprocal()
            return self * inv
        return Dual(self.v / other, self.dx / other, self.dy / other)

    def __rtruediv__(self, other):
        return self._reciprocal() * other

    def _reciprocal(self):
        if isinstance(self.v, Dual):
            inv = self.v._reciprocal()
        else:
            inv = 1.0 / self.v
        neg_inv2 = -(inv * inv)
        return Dual(inv, neg_inv2 * self.dx, neg_inv2 * self.dy)

    def __pow__(self, exponent):
        if isinstance(exponent, Dual):
            raise TypeError("dual exponents are not supported")
        if exponent == 0:
            return Dual(_ones_like(self.v), 0.0, 0.0)
        if exponent == 1:
            return Dual(self.v, self.dx, self.dy)
        if isinstance(exponent, int) or float(exponent).is_integer():
            # integer powers stay polynomial (valid for any sign of base)
            n = int(exponent)
            if n < 0:
                return (self ** (-n))._reciprocal()
            result = self
            for _ in range(n - 1):
                result = result * self
            return result
        base_pow = _generic_pow(self.v, exponent)
        chain = _generic_pow(self.v, exponent - 1.0) * exponent
        return Dual(base_pow, chain * self.dx, chain * self.dy)


def _ones_like(v):
    if isinstance(v, Dual):
        return Dual(_ones_like(v.v), 0.0, 0.0)
    return np.ones_like(v) if isinstance(v, np.ndarray) else 1.0


def _generic_pow(v, p):
    if isinstance(v, Dual):
        return v ** p
    return v ** p


def log(d):
    """Natural logarithm of a dual (or plain) value."""
    if not isinstance(d, Dual):
        return np.log(d)
    inv = 1.0 / d.v if not isinstance(d.v, Dual) else d.v._reciprocal()
    return Dual(log(d.v), inv * d.dx, inv * d.dy)


def value(d):
    """Strip all dual layers, returning the underlying float/array."""
    while isinstance(d, Dual):
        d = d.v
    return d


def partial(d, *path):
    """Follow tangent slots through nested duals, e.g. partial(r, "dx", "dy").

    Plain numbers in a slot are constants, so any further derivative of
    them is zero.
    """
    for name in path:
        if isinstance(d, Dual):
            d = getattr(d, name)
        else:
            return 0.0
    return value(d)


def lift1(x, y):
    """First-order seed: returns duals tracking d/dx and d/dy."""
    return Dual(x, 1.0, 0.0), Dual(y, 0.0, 1.0)


def lift2(x, y):
    """Second-order seed (duals of duals)."""
    x1, y1 = lift1(x, y)
    return Dual(x1, 1.0, 0.0), Dual(y1, 0.0, 1.0)


def gradient(f, x, y):
    """Gradient of a scalar expression; works under outer dual nesting."""
    r = f(Dual(x, 1.0, 0.0), Dual(y, 0.0, 1.0))
    if isinstance(r, Dual):
        return r.dx, r.dy
    return 0.0, 0.0


def scalar_derivatives(f, x, y):
    """Value, gradient and Hessian of a scalar field at (x, y)."""
    X, Y = lift2(x, y)
    r = f(X, Y)
    val = value(r)
    gx, gy = partial(r, "v", "dx"), partial(r, "v", "dy")
    hxx, hxy, hyy = partial(r, "dx", "dx"), partial(r, "dx", "dy"), partial(r, "dy", "dy")
    return val, (gx, gy), ((hxx, hxy), (hxy, hyy))


def momentum_force(u_fn, p_fn, mu, lam):
    """Exact momentum residual -div(2 mu eps(u) + lam div(u) I) + grad(p).

    ``u_fn(x, y) -> (u1, u2)`` and ``p_fn(x, y) -> p`` must be written in
    dual-compatible arithmetic.  Returns a callable mapping coordinate
    arrays to force component arrays ``(f1, f2)``.
    """

    def force(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        X, Y = lift2(x, y)
        u1, u2 = u_fn(X, Y)
        u1xx, u1yy, u1xy = partial(u1, "dx", "dx"), partial(u1, "dy", "dy"), partial(u1, "dx", "dy")
        u2xx, u2yy, u2xy = partial(u2, "dx", "dx"), partial(u2, "dy", "dy"), partial(u2, "dx", "dy")
        # grad(div u) = (u1xx + u2xy, u1xy + u2yy)
        gdiv1 = u1xx + u2xy
        gdiv2 = u1xy + u2yy
        lap1 = u1xx + u1yy
        lap2 = u2xx + u2yy
        x1, y1 = lift1(x, y)
        p = p_fn(x1, y1)
        px, py = partial(p, "dx"), partial(p, "dy")
        f1 = -mu * (lap1 + gdiv1) - lam * gdiv1 + px
        f2 = -mu * (lap2 + gdiv2) - lam * gdiv2 + py
        f1 = np.broadcast_to(np.asarray(f1, dtype=float), x.shape).copy()
        f2 = np.broadcast_to(np.asarray(f2, dtype=float), x.shape).copy()
        return f1, f2

    return force
