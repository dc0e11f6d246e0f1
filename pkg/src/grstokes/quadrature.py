"""Quadrature rules on triangles and segments.

Triangle rules are stored in barycentric coordinates with weights that sum
to one, so an integral is ``area * sum(w_q * f(x_q))``.  The default volume
rule is the 7-point degree-5 rule used for all polynomial operator
integrands (stiffness, divergence couplings, norms).  Right-hand-side
functionals with non-polynomial data use a higher-degree Duffy product rule
(see :func:`duffy_rule`); Gauss convergence is geometric for analytic data,
which keeps consistency errors at machine precision on desk-scale meshes.
"""

from __future__ import annotations

import numpy as np


class QuadratureRule:
    """A fixed quadrature rule on the reference triangle.

    Attributes
    ----------
    bary : ndarray, shape (nq, 3)
        Barycentric coordinates of the quadrature points.
    weights : ndarray, shape (nq,)
        Weights, normalized to sum to one.
    degree : int
        Total polynomial degree integrated exactly.
    """

    def __init__(self, bary, weights, degree):
        self.bary = np.asarray(bary, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.degree = int(degree)
        if not np.all(self.weights > 0):
            raise ValueError("quadrature weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-14:
            raise ValueError("quadrature weights must sum to one")

    @property
    def npoints(self):
        return self.bary.shape[0]


def _rule_degree1():
    return QuadratureRule([[1 / 3, 1 / 3, 1 / 3]], [1.0], 1)


def _rule_degree2():
    # edge-midpoint rule
    bary = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]
    return QuadratureRule(bary, [1 / 3] * 3, 2)


def _rule_degree5():
    # 7-point symmetric rule (centroid + two 3-orbits)
    s15 = np.sqrt(15.0)
    b1 = (6 + s15) / 21
    a1 = 1 - 2 * b1
    b2 = (6 - s15) / 21
    a2 = 1 - 2 * b2
    w1 = (155 + s15) / 1200
    w2 = (155 - s15) / 1200
    bary = [
        [1 / 3, 1 / 3, 1 / 3],
        [a1, b1, b1],
        [b1, a1, b1],
        [b1, b1, a1],
        [a2, b2, b2],
        [b2, a2, b2],
        [b2, b2, a2],
    ]
    weights = [9 / 40, w1, w1, w1, w2, w2, w2]
    return QuadratureRule(bary, weights, 5)


_FIXED_RULES = {1: _rule_degree1, 2: _rule_degree2, 5: _rule_degree5}


def triangle_rule(degree):
    """Return a symmetric triangle rule exact to the given total degree."""
    for d in sorted(_FIXED_RULES):
        if degree <= d:
            return _FIXED_RULES[d]()
    return duffy_rule((degree + 2 + 1) // 2)


def duffy_rule(n):
    """Tensor Gauss rule on the collapsed square, exact to degree 2n-2.

    The Duffy map (u, v) -> (u(1-v), v) sends [0,1]^2 onto the reference
    triangle with Jacobian (1-v); an n x n Gauss-Legendre grid then
    integrates all polynomials of total degree <= 2n-2 exactly.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    px = (u * (1 - v)).ravel()
    py = v.ravel()
    weights = (wu * wv * (1 - v)).ravel() * 2.0  # reference area is 1/2
    bary = np.column_stack([1 - px - py, px, py])
    return QuadratureRule(bary, weights, 2 * n - 2)


#: degree-5 rule for all polynomial operator integrands
VOLUME_RULE = _rule_degree5()

#: degree-12 rule for right-hand-side data functionals
RHS_RULE = duffy_rule(7)


def segment_rule(n):
    """n-point Gauss rule on [0, 1]; points and weights (sum 1)."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


#: 2-point Gauss rule on [0, 1], exact to degree 3 (face moments, fluxes)
FACE_RULE = segment_rule(2)
