import math

import numpy as np
import pytest

from grstokes.quadrature import (
    FACE_RULE,
    RHS_RULE,
    VOLUME_RULE,
    QuadratureRule,
    duffy_rule,
    segment_rule,
    triangle_rule,
)


def reference_monomial_integral(a, b):
    # integral of x^a y^b over the reference triangle {x,y>=0, x+y<=1}
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


def rule_integral(rule, a, b):
    x = rule.bary[:, 1]
    y = rule.bary[:, 2]
    return 0.5 * np.sum(rule.weights * x ** a * y ** b)


@pytest.mark.parametrize("rule", [VOLUME_RULE, triangle_rule(1), triangle_rule(2), RHS_RULE])
def test_monomial_exactness(rule):
    for a in range(rule.degree + 1):
        for b in range(rule.degree + 1 - a):
            exact = reference_monomial_integral(a, b)
            approx = rule_integral(rule, a, b)
            assert abs(approx - exact) <= 1e-13 * max(1.0, abs(exact)), (a, b)


def test_volume_rule_is_degree_five():
    assert VOLUME_RULE.degree == 5
    assert VOLUME_RULE.npoints == 7
    # degree-6 monomial must NOT be integrated exactly (rule is tight)
    assert abs(rule_integral(VOLUME_RULE, 6, 0) - reference_monomial_integral(6, 0)) > 1e-8


def test_duffy_rule_degree():
    rule = duffy_rule(7)
    assert rule.degree == 12
    assert rule.npoints == 49


def test_weights_positive_and_normalized():
    for rule in (VOLUME_RULE, RHS_RULE):
        assert np.all(rule.weights > 0)
        assert abs(rule.weights.sum() - 1.0) < 1e-14
        assert np.all(rule.bary >= -1e-15)
        np.testing.assert_allclose(rule.bary.sum(axis=1), 1.0, atol=1e-14)


def test_rule_validation():
    with pytest.raises(ValueError):
        QuadratureRule([[1 / 3, 1 / 3, 1 / 3]], [-1.0], 1)
    with pytest.raises(ValueError):
        QuadratureRule([[1 / 3, 1 / 3, 1 / 3]], [0.5], 1)


def test_segment_rule():
    s, w = segment_rule(2)
    assert abs(w.sum() - 1.0) < 1e-15
    # 2-point Gauss integrates cubics exactly on [0, 1]
    for k in range(4):
        assert abs(np.sum(w * s ** k) - 1.0 / (k + 1)) < 1e-15
    assert FACE_RULE[0].shape == (2,)
