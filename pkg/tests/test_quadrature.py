from math import factorial

import numpy as np
import pytest

from cutmg.quadrature import integrate, simplex_measure, simplex_rule


def monomial_integral(powers):
    # int over the unit simplex of prod x_k^{a_k} = prod a_k! / (d + sum a)!
    d = len(powers)
    return np.prod([factorial(a) for a in powers]) / factorial(d + sum(powers))


@pytest.mark.parametrize("dim", [1, 2, 3])
@pytest.mark.parametrize("degree", [1, 2, 4])
def test_rule_exact_for_monomials(dim, degree):
    rule = simplex_rule(dim, degree)
    assert rule.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(rule.weights > 0)
    ref = np.vstack([np.zeros(dim), np.eye(dim)])
    x = rule.points(ref)
    vol = 1.0 / factorial(dim)
    for total in range(degree + 1):
        for powers in np.ndindex(*(total + 1,) * dim):
            if sum(powers) != total:
                continue
            approx = vol * np.sum(rule.weights * np.prod(x ** np.array(powers), axis=1))
            assert approx == pytest.approx(monomial_integral(powers), rel=1e-12, abs=1e-15)


def test_measure_full_and_embedded():
    tri = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
    assert simplex_measure(tri) == pytest.approx(1.0)
    seg = np.array([[0.0, 0.0, 0.0], [3.0, 4.0, 0.0]])
    assert simplex_measure(seg) == pytest.approx(5.0)
    tri3 = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])
    assert simplex_measure(tri3) == pytest.approx(0.5)


def test_integrate_quadratic_on_mapped_triangle():
    tri = np.array([[[1.0, 1.0], [3.0, 1.0], [1.0, 2.0]]])
    # centroid-based oracle: int x dx = |T| * centroid_x
    val = integrate(lambda x: x[..., 0], tri, 1)
    assert val[0] == pytest.approx(1.0 * (5.0 / 3.0))
