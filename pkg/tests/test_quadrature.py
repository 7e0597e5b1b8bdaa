import numpy as np
import pytest
from scipy.special import eval_genlaguerre, gammaln

from pauli_lab.quadrature import QuadratureError, composite_rule, expectation, gauss_laguerre, normalized_laguerre

# mpmath quad at 30 digits: E[T^0 cos T] for T ~ Gamma(3.5) and E[min(T, 2)] for T ~ Gamma(2)
E_COS_ALPHA_25 = -0.27467102836695249151
E_MIN2_ALPHA_1 = 1.4586588670535492324
# odd powers of r = sqrt(2t): E[sqrt(2T/(1+2T)) (1+2T)^-0.75], T ~ Gamma(1.5), and a t^1.5 piece below a breakpoint
E_ODD_HARMONIC = 0.3239368449972100593
E_T15_PIECE = 0.77444906245245384153


def test_gauss_laguerre_reproduces_gamma_moments():
    t, w = gauss_laguerre(2.5, 20)
    for p in range(6):
        exact = np.exp(gammaln(3.5 + p) - gammaln(3.5))
        assert np.isclose(np.sum(w * t**p), exact, rtol=1e-12)


def test_gauss_laguerre_rejects_bad_alpha():
    with pytest.raises(ValueError):
        gauss_laguerre(-1.0, 4)


def test_expectation_smooth_integrand():
    assert abs(expectation(2.5, np.cos) - E_COS_ALPHA_25) < 1e-10


def test_expectation_with_breakpoint():
    val = expectation(1.0, lambda t: np.minimum(t, 2.0), breakpoints=(2.0,))
    assert abs(val - E_MIN2_ALPHA_1) < 1e-10


def test_composite_rule_weights_are_a_probability_measure():
    t, w = composite_rule(7.0, (0.3, 5.0), 24)
    assert abs(w.sum() - 1.0) < 1e-12
    assert abs(np.sum(w * t) - 8.0) < 1e-10


def test_nonconverging_integrand_raises():
    with pytest.raises(QuadratureError):
        expectation(0.0, lambda t: np.sign(np.sin(40 * t)), tol=1e-14)


def test_normalized_laguerre_matches_scipy():
    beta = 3.0
    t = np.linspace(0.1, 20, 7)
    table = normalized_laguerre(5, beta, t)
    for n in range(6):
        ref = eval_genlaguerre(n, beta, t)
        norm = np.exp(0.5 * (gammaln(n + beta + 1) - gammaln(n + 1) - gammaln(beta + 1)))
        assert np.allclose(np.abs(table[n]), np.abs(ref) / norm, rtol=1e-10, atol=1e-12)


def test_normalized_laguerre_orthonormal():
    t, w = gauss_laguerre(4.0, 40)
    p = normalized_laguerre(6, 4.0, t)
    gram = (p * w) @ p.T
    assert np.max(np.abs(gram - np.eye(7))) < 1e-12


def test_square_root_behaviour_at_origin():
    val = expectation(0.5, lambda t: np.sqrt(2 * t / (1 + 2 * t)) * (1 + 2 * t) ** -0.75)
    assert abs(val - E_ODD_HARMONIC) < 1e-12


def test_half_integer_power_below_breakpoint():
    def g(t):
        return np.where(t < 0.5, np.exp(-(t**1.5)), np.exp(-(0.5**1.5)))

    assert abs(expectation(0.0, g, breakpoints=(0.5,)) - E_T15_PIECE) < 1e-12
