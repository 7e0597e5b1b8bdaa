import numpy as np
import pytest
import scipy.sparse as sp
from scipy.special import gammaln

from oracles import jacobi_eigenvalues
from pauli_lab.magnetics import MagneticField, RadialProfile, build_zero_mode_basis
from pauli_lab.potential import Potential
from pauli_lab.toeplitz import (
    OperatorMatrix, TruncationWarning, assemble_U_elements, build_toeplitz, build_w, spectrum,
)

# mpmath: E_k[1 / (1 + 2T)], T ~ Gamma(k + 1): zero-mode diagonal of (1 + r^2)^-1 at b0 = 1
REGULAR_DIAGONAL = {0: 0.46145531624186523442, 1: 0.26927234187906738279, 2: 0.1826819145302331543,
                    10: 0.047384373757082908198, 100: 0.0049748756534821880724}


def _zero_modes(b0=1.0, K=32, btilde=None):
    fld = MagneticField(b0, btilde) if btilde is not None else MagneticField.constant(b0)
    return build_zero_mode_basis(fld, K)


def _p0up0(pot, zb):
    u = assemble_U_elements(pot, zb, zb).entries
    return OperatorMatrix(0.5 * (u + u.conj().T), "p0Up0", True, (len(zb), 1))


def test_zero_potential_gives_zero_matrices():
    zb = _zero_modes()
    pot = Potential(0.0, 2.0)
    assert assemble_U_elements(pot, zb, zb).entries.nnz == 0
    for B in ("identity", "hplus_inverse"):
        assert build_toeplitz(pot, zb, B).entries.count_nonzero() == 0


def test_radial_potential_is_diagonal():
    zb = _zero_modes(K=20)
    pot = Potential(1.0, 2.0)
    for mat in (assemble_U_elements(pot, zb, zb), build_toeplitz(pot, zb, "identity"),
                build_toeplitz(pot, zb, "hplus_inverse", Q=4)):
        a = mat.dense()
        assert np.max(np.abs(a - np.diag(np.diag(a)))) < 1e-14


def test_regular_diagonal_against_mpmath():
    zb = _zero_modes(K=101)
    d = assemble_U_elements(Potential(1.0, 2.0), zb, zb).entries.diagonal().real
    for k, ref in REGULAR_DIAGONAL.items():
        assert abs(d[k] - ref) < 1e-12


def test_pure_power_closed_form():
    # b0 = 2, U = |x|^-2: angular momentum k >= 1 gives Gamma(k) / Gamma(k + 1) = 1 / k
    zb = _zero_modes(b0=2.0, K=64)
    pot = Potential(1.0, 2.0, form="pure_power_tail", r_cut=1e-5)
    d = assemble_U_elements(pot, zb, zb).entries.diagonal().real
    k = np.arange(1, 64)
    gamma_ratio = np.exp(gammaln(k + 1 - 1.0) - gammaln(k + 1.0))
    assert np.max(np.abs(d[1:] - gamma_ratio)) < 1e-8
    assert np.max(np.abs(d[1:] - 1 / k)) < 1e-8


def test_nonradial_selection_rule():
    zb = _zero_modes(K=16)
    a = assemble_U_elements(Potential("1 + 0.5*cos(2θ)", 2.0, form="smooth"), zb, zb).dense()
    i, j = np.nonzero(np.abs(a) > 0)
    assert set(np.abs(i - j)) <= {0, 2}


@pytest.mark.parametrize("btilde", [None, RadialProfile.step(1.0, 0.5)])
def test_resolvent_toeplitz_below_scaled_multiplication(btilde):
    zb = _zero_modes(K=48, btilde=btilde)
    pot = Potential(1.0, 2.0)
    zeta = zb.field.zeta
    wi = build_toeplitz(pot, zb, "identity").dense()
    wh = build_toeplitz(pot, zb, "hplus_inverse", Q=8).dense()
    diff = wi / zeta - wh
    lo = np.linalg.eigvalsh(0.5 * (diff + diff.conj().T)).min()
    assert lo >= -1e-10 * np.linalg.norm(wi / zeta, 2)


def test_lowest_level_sandwich_below_resolvent_toeplitz():
    zb = _zero_modes(b0=1.0, K=48)
    pot = Potential("1 + 0.5*cos(2θ)", 2.0, form="smooth")
    pup = _p0up0(pot, zb).dense()
    wh = build_toeplitz(pot, zb, "hplus_inverse", Q=8).dense()
    diff = wh - pup.conj().T @ pup / 2.0
    lo = np.linalg.eigvalsh(0.5 * (diff + diff.conj().T)).min()
    assert lo >= -1e-10 * np.linalg.norm(wh, 2)


def test_w_star_w_matches_resolvent_toeplitz():
    zb = _zero_modes(K=24)
    pot = Potential("1 + 0.5*cos(2θ)", 2.0, form="smooth")
    w = build_w(pot, zb, Q=6).entries
    wh = build_toeplitz(pot, zb, "hplus_inverse", Q=6).entries
    assert abs(w.conj().T @ w - wh).max() < 1e-10


def test_w_wstar_nonzero_spectrum():
    zb = _zero_modes(K=24)
    pot = Potential("1 + 0.5*cos(2θ)", 2.0, form="smooth")
    w = build_w(pot, zb, Q=6).entries.toarray()
    big = np.linalg.eigvalsh(w @ w.conj().T)
    small = np.linalg.eigvalsh(w.conj().T @ w)
    big = np.sort(big[big > 1e-12])
    small = np.sort(small[small > 1e-12])
    assert big.size == small.size
    assert np.max(np.abs(big - small)) < 1e-10


def test_strict_truncation_raises_and_default_warns():
    zb = _zero_modes(K=16)
    pot = Potential(1.0, 2.0)
    with pytest.raises(RuntimeError):
        build_toeplitz(pot, zb, "hplus_inverse", Q=2, strict=True)
    with pytest.warns(TruncationWarning):
        build_toeplitz(pot, zb, "hplus_inverse", Q=2)


def test_tail_bound_shrinks_with_level_cutoff():
    zb = _zero_modes(K=16)
    pot = Potential(1.0, 2.0)
    tails = [build_toeplitz(pot, zb, "hplus_inverse", Q=q).meta["tail_bound"] for q in (2, 4, 8)]
    assert tails[0] > tails[1] > tails[2] > 0


def test_spectrum_trivial_cases():
    assert np.all(spectrum(sp.csr_array((5, 5))) == 0)
    assert np.allclose(spectrum(np.diag([1 / 3, 1.0, 0.5])), [1, 0.5, 1 / 3])


def test_spectrum_random_hermitian_against_jacobi():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(50, 50)) + 1j * rng.normal(size=(50, 50))
    a = 0.5 * (a + a.conj().T)
    ref = np.sort(jacobi_eigenvalues(a))[::-1]
    assert np.max(np.abs(spectrum(a) - ref)) < 1e-8


def test_spectrum_rejects_non_hermitian():
    with pytest.raises(ValueError):
        spectrum(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_operator_matrix_hermitian_check():
    with pytest.raises(ValueError):
        OperatorMatrix(sp.csr_array(np.array([[0.0, 1.0], [2.0, 0.0]])), "bad", True, (2, 1))
