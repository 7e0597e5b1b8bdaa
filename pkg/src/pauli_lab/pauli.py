"""Truncated spinor matrix of the perturbed Pauli operator in a constant field.

Both spin components are expanded in the same Landau basis (levels
``q < Q``, guiding centers ``j < K``).  With ``u[a, b] = <a | U | b>`` the
matrix is

    [[ diag(2 b0 q),   e u^*          ],
     [ e u,            diag(2 b0 (q+1)) ]]

so the first block row is the ``H_-`` component.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .magnetics import Basis, MagneticField, build_landau_basis
from .potential import Potential
from .quadrature import DEFAULT_TOL
from .toeplitz import OperatorMatrix, assemble_U_elements, spectrum

__all__ = ["PauliTruncation", "NearZeroSpectrum", "build", "near_zero_spectrum", "window_count"]


@dataclass(frozen=True, eq=False)
class PauliTruncation:
    field: MagneticField
    pot: Potential
    e: float
    K: int
    Q: int
    basis: Basis
    u: sp.csr_array
    matrix: OperatorMatrix
    window: tuple[float, float] | None = None

    @property
    def hminus_diag(self) -> np.ndarray:
        return self.basis.hminus_eigenvalues

    @property
    def hplus_diag(self) -> np.ndarray:
        return self.basis.hplus_eigenvalues

    @property
    def zeta(self) -> float:
        return self.field.zeta

    def spectrum(self) -> np.ndarray:
        """All eigenvalues, ascending."""
        return spectrum(self.matrix)[::-1]

    def with_window(self, r0: float, r: float) -> "PauliTruncation":
        _check_window(self, r0, r)
        return PauliTruncation(self.field, self.pot, self.e, self.K, self.Q, self.basis, self.u,
                               self.matrix, (float(r0), float(r)))


def build(field, pot: Potential, e: float, K: int, Q: int, tol: float = DEFAULT_TOL) -> PauliTruncation:
    """Assemble the ``2 K Q`` Hermitian spinor matrix."""
    if not isinstance(field, MagneticField):
        field = MagneticField.constant(float(field))
    if not field.is_constant:
        raise ValueError("the spinor model needs a constant field (Landau ladder on both components)")
    if not np.isfinite(e):
        raise ValueError("coupling e must be finite")
    basis = build_landau_basis(field, K, Q)
    u = assemble_U_elements(pot, basis, basis, tol).entries
    n = len(basis)
    dm = sp.diags_array(basis.hminus_eigenvalues.astype(complex))
    dp = sp.diags_array(basis.hplus_eigenvalues.astype(complex))
    full = sp.block_array([[dm, e * u.conj().T], [e * u, dp]], format="csr")
    mat = OperatorMatrix(full, f"Pauli(b0={field.b0:g}, e={e:g}, K={K}, Q={Q})", True, (K, Q),
                         {"size": 2 * n})
    return PauliTruncation(field, pot, float(e), K, Q, basis, sp.csr_array(u), mat)


def _check_window(trunc: PauliTruncation, r0: float, r: float):
    if not 0 < r < r0:
        raise ValueError(f"window needs 0 < r < r0, got r={r}, r0={r0}")
    if not r0 * trunc.e**2 < 0.5 * trunc.zeta:
        raise ValueError(
            f"window [-r0 e^2, -r e^2) reaches the first Landau level: r0 e^2 = {r0 * trunc.e**2:g} >= zeta/2"
        )


@dataclass(frozen=True)
class NearZeroSpectrum:
    eigenvalues: np.ndarray  # all eigenvalues in (-zeta/2, zeta/2), ascending
    count: int | None  # eigenvalues in [-r0 e^2, -r e^2)
    window_eigenvalues: np.ndarray
    positive: np.ndarray  # eigenvalues in (tol, zeta/2)
    zeta: float


def near_zero_spectrum(trunc: PauliTruncation, window=None, positive_tol: float = 1e-10) -> NearZeroSpectrum:
    window = window if window is not None else trunc.window
    evals = trunc.spectrum()
    half = 0.5 * trunc.zeta
    near = evals[(evals > -half) & (evals < half)]
    count = None
    in_win = np.empty(0)
    if window is not None:
        r0, r = window
        _check_window(trunc, r0, r)
        e2 = trunc.e**2
        in_win = near[(near >= -r0 * e2) & (near < -r * e2)]
        count = int(in_win.size)
    return NearZeroSpectrum(near, count, in_win, near[near > positive_tol], trunc.zeta)


def window_count(eigenvalues, e: float, r0: float, r) -> np.ndarray:
    """Count of eigenvalues in ``[-r0 e^2, -r e^2)`` for each r (vectorized)."""
    ev = np.sort(np.asarray(eigenvalues, dtype=float))
    e2 = e * e
    r = np.asarray(r, dtype=float)
    lo = np.searchsorted(ev, -r0 * e2, side="left")
    hi = np.searchsorted(ev, -r * e2, side="left")
    return hi - lo
