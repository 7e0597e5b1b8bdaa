"""Sandwiched operators on truncated bases and their spectra.

Conventions: ``U_elements`` has rows in the spin-down (``H_+``) space and
columns in the spin-up (``H_-``) space, ``U_elements[a, b] = <a | U | b>``.
The Toeplitz operators act on zero-mode coefficients:

    pW(I)p       = <j | |U|^2 | k>,
    pW(H+^-1)p   = U_elements^* diag(1 / h_+) U_elements,
    w p          = diag(h_+)^(-1/2) U_elements.

For a constant field the Landau rows are extended beyond the zero-mode
truncation far enough that every state coupled to a retained zero mode is
present, so only the level cutoff Q truncates the resolvent sum.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.sparse.csgraph import connected_components

from .assembly import radial_matrix
from .magnetics import Basis, MagneticField, build_landau_basis
from .potential import Potential
from .quadrature import DEFAULT_TOL

__all__ = [
    "OperatorMatrix",
    "TruncationWarning",
    "assemble_U_elements",
    "assemble_abs_squared",
    "extended_landau_basis",
    "hplus_galerkin",
    "build_toeplitz",
    "build_w",
    "spectrum",
    "block_components",
]

_HERMITIAN_TOL = 1e-12


class TruncationWarning(UserWarning):
    """The level cutoff Q leaves a resolvent tail above the requested fraction."""


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    entries: sp.csr_array
    basis_tag: str
    hermitian: bool
    truncation: tuple[int, int]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        a = self.entries
        if not sp.issparse(a):
            a = sp.csr_array(np.asarray(a))
        object.__setattr__(self, "entries", sp.csr_array(a))
        if self.hermitian:
            if a.shape[0] != a.shape[1]:
                raise ValueError("hermitian operator must be square")
            dev = hermitian_defect(self.entries)
            if dev > _HERMITIAN_TOL * max(1.0, abs(self.entries).max() if self.entries.nnz else 0.0):
                raise ValueError(f"matrix tagged hermitian deviates from its adjoint by {dev:.3e}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def dense(self) -> np.ndarray:
        return self.entries.toarray()

    def adjoint(self) -> "OperatorMatrix":
        return OperatorMatrix(self.entries.conj().T.tocsr(), f"adjoint({self.basis_tag})", self.hermitian,
                              self.truncation, dict(self.meta))


def hermitian_defect(a) -> float:
    d = a - a.conj().T
    if sp.issparse(d):
        return float(abs(d).max()) if d.nnz else 0.0
    return float(np.abs(d).max(initial=0.0))


def _u_coefficients(pot: Potential, b0: float, squared: bool = False):
    def make(n):
        def coef(t, ell):
            r = np.sqrt(2.0 * t / b0)
            vals = pot.abs_squared_harmonic(n, r) if squared else pot.harmonic(n, r)
            return np.broadcast_to(vals, np.broadcast_shapes(np.shape(t), np.shape(ell)))

        return coef

    ns = pot.abs_squared_harmonics() if squared else pot.harmonics
    return {n: make(n) for n in ns}


def _t_breaks(pot: Potential, b0: float) -> tuple[float, ...]:
    return tuple(0.5 * b0 * r * r for r in pot.breakpoints())


def _tag(basis: Basis) -> str:
    return f"{basis.kind}(b0={basis.b0:g}, K={basis.K}, Q={basis.Q})"


def assemble_U_elements(pot: Potential, rows: Basis, cols: Basis, tol: float = DEFAULT_TOL) -> OperatorMatrix:
    """``<row_a | U | col_b>`` by radial quadrature and exact angular integration."""
    if pot.is_zero:
        mat = sp.csr_array((len(rows), len(cols)), dtype=complex)
    else:
        mat = radial_matrix(rows, cols, _u_coefficients(pot, rows.b0), _t_breaks(pot, rows.b0), tol)
    return OperatorMatrix(mat, f"<{_tag(rows)}|U|{_tag(cols)}>", False, (cols.K, rows.Q))


def assemble_abs_squared(pot: Potential, rows: Basis, cols: Basis, tol: float = DEFAULT_TOL) -> OperatorMatrix:
    """``<row_a | |U|^2 | col_b>``."""
    if pot.is_zero:
        mat = sp.csr_array((len(rows), len(cols)), dtype=complex)
    else:
        mat = radial_matrix(rows, cols, _u_coefficients(pot, rows.b0, True), _t_breaks(pot, rows.b0), tol)
    herm = rows is cols
    if herm:
        mat = 0.5 * (mat + mat.conj().T)
    return OperatorMatrix(sp.csr_array(mat), f"<{_tag(rows)}||U|^2|{_tag(cols)}>", herm, (cols.K, rows.Q))


def extended_landau_basis(pot: Potential, zero_modes: Basis, Q: int) -> Basis:
    """Landau levels ``q < Q`` holding every partner of the retained zero modes."""
    K_ext = zero_modes.K + pot.U0.max_harmonic + Q - 1
    return build_landau_basis(zero_modes.b0, K_ext, Q)


def _radial_delta(field: MagneticField):
    """``H_+(b) - H_+(b0)`` in a sector of angular momentum ``ell``, as a function of t."""
    phi = field.phitilde
    b0 = field.b0

    def coef(t, ell):
        r = field.to_r(t)
        F = phi.enclosed_flux(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            # F / r**2 is bounded (F ~ btilde(0) r**2 / 2 near 0)
            g = np.where(r > 0, F / np.where(r > 0, r * r, 1.0), 0.5 * field.btilde(0.0))
        return -2.0 * ell * g + b0 * F + F * g + field.btilde(r)

    return coef


def hplus_galerkin(field: MagneticField, landau: Basis, tol: float = DEFAULT_TOL) -> sp.csr_array:
    """Galerkin matrix of ``H_+`` for the field on a constant-b0 Landau basis.

    Block diagonal in angular momentum.  For a constant field it reduces to
    the diagonal ladder ``2 b0 (q + 1)``.
    """
    diag = sp.diags_array(landau.hplus_eigenvalues.astype(complex)).tocsr()
    if field.is_constant:
        return diag
    delta = radial_matrix(landau, landau, {0: _radial_delta(field)}, field.t_breakpoints, tol)
    out = diag + delta
    return sp.csr_array(0.5 * (out + out.conj().T))


def block_components(a) -> list[np.ndarray]:
    """Index sets of the connected components of the sparsity pattern of ``a``."""
    a = sp.csr_array(a)
    pattern = (abs(a) + abs(a).T) > 0
    n, labels = connected_components(pattern, directed=False)
    order = np.argsort(labels, kind="stable")
    splits = np.cumsum(np.bincount(labels, minlength=n))[:-1]
    return np.split(order, splits)


def _sector_inverse_sandwich(h: sp.csr_array, u: sp.csr_array) -> sp.csr_array:
    """``u^* h^-1 u`` computed block by block over the sectors of ``h``."""
    n = u.shape[1]
    u = sp.csr_array(u)
    ri, ci, vals = [], [], []
    for rows in block_components(h):
        sub_u = u[rows]
        if sub_u.nnz == 0:
            continue
        cols = np.unique(sub_u.nonzero()[1])
        hb = h[rows][:, rows].toarray()
        ub = sub_u[:, cols].toarray()
        prod = ub.conj().T @ np.linalg.solve(hb, ub)
        ri.append(np.repeat(cols, cols.size))
        ci.append(np.tile(cols, cols.size))
        vals.append(prod.ravel())
    if not vals:
        return sp.csr_array((n, n), dtype=complex)
    out = sp.coo_array((np.concatenate(vals), (np.concatenate(ri), np.concatenate(ci))), shape=(n, n)).tocsr()
    return sp.csr_array(0.5 * (out + out.conj().T))


def build_toeplitz(
    pot: Potential,
    basis: Basis,
    B: str = "identity",
    Q: int = 8,
    tail_fraction: float = 1e-8,
    strict: bool = False,
    tol: float = DEFAULT_TOL,
) -> OperatorMatrix:
    """``pW(I)p`` (B="identity") or ``pW(H+^-1)p`` (B="hplus_inverse") on zero modes.

    For ``hplus_inverse`` the level sum stops at Q.  Completeness of the
    Landau levels gives the exact remainder mass
    ``tr pW(I)p - sum_{q<Q} |<q|U|p>|^2``; divided by ``2 b0 (Q + 1)`` it
    bounds the trace of the omitted part.  A :class:`TruncationWarning` is
    issued (an error under ``strict``) when the bound exceeds
    ``tail_fraction`` times the trace.
    """
    if basis.kind != "zero_mode":
        raise ValueError("Toeplitz operators act on a zero-mode basis")
    trunc = (basis.K, Q if B == "hplus_inverse" else 1)
    K = len(basis)
    if pot.is_zero:
        return OperatorMatrix(sp.csr_array((K, K), dtype=complex), f"zero on {_tag(basis)}", True, trunc,
                              {"operator": B, "tail_bound": 0.0})
    if B == "identity":
        mat = assemble_abs_squared(pot, basis, basis, tol)
        return OperatorMatrix(mat.entries, f"pW(I)p on {_tag(basis)}", True, trunc, {"operator": B})
    if B != "hplus_inverse":
        raise ValueError(f"unknown operator B={B!r}; use 'identity' or 'hplus_inverse'")
    if Q < 1:
        raise ValueError("Q must be >= 1")
    ext = extended_landau_basis(pot, basis, Q)
    u = assemble_U_elements(pot, ext, basis, tol).entries
    h = hplus_galerkin(basis.field, ext, tol)
    if basis.field.is_constant:
        mat = sp.csr_array(u.conj().T @ sp.diags_array(1.0 / ext.hplus_eigenvalues) @ u)
        mat = sp.csr_array(0.5 * (mat + mat.conj().T))
        gap = 2.0 * basis.b0 * (Q + 1)
    else:
        mat = _sector_inverse_sandwich(h, u)
        gap = basis.field.zeta  # sigma(H_+) lies above zeta; heuristic for the Galerkin case
    # mass of U p outside the retained levels, by completeness of the Landau levels
    due = float(assemble_abs_squared(pot, basis, basis, tol).entries.diagonal().real.sum())
    kept = float(abs(u).power(2).sum())
    tail = max(due - kept, 0.0) / gap
    trace = float(mat.diagonal().real.sum())
    if tail > tail_fraction * max(trace, 1e-300):
        msg = f"level cutoff Q={Q}: resolvent tail bound {tail:.3e} exceeds {tail_fraction:g} x trace ({trace:.3e})"
        if strict:
            raise RuntimeError(msg)
        warnings.warn(msg, TruncationWarning, stacklevel=2)
    return OperatorMatrix(mat, f"pW(H+^-1)p on {_tag(basis)}", True, trunc,
                          {"operator": B, "tail_bound": tail, "trace": trace})


def build_w(pot: Potential, basis: Basis, Q: int = 8, tol: float = DEFAULT_TOL) -> OperatorMatrix:
    """``H_+^(-1/2) U p`` from zero-mode coefficients to extended Landau coefficients."""
    if basis.kind != "zero_mode" or not basis.field.is_constant:
        raise ValueError("build_w needs a zero-mode basis of a constant field")
    ext = extended_landau_basis(pot, basis, Q)
    u = assemble_U_elements(pot, ext, basis, tol).entries
    w = sp.csr_array(sp.diags_array(ext.hplus_eigenvalues ** -0.5) @ u)
    return OperatorMatrix(w, f"w p: {_tag(basis)} -> {_tag(ext)}", False, (basis.K, Q),
                          {"rows": ext})


def spectrum(mat, check: bool = True, return_vectors: bool = False):
    """Eigenvalues of a Hermitian operator, descending, computed per sparsity block.

    Every pair is checked for ``||A v - lambda v|| < 1e-9 ||A||``.
    """
    if isinstance(mat, OperatorMatrix):
        if not mat.hermitian:
            raise ValueError("spectrum needs a matrix tagged hermitian")
        a = mat.entries
    else:
        a = sp.csr_array(mat)
        if hermitian_defect(a) > _HERMITIAN_TOL * max(1.0, abs(a).max() if a.nnz else 0.0):
            raise ValueError("spectrum needs a Hermitian matrix")
    n = a.shape[0]
    vals = np.empty(n)
    vecs = np.zeros((n, n), dtype=complex) if return_vectors else None
    pos = 0
    norm = 0.0
    pieces = []
    for idx in block_components(a):
        block = a[idx][:, idx].toarray()
        block = 0.5 * (block + block.conj().T)
        lam, v = eigh(block)
        if check:
            res = np.linalg.norm(block @ v - v * lam, axis=0)
            pieces.append((res, np.abs(lam)))
        vals[pos : pos + idx.size] = lam
        if return_vectors:
            vecs[idx, pos : pos + idx.size] = v
        pos += idx.size
        norm = max(norm, float(np.abs(lam).max(initial=0.0)))
    if check and pieces:
        worst = max(float(r.max(initial=0.0)) for r, _ in pieces)
        if worst > 1e-9 * max(norm, 1e-300) and norm > 0:
            raise np.linalg.LinAlgError(f"eigenpair residual {worst:.3e} exceeds 1e-9 ||A|| = {1e-9 * norm:.3e}")
    order = np.argsort(-vals, kind="stable")
    if return_vectors:
        return vals[order], vecs[:, order]
    return vals[order]
