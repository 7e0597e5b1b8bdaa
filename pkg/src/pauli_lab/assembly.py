"""Matrix elements of angular-harmonic multipliers between radial bases.

A multiplier is given by its angular Fourier coefficients: ``coefficients[n]``
is a callable ``(t, ell) -> array`` returning the n-th Fourier coefficient of
the multiplier at Landau variable ``t``; ``ell`` is the angular momentum of
the column state (used by sector-dependent operators, ignored otherwise).
The element between row state ``a`` and column state ``b`` picks the
harmonic ``n = ell_a - ell_b``.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

from .quadrature import DEFAULT_TOL, expectation, normalized_laguerre

Coefficient = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _poly_rows(t: np.ndarray, beta: np.ndarray, degree: np.ndarray) -> np.ndarray:
    """Orthonormal Laguerre values, shape (len(t), len(beta))."""
    out = np.empty((t.size, beta.size))
    for b in np.unique(beta):
        sel = np.flatnonzero(beta == b)
        vals = normalized_laguerre(int(degree[sel].max()), float(b), t)
        out[:, sel] = vals[degree[sel]].T
    return out


def radial_matrix(
    rows,
    cols,
    coefficients: Mapping[int, Coefficient],
    breakpoints: Sequence[float] = (),
    tol: float = DEFAULT_TOL,
) -> sp.csr_array:
    """Assemble ``<row_a | X | col_b>`` for a multiplier X given by harmonics.

    Both bases must share ``b0``.  Returns a complex CSR array of shape
    ``(len(rows), len(cols))`` holding only entries allowed by the angular
    selection rule.
    """
    if not np.isclose(rows.b0, cols.b0, rtol=1e-14, atol=0.0):
        raise ValueError(f"bases use different b0 ({rows.b0} vs {cols.b0})")
    bps = tuple(sorted(set(breakpoints) | set(rows.t_breakpoints) | set(cols.t_breakpoints)))

    by_ell: dict[int, list[int]] = defaultdict(list)
    for i, l in enumerate(rows.ell):
        by_ell[int(l)].append(i)
    by_ell_arr = {l: np.array(v) for l, v in by_ell.items()}

    ia_parts, ib_parts, n_parts = [], [], []
    for n in coefficients:
        for b, lb in enumerate(cols.ell):
            hit = by_ell_arr.get(int(lb) + int(n))
            if hit is not None:
                ia_parts.append(hit)
                ib_parts.append(np.full(hit.size, b))
                n_parts.append(np.full(hit.size, n))
    shape = (len(rows), len(cols))
    if not ia_parts:
        return sp.csr_array(shape, dtype=complex)
    ia = np.concatenate(ia_parts)
    ib = np.concatenate(ib_parts)
    nn = np.concatenate(n_parts)

    beta_a = np.abs(rows.ell[ia]).astype(float)
    beta_b = np.abs(cols.ell[ib]).astype(float)
    alpha = 0.5 * (beta_a + beta_b)
    logpref = (
        gammaln(alpha + 1.0)
        - 0.5 * gammaln(beta_a + 1.0)
        - 0.5 * gammaln(beta_b + 1.0)
        + rows.log_scale[ia]
        + cols.log_scale[ib]
    )
    values = np.empty(ia.size, dtype=complex)
    for a_val in np.unique(alpha):
        sel = np.flatnonzero(alpha == a_val)
        sa, sb, sn = ia[sel], ib[sel], nn[sel]
        ell_b = cols.ell[sb]

        def integrand(t, sa=sa, sb=sb, sn=sn, ell_b=ell_b):
            pa = _poly_rows(t, np.abs(rows.ell[sa]), rows.radial_degree[sa])
            pb = _poly_rows(t, np.abs(cols.ell[sb]), cols.radial_degree[sb])
            base = pa * pb * (rows.extra(t) * cols.extra(t))[:, None]
            out = np.empty(base.shape, dtype=complex)
            for n in np.unique(sn):
                m = sn == n
                out[:, m] = base[:, m] * coefficients[int(n)](t[:, None], ell_b[None, m])
            return out

        values[sel] = expectation(a_val, integrand, bps, tol) * np.exp(logpref[sel])
    mat = sp.coo_array((values, (ia, ib)), shape=shape).tocsr()
    mat.eliminate_zeros()
    return mat
