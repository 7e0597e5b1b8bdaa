"""Birman-Schwinger family of the truncated Pauli operator.

With ``w = H_+^(-1/2) U`` (from the spin-up to the spin-down space),

    M(z)    = z (H_+ - z)^-1,          I + M(z) = H_+ (H_+ - z)^-1,
    T_V(z)  = e^2 (I + M(z)) w R_-(z) w^*,
    K_V(z)  = (I + M(z)) w p w^* - z (I + M(z)) w R_-(z) p_perp w^*,

so that ``I - T_V(z) = I + e^2 K_V(z) / z``.  ``z`` is a discrete eigenvalue
of the spinor matrix exactly when ``I - T_V(z)`` is singular.  For real z the
matrix ``T_V(z)`` is similar to the Hermitian ``G e^2 w R_- w^* G`` with
``G = (I + M)^(1/2)``; characteristic values are located through the
inertia of that matrix, which for ``z < 0`` counts the spinor eigenvalues
below z.

All matrix work is done on the connected blocks of the sparsity pattern of
``w``, so radial perturbations cost one small dense solve per angular sector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq, minimize_scalar
from scipy.sparse.csgraph import connected_components

from .toeplitz import OperatorMatrix

__all__ = [
    "BSFamily",
    "DomainError",
    "PoleError",
    "ContourError",
    "M_of_z",
    "M_series",
    "series_remainder_bound",
    "T_V",
    "T_V_derivative",
    "resolvent_identity_residual",
    "characteristic_scan",
    "characteristic_values",
    "geometric_multiplicity",
    "contour_index",
    "index_on_contour",
    "K_V",
    "K_V_prime0",
    "rescaled_family",
    "exceptional_couplings",
    "screen_exceptional",
]


class DomainError(ValueError):
    """z lies on (or beyond) a ladder value where the family is undefined."""


class PoleError(ZeroDivisionError):
    """z = 0 (or lambda = 0): the family has a pole there."""


class ContourError(RuntimeError):
    """Contour integral failed to settle on an integer."""


@dataclass(frozen=True)
class _Block:
    plus: np.ndarray
    minus: np.ndarray
    w: np.ndarray  # dense (len(plus), len(minus))


@dataclass(frozen=True, eq=False)
class BSFamily:
    w: sp.csr_array
    hplus_diag: np.ndarray
    hminus_diag: np.ndarray
    e: float
    epsilon: float
    _blocks: list = field(default=None, repr=False)

    def __post_init__(self):
        w = sp.csr_array(self.w)
        object.__setattr__(self, "w", w)
        hp = np.asarray(self.hplus_diag, dtype=float)
        hm = np.asarray(self.hminus_diag, dtype=float)
        if w.shape != (hp.size, hm.size):
            raise ValueError(f"w has shape {w.shape}, ladders have sizes {hp.size}, {hm.size}")
        if np.any(hp <= 0):
            raise ValueError("H_+ ladder must be positive")
        if not 0 < self.epsilon < hp.min():
            raise ValueError("domain radius must lie in (0, min H_+)")
        object.__setattr__(self, "hplus_diag", hp)
        object.__setattr__(self, "hminus_diag", hm)
        object.__setattr__(self, "_blocks", _split_blocks(w))

    @classmethod
    def from_truncation(cls, trunc, epsilon: float | None = None) -> "BSFamily":
        hp = trunc.hplus_diag
        w = sp.diags_array(hp**-0.5) @ trunc.u
        eps = 0.5 * trunc.zeta if epsilon is None else epsilon
        return cls(w, hp, trunc.hminus_diag, trunc.e, eps)

    @classmethod
    def from_w(cls, wmat: OperatorMatrix, e: float, epsilon: float | None = None) -> "BSFamily":
        """Family restricted to zero modes, from :func:`toeplitz.build_w`."""
        rows = wmat.meta["rows"]
        hp = rows.hplus_eigenvalues
        eps = 0.5 * hp.min() if epsilon is None else epsilon
        return cls(wmat.entries, hp, np.zeros(wmat.shape[1]), e, eps)

    @property
    def zero_mask(self) -> np.ndarray:
        return self.hminus_diag == 0

    @property
    def blocks(self) -> list[_Block]:
        return self._blocks

    @property
    def n_plus(self) -> int:
        return self.hplus_diag.size


def _split_blocks(w: sp.csr_array) -> list[_Block]:
    npl, nmi = w.shape
    big = sp.block_array([[None, w], [w.conj().T, None]], format="csr") if w.nnz else None
    if big is None:
        return []
    n, labels = connected_components(abs(big) > 0, directed=False)
    out = []
    lab_p, lab_m = labels[:npl], labels[npl:]
    order_p = np.argsort(lab_p, kind="stable")
    order_m = np.argsort(lab_m, kind="stable")
    cut_p = np.searchsorted(lab_p[order_p], np.arange(n + 1))
    cut_m = np.searchsorted(lab_m[order_m], np.arange(n + 1))
    for c in range(n):
        plus = order_p[cut_p[c] : cut_p[c + 1]]
        minus = order_m[cut_m[c] : cut_m[c + 1]]
        if plus.size and minus.size:
            out.append(_Block(plus, minus, w[plus][:, minus].toarray()))
    return out


def _check_z(fam: BSFamily, z, allow_zero: bool = False):
    z = complex(z)
    if np.any(np.abs(fam.hplus_diag - z) < 1e-300) or abs(z) >= fam.hplus_diag.min():
        raise DomainError(f"z = {z} is outside |z| < min H_+ = {fam.hplus_diag.min():g}")
    if not allow_zero:
        if z == 0:
            raise PoleError("T_V has a pole at z = 0")
        if np.any(np.abs(fam.hminus_diag - z) == 0):
            raise DomainError(f"z = {z} is an H_- ladder value")
    return z


def _diag(values) -> OperatorMatrix:
    return OperatorMatrix(sp.diags_array(np.asarray(values, dtype=complex)).tocsr(), "diag", False, (0, 0))


def M_of_z(fam: BSFamily, z) -> OperatorMatrix:
    z = _check_z(fam, z, allow_zero=True)
    return _diag(z / (fam.hplus_diag - z))


def M_series(fam: BSFamily, z, n_terms: int = 30) -> OperatorMatrix:
    """Partial sum ``sum_{k < n_terms} z**(k+1) H_+**(-k-1)``."""
    z = _check_z(fam, z, allow_zero=True)
    ratio = z / fam.hplus_diag
    total = np.zeros_like(ratio)
    term = np.ones_like(ratio)
    for _ in range(n_terms):
        term = term * ratio
        total = total + term
    return _diag(total)


def series_remainder_bound(fam: BSFamily, z, n_terms: int = 30) -> float:
    q = abs(complex(z)) / fam.hplus_diag.min()
    return q ** (n_terms + 1) / (1.0 - q)


def _minus_resolvent(fam: BSFamily, idx, z):
    return 1.0 / (fam.hminus_diag[idx] - z)


def _block_T(fam: BSFamily, blk: _Block, z):
    hp = fam.hplus_diag[blk.plus]
    rm = _minus_resolvent(fam, blk.minus, z)
    return (fam.e**2) * (hp / (hp - z))[:, None] * ((blk.w * rm) @ blk.w.conj().T)


def _block_dT(fam: BSFamily, blk: _Block, z):
    hp = fam.hplus_diag[blk.plus]
    rm = _minus_resolvent(fam, blk.minus, z)
    a = (hp / (hp - z) ** 2)[:, None] * ((blk.w * rm) @ blk.w.conj().T)
    b = (hp / (hp - z))[:, None] * ((blk.w * rm**2) @ blk.w.conj().T)
    return (fam.e**2) * (a + b)


def _assemble(fam: BSFamily, fn, z) -> sp.csr_array:
    n = fam.n_plus
    ri, ci, vals = [], [], []
    for blk in fam.blocks:
        m = fn(fam, blk, z)
        ri.append(np.repeat(blk.plus, blk.plus.size))
        ci.append(np.tile(blk.plus, blk.plus.size))
        vals.append(m.ravel())
    if not vals:
        return sp.csr_array((n, n), dtype=complex)
    return sp.coo_array((np.concatenate(vals), (np.concatenate(ri), np.concatenate(ci))), shape=(n, n)).tocsr()


def T_V(fam: BSFamily, z) -> OperatorMatrix:
    z = _check_z(fam, z)
    return OperatorMatrix(_assemble(fam, _block_T, z), f"T_V({z})", False, (0, 0), {"z": z})


def T_V_derivative(fam: BSFamily, z) -> OperatorMatrix:
    z = _check_z(fam, z)
    return OperatorMatrix(_assemble(fam, _block_dT, z), f"T_V'({z})", False, (0, 0), {"z": z})


def hermitian_form(fam: BSFamily, blk: _Block, z: float) -> np.ndarray:
    """``G e^2 w R_- w^* G`` on one block (real z), similar to T_V."""
    hp = fam.hplus_diag[blk.plus]
    g = np.sqrt(hp / (hp - z))
    rm = _minus_resolvent(fam, blk.minus, z)
    s = (fam.e**2) * g[:, None] * ((blk.w * rm) @ blk.w.conj().T) * g[None, :]
    return 0.5 * (s + s.conj().T)


def resolvent_identity_residual(fam: BSFamily, z) -> float:
    """``|| (I - T_V) (I + e^2 (I+M) w Rc w^*) - I ||_2`` with Rc the inverse Schur complement."""
    z = _check_z(fam, z)
    worst = 0.0
    for blk in fam.blocks:
        hp = fam.hplus_diag[blk.plus]
        hm = fam.hminus_diag[blk.minus]
        w = blk.w
        # H_- - z - e^2 U^*(H_+ - z)^-1 U  with  U = H_+^(1/2) w
        schur = np.diag(hm - z) - fam.e**2 * (w.conj().T * (hp / (hp - z))) @ w
        rc = np.linalg.inv(schur)
        t = _block_T(fam, blk, z)
        second = np.eye(hp.size) + fam.e**2 * (hp / (hp - z))[:, None] * (w @ rc @ w.conj().T)
        dev = (np.eye(hp.size) - t) @ second - np.eye(hp.size)
        worst = max(worst, float(np.linalg.norm(dev, 2)))
    return worst


def sigma_min(fam: BSFamily, z) -> float:
    """Smallest singular value of ``I - T_V(z)``."""
    z = _check_z(fam, z)
    best = 1.0 if sum(b.plus.size for b in fam.blocks) < fam.n_plus else np.inf
    for blk in fam.blocks:
        a = np.eye(blk.plus.size) - _block_T(fam, blk, z)
        best = min(best, float(np.linalg.svd(a, compute_uv=False)[-1]))
    return float(best if np.isfinite(best) else 1.0)


def t_norm(fam: BSFamily, z) -> float:
    z = _check_z(fam, z)
    return max((float(np.linalg.norm(_block_T(fam, b, z), 2)) for b in fam.blocks), default=0.0)


def _count_above_one(fam: BSFamily, blk: _Block, z: float) -> int:
    return int(np.sum(np.linalg.eigvalsh(hermitian_form(fam, blk, z)) > 1.0))


def _locate_block(fam, blk, a, b, na, nb, xtol, out):
    """Collect the jumps of the count on [a, b] for one block."""
    if na == nb:
        return
    if abs(na - nb) == 1 or b - a <= xtol * max(abs(a), abs(b)):
        if abs(na - nb) == 1:
            k = min(na, nb)  # index of the eigenvalue crossing 1 (descending order)

            def g(z):
                lam = np.sort(np.linalg.eigvalsh(hermitian_form(fam, blk, z)))[::-1]
                return lam[k] - 1.0

            ga, gb = g(a), g(b)
            if ga * gb < 0:
                z0 = brentq(g, a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=200)
                out.append((z0, 1))
                return
        out.append((0.5 * (a + b), abs(na - nb)))
        return
    mid = 0.5 * (a + b)
    nm = _count_above_one(fam, blk, mid)
    _locate_block(fam, blk, a, mid, na, nm, xtol, out)
    _locate_block(fam, blk, mid, b, nm, nb, xtol, out)


def characteristic_values(fam: BSFamily, lo: float, hi: float, n_grid: int = 64, xtol: float = 1e-15):
    """Real characteristic values in ``[lo, hi]`` (which must not contain 0).

    Returns ``(values, multiplicities)``.  Each block is scanned on a
    geometric grid and every jump of the count ``#{eig > 1}`` is isolated
    by bisection and then polished with Brent's method.
    """
    if lo >= hi:
        raise ValueError("need lo < hi")
    if lo <= 0 <= hi:
        raise ValueError("interval must not contain the pole at z = 0")
    _check_z(fam, lo)
    _check_z(fam, hi)
    sign = 1.0 if lo > 0 else -1.0
    a_abs, b_abs = sorted((abs(lo), abs(hi)))
    grid = sign * np.geomspace(a_abs, b_abs, n_grid)
    grid = np.sort(grid)
    found = []
    for blk in fam.blocks:
        counts = [_count_above_one(fam, blk, z) for z in grid]
        for (za, zb), (na, nb) in zip(zip(grid[:-1], grid[1:]), zip(counts[:-1], counts[1:])):
            _locate_block(fam, blk, za, zb, na, nb, xtol, found)
    found.sort()
    vals = np.array([f[0] for f in found])
    mult = np.array([f[1] for f in found], dtype=int)
    return vals, mult


@dataclass(frozen=True)
class ScanResult:
    z: np.ndarray
    sigma_min: np.ndarray
    flagged: np.ndarray  # bool per grid point
    values: np.ndarray  # refined characteristic values (repeated by multiplicity)
    threshold: np.ndarray


def characteristic_scan(fam: BSFamily, z_grid, rel_threshold: float = 1e-6) -> ScanResult:
    """sigma_min of ``I - T_V`` on a real grid plus refined characteristic values.

    A point is flagged when sigma_min < rel_threshold (1 + ||T_V||).  Within
    each sign-definite stretch of the grid, characteristic values are found
    from count jumps (see :func:`characteristic_values`); interior local
    minima of sigma_min with no count jump are additionally refined by a
    bounded scalar search and kept if they drop below the threshold.
    """
    z = np.sort(np.asarray(z_grid, dtype=float))
    if np.any(z == 0):
        raise PoleError("scan grid contains z = 0")
    sig = np.array([sigma_min(fam, zz) for zz in z])
    thr = rel_threshold * (1.0 + np.array([t_norm(fam, zz) for zz in z]))
    flags = sig < thr
    values = []
    for part in (z[z < 0], z[z > 0]):
        if part.size >= 2:
            v, m = characteristic_values(fam, part[0], part[-1], n_grid=max(part.size, 16))
            values.extend(np.repeat(v, m).tolist())
    # tangential minima that do not change the count
    for i in range(1, z.size - 1):
        if sig[i] <= sig[i - 1] and sig[i] <= sig[i + 1] and z[i - 1] * z[i + 1] > 0:
            if any(z[i - 1] <= v <= z[i + 1] for v in values):
                continue
            res = minimize_scalar(lambda x: sigma_min(fam, x), bounds=(z[i - 1], z[i + 1]), method="bounded",
                                  options={"xatol": 1e-14 * max(abs(z[i]), 1e-300)})
            if res.fun < rel_threshold * (1.0 + t_norm(fam, res.x)):
                values.append(float(res.x))
    return ScanResult(z, sig, flags, np.sort(np.array(values)), thr)


def geometric_multiplicity(fam: BSFamily, z0, rel_tol: float = 1e-8) -> int:
    """``dim ker (I - T_V(z0))`` estimated from small singular values."""
    z0 = _check_z(fam, z0)
    total = 0
    for blk in fam.blocks:
        a = np.eye(blk.plus.size) - _block_T(fam, blk, z0)
        s = np.linalg.svd(a, compute_uv=False)
        total += int(np.sum(s < rel_tol * max(1.0, s[0])))
    return total


@dataclass(frozen=True)
class IndexResult:
    value: int
    raw: complex
    n_points: int


def contour_index(
    A: Callable, dA: Callable, center: complex, radius: float, n_points: int = 128,
    max_points: int = 16384, tol: float = 1e-6,
) -> IndexResult:
    """``(2 pi i)^-1`` times the contour integral of ``tr(A^-1 A')`` on a circle.

    ``A`` and ``dA`` return square matrices (or scalars).  The trapezoid rule
    is doubled until two passes agree within ``tol / 10``; the result must
    then lie within ``tol`` of an integer.
    """

    def integrand(z):
        a = np.atleast_2d(A(z))
        da = np.atleast_2d(dA(z))
        return np.trace(np.linalg.solve(a, da))

    def rule(n):
        theta = 2 * np.pi * (np.arange(n) + 0.5) / n
        zs = center + radius * np.exp(1j * theta)
        vals = np.array([integrand(zz) for zz in zs])
        return np.mean(vals * radius * np.exp(1j * theta))

    n = n_points
    prev = rule(n)
    while True:
        n2 = 2 * n
        cur = rule(n2)
        if abs(cur - prev) < 0.1 * tol or n2 >= max_points:
            n = n2
            break
        prev, n = cur, n2
    nearest = round(cur.real)
    if abs(cur - nearest) >= tol:
        raise ContourError(f"contour index {cur:.8g} is not within {tol:g} of an integer (N={n})")
    return IndexResult(int(nearest), complex(cur), n)


def index_on_contour(fam: BSFamily, center, radius: float, n_points: int = 64,
                     min_sigma: float = 1e-8) -> IndexResult:
    """Index of ``I - T_V`` on the circle ``|z - center| = radius``.

    The circle must stay in the punctured disk ``0 < |z| < epsilon`` and
    must not enclose the pole at 0.
    """
    center = complex(center)
    if abs(center) <= radius:
        raise DomainError("contour encloses or touches the pole at z = 0")
    if abs(center) + radius >= fam.epsilon:
        raise DomainError(f"contour leaves the disk |z| < {fam.epsilon:g}")
    probe = center + radius * np.exp(2j * np.pi * (np.arange(32) + 0.5) / 32)
    s = min(sigma_min(fam, zz) for zz in probe)
    if s < min_sigma:
        raise ContourError(f"contour passes within sigma_min = {s:.2e} of a characteristic value")
    blocks = fam.blocks
    eyes = [np.eye(b.plus.size) for b in blocks]

    def log_derivative(z):
        # tr((I - T)^-1 (-T')) summed over blocks; passed to contour_index as a 1x1 system
        return sum(
            np.trace(np.linalg.solve(eye - _block_T(fam, b, z), -_block_dT(fam, b, z)))
            for b, eye in zip(blocks, eyes)
        )

    return contour_index(lambda z: 1.0, log_derivative, center, radius, n_points)


def K_V(fam: BSFamily, z) -> OperatorMatrix:
    """``(I+M) w p w^* - z (I+M) w R_- p_perp w^*``; ``K_V(0) = w p w^*``."""
    z = _check_z(fam, z, allow_zero=True)

    def blockfn(fam, blk, z):
        hp = fam.hplus_diag[blk.plus]
        hm = fam.hminus_diag[blk.minus]
        zero = hm == 0
        lead = (blk.w[:, zero]) @ blk.w[:, zero].conj().T
        rest = (blk.w[:, ~zero] / (hm[~zero] - z)) @ blk.w[:, ~zero].conj().T
        return (hp / (hp - z))[:, None] * (lead - z * rest)

    return OperatorMatrix(_assemble(fam, blockfn, z), f"K_V({z})", False, (0, 0), {"z": z})


def K_V_prime0(fam: BSFamily) -> OperatorMatrix:
    """``H_+^-1 w p w^* - w H_-^+ w^*`` (derivative of K_V at 0)."""

    def blockfn(fam, blk, z):
        hp = fam.hplus_diag[blk.plus]
        hm = fam.hminus_diag[blk.minus]
        zero = hm == 0
        lead = blk.w[:, zero] @ blk.w[:, zero].conj().T
        rest = (blk.w[:, ~zero] / hm[~zero]) @ blk.w[:, ~zero].conj().T
        return lead / hp[:, None] - rest

    return OperatorMatrix(_assemble(fam, blockfn, 0.0), "K_V'(0)", False, (0, 0))


def rescaled_family(fam: BSFamily, lam: float) -> OperatorMatrix:
    """``I - K_V(-lam e^2) / lam``, equal to ``I - T_V(-lam e^2)``."""
    if lam == 0:
        raise PoleError("rescaled family has a pole at lambda = 0")
    kv = K_V(fam, -lam * fam.e**2).entries
    eye = sp.eye_array(fam.n_plus, dtype=complex, format="csr")
    return OperatorMatrix(sp.csr_array(eye - kv / lam), f"I - K_V^(e)({lam})/{lam}", False, (0, 0), {"lambda": lam})


def _kernel_blocks(fam: BSFamily, rel_tol: float):
    """Per block: orthonormal basis of ker(w p w^*) and the block of w H_-^+ w^*."""
    for blk in fam.blocks:
        hm = fam.hminus_diag[blk.minus]
        zero = hm == 0
        lead = blk.w[:, zero] @ blk.w[:, zero].conj().T
        lam, vec = np.linalg.eigh(0.5 * (lead + lead.conj().T))
        scale = max(float(np.abs(lam).max(initial=0.0)), 1e-300)
        ker = vec[:, lam <= rel_tol * scale] if lam.size else vec
        rest = (blk.w[:, ~zero] / hm[~zero]) @ blk.w[:, ~zero].conj().T
        yield blk, ker, rest


def exceptional_couplings(fam: BSFamily, rel_tol: float = 1e-12) -> np.ndarray:
    """Positive couplings e_n where ``I + e^2 K_V'(0) Pi_0`` is singular.

    On ``ker K_V(0)`` the operator ``K_V'(0)`` compresses to ``-Pi_0 w H_-^+ w^* Pi_0``,
    so ``e_n = mu_n**(-1/2)`` over its positive eigenvalues ``mu_n``.
    """
    out = []
    for blk, ker, rest in _kernel_blocks(fam, rel_tol):
        if ker.shape[1] == 0:
            continue
        comp = ker.conj().T @ rest @ ker
        mu = np.linalg.eigvalsh(0.5 * (comp + comp.conj().T))
        out.extend(mu[mu > 1e-300].tolist())
    return np.sort(np.array(out) ** -0.5)[::-1] if out else np.empty(0)


def screen_exceptional(fam: BSFamily, e: float | None = None, cond_limit: float = 1e8) -> tuple[bool, float]:
    """(flagged, ``max(1, ||A||) / sigma_min(A)``) for ``A = I + e^2 K_V'(0) Pi_0``.  Uses fam.e by default."""
    e = fam.e if e is None else e
    worst = 1.0
    for blk, ker, rest in _kernel_blocks(fam, 1e-12):
        hp = fam.hplus_diag[blk.plus]
        hm = fam.hminus_diag[blk.minus]
        zero = hm == 0
        lead = blk.w[:, zero] @ blk.w[:, zero].conj().T
        kp = lead / hp[:, None] - rest
        pi0 = ker @ ker.conj().T
        a = np.eye(blk.plus.size) + e**2 * kp @ pi0
        # plain cond() misses singular 1x1 blocks; measure against the identity scale instead
        sv = np.linalg.svd(a, compute_uv=False)
        worst = max(worst, np.inf if sv[-1] == 0 else max(1.0, sv[0]) / sv[-1])
    return worst > cond_limit, worst
