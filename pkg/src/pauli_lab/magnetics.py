"""Admissible radial magnetic fields and their zero-mode / Landau bases.

The field is ``b = b0 + btilde(r)`` with ``btilde`` piecewise polynomial and
compactly supported.  In the symmetric radial gauge the total potential is
``phi(r) = b0 r**2 / 4 + phitilde(r)`` with ``laplacian(phitilde) = btilde``,
and the kernel of ``H_-`` is spanned by ``z**k exp(-phi)``.

States are stored through the Landau variable ``t = b0 r**2 / 2``:

    psi(r, theta) = sqrt(b0 / 2 pi) f(t) exp(i l theta),
    f(t) = t**(|l|/2) exp(-t/2) p_n(t) extra(t) exp(log_scale) / sqrt(Gamma(|l|+1)),

where ``p_n`` is the orthonormal Laguerre polynomial of degree ``n`` for the
Gamma(|l| + 1) density.  For constant fields ``extra = 1``; for zero modes
of a nonconstant field ``extra = exp(-phitilde)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial import Polynomial
from scipy.special import gammaln

from .assembly import radial_matrix
from .quadrature import DEFAULT_TOL, expectation, normalized_laguerre

__all__ = [
    "RadialProfile",
    "PoissonSolution",
    "MagneticField",
    "Basis",
    "solve_radial_poisson",
    "spectral_floor",
    "build_zero_mode_basis",
    "build_landau_basis",
    "overlap",
]


def _horner(coef: np.ndarray, x: np.ndarray) -> np.ndarray:
    # coef: (len(x), deg+1), low to high
    out = np.zeros_like(x, dtype=float)
    for j in range(coef.shape[1] - 1, -1, -1):
        out = out * x + coef[:, j]
    return out


def _pad(polys: list[np.ndarray]) -> np.ndarray:
    width = max((len(p) for p in polys), default=1)
    out = np.zeros((len(polys) + 1, width))
    for i, p in enumerate(polys):
        out[i, : len(p)] = p
    return out  # trailing zero row serves r beyond the support


@dataclass(frozen=True)
class RadialProfile:
    """Piecewise polynomial ``r -> btilde(r)``, identically zero beyond ``edges[-1]``.

    ``pieces[i]`` holds coefficients (low to high, in powers of ``r``) on
    ``[edges[i], edges[i + 1])``.
    """

    edges: tuple[float, ...] = (0.0,)
    pieces: tuple[tuple[float, ...], ...] = ()
    label: str = "constant"

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        if e.size == 0 or e[0] != 0.0:
            raise ValueError("profile edges must start at r = 0")
        if np.any(np.diff(e) <= 0):
            raise ValueError("profile edges must be strictly increasing")
        if len(self.pieces) != e.size - 1:
            raise ValueError("need one polynomial piece per interval")
        for p in self.pieces:
            if not np.all(np.isfinite(p)):
                raise ValueError("profile coefficients must be finite")

    @classmethod
    def zero(cls) -> "RadialProfile":
        return cls()

    @classmethod
    def step(cls, r0: float, height: float) -> "RadialProfile":
        if not r0 > 0:
            raise ValueError(f"step radius must be positive, got {r0}")
        return cls((0.0, float(r0)), ((float(height),),), f"step({r0}, {height})")

    @classmethod
    def tabulated(cls, radii, values, label: str = "tabulated") -> "RadialProfile":
        """Piecewise-linear interpolation of (radius, value) pairs."""
        r = np.asarray(radii, dtype=float)
        v = np.asarray(values, dtype=float)
        if r.shape != v.shape or r.ndim != 1 or r.size < 2:
            raise ValueError("need matching 1-d radius/value columns with >= 2 rows")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(v))):
            raise ValueError("tabulated field contains non-finite entries")
        if r[0] < 0 or np.any(np.diff(r) <= 0):
            raise ValueError("radii must be nonnegative and strictly increasing")
        if r[0] > 0:
            r = np.concatenate([[0.0], r])
            v = np.concatenate([[v[0]], v])
        pieces = []
        for r1, r2, v1, v2 in zip(r[:-1], r[1:], v[:-1], v[1:]):
            slope = (v2 - v1) / (r2 - r1)
            pieces.append((v1 - slope * r1, slope))
        return cls(tuple(r.tolist()), tuple(pieces), label)

    @classmethod
    def from_csv(cls, path) -> "RadialProfile":
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.reader(line for line in fh if not line.lstrip().startswith("#")):
                if not rec:
                    continue
                try:
                    rows.append((float(rec[0]), float(rec[1])))
                except ValueError:
                    if rows:
                        raise
                    continue  # header line
        if not rows:
            raise ValueError(f"no (radius, value) rows in {path}")
        r, v = zip(*rows)
        return cls.tabulated(r, v, label=f"csv:{Path(path).name}")

    @property
    def support(self) -> float:
        return float(self.edges[-1])

    @property
    def is_zero(self) -> bool:
        return all(not any(p) for p in self.pieces)

    def _table(self) -> np.ndarray:
        return _pad([np.asarray(p, dtype=float) for p in self.pieces])

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        idx = np.searchsorted(np.asarray(self.edges), r, side="right") - 1
        idx = np.clip(idx, 0, len(self.pieces))
        return _horner(self._table()[idx.ravel()], r.ravel()).reshape(r.shape)


@dataclass(frozen=True, eq=False)
class PoissonSolution:
    """Radial solution of ``laplacian(phitilde) = btilde`` with ``phitilde(0) = 0``.

    Evaluation is closed form on every polynomial piece; outside the support
    ``phitilde`` continues as ``c + flux * log(r)``.
    """

    profile: RadialProfile
    r_max: float
    grid: np.ndarray
    values: np.ndarray
    flux: float
    osc: float
    _edges: np.ndarray = field(repr=False)
    _flux_const: np.ndarray = field(repr=False)  # enclosed flux offset per piece
    _flux_poly: np.ndarray = field(repr=False)  # antiderivative of s * p(s)
    _phi_start: np.ndarray = field(repr=False)  # phitilde at the left edge
    _phi_poly: np.ndarray = field(repr=False)  # antiderivative of flux_poly(s) / s

    def _locate(self, r):
        r = np.asarray(r, dtype=float)
        idx = np.searchsorted(self._edges, r, side="right") - 1
        return r, np.clip(idx, 0, len(self._edges) - 1)

    def enclosed_flux(self, r) -> np.ndarray:
        """``F(r) = int_0^r s btilde(s) ds``."""
        r, idx = self._locate(r)
        flat = r.ravel()
        i = idx.ravel()
        out = self._flux_const[i] + _horner(self._flux_poly[i], flat)
        return out.reshape(r.shape)

    def dphi(self, r) -> np.ndarray:
        """Radial derivative ``F(r) / r``."""
        r = np.asarray(r, dtype=float)
        f = self.enclosed_flux(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(r > 0, f / np.where(r > 0, r, 1.0), 0.0)

    def __call__(self, r) -> np.ndarray:
        r, idx = self._locate(r)
        flat = r.ravel()
        i = idx.ravel()
        left = self._edges[i]
        with np.errstate(divide="ignore"):
            logs = np.where(left > 0, np.log(np.where(flat > 0, flat, 1.0) / np.where(left > 0, left, 1.0)), 0.0)
        out = (
            self._phi_start[i]
            + self._flux_const[i] * logs
            + _horner(self._phi_poly[i], flat)
            - _horner(self._phi_poly[i], left)
        )
        return out.reshape(r.shape)

    def laplacian_residual(self, h: float = 2e-3) -> float:
        """Max-norm of the finite-difference residual ``|lap(phi) - btilde|``.

        Fourth-order five-point stencils sampled on ``[3h, r_max - 2h]`` with
        spacing ``h``; points within ``3h`` of a profile edge (where ``btilde``
        may jump) are skipped.
        """
        r = np.arange(3 * h, self.r_max - 2 * h, h)
        for e in self._edges[1:]:
            r = r[np.abs(r - e) > 3 * h]
        p2, p1, c, m1, m2 = (self(r + k * h) for k in (2, 1, 0, -1, -2))
        d2 = (-p2 + 16 * p1 - 30 * c + 16 * m1 - m2) / (12 * h * h)
        d1 = (-p2 + 8 * p1 - 8 * m1 + m2) / (12 * h)
        return float(np.max(np.abs(d2 + d1 / r - self.profile(r)), initial=0.0))


def solve_radial_poisson(
    btilde: RadialProfile, r_max: float = 10.0, n_grid: int = 4001
) -> PoissonSolution:
    """Integrate ``phitilde'' + phitilde'/r = btilde`` outward from the origin."""
    if not isinstance(btilde, RadialProfile):
        raise TypeError("btilde must be a RadialProfile")
    if not r_max > 0:
        raise ValueError("r_max must be positive")
    edges = list(btilde.edges)
    flux_const, flux_poly, phi_start, phi_poly = [], [], [], []
    F = 0.0
    phi = 0.0
    for a, b, piece in zip(edges[:-1], edges[1:], btilde.pieces):
        q = Polynomial(np.concatenate([[0.0], np.asarray(piece, dtype=float)]))
        Pi = q.integ()  # Pi(0) = 0 and Pi is divisible by s**2
        A = F - Pi(a)
        G = Polynomial(Pi.coef[1:]) if Pi.coef.size > 1 else Polynomial([0.0])
        R = G.integ()
        flux_const.append(A)
        flux_poly.append(Pi.coef)
        phi_start.append(phi)
        phi_poly.append(R.coef)
        phi = phi + (A * np.log(b / a) if a > 0 else 0.0) + R(b) - R(a)
        F = A + Pi(b)
    # beyond the support: F constant, phitilde = phi(R) + F log(r / R)
    flux_const.append(F)
    flux_poly.append(np.zeros(1))
    phi_start.append(phi)
    phi_poly.append(np.zeros(1))
    width = max(len(p) for p in flux_poly + phi_poly)

    def table(polys):
        out = np.zeros((len(polys), width))
        for i, p in enumerate(polys):
            out[i, : len(p)] = p
        return out

    grid = np.union1d(np.linspace(0.0, r_max, n_grid), [e for e in edges if e <= r_max])
    sol = PoissonSolution(
        profile=btilde,
        r_max=float(r_max),
        grid=grid,
        values=np.zeros_like(grid),
        flux=float(F),
        osc=0.0,
        _edges=np.asarray(edges, dtype=float),
        _flux_const=np.asarray(flux_const, dtype=float),
        _flux_poly=table(flux_poly),
        _phi_start=np.asarray(phi_start, dtype=float),
        _phi_poly=table(phi_poly),
    )
    values = sol(grid)
    object.__setattr__(sol, "values", values)
    object.__setattr__(sol, "osc", float(values.max() - values.min()))
    return sol


@dataclass(frozen=True, eq=False)
class MagneticField:
    """Admissible field ``b0 + btilde(|x|)`` with its solved potential."""

    b0: float
    btilde: RadialProfile = field(default_factory=RadialProfile.zero)
    r_max: float = 10.0

    def __post_init__(self):
        if not (np.isfinite(self.b0) and self.b0 > 0):
            raise ValueError(f"b0 must be positive, got {self.b0}")
        object.__setattr__(self, "b0", float(self.b0))
        object.__setattr__(self, "_poisson", solve_radial_poisson(self.btilde, self.r_max))

    @classmethod
    def constant(cls, b0: float) -> "MagneticField":
        return cls(b0)

    @property
    def phitilde(self) -> PoissonSolution:
        return self._poisson

    @property
    def osc(self) -> float:
        return self._poisson.osc

    @property
    def zeta(self) -> float:
        return spectral_floor(self)

    @property
    def is_constant(self) -> bool:
        return self.btilde.is_zero

    @property
    def flux(self) -> float:
        """``int_0^inf s btilde(s) ds``; nonzero flux makes phitilde grow like log r."""
        return self._poisson.flux

    def __call__(self, r) -> np.ndarray:
        return self.b0 + self.btilde(r)

    def to_t(self, r):
        return 0.5 * self.b0 * np.asarray(r, dtype=float) ** 2

    def to_r(self, t):
        return np.sqrt(2.0 * np.asarray(t, dtype=float) / self.b0)

    @property
    def t_breakpoints(self) -> tuple[float, ...]:
        if self.is_constant:
            return ()
        return tuple(float(self.to_t(e)) for e in self.btilde.edges[1:])


def spectral_floor(field: MagneticField) -> float:
    """Lower edge ``2 b0 exp(-2 osc)`` of the nonzero spectrum of H(b, 0)."""
    return 2.0 * field.b0 * float(np.exp(-2.0 * field.osc))


@dataclass(frozen=True, eq=False)
class Basis:
    """Orthonormal family of zero modes or constant-field Landau states.

    ``log_norms`` are logarithms of the squared L2 norms of the unnormalized
    states (``z**k exp(-phi)`` for zero modes, ``r**|l| L_n^|l|(t) exp(-t/2)
    exp(i l theta)`` for Landau states).
    """

    kind: str
    b0: float
    K: int
    Q: int
    level: np.ndarray
    guiding: np.ndarray
    ell: np.ndarray
    radial_degree: np.ndarray
    log_scale: np.ndarray
    log_norms: np.ndarray
    hminus_eigenvalues: np.ndarray
    hplus_eigenvalues: np.ndarray
    field: MagneticField

    def __len__(self) -> int:
        return int(self.ell.size)

    @property
    def is_constant(self) -> bool:
        return self.field.is_constant

    @property
    def t_breakpoints(self) -> tuple[float, ...]:
        return self.field.t_breakpoints if self._dressed else ()

    @property
    def _dressed(self) -> bool:
        return self.kind == "zero_mode" and not self.field.is_constant

    @property
    def norms(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_norms)

    def extra(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if not self._dressed:
            return np.ones_like(t)
        return np.exp(-self.field.phitilde(self.field.to_r(t)))

    def index(self, q: int, j: int) -> int:
        hit = np.flatnonzero((self.level == q) & (self.guiding == j))
        if hit.size == 0:
            raise KeyError(f"state (q={q}, j={j}) not in basis")
        return int(hit[0])

    def evaluate(self, x, idx=None) -> np.ndarray:
        """Normalized wavefunctions at points ``x`` (shape (..., 2)).

        Returns an array of shape ``x.shape[:-1] + (len(idx),)``.
        """
        x = np.asarray(x, dtype=float)
        idx = np.arange(len(self)) if idx is None else np.atleast_1d(idx)
        r = np.hypot(x[..., 0], x[..., 1]).ravel()
        theta = np.arctan2(x[..., 1], x[..., 0]).ravel()
        t = self.field.to_t(r)
        out = np.empty((r.size, idx.size), dtype=complex)
        for col, i in enumerate(idx):
            beta = abs(int(self.ell[i]))
            n = int(self.radial_degree[i])
            p = normalized_laguerre(n, beta, t)[n]
            with np.errstate(divide="ignore", invalid="ignore"):
                logmag = 0.5 * beta * np.log(t) - 0.5 * t - 0.5 * gammaln(beta + 1.0)
            if beta == 0:
                logmag = -0.5 * t
            f = np.exp(logmag + self.log_scale[i]) * p * self.extra(t)
            out[:, col] = np.sqrt(self.b0 / (2 * np.pi)) * f * np.exp(1j * self.ell[i] * theta)
        return out.reshape(x.shape[:-1] + (idx.size,))


def build_zero_mode_basis(field: MagneticField, K: int = 512, tol: float = DEFAULT_TOL) -> Basis:
    """Orthonormal zero modes ``z**k exp(-phi)``, ``k = 0..K-1``."""
    if K < 1:
        raise ValueError("K must be >= 1")
    k = np.arange(K)
    b0 = field.b0
    if field.is_constant:
        log_mean = np.zeros(K)
    else:
        # E_k[exp(-2 phitilde)] under Gamma(k + 1); drift check raises QuadratureError
        def weight(t):
            return np.exp(-2.0 * field.phitilde(field.to_r(t)))

        log_mean = np.array(
            [np.log(expectation(float(kk), weight, field.t_breakpoints, tol)) for kk in k]
        )
    log_norms = np.log(2 * np.pi) + k * np.log(2.0 / b0) - np.log(b0) + gammaln(k + 1.0) + log_mean
    hplus = np.full(K, 2.0 * b0) if field.is_constant else np.full(K, np.nan)
    return Basis(
        kind="zero_mode",
        b0=b0,
        K=K,
        Q=1,
        level=np.zeros(K, dtype=int),
        guiding=k.copy(),
        ell=k.copy(),
        radial_degree=np.zeros(K, dtype=int),
        log_scale=-0.5 * log_mean,
        log_norms=log_norms,
        hminus_eigenvalues=np.zeros(K),
        hplus_eigenvalues=hplus,
        field=field,
    )


def build_landau_basis(b0, K: int, Q: int) -> Basis:
    """Symmetric-gauge Landau states: levels ``q < Q``, guiding centers ``j < K``.

    State ``(q, j)`` sits at index ``q * K + j`` with angular momentum
    ``j - q`` and radial Laguerre degree ``min(q, j)``.
    """
    if isinstance(b0, MagneticField):
        if not b0.is_constant:
            raise ValueError("Landau basis requires a constant field")
        fld = b0
    else:
        fld = MagneticField.constant(b0)
    if K < 1 or Q < 1:
        raise ValueError("K and Q must be >= 1")
    q, j = np.divmod(np.arange(K * Q), K)
    ell = j - q
    n = np.minimum(q, j)
    beta = np.abs(ell)
    b = fld.b0
    log_norms = (
        np.log(2 * np.pi) + beta * np.log(2.0 / b) - np.log(b) + gammaln(n + beta + 1.0) - gammaln(n + 1.0)
    )
    return Basis(
        kind="landau",
        b0=b,
        K=K,
        Q=Q,
        level=q,
        guiding=j,
        ell=ell,
        radial_degree=n,
        log_scale=np.zeros(K * Q),
        log_norms=log_norms,
        hminus_eigenvalues=2.0 * b * q,
        hplus_eigenvalues=2.0 * b * (q + 1),
        field=fld,
    )


def _unit(t, ell):
    return np.ones(np.broadcast_shapes(np.shape(t), np.shape(ell)))


def overlap(rows: Basis, cols: Basis, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Dense matrix of inner products ``<row_a | col_b>`` by quadrature."""
    return radial_matrix(rows, cols, {0: _unit}, tol=tol).toarray()
