"""Scalar perturbation U and the off-diagonal matrix potential it generates.

U is stored in separated form

    U(r, theta) = exp(i phase) * rho(r) * sum_n c_n sigma_n(r) exp(i n theta),

with ``c_n`` the Fourier coefficients of the angular profile U0 and
``rho`` the radial decay.  Three radial forms are available:

``regular``
    ``rho = (1 + r**2)**(-m/2)`` and ``sigma_n = 1``.  Smooth away from the
    origin; at the origin it is continuous only when U0 is constant.
``smooth``
    same ``rho``, with ``sigma_n = s**|n|`` and ``s = r / sqrt(1 + r**2)``.
    The angular part is the Poisson extension of U0 evaluated at radius
    ``s``, so the result is C-infinity on the plane, stays nonnegative when
    U0 is, and has the same ``|x|**(-m)`` tail.
``pure_power_tail``
    ``rho = r**(-m)`` for ``r >= r_cut`` with a C1 quadratic patch inside.
"""

from __future__ import annotations

import ast
import operator
import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TrigPolynomial",
    "Potential",
    "AssumptionReport",
    "evaluate",
    "matrix_V",
    "matrix_V_eigenvalues",
    "validate_assumption_A",
]

RADIAL_FORMS = ("regular", "smooth", "pure_power_tail")
_COEF_TOL = 1e-13


def angular_nodes(max_harmonic: int, minimum: int = 64) -> np.ndarray:
    """Trapezoid nodes on the circle: at least 8x the largest harmonic."""
    n = max(minimum, 8 * int(max_harmonic))
    return 2 * np.pi * np.arange(n) / n


_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_FUNCS = {"cos": np.cos, "sin": np.sin, "exp": np.exp}
_ANGLE_NAMES = ("θ", "theta", "t", "x")


def _eval_expr(node, theta):
    if isinstance(node, ast.Expression):
        return _eval_expr(node.body, theta)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, complex)):
        return node.value
    if isinstance(node, ast.Name):
        if node.id in _ANGLE_NAMES:
            return theta
        if node.id == "pi":
            return np.pi
        if node.id in ("i", "j"):
            return 1j
        raise ValueError(f"unknown name {node.id!r} in angular profile")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_expr(node.left, theta), _eval_expr(node.right, theta))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        return _UNARY[type(node.op)](_eval_expr(node.operand, theta))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
        if len(node.args) != 1 or node.keywords:
            raise ValueError(f"{node.func.id} takes one argument")
        return _FUNCS[node.func.id](_eval_expr(node.args[0], theta))
    raise ValueError(f"unsupported syntax in angular profile: {ast.dump(node)}")


@dataclass(frozen=True)
class TrigPolynomial:
    """Finite Fourier series ``sum_n coefficients[n] exp(i n theta)``."""

    coefficients: tuple[tuple[int, complex], ...] = ()
    source: str = ""

    def __post_init__(self):
        clean = {}
        for n, c in self.coefficients:
            c = complex(c)
            if not np.isfinite(c):
                raise ValueError("Fourier coefficients must be finite")
            if abs(c) > 0:
                clean[int(n)] = clean.get(int(n), 0) + c
        object.__setattr__(self, "coefficients", tuple(sorted(clean.items())))

    @classmethod
    def constant(cls, value: float) -> "TrigPolynomial":
        return cls(((0, value),), source=repr(value))

    @classmethod
    def from_coefficients(cls, coefs: dict, source: str = "") -> "TrigPolynomial":
        return cls(tuple(coefs.items()), source)

    @classmethod
    def from_expression(cls, expr: str, max_harmonic: int = 64) -> "TrigPolynomial":
        """Parse e.g. ``"1 + 0.5*cos(2θ)"``; implicit products like ``2θ`` are accepted.

        The expression is sampled on a trapezoid grid and transformed by FFT;
        it is rejected unless the recovered series reproduces it at off-grid
        points, i.e. unless it really is a trigonometric polynomial.
        """
        text = str(expr).strip()
        if not text:
            raise ValueError("empty angular profile")
        # "2θ" -> "2*θ"
        pyexpr = re.sub(r"(\d)\s*(θ|theta|pi)", r"\1*\2", text)
        try:
            tree = ast.parse(pyexpr, mode="eval")
        except SyntaxError as exc:
            raise ValueError(f"cannot parse angular profile {text!r}: {exc.msg}") from None
        theta = angular_nodes(max_harmonic)
        vals = np.broadcast_to(np.asarray(_eval_expr(tree, theta), dtype=complex), theta.shape)
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"angular profile {text!r} is not finite on the circle")
        fft = np.fft.fft(vals) / theta.size
        n = np.fft.fftfreq(theta.size, 1.0 / theta.size).astype(int)
        scale = max(1.0, float(np.abs(vals).max()))
        keep = np.abs(fft) > _COEF_TOL * scale
        coefs = {int(k): complex(c) for k, c in zip(n[keep], fft[keep])}
        # snap round-off in real/imag parts
        for k, c in coefs.items():
            re_, im_ = c.real, c.imag
            coefs[k] = complex(re_ if abs(re_) > _COEF_TOL * scale else 0.0, im_ if abs(im_) > _COEF_TOL * scale else 0.0)
        poly = cls.from_coefficients(coefs, source=text)
        probe = np.linspace(0.1, 2 * np.pi, 37)
        direct = np.broadcast_to(np.asarray(_eval_expr(tree, probe), dtype=complex), probe.shape)
        if np.max(np.abs(direct - poly(probe))) > 1e-9 * scale:
            raise ValueError(
                f"angular profile {text!r} is not a trigonometric polynomial of degree <= {max_harmonic}"
            )
        return poly

    def as_dict(self) -> dict[int, complex]:
        return dict(self.coefficients)

    @property
    def harmonics(self) -> tuple[int, ...]:
        return tuple(n for n, _ in self.coefficients)

    @property
    def max_harmonic(self) -> int:
        return max((abs(n) for n in self.harmonics), default=0)

    @property
    def is_zero(self) -> bool:
        return not self.coefficients

    @property
    def is_constant(self) -> bool:
        return self.harmonics in ((), (0,))

    @property
    def is_real(self) -> bool:
        d = self.as_dict()
        return all(abs(c - np.conj(d.get(-n, 0))) <= 1e-14 * (1 + abs(c)) for n, c in d.items())

    def coefficient(self, n: int) -> complex:
        return self.as_dict().get(int(n), 0j)

    def __call__(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(theta.shape, dtype=complex)
        for n, c in self.coefficients:
            out += c * np.exp(1j * n * theta)
        return out

    def l1_norm(self) -> float:
        return float(sum(abs(c) for _, c in self.coefficients))

    def sup_norm(self) -> float:
        """max |U0| on a fine grid (exact up to grid resolution for trig polynomials)."""
        if self.is_zero:
            return 0.0
        theta = angular_nodes(self.max_harmonic, minimum=4096)
        return float(np.abs(self(theta)).max())

    def __str__(self) -> str:
        return self.source or " + ".join(f"({c})e^{{i{n}θ}}" for n, c in self.coefficients) or "0"


@dataclass(frozen=True)
class Potential:
    """``U(x) = exp(i phase) rho(|x|) U0-angular-part``; V(x) = [[0, conj U], [U, 0]]."""

    U0: TrigPolynomial
    m: float
    form: str = "regular"
    r_cut: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if isinstance(self.U0, (int, float)):
            object.__setattr__(self, "U0", TrigPolynomial.constant(float(self.U0)))
        elif isinstance(self.U0, str):
            object.__setattr__(self, "U0", TrigPolynomial.from_expression(self.U0))
        if not (np.isfinite(self.m) and self.m > 0):
            raise ValueError(
                f"decay exponent m must be positive (the bound |U(x)| <= C <x>^-m needs m > 0), got m = {self.m}"
            )
        if self.form not in RADIAL_FORMS:
            raise ValueError(f"unknown radial form {self.form!r}; choose from {RADIAL_FORMS}")
        if self.form == "pure_power_tail" and not self.r_cut > 0:
            raise ValueError("pure_power_tail needs r_cut > 0")
        object.__setattr__(self, "m", float(self.m))

    @property
    def is_zero(self) -> bool:
        return self.U0.is_zero

    @property
    def is_radial(self) -> bool:
        return self.U0.is_constant

    @property
    def harmonics(self) -> tuple[int, ...]:
        return self.U0.harmonics

    # radial building blocks -------------------------------------------------

    def rho(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        m = self.m
        if self.form != "pure_power_tail":
            return (1.0 + r * r) ** (-0.5 * m)
        rc = self.r_cut
        with np.errstate(divide="ignore"):
            tail = np.where(r > 0, r, 1.0) ** (-m)
        patch = rc ** (-m) * (1.0 + 0.5 * m - 0.5 * m * (r / rc) ** 2)
        return np.where(r >= rc, tail, patch)

    def sigma(self, n: int, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.form != "smooth" or n == 0:
            return np.ones_like(r)
        return (r / np.sqrt(1.0 + r * r)) ** abs(n)

    def harmonic(self, n: int, r) -> np.ndarray:
        """n-th angular Fourier coefficient of U at radius r."""
        c = self.U0.coefficient(n) * np.exp(1j * self.phase)
        return c * self.rho(r) * self.sigma(n, r)

    def abs_squared_harmonics(self) -> tuple[int, ...]:
        ns = self.harmonics
        return tuple(sorted({a - b for a in ns for b in ns}))

    def abs_squared_harmonic(self, n: int, r) -> np.ndarray:
        """n-th angular Fourier coefficient of |U|**2 at radius r."""
        r = np.asarray(r, dtype=float)
        d = self.U0.as_dict()
        out = np.zeros(r.shape, dtype=complex)
        for a, ca in d.items():
            cb = d.get(a - n)
            if cb is not None:
                out += ca * np.conj(cb) * self.sigma(a, r) * self.sigma(a - n, r)
        return out * self.rho(r) ** 2

    def breakpoints(self) -> tuple[float, ...]:
        """Radii where rho is not smooth."""
        return (self.r_cut,) if self.form == "pure_power_tail" else ()

    # pointwise data ---------------------------------------------------------

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = np.hypot(x[..., 0], x[..., 1])
        theta = np.arctan2(x[..., 1], x[..., 0])
        out = np.zeros(r.shape, dtype=complex)
        for n in self.harmonics:
            out += self.harmonic(n, r) * np.exp(1j * n * theta)
        return out

    @property
    def decay_constant(self) -> float:
        """C with ``|U(x)| <= C (1 + |x|**2)**(-m/2)`` for all x."""
        c = self.U0.l1_norm()
        if self.form != "pure_power_tail":
            return c
        rc, m = self.r_cut, self.m
        outer = (1.0 + rc**-2) ** (0.5 * m)
        inner = rc ** (-m) * (1.0 + 0.5 * m) * (1.0 + rc * rc) ** (0.5 * m)
        return c * max(outer, inner)

    @property
    def sup_norm(self) -> float:
        """``||U||_inf``."""
        s = self.U0.sup_norm()
        if self.form == "pure_power_tail":
            return s * self.r_cut ** (-self.m) * (1.0 + 0.5 * self.m)
        return s

    def with_phase(self, phase: float) -> "Potential":
        return Potential(self.U0, self.m, self.form, self.r_cut, phase)


def evaluate(pot: Potential, x) -> np.ndarray:
    """U(x) for points of shape (..., 2)."""
    return pot(x)


def matrix_V(pot: Potential, x) -> np.ndarray:
    """2x2 matrices ``[[0, conj U], [U, 0]]`` at points of shape (..., 2)."""
    u = pot(x)
    out = np.zeros(u.shape + (2, 2), dtype=complex)
    out[..., 0, 1] = np.conj(u)
    out[..., 1, 0] = u
    return out


def matrix_V_eigenvalues(pot: Potential, x) -> tuple[np.ndarray, np.ndarray]:
    a = np.abs(pot(x))
    return -a, a


@dataclass
class AssumptionReport:
    """Per-clause outcome; ``margins`` are worst observed slack (negative = violated)."""

    passed: dict[str, bool] = field(default_factory=dict)
    margins: dict[str, float] = field(default_factory=dict)
    notes: dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def add(self, name: str, passed: bool, margin: float, note: str = ""):
        self.passed[name] = bool(passed)
        self.margins[name] = float(margin)
        if note:
            self.notes[name] = note

    def lines(self) -> list[str]:
        return [
            f"{k}: {'pass' if v else 'FAIL'} (margin {self.margins[k]:.3e}){' ' + self.notes[k] if k in self.notes else ''}"
            for k, v in self.passed.items()
        ]


def validate_assumption_A(pot: Potential) -> AssumptionReport:
    """Sample-based check of realness, positivity, C1 regularity, decay and radial limit."""
    rep = AssumptionReport()
    m = pot.m
    theta = angular_nodes(pot.U0.max_harmonic, minimum=256)
    radii = np.concatenate([[0.0], np.geomspace(1e-6, 1e4, 201)])
    rr, tt = np.meshgrid(radii, theta, indexing="ij")
    pts = np.stack([rr * np.cos(tt), rr * np.sin(tt)], axis=-1)
    u = pot(pts)
    scale = max(float(np.abs(u).max()), 1e-300)

    rep.add("nonzero_profile", not pot.is_zero, pot.U0.sup_norm(), "" if not pot.is_zero else "U0 vanishes")
    imag = float(np.abs(u.imag).max())
    rep.add("real", imag <= 1e-12 * scale, 1e-12 * scale - imag)
    low = float(u.real.min())
    rep.add("nonnegative", low >= -1e-12 * scale and imag <= 1e-12 * scale, low)

    bracket = (1.0 + rr * rr) ** (0.5 * m)
    c_obs = float((np.abs(u) * bracket).max())
    rep.add("decay", c_obs <= pot.decay_constant * (1 + 1e-12), pot.decay_constant - c_obs)

    # gradient by central differences in Cartesian directions
    h = 1e-6 * np.maximum(1.0, rr)
    gx = (pot(pts + np.stack([h, 0 * h], -1)) - pot(pts - np.stack([h, 0 * h], -1))) / (2 * h)
    gy = (pot(pts + np.stack([0 * h, h], -1)) - pot(pts - np.stack([0 * h, h], -1))) / (2 * h)
    grad = np.sqrt(np.abs(gx) ** 2 + np.abs(gy) ** 2)
    weighted = (grad * (1.0 + rr * rr) ** (0.5 * (m + 1))).max(axis=1)
    outer = float(weighted[radii >= 1e2].max())
    inner = float(weighted[(radii >= 1.0) & (radii < 1e2)].max())
    rep.add("gradient_decay", outer <= 2.0 * inner + 1e-12, 2.0 * inner - outer)

    # C1 at the origin: difference quotients must stay bounded as |x| -> 0
    u0 = pot(np.zeros(2))
    q_small = float(np.abs(u[radii == 1e-6][0] - u0).max() / 1e-6) if np.any(radii == 1e-6) else 0.0
    near = radii[np.argmin(np.abs(radii - 1e-3))]
    q_mid = float(np.abs(u[radii == near][0] - u0).max() / near)
    rep.add("c1", q_small <= 10.0 * q_mid + 1e-6 * scale, 10.0 * q_mid - q_small)

    big = radii[-3:]
    prof = pot.U0(theta) * np.exp(1j * pot.phase)
    errs = [float(np.abs(u[radii == rb][0] * rb**m - prof).max()) for rb in big]
    tol = 1e-6 * max(pot.U0.sup_norm(), 1e-300)
    rep.add("radial_limit", errs[-1] <= tol, tol - errs[-1])
    return rep
