"""Counting functions, the constant-field IDS, power-law fits and verdicts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .potential import TrigPolynomial, angular_nodes

__all__ = [
    "CountingFunction",
    "FitError",
    "PowerFit",
    "Verdict",
    "n_plus",
    "counting_function",
    "ids_constant_field",
    "constant_Cm",
    "fit_power_law",
    "plateau_sequence",
    "resolvable",
]


class FitError(ValueError):
    """Not enough distinct data in the window for a power-law fit."""


def n_plus(spectrum, r) -> np.ndarray | int:
    """``#{eigenvalues >= r}``, vectorized over r."""
    ev = np.sort(np.asarray(spectrum, dtype=float).real)
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise ValueError("n_plus needs r > 0")
    out = ev.size - np.searchsorted(ev, r_arr, side="left")
    return int(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CountingFunction:
    thresholds: np.ndarray  # descending
    counts: np.ndarray
    source: str = ""

    def __post_init__(self):
        r = np.asarray(self.thresholds, dtype=float)
        c = np.asarray(self.counts, dtype=int)
        if r.shape != c.shape:
            raise ValueError("thresholds and counts must match")
        if np.any(np.diff(r) >= 0):
            raise ValueError("thresholds must be strictly descending")
        if np.any(np.diff(c) < 0):
            raise ValueError("counts must be nondecreasing as the threshold decreases")
        object.__setattr__(self, "thresholds", r)
        object.__setattr__(self, "counts", c)


def counting_function(spectrum, thresholds, source: str = "") -> CountingFunction:
    r = np.sort(np.asarray(thresholds, dtype=float))[::-1]
    return CountingFunction(r, np.asarray(n_plus(spectrum, r)), source)


def ids_constant_field(b0: float, t: float) -> float:
    """``(b0 / 2 pi) #{q >= 0 : t - 2 b0 q > 0}``."""
    if not b0 > 0:
        raise ValueError("b0 must be positive")
    if t <= 0:
        return 0.0
    levels = int(np.ceil(t / (2.0 * b0)))  # q with 2 b0 q < t
    return b0 / (2.0 * np.pi) * levels


def constant_Cm(U0, m: float, b0: float) -> float:
    """``(b0 / 4 pi) * integral over the circle of U0**(2/m)`` by the trapezoid rule."""
    if not m > 0:
        raise ValueError("m must be positive")
    if not isinstance(U0, TrigPolynomial):
        U0 = TrigPolynomial.from_expression(U0) if isinstance(U0, str) else TrigPolynomial.constant(float(U0))
    if U0.is_zero:
        return 0.0
    theta = angular_nodes(U0.max_harmonic, minimum=4096)
    vals = U0(theta)
    if np.any(np.abs(vals.imag) > 1e-12) or vals.real.min() < -1e-12:
        raise ValueError("C_m needs a real nonnegative angular profile")
    integral = 2 * np.pi * np.mean(np.clip(vals.real, 0.0, None) ** (2.0 / m))
    return b0 / (4 * np.pi) * integral


@dataclass(frozen=True)
class PowerFit:
    exponent: float
    prefactor: float
    residual: float  # max relative deviation of the fit from the data
    n_points: int


def fit_power_law(cf: CountingFunction, window: tuple[float, float], min_count: int = 5,
                  min_points: int = 10) -> PowerFit:
    """Least squares of ``log n`` on ``log r`` over thresholds inside ``window``."""
    lo, hi = sorted(window)
    sel = (cf.thresholds >= lo) & (cf.thresholds <= hi) & (cf.counts >= min_count)
    r = cf.thresholds[sel]
    c = cf.counts[sel].astype(float)
    if r.size < min_points:
        raise FitError(f"only {r.size} usable thresholds in window [{lo:g}, {hi:g}] (need {min_points})")
    if np.unique(c).size < 2:
        raise FitError("counts are constant on the window")
    A = np.column_stack([np.log(r), np.ones_like(r)])
    (slope, icpt), *_ = np.linalg.lstsq(A, np.log(c), rcond=None)
    pred = np.exp(icpt) * r**slope
    return PowerFit(float(slope), float(np.exp(icpt)), float(np.max(np.abs(pred - c) / c)), int(r.size))


def plateau_sequence(spectrum, r_min: float = 0.0) -> np.ndarray:
    """Midpoints of the gaps between consecutive distinct positive eigenvalues, descending.

    On each returned threshold the counting function sits strictly inside
    a constancy interval, so comparisons there are insensitive to rounding.
    """
    ev = np.unique(np.round(np.asarray(spectrum, dtype=float), 15))
    ev = ev[ev > max(r_min, 0.0)][::-1]
    if ev.size < 2:
        return np.empty(0)
    mids = 0.5 * (ev[:-1] + ev[1:])
    return mids


def resolvable(counts, K: int, min_count: int = 5) -> np.ndarray:
    """Mask of counts usable for asymptotic verdicts: ``min_count <= n <= K / 4``."""
    c = np.asarray(counts)
    return (c >= min_count) & (c <= K / 4)


@dataclass
class Verdict:
    name: str
    passed: bool
    margin: float
    detail: dict = field(default_factory=dict)
    status: str = ""

    def __post_init__(self):
        if not self.status:
            self.status = "pass" if self.passed else "fail"

    def line(self) -> str:
        return f"{self.name}: {self.status} (margin {self.margin:.4g})"
