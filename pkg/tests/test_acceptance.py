"""End-to-end acceptance checks at their stated tolerances.

Run alone with ``pytest tests/test_acceptance.py -v``; the terminal summary
lists one PASS/FAIL line per criterion.
"""

import numpy as np
import pytest

from pauli_lab import asymptotics as asy
from pauli_lab import birman_schwinger as bs
from pauli_lab import pauli
from pauli_lab.magnetics import MagneticField, RadialProfile, build_zero_mode_basis
from pauli_lab.potential import Potential, validate_assumption_A
from pauli_lab.toeplitz import OperatorMatrix, assemble_U_elements, build_toeplitz, spectrum

NONRADIAL = "1 + 0.5*cos(2θ)"


def _p0up0(pot, zb):
    u = assemble_U_elements(pot, zb, zb).entries
    return OperatorMatrix(0.5 * (u + u.conj().T), "p0Up0", True, (len(zb), 1))


def _toeplitz_error(K, s):
    zb = build_zero_mode_basis(MagneticField.constant(1.0), K)
    lam = spectrum(_p0up0(Potential(1.0, 2.0), zb))
    return float(np.max(np.abs(asy.n_plus(lam, s) * s - 0.5) / 0.5)), int(asy.n_plus(lam, s.min()))


def test_criterion_01_toeplitz_asymptotics(record):
    s = np.geomspace(1e-3, 1e-2, 41)
    err, _ = _toeplitz_error(4096, s)
    chain = [(K,) + _toeplitz_error(K, s) for K in (256, 512, 1024, 2048, 4096)]
    # doubling K may only lower the error; it must strictly drop while the count at s = 1e-3 is capped by K
    monotone = all(b[1] <= a[1] for a, b in zip(chain, chain[1:]))
    strict_where_truncated = all(b[1] < a[1] for a, b in zip(chain, chain[1:]) if a[2] >= a[0])
    ok = err <= 0.1 and monotone and strict_where_truncated
    detail = f"max rel err {err:.4f} (<= 0.1) at K=4096; K chain " + ", ".join(f"{K}:{e:.4f}" for K, e, _ in chain)
    record(1, ok, detail)
    assert ok


def test_criterion_02_closed_form_spectrum(record):
    zb = build_zero_mode_basis(MagneticField.constant(2.0), 512)
    pot = Potential(1.0, 2.0, form="pure_power_tail", r_cut=1e-5)
    d = assemble_U_elements(pot, zb, zb).entries.diagonal().real
    k = np.arange(1, 512)
    err = float(np.max(np.abs(d[1:] - 1 / k)))
    record(2, err < 1e-8, f"max |lambda_k - 1/k| = {err:.2e} over k = 1..511 (< 1e-8)")
    assert err < 1e-8


BS_CONFIGS = [
    (64, 8, "1", "regular", 2.0, 0.1),
    (64, 4, NONRADIAL, "smooth", 2.0, 0.1),
    (128, 8, "1", "regular", 2.0, 0.2),
    (128, 8, "1", "regular", 1.0, 0.05),
    (64, 4, "1 + 0.3*cos(θ)", "smooth", 1.5, 0.2),
]


def test_criterion_03_birman_schwinger_equivalence(record):
    mismatches, worst = 0, 0.0
    total = 0
    for K, Q, U0, form, m, e in BS_CONFIGS:
        tr = pauli.build(1.0, Potential(U0, m, form=form), e, K, Q)
        fam = bs.BSFamily.from_truncation(tr)
        lo, hi = -0.5 * tr.zeta * (1 - 1e-9), -1e-12
        vals, mult = bs.characteristic_values(fam, lo, hi)
        got = np.sort(np.repeat(vals, mult))
        ev = tr.spectrum()
        ev = np.sort(ev[(ev > lo) & (ev < hi)])
        total += ev.size
        if got.size != ev.size:
            mismatches += 1
            continue
        dev = float(np.max(np.abs(got - ev), initial=0.0))
        worst = max(worst, dev)
        mismatches += int(dev >= 1e-8)
    ok = mismatches == 0
    record(3, ok, f"{len(BS_CONFIGS)} configs, {total} eigenvalues, mismatches {mismatches}, max dev {worst:.2e} (< 1e-8)")
    assert ok


def test_criterion_04_localization(record):
    pots = [Potential(1.0, 2.0), Potential(NONRADIAL, 2.0, form="smooth")]
    worst, flagged, checked = -np.inf, 0, 0
    for pot in pots:
        assert validate_assumption_A(pot).ok
        for e in (0.05, 0.1, 0.2):
            tr = pauli.build(1.0, pot, e, 128 if pot.is_radial else 64, 8)
            fam = bs.BSFamily.from_truncation(tr)
            is_flagged, _ = bs.screen_exceptional(fam, e)
            flagged += int(is_flagged)
            ev = tr.spectrum()
            near = ev[(ev > 1e-10) & (ev < 0.5 * tr.zeta)]
            checked += 1
            worst = max(worst, float(near.size))
    ok = worst == 0 and flagged == 0
    record(4, ok, f"{checked} runs, eigenvalues in (1e-10, zeta/2): {int(worst)}, exceptional flags: {flagged}")
    assert ok


def test_criterion_05_counting_equivalence(record):
    b0, e, K, Q, r0 = 4.0, 0.1, 512, 8, 0.1
    pot = Potential(1.0, 2.0)
    r = np.geomspace(1e-3, 1e-2, 11)
    ev = pauli.build(b0, pot, e, K, Q).spectrum()
    zb = build_zero_mode_basis(MagneticField.constant(b0), K)
    pup = spectrum(_p0up0(pot, zb))
    wh = spectrum(build_toeplitz(pot, zb, "hplus_inverse", Q))
    wi = spectrum(build_toeplitz(pot, zb, "identity"))
    wc = pauli.window_count(ev, e, r0, r)
    lhs = asy.n_plus(pup, np.sqrt(2 * r * b0))
    mid = asy.n_plus(wh, r)
    rhs = asy.n_plus(wi, 2 * r * b0)
    rel = float(np.max(np.abs(wc - lhs) / lhs))
    sandwich = bool(np.all((lhs <= mid) & (mid <= rhs)))
    ok = rel <= 0.15 and sandwich
    record(5, ok, f"b0=4, K=512: max rel err {rel:.3f} (<= 0.15), sandwich exact at all {r.size} r: {sandwich}")
    assert ok


@pytest.mark.parametrize("m, window", [(1.0, (3e-4, 3e-3)), (2.0, (1e-6, 1e-3))])
def test_criterion_06_accumulation_exponent(record, m, window):
    b0, e, K = 1.0, 0.1, 4096
    pot = Potential(1.0, m)
    ev = pauli.build(b0, pot, e, K, 8).spectrum()
    r = np.geomspace(*window, 25)
    wc = pauli.window_count(ev, e, 0.1, r)
    use = asy.resolvable(wc, K)
    fit = asy.fit_power_law(asy.CountingFunction(r[use][::-1], wc[use][::-1]), window)
    target = asy.constant_Cm(pot.U0, m, b0) * (1 / (2 * b0)) ** (1 / m)
    pref = fit.prefactor / target - 1
    ok = abs(fit.exponent + 1 / m) <= 0.1 and abs(pref) <= 0.25
    _store_six(record, m, ok, f"m={m:g}: exponent {fit.exponent:.4f} vs {-1 / m:.3f}, prefactor {pref:+.3f} of target")
    assert ok


_SIX: dict[float, tuple[bool, str]] = {}


def _store_six(record, m, ok, text):
    _SIX[m] = (ok, text)
    record(6, all(v[0] for v in _SIX.values()), "; ".join(v[1] for _, v in sorted(_SIX.items())))


def test_criterion_07_operator_inequalities(record):
    cases = [
        (MagneticField.constant(1.0), Potential(1.0, 2.0), 256),
        (MagneticField.constant(1.0), Potential(NONRADIAL, 2.0, form="smooth"), 96),
        (MagneticField.constant(2.0), Potential(1.0, 1.0), 128),
        (MagneticField(1.0, RadialProfile.step(1.0, 0.5)), Potential(1.0, 2.0), 128),
        (MagneticField(1.0, RadialProfile.tabulated([0, 1, 2], [0.4, 0.2, 0.0])), Potential(1.0, 2.0), 96),
    ]
    worst = np.inf
    for fld, pot, K in cases:
        zb = build_zero_mode_basis(fld, K)
        wi = build_toeplitz(pot, zb, "identity").dense()
        wh = build_toeplitz(pot, zb, "hplus_inverse", 8).dense()
        d = wi / fld.zeta - wh
        worst = min(worst, np.linalg.eigvalsh(0.5 * (d + d.conj().T)).min() / np.linalg.norm(wi / fld.zeta, 2))
        if fld.is_constant:
            pup = _p0up0(pot, zb).dense()
            d2 = wh - pup.conj().T @ pup / (2 * fld.b0)
            worst = min(worst, np.linalg.eigvalsh(0.5 * (d2 + d2.conj().T)).min() / np.linalg.norm(wh, 2))
    ok = worst >= -1e-10
    record(7, ok, f"{len(cases)} configs (2 with nonconstant field), min eigenvalue / norm = {worst:.2e} (>= -1e-10)")
    assert ok


def test_criterion_08_index(record):
    rng = np.random.default_rng(20261014)
    tr = pauli.build(1.0, Potential(1.0, 2.0), 0.3, 64, 8)
    fam = bs.BSFamily.from_truncation(tr)
    vals, mult = bs.characteristic_values(fam, -0.5 * tr.zeta * 0.999, -1e-10)
    points = np.repeat(vals, mult)
    done, bad, worst_frac = 0, 0, 0.0
    while done < 20:
        mag = 10 ** rng.uniform(-3.5, np.log10(0.4 * fam.epsilon))
        ang = rng.uniform(0.6, 1.4) * np.pi
        center = mag * np.exp(1j * ang)
        radius = rng.uniform(0.1, 0.9) * mag
        if abs(center) + radius >= fam.epsilon:
            continue
        dist = np.abs(np.abs(points - center) - radius)
        if dist.size and dist.min() < 0.05 * radius:
            continue
        res = bs.index_on_contour(fam, center, radius)
        inside = int(np.sum(np.abs(points - center) < radius))
        worst_frac = max(worst_frac, abs(res.raw - round(res.raw.real)))
        bad += int(res.value != inside)
        done += 1
    ok = bad == 0 and worst_frac < 1e-6
    record(8, ok, f"20 random contours: max distance to integer {worst_frac:.1e}, mismatches {bad}")
    assert ok


def test_criterion_09_series_resummation(record):
    tr = pauli.build(1.0, Potential(1.0, 2.0), 0.1, 16, 4)
    fam = bs.BSFamily.from_truncation(tr)
    half = 0.5 * tr.zeta
    radii = np.linspace(0.0, half, 11)
    angles = 2 * np.pi * np.arange(16) / 16
    worst, worst_r = 0.0, 0.0
    passing_radius = 0.0
    for rad in radii:
        errs = [np.abs(bs.M_of_z(fam, z).dense() - bs.M_series(fam, z, 30).dense()).max()
                for z in rad * np.exp(1j * angles)]
        if max(errs) < 1e-12:
            passing_radius = rad
        if max(errs) > worst:
            worst, worst_r = max(errs), rad
    ok = worst < 1e-12
    record(9, ok, f"max |M - 30-term sum| = {worst:.2e} at |z| = {worst_r:.3g} (needs < 1e-12); "
                  f"holds up to |z| = {passing_radius:.3g}; min H_+ = {fam.hplus_diag.min():g}")
    assert ok


def test_criterion_10_resolvent_identity(record):
    tr = pauli.build(1.0, Potential(NONRADIAL, 2.0, form="smooth"), 0.2, 32, 4)
    fam = bs.BSFamily.from_truncation(tr)
    rng = np.random.default_rng(10)
    zs = [-0.5, -1e-3, 0.3, 0.7j, -0.2 - 0.3j]
    while len(zs) < 10:
        z = complex(*rng.uniform(-0.9, 0.9, 2))
        if 1e-3 < abs(z) < 0.95 * fam.epsilon * 2:
            zs.append(z)
    worst = max(bs.resolvent_identity_residual(fam, z) for z in zs)
    record(10, worst < 1e-9, f"10 points, max ||product - I|| = {worst:.2e} (< 1e-9)")
    assert worst < 1e-9
