"""Pipelines chaining bases, Toeplitz operators, the spinor model and counting.

Each pipeline returns :class:`Table` objects (metadata, column names, rows);
writing them to disk is the CLI's job.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import asymptotics as asy
from . import birman_schwinger as bs
from . import pauli
from .config import ExperimentConfig
from .magnetics import build_zero_mode_basis
from .quadrature import DEFAULT_TOL
from .toeplitz import OperatorMatrix, assemble_U_elements, build_toeplitz, spectrum

__all__ = ["Table", "PIPELINES", "run", "read_csv_column", "format_value"]


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


@dataclass
class Table:
    name: str
    columns: list[str]
    rows: list[tuple]
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k, v in self.meta.items():
            buf.write(f"# {k} = {format_value(v)}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([format_value(v) for v in row])
        return buf.getvalue()


def read_csv_column(path, column: int | str = 0) -> tuple[np.ndarray, dict]:
    """Numeric column and ``# key = value`` metadata of a CSV written by this package."""
    meta = {}
    body = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                if "=" in line:
                    k, v = line[1:].split("=", 1)
                    meta[k.strip()] = v.strip()
            else:
                body.append(line)
    reader = csv.reader(body)
    header = next(reader)
    idx = header.index(column) if isinstance(column, str) else int(column)
    vals = np.array([float(rec[idx]) for rec in reader if rec])
    return vals, meta


def _meta(cfg: ExperimentConfig, pipeline: str, **extra) -> dict:
    out = {"pipeline": pipeline, "tool_version": __version__, "quadrature_tol": DEFAULT_TOL}
    out.update(cfg.metadata())
    out.update(extra)
    return out


def _need_constant(cfg: ExperimentConfig, what: str):
    if not cfg.field().is_constant:
        raise ValueError(f"{what} needs a constant field (btilde = constant)")


def _toeplitz_spectra(cfg: ExperimentConfig, strict: bool):
    """Spectra of p0Up0, pW(I)p and pW(H+^-1)p on the zero modes."""
    pot = cfg.potential()
    zb = build_zero_mode_basis(cfg.field(), cfg.K)
    u = assemble_U_elements(pot, zb, zb).entries
    pup = spectrum(OperatorMatrix(0.5 * (u + u.conj().T), "p0Up0", True, (cfg.K, 1)))
    wi = build_toeplitz(pot, zb, "identity")
    wh = build_toeplitz(pot, zb, "hplus_inverse", cfg.Q, strict=strict)
    return pup, spectrum(wi), spectrum(wh), wh.meta.get("tail_bound", 0.0)


def _thresholds(cfg: ExperimentConfig) -> np.ndarray:
    return np.geomspace(cfg.r_hi, cfg.r_lo, cfg.n_thresholds)


# --------------------------------------------------------------------------


def run_field_check(cfg: ExperimentConfig, strict: bool = False) -> list[Table]:
    fld = cfg.field()
    sol = fld.phitilde
    r = np.linspace(0.0, fld.r_max, 201)
    resid = sol.laplacian_residual()
    rows = list(zip(r, fld.btilde(r), sol(r), sol.dphi(r)))
    meta = _meta(cfg, "field-check", osc=sol.osc, zeta=fld.zeta, flux=fld.flux,
                 laplacian_residual=resid, admissible=resid < 1e-6)
    return [Table("field_check", ["r", "btilde", "phitilde", "dphitilde"], rows, meta)]


def run_toeplitz(cfg: ExperimentConfig, strict: bool = False, operator: str = "hplus_inverse") -> list[Table]:
    pot = cfg.potential()
    zb = build_zero_mode_basis(cfg.field(), cfg.K)
    if operator == "p0Up0":
        u = assemble_U_elements(pot, zb, zb).entries
        mat = OperatorMatrix(0.5 * (u + u.conj().T), "p0Up0", True, (cfg.K, 1))
        tail = 0.0
    else:
        mat = build_toeplitz(pot, zb, operator, cfg.Q, strict=strict)
        tail = mat.meta.get("tail_bound", 0.0)
    lam = spectrum(mat)
    rows = [(k + 1, v) for k, v in enumerate(lam)]
    meta = _meta(cfg, "toeplitz", operator=operator, tail_bound=tail)
    return [Table("toeplitz", ["k", "lambda_k"], rows, meta)]


def _pauli_for(cfg: ExperimentConfig, e: float):
    _need_constant(cfg, "the spinor model")
    return pauli.build(cfg.field(), cfg.potential(), e, cfg.K, cfg.Q).with_window(cfg.r0, cfg.r)


def run_pauli(cfg: ExperimentConfig, strict: bool = False) -> list[Table]:
    trunc = _pauli_for(cfg, cfg.e)
    nz = pauli.near_zero_spectrum(trunc)
    e2 = cfg.e**2
    rows = [(v, bool(-cfg.r0 * e2 <= v < -cfg.r * e2)) for v in nz.eigenvalues]
    meta = _meta(cfg, "pauli-spectrum", zeta=nz.zeta, window_count=nz.count,
                 positive_in_window=int(nz.positive.size))
    return [Table("pauli_spectrum", ["eigenvalue", "in_window"], rows, meta)]


def _scan_grid(cfg: ExperimentConfig) -> np.ndarray:
    e2 = cfg.e**2
    lo = cfg.z_lo if cfg.z_lo is not None else -cfg.r0 * e2
    hi = cfg.z_hi if cfg.z_hi is not None else -0.5 * cfg.r_lo * e2
    if lo * hi <= 0:
        raise ValueError("scan interval must not contain z = 0")
    g = np.sign(lo) * np.geomspace(abs(lo), abs(hi), cfg.n_grid)
    return np.sort(g)


def run_bs(cfg: ExperimentConfig, strict: bool = False) -> list[Table]:
    trunc = _pauli_for(cfg, cfg.e)
    fam = bs.BSFamily.from_truncation(trunc)
    grid = _scan_grid(cfg)
    scan = bs.characteristic_scan(fam, grid)
    ev = trunc.spectrum()
    lo, hi = grid[0], grid[-1]
    eig = ev[(ev >= lo) & (ev <= hi)]
    vals = scan.values
    matched = vals.size == eig.size and (vals.size == 0 or np.max(np.abs(np.sort(vals) - np.sort(eig))) < 1e-8)
    meta = _meta(cfg, "bs-scan", n_characteristic=int(vals.size), n_eigenvalues=int(eig.size),
                 equivalence=matched)
    t1 = Table("bs_scan", ["z", "sigma_min", "flagged"],
               list(zip(scan.z, scan.sigma_min, scan.flagged)), meta)
    uniq, counts = np.unique(vals, return_counts=True)
    t2 = Table("bs_characteristic", ["z", "multiplicity", "geometric_multiplicity"],
               [(z, int(c), bs.geometric_multiplicity(fam, z)) for z, c in zip(uniq, counts)], dict(meta))
    return [t1, t2]


def run_index(cfg: ExperimentConfig, strict: bool = False) -> list[Table]:
    trunc = _pauli_for(cfg, cfg.e)
    fam = bs.BSFamily.from_truncation(trunc)
    ev = trunc.spectrum()
    neg = np.sort(ev[(ev < 0) & (ev > -0.5 * trunc.zeta)])
    center, radius = cfg.center, cfg.radius
    if center is None or radius is None:
        if neg.size == 0:
            raise ValueError("no negative eigenvalues; give center and radius explicitly")
        gap = abs(neg[1] - neg[0]) if neg.size > 1 else abs(neg[0])
        center, radius = float(neg[0]), 0.5 * min(gap, abs(neg[0]))
    res = bs.index_on_contour(fam, center, radius, cfg.points)
    enclosed = ev[np.abs(ev - center) < radius]
    inside = int(enclosed.size)
    # index counts algebraic multiplicity; compare with the kernel dimension at each enclosed value
    geometric = sum(bs.geometric_multiplicity(fam, z) for z in np.unique(np.round(enclosed, 14)) if z != 0)
    meta = _meta(cfg, "index", enclosed_eigenvalues=inside)
    row = (center, radius, res.n_points, res.raw.real, res.raw.imag, res.value, inside, geometric)
    return [Table("index", ["center", "radius", "points", "raw_real", "raw_imag", "index", "enclosed_eigenvalues",
                            "geometric_multiplicity"], [row], meta)]


def run_asymptotics(cfg: ExperimentConfig, strict: bool = False, spectrum_csv=None, kind: str = "toeplitz") -> list[Table]:
    """Counting, fit and C_m comparison for a stored spectrum.

    ``kind = toeplitz``: n_+(s) of p0Up0 against ``C_m s^(-2/m)``.
    ``kind = pauli``: window count against ``C_m (2 b0)^(-1/m) r^(-1/m)``.
    """
    if spectrum_csv is None:
        raise ValueError("asymptotics needs --spectrum PATH")
    values, src_meta = read_csv_column(spectrum_csv, 1 if kind == "toeplitz" else 0)
    r = _thresholds(cfg)
    cm = asy.constant_Cm(cfg.potential().U0, cfg.m, cfg.b0)
    if kind == "toeplitz":
        counts = asy.n_plus(values, r)
        target = cm * r ** (-2.0 / cfg.m)
        expected = -2.0 / cfg.m
    elif kind == "pauli":
        counts = pauli.window_count(values, cfg.e, cfg.r0, r)
        target = cm * (2 * cfg.b0) ** (-1.0 / cfg.m) * r ** (-1.0 / cfg.m)
        expected = -1.0 / cfg.m
    else:
        raise ValueError("kind must be toeplitz or pauli")
    cf = asy.CountingFunction(r, counts, str(spectrum_csv))
    try:
        fit = asy.fit_power_law(cf, (cfg.r_lo, cfg.r_hi))
        exponent = fit.exponent
    except asy.FitError as exc:
        fit, exponent = None, float("nan")
        src_meta["fit_error"] = str(exc)
    ratio = counts / target
    rows = [(ri, int(ci), exponent, ti, qi) for ri, ci, ti, qi in zip(r, counts, target, ratio)]
    meta = _meta(cfg, "asymptotics", kind=kind, spectrum=Path(spectrum_csv).name, Cm=cm, expected_exponent=expected)
    usable = asy.resolvable(counts, cfg.K)
    verdicts = []
    if fit is not None:
        verdicts.append(("exponent", abs(fit.exponent - expected) <= 0.1, fit.exponent, expected))
    if usable.any():
        worst = float(np.max(np.abs(ratio[usable] - 1.0)))
        verdicts.append(("prefactor", worst <= 0.1 if kind == "toeplitz" else worst <= 0.25, worst,
                         0.1 if kind == "toeplitz" else 0.25))
    return [Table("asymptotics", ["r", "count", "fit_exponent", "Cm_target", "ratio"], rows, meta),
            _verdict_table("asymptotics_verdict", cfg, verdicts)]


def _verdict_table(name, cfg, verdicts, **extra) -> Table:
    rows = []
    for check, ok, value, limit in verdicts:
        status = ok if isinstance(ok, str) else ("pass" if ok else "fail")
        rows.append((check, status, value, limit))
    return Table(name, ["check", "status", "value", "threshold"], rows, _meta(cfg, name, **extra))


def _theorem1_single(cfg: ExperimentConfig, e: float, wi, wh, zeta: float) -> list[tuple]:
    trunc = _pauli_for(cfg, e)
    fam = bs.BSFamily.from_truncation(trunc)
    flagged, cond = bs.screen_exceptional(fam, e)
    nz = pauli.near_zero_spectrum(trunc)
    ev = nz.eigenvalues
    out = [
        (f"e={e:g}:exceptional_screen", "flagged" if flagged else "pass", cond, 1e8),
        (f"e={e:g}:localization", nz.positive.size == 0, int(nz.positive.size), 0),
    ]
    # (ii) at plateau thresholds of pW(H+^-1)p
    plate = asy.plateau_sequence(wh)
    cnt_wh = asy.n_plus(wh, plate) if plate.size else np.empty(0, dtype=int)
    keep = asy.resolvable(cnt_wh, cfg.K) & (plate < cfg.r0)
    plate, cnt_wh = plate[keep][-20:], cnt_wh[keep][-20:]
    if plate.size:
        wc = pauli.window_count(ev, e, cfg.r0, plate)
        rel = float(np.max(np.abs(wc - cnt_wh) / cnt_wh))
        out.append((f"e={e:g}:plateau_counting", rel <= 0.15, rel, 0.15))
    else:
        out.append((f"e={e:g}:plateau_counting", "no resolvable plateaus", float("nan"), 0.15))
    # (iii) upper bound by zeta^-1 pW(I)p at the 10 smallest resolvable thresholds
    r = _thresholds(cfg)
    wc = pauli.window_count(ev, e, cfg.r0, r)
    upper = asy.n_plus(wi / zeta, r)
    use = asy.resolvable(upper, cfg.K)
    if use.any():
        ratio = float(np.max(wc[use][-10:] / upper[use][-10:]))
        out.append((f"e={e:g}:upper_bound_ratio", ratio <= 1.15, ratio, 1.15))
    kv = asy.n_plus(wh, r)
    out.append((f"e={e:g}:wpw_vs_pWIp", bool(np.all(kv <= upper)), int(np.max(kv - upper)), 0))
    return out


def run_theorem1(cfg: ExperimentConfig, strict: bool = False, threads: int = 1) -> list[Table]:
    pot = cfg.potential()
    if pot.is_zero:
        return [_verdict_table("theorem1_verdict", cfg, [("theorem1", "vacuous: zero perturbation", 0.0, 0.0)])]
    fld = cfg.field()
    _, wi, wh, tail = _toeplitz_spectra(cfg, strict)
    couplings = tuple(cfg.e_sweep) or (cfg.e,)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        parts = list(pool.map(lambda e: _theorem1_single(cfg, e, wi, wh, fld.zeta), couplings))
    verdicts = [v for part in parts for v in part]
    # growth of the resolvent Toeplitz count is only observed, not certified
    grow = asy.n_plus(wh, np.array([cfg.r_hi, cfg.r_lo]))
    verdicts.append(("resolvent_toeplitz_growth", "info", int(grow[1] - grow[0]), 0))
    return [_verdict_table("theorem1_verdict", cfg, verdicts, zeta=fld.zeta, tail_bound=tail)]


def run_theorem2(cfg: ExperimentConfig, strict: bool = False, threads: int = 1) -> list[Table]:
    pot = cfg.potential()
    if pot.is_zero:
        return [_verdict_table("theorem2_verdict", cfg, [("theorem2", "vacuous: zero perturbation", 0.0, 0.0)])]
    _need_constant(cfg, "the counting comparison")
    pup, wi, wh, tail = _toeplitz_spectra(cfg, strict)
    trunc = _pauli_for(cfg, cfg.e)
    ev = trunc.spectrum()
    r = _thresholds(cfg)
    b0 = cfg.b0
    wc = pauli.window_count(ev, cfg.e, cfg.r0, r)
    lhs = asy.n_plus(pup, np.sqrt(2 * r * b0))
    mid = asy.n_plus(wh, r)
    rhs = asy.n_plus(wi, 2 * r * b0)
    cm = asy.constant_Cm(pot.U0, cfg.m, b0)
    pred = cm * (2 * b0) ** (-1.0 / cfg.m) * r ** (-1.0 / cfg.m)
    use = asy.resolvable(lhs, cfg.K)
    verdicts = [("sandwich", bool(np.all((lhs <= mid) & (mid <= rhs))), int(np.sum(~((lhs <= mid) & (mid <= rhs)))), 0)]
    if use.any():
        ratio = float(np.max(wc[use] / lhs[use]))
        rel = float(np.max(np.abs(wc[use] - lhs[use]) / lhs[use]))
        verdicts.append(("counting_ratio", ratio <= 1.15, ratio, 1.15))
        verdicts.append(("counting_relative_error", rel <= 0.15, rel, 0.15))
    else:
        verdicts.append(("counting_ratio", "no resolvable thresholds", float("nan"), 1.15))
    cf = asy.CountingFunction(r, np.maximum.accumulate(wc))
    try:
        fit = asy.fit_power_law(cf, (cfg.r_lo, cfg.r_hi))
        verdicts.append(("exponent", abs(fit.exponent + 1.0 / cfg.m) <= 0.1, fit.exponent, -1.0 / cfg.m))
        verdicts.append(("regular_variation_residual", fit.residual <= 0.15, fit.residual, 0.15))
    except asy.FitError as exc:
        verdicts.append(("exponent", f"fit not possible: {exc}", float("nan"), -1.0 / cfg.m))
    if cfg.K >= 2:
        half = pauli.build(cfg.field(), pot, cfg.e, cfg.K // 2, cfg.Q).spectrum()
        wc_half = pauli.window_count(half, cfg.e, cfg.r0, r)
        verdicts.append(("window_count_change_K_over_2", "info", int(np.max(np.abs(wc - wc_half))), 0))
    rows = list(zip(r, wc, lhs, mid, rhs, pred))
    table = Table("theorem2", ["r", "window_count", "n_p0Up0", "n_KV0", "n_pWIp", "Cm_prediction"], rows,
                  _meta(cfg, "theorem2", tail_bound=tail))
    return [table, _verdict_table("theorem2_verdict", cfg, verdicts, tail_bound=tail)]


PIPELINES = {
    "field-check": run_field_check,
    "toeplitz": run_toeplitz,
    "pauli-spectrum": run_pauli,
    "bs-scan": run_bs,
    "index": run_index,
    "asymptotics": run_asymptotics,
    "theorem1": run_theorem1,
    "theorem2": run_theorem2,
}


def run(cfg: ExperimentConfig, pipeline: str, strict: bool = False, **kwargs) -> list[Table]:
    if pipeline not in PIPELINES:
        raise ValueError(f"unknown pipeline {pipeline!r}")
    return PIPELINES[pipeline](cfg, strict=strict, **kwargs)
