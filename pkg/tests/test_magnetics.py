import numpy as np
import pytest

from oracles import fd_laplacian_radial
from pauli_lab.magnetics import (
    MagneticField, RadialProfile, build_landau_basis, build_zero_mode_basis, overlap, solve_radial_poisson,
    spectral_floor,
)

# mpmath: log of 2 pi int r^(2k+1) exp(-r^2/2 - 2 phitilde) dr for step(1, 0.5), b0 = 1
LOG_NORM_STEP = {0: 1.5239779932584213568, 3: 4.9808002014150095939}


def test_zero_profile_gives_zero_potential():
    sol = solve_radial_poisson(RadialProfile.zero())
    r = np.linspace(0, 10, 11)
    assert np.all(sol(r) == 0)
    assert sol.osc == 0


def test_unit_disk_step_closed_form():
    fld = MagneticField(1.0, RadialProfile.step(1.0, 1.0))
    r_in = np.linspace(0.05, 0.95, 10)
    r_out = np.linspace(1.05, 9.5, 10)
    sol = fld.phitilde
    assert np.allclose(sol.dphi(r_in), r_in / 2, atol=1e-12)
    assert np.allclose(sol.dphi(r_out), 1 / (2 * r_out), atol=1e-12)
    # phitilde = r^2/4 inside, 1/4 + log(r)/2 outside; osc over [0, 10]
    assert abs(fld.osc - (0.25 + 0.5 * np.log(10.0))) < 1e-10
    assert sol.laplacian_residual() < 1e-8


@pytest.mark.parametrize("profile", [
    RadialProfile.step(1.0, 0.5),
    RadialProfile.tabulated([0.0, 0.5, 1.0, 2.0, 3.0], [1.0, 0.8, 0.3, 0.1, 0.0]),
])
def test_laplacian_residual_against_finite_differences(profile):
    sol = solve_radial_poisson(profile)
    r = np.array([0.3, 0.7, 1.3, 2.5, 4.0])
    lap = fd_laplacian_radial(sol, r)
    assert np.max(np.abs(lap - profile(r))) < 1e-6
    assert sol.laplacian_residual() < 1e-6


def test_profile_from_csv(tmp_path):
    path = tmp_path / "b.csv"
    path.write_text("# bump\nr,b\n0,1\n1,0.5\n2,0\n")
    prof = RadialProfile.from_csv(path)
    assert np.isclose(prof(0.5), 0.75)


@pytest.mark.parametrize("b0, expected", [(1.0, 2.0), (3.0, 6.0)])
def test_spectral_floor_constant_field(b0, expected):
    assert spectral_floor(MagneticField.constant(b0)) == expected


def test_spectral_floor_formula():
    # osc = 1/2 reached by a unit step of height 2 at r_max = 1 ... use the closed form directly
    fld = MagneticField(1.0, RadialProfile.step(1.0, 2.0), r_max=1.0)
    assert abs(fld.osc - 0.5) < 1e-12
    assert abs(fld.zeta - 2 * np.exp(-1.0)) < 1e-12
    assert abs(fld.zeta - 0.7357588823428847) < 1e-12


def test_constant_field_norms():
    zb = build_zero_mode_basis(MagneticField.constant(1.0), 4)
    assert abs(zb.log_norms[0] - np.log(2 * np.pi)) < 1e-14


def test_constant_field_gram_identity():
    zb = build_zero_mode_basis(MagneticField.constant(1.0), 32)
    assert np.max(np.abs(overlap(zb, zb) - np.eye(32))) < 1e-12


def test_step_field_zero_modes_orthonormal():
    fld = MagneticField(1.0, RadialProfile.step(1.0, 0.5))
    zb = build_zero_mode_basis(fld, 16)
    g = overlap(zb, zb)
    assert np.max(np.abs(np.diag(g) - 1)) < 1e-10
    assert np.max(np.abs(g - np.diag(np.diag(g)))) < 1e-12
    for k, ref in LOG_NORM_STEP.items():
        assert abs(zb.log_norms[k] - ref) < 1e-9


def test_landau_ladders():
    lb = build_landau_basis(1.0, 5, 4)
    for q in range(4):
        sel = lb.level == q
        assert np.all(lb.hplus_eigenvalues[sel] == 2 * (q + 1))
        assert np.all(lb.hminus_eigenvalues[sel] == 2 * q)


def test_landau_gram_identity():
    lb = build_landau_basis(1.5, 6, 4)
    assert np.max(np.abs(overlap(lb, lb) - np.eye(24))) < 1e-10


def test_level_zero_equals_zero_modes():
    lb = build_landau_basis(1.0, 8, 3)
    zb = build_zero_mode_basis(MagneticField.constant(1.0), 8)
    ov = overlap(lb, zb)[:8]
    assert np.max(np.abs(ov - np.eye(8))) < 1e-10


def test_pointwise_states_normalized():
    zb = build_zero_mode_basis(MagneticField.constant(2.0), 3)
    r = np.linspace(0, 8, 4001)
    pts = np.stack([r, 0 * r], -1)
    vals = zb.evaluate(pts)
    # radial integral of |psi|^2 times 2 pi (states are e^{i k theta} times radial)
    mass = 2 * np.pi * np.trapezoid(np.abs(vals) ** 2 * r[:, None], r, axis=0)
    assert np.allclose(mass, 1.0, atol=1e-6)


def test_invalid_field():
    with pytest.raises(ValueError):
        MagneticField(0.0)
    with pytest.raises(ValueError):
        build_landau_basis(MagneticField(1.0, RadialProfile.step(1.0, 1.0)), 4, 2)
