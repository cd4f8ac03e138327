import numpy as np
import pytest

from mvie.errors import BadDirection, NotConverged, TooCloseToSupport
from mvie.farfield import (FarField, far_field, fibonacci_sphere, relative_l2_error,
                           scattered_at, silver_muller_residual)
from mvie.greens import kernel_values
from mvie.grid import ShapeSpec, rasterize
from mvie.media import MediumSpec
from mvie.scatter import FieldState, IncidentSpec, LSOperator, incident_plane, solve_krylov


@pytest.fixture(scope="module")
def solved():
    m = MediumSpec.normalized(1.5).with_velocity((0.02, 0.0, 0.03))
    dom = rasterize(ShapeSpec.sphere(0.8), 0.16)
    op = LSOperator(m, dom)
    a = solve_krylov(op, IncidentSpec().on(dom, m), tol=1e-10)
    b = solve_krylov(op, IncidentSpec(d=(1.0, 0, 0), p=(0, 0, 1.0)).on(dom, m), tol=1e-10)
    return op, a.total, b.total


def test_fibonacci_sphere_unit():
    d = fibonacci_sphere(196)
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0)
    assert np.abs(d.mean(axis=0)).max() < 1e-2


def test_far_field_invariants(solved):
    op, u, _ = solved
    ff = far_field(op, u)
    assert ff.transversality_error() < 1e-6
    assert ff.impedance_error(op.medium.eps0, op.medium.mu0) < 1e-6


def test_zero_contrast_gives_zero_fields():
    m = MediumSpec.normalized()
    dom = rasterize(ShapeSpec.sphere(0.5), 0.1)
    op = LSOperator(m, dom)
    u = IncidentSpec().on(dom, m)
    assert not far_field(op, u).E_inf.any()
    E, H = scattered_at(op, u, [[3.0, 0, 0]])
    assert not E.any() and not H.any()


def test_far_field_linear(solved):
    op, u, v = solved
    s = FieldState(op.domain, u.data + 2j * v.data)
    lhs = far_field(op, s)
    fu, fv = far_field(op, u), far_field(op, v)
    rhs = fu.E_inf + 2j * fv.E_inf
    assert np.linalg.norm(lhs.E_inf - rhs) / np.linalg.norm(rhs) < 1e-10
    assert np.linalg.norm((fu + fv).E_inf - (fu.E_inf + fv.E_inf)) == 0


def test_scattered_at_single_voxel_dipole():
    m = MediumSpec.normalized(2.0)
    h = 0.1
    dom = rasterize(ShapeSpec.sphere(0.2), h)
    op = LSOperator(m, dom)
    data = np.zeros(dom.dims + (6,), dtype=complex)
    i = tuple(np.array(dom.dims) // 2)
    op.chi[...] = 0.0
    op.chi[i] = 1.0
    op.support[...] = op.chi > 0
    p = np.array([1.0, 0.5, 0.0])
    data[i + (slice(0, 3),)] = p / (h**3 * op.M[0, 0])
    y = dom.centers()[i]
    x = y + np.array([0.0, 0.0, 25 * h])
    E, _ = scattered_at(op, FieldState(dom, data), x)
    _, N, _ = kernel_values(m.k0, x - y)
    ref = N @ p
    assert np.linalg.norm(E[0] - ref) / np.linalg.norm(ref) < 0.01


def test_far_field_matches_scattered_at_large_radius(solved):
    op, u, _ = solved
    dirs = fibonacci_sphere(12)
    k0 = op.medium.k0
    ff = far_field(op, u, dirs)
    errs = []
    for R in (100 / k0, 200 / k0):
        E, _ = scattered_at(op, u, R * dirs)
        est = E * R * np.exp(-1j * k0 * R)
        errs.append(np.linalg.norm(est - ff.E_inf) / np.linalg.norm(ff.E_inf))
    # the remainder is O(1/(k0 R)): 1% is reached at 200/k0 and halves per doubling
    assert errs[1] < 0.01
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.01)
    E1, _ = scattered_at(op, u, 100 / k0 * dirs)
    E2, _ = scattered_at(op, u, 200 / k0 * dirs)
    a1 = E1 * 100 / k0 * np.exp(-1j * 100)
    a2 = E2 * 200 / k0 * np.exp(-1j * 200)
    rich = 2 * a2 - a1
    assert np.linalg.norm(rich - ff.E_inf) / np.linalg.norm(ff.E_inf) < 0.005


def test_silver_muller_decay(solved):
    op, u, _ = solved
    res, slope = silver_muller_residual(op, u, [20.0, 40.0, 80.0])
    assert slope == pytest.approx(-2.0, abs=0.3)


def test_silver_muller_control_plane_wave(solved):
    op, u, _ = solved
    m = op.medium

    def plane(x):
        return incident_plane(m, (0, 0, 1.0), (1.0, 0, 0), x)

    _, slope = silver_muller_residual(op, u, [20.0, 40.0, 80.0], fields=plane)
    assert abs(slope) < 0.1


def test_scattered_at_guard(solved):
    op, u, _ = solved
    with pytest.raises(TooCloseToSupport):
        scattered_at(op, u, [[0.0, 0.0, 0.85]])


def test_far_field_rejects_bad_directions_and_unconverged(solved):
    op, u, _ = solved
    with pytest.raises(BadDirection):
        far_field(op, u, [[0.0, 0.0, 2.0]])
    with pytest.raises(NotConverged):
        far_field(op, FieldState(op.domain, u.data, converged=False))


def test_csv_roundtrip(tmp_path, solved):
    op, u, _ = solved
    ff = far_field(op, u, fibonacci_sphere(20))
    path = tmp_path / "ff.csv"
    ff.to_csv(path)
    back = FarField.from_csv(path)
    np.testing.assert_array_equal(back.E_inf, ff.E_inf)
    np.testing.assert_array_equal(back.directions, ff.directions)
    assert relative_l2_error(back, ff) == 0.0
