import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvie.errors import BadDirection, NotContractive, RegimeViolation, SingularPoint
from mvie.greens import KernelTable, dyadic_dense_matrix
from mvie.grid import ShapeSpec, rasterize
from mvie.media import MediumSpec, assemble_M
from mvie.scatter import (IncidentSpec, LSOperator, apply_G_j, apply_G_minus1, apply_LS,
                          apply_LS_adjoint, incident_plane, incident_point_dipole, norm_G_j,
                          norm_G_minus1, solve_born, solve_krylov)


def small_domain(h=0.25, r=0.6):
    return rasterize(ShapeSpec.sphere(r), h)


def rand_field(rng, dims):
    return rng.normal(size=dims + (6,)) + 1j * rng.normal(size=dims + (6,))


def test_plane_wave_examples():
    m = MediumSpec.normalized()
    E, H = incident_plane(m, (0, 0, 1), (1, 0, 0), np.zeros(3))
    np.testing.assert_allclose(E, [1j, 0, 0])
    np.testing.assert_allclose(H, [0, 1j, 0])
    with pytest.raises(BadDirection):
        incident_plane(m, (0, 0, 2), (1, 0, 0), np.zeros(3))


@settings(max_examples=30, deadline=None)
@given(st.floats(0, np.pi), st.floats(0, 2 * np.pi), st.floats(-3, 3))
def test_plane_wave_transverse_and_impedance(t, ph, s):
    m = MediumSpec.normalized(omega=1.7)
    d = np.array([np.sin(t) * np.cos(ph), np.sin(t) * np.sin(ph), np.cos(t)])
    p = np.cross(d, [0.3, -0.7, 0.2])
    E, H = incident_plane(m, d, p, s * np.array([0.5, 1.0, -0.3]))
    assert abs(d @ E) < 1e-12 and abs(d @ H) < 1e-12
    np.testing.assert_allclose(H, np.sqrt(m.eps0 / m.mu0) * np.cross(d, E), atol=1e-12)


def test_point_dipole_singular_and_decay():
    m = MediumSpec.normalized()
    with pytest.raises(SingularPoint):
        incident_point_dipole(m, (0, 0, 0), (1, 0, 0), np.zeros((2, 3)))
    E1, _ = incident_point_dipole(m, (0, 0, 0), (1, 0, 0), np.array([0, 0, 1e-2]))
    E2, _ = incident_point_dipole(m, (0, 0, 0), (1, 0, 0), np.array([0, 0, 5e-3]))
    assert np.linalg.norm(E2) / np.linalg.norm(E1) == pytest.approx(8.0, rel=1e-3)


def test_operator_M_is_assemble_M(moving_medium):
    dom = small_domain()
    op = LSOperator(moving_medium, dom)
    np.testing.assert_allclose(op.M, assemble_M(moving_medium), atol=1e-14)
    assert op.tail_bound < op.series_tol


def test_zero_contrast_gives_zero_operator(rng):
    dom = small_domain()
    op = LSOperator(MediumSpec.normalized(), dom)
    f = rand_field(rng, dom.dims)
    assert not apply_G_minus1(op, f).any()
    np.testing.assert_array_equal(apply_LS(op, f), f)


def test_G_minus1_linear_in_contrast(rng):
    dom = small_domain()
    tab = KernelTable(1.0, dom.h, dom.dims)
    f = rand_field(rng, dom.dims)
    a = apply_G_minus1(LSOperator(MediumSpec.normalized(1.2), dom, tab), f)
    b = apply_G_minus1(LSOperator(MediumSpec.normalized(1.4), dom, tab), f)
    np.testing.assert_allclose(b, 2 * a, atol=1e-12 * np.abs(a).max())


def test_static_body_has_no_velocity_terms(rng):
    dom = small_domain()
    op = LSOperator(MediumSpec.normalized(1.5), dom)
    f = rand_field(rng, dom.dims)
    assert op.J == 0
    assert not apply_G_j(op, 0, f).any()


def test_velocity_term_norms_decay_geometrically(moving_medium):
    op = LSOperator(moving_medium, small_domain())
    norms = [norm_G_j(op, j) for j in range(3)]
    for lo, hi in zip(norms, norms[1:]):
        assert hi <= op.norm_T * lo * (1 + 1e-6)


def test_truncation_control(moving_medium):
    dom = small_domain()
    tab = KernelTable(moving_medium.k0, dom.h, dom.dims)
    inc = IncidentSpec().on(dom, moving_medium)
    sols = [solve_krylov(LSOperator(moving_medium, dom, tab, J=J), inc, tol=1e-13).total.data
            for J in (1, 2)]
    op = LSOperator(moving_medium, dom, tab, J=1)
    bound = op.norm_T ** 2 / (1 - op.norm_T) * np.linalg.norm(sols[0]) * 10
    assert np.linalg.norm(sols[1] - sols[0]) < bound


def test_contraction_nondecreasing_in_speed():
    dom = small_domain()
    m0 = MediumSpec.normalized(1.3)
    tab = KernelTable(m0.k0, dom.h, dom.dims)
    rhos = []
    for s in (0.0, 0.05, 0.1):
        m = m0.with_velocity((s * m0.c_omega, 0.0, 0.0))
        op = LSOperator(m, dom, tab)
        rep = solve_born(op, IncidentSpec().on(dom, m), tol=1e-12, require_regime=False)
        rhos.append(rep.rho)
    for lo, hi in zip(rhos, rhos[1:]):
        assert hi >= lo * 0.98


def test_fused_equals_per_term(rng, moving_medium):
    dom = small_domain()
    op = LSOperator(moving_medium, dom)
    f = rand_field(rng, dom.dims)
    a, b = apply_LS(op, f, fused=True), apply_LS(op, f, fused=False)
    assert np.linalg.norm(a - b) / np.linalg.norm(a) < 1e-12


def test_adjoint_identity(rng, moving_medium):
    dom = small_domain()
    op = LSOperator(moving_medium, dom)
    f, g = rand_field(rng, dom.dims), rand_field(rng, dom.dims)
    lhs = np.vdot(g, apply_LS(op, f))
    rhs = np.vdot(apply_LS_adjoint(op, g), f)
    assert abs(lhs - rhs) / abs(lhs) < 1e-10


def test_norm_estimates_positive(moving_medium):
    op = LSOperator(moving_medium, small_domain())
    assert 0 < norm_G_minus1(op) < 1
    assert norm_G_j(op, 0) < norm_G_minus1(op)


def test_born_zero_contrast_recovers_incident():
    dom = small_domain()
    op = LSOperator(MediumSpec.normalized(), dom)
    inc = IncidentSpec().on(dom, op.medium)
    rep = solve_born(op, inc)
    np.testing.assert_allclose(rep.total.data, inc.data)
    assert rep.converged and rep.iterations == 1


def test_born_refuses_strong_contrast():
    dom = small_domain(h=0.2, r=1.0)
    op = LSOperator(MediumSpec.normalized(8.0), dom)
    inc = IncidentSpec().on(dom, op.medium)
    with pytest.raises(RegimeViolation):
        solve_born(op, inc)
    with pytest.raises(NotContractive):
        solve_born(op, inc, require_regime=False)


def test_krylov_matches_dense_solve(moving_medium):
    dom = rasterize(ShapeSpec("box", size=(0.3, 0.3, 0.3)), 0.1, margin=1)
    assert max(dom.dims) <= 8
    m = moving_medium
    op = LSOperator(m, dom)
    inc = IncidentSpec(d=(0.6, 0.0, 0.8), p=(0.0, 1.0, 0.0)).on(dom, m)
    G = m.omega * dyadic_dense_matrix(m.k0, dom.h, dom.dims, m)
    n = dom.n_voxels
    P = np.kron(np.diag(dom.chi.ravel()), op.M)
    A = np.eye(6 * n) - G @ P
    ref = np.linalg.solve(A, inc.data.reshape(-1)).reshape(inc.data.shape)
    rep = solve_krylov(op, inc, tol=1e-11)
    err = np.linalg.norm(rep.total.data - ref) / np.linalg.norm(ref)
    assert err < 1e-8


def test_born_agrees_with_krylov(moving_medium):
    dom = small_domain()
    op = LSOperator(moving_medium, dom)
    inc = IncidentSpec().on(dom, moving_medium)
    a = solve_born(op, inc, tol=1e-10, require_regime=False)
    b = solve_krylov(op, inc, tol=1e-10)
    assert np.linalg.norm(a.total.data - b.total.data) / np.linalg.norm(b.total.data) < 1e-8
    assert a.rho < 1
