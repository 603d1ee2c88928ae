import warnings

import numpy as np
import pytest
import scipy.linalg as sla

from arealaw.errors import DomainError, GeometryWarning, StructuralError
from arealaw.evolve import (
    error_scan,
    fit_error_model,
    integrate_flow,
    decomposition_sweep,
    support_violation,
    unitarity_defect,
)
from arealaw.hamiltonian import (
    LocalOperator,
    assemble,
    derivative_matrix,
    diagonalize,
    embed,
    field_ramp_path,
    opnorm,
    random_hermitian,
    tfim_path,
)
from arealaw.lattice import Lattice
from arealaw.quasiflow import FilterFunction, GeneratorDecomposition, exact_generator


def test_zero_generator_is_identity():
    res = integrate_flow(lambda s: np.zeros((4, 4)), steps=5)
    np.testing.assert_array_equal(res.U, np.eye(4))
    assert res.max_defect == 0.0


def test_constant_generator_matches_expm(rng):
    H = random_hermitian(6, rng)
    res = integrate_flow(lambda s: H, steps=7, s_end=0.8)
    np.testing.assert_allclose(res.U, sla.expm(0.8j * H), atol=1e-12)
    assert res.max_defect < 1e-12


def test_midpoint_is_second_order(rng):
    A, B = random_hermitian(4, rng), random_hermitian(4, rng)

    def gen(s):
        return A + s * s * B

    ref = integrate_flow(gen, steps=2000).U
    errs = [opnorm(integrate_flow(gen, steps=k).U - ref) for k in (10, 20, 40)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.1)


def test_snapshots_and_grid():
    res = integrate_flow(lambda s: np.eye(2), steps=4, record=(0.0, 0.5))
    assert set(res.snapshots) == {0.0, 0.5}
    np.testing.assert_allclose(res.snapshots[0.5], np.exp(0.5j) * np.eye(2))
    with pytest.raises(DomainError):
        integrate_flow(lambda s: np.eye(2), steps=4, record=(0.3,))
    with pytest.raises(DomainError):
        integrate_flow(lambda s: np.eye(2), steps=0)


def test_rejects_non_hermitian_generator():
    with pytest.raises(StructuralError):
        integrate_flow(lambda s: np.array([[0.0, 1.0], [0.0, 0.0]]), steps=1)


def test_unitarity_defect():
    assert unitarity_defect(np.eye(3)) == 0.0
    assert unitarity_defect(2 * np.eye(1)) == pytest.approx(3.0)


def test_exact_flow_transports_ground_state_n6():
    path = tfim_path(Lattice.chain(6), lam=0.5)

    def gen(s):
        return exact_generator(diagonalize(assemble(path, s)), derivative_matrix(path, s))

    res = integrate_flow(gen, steps=100)
    psi0 = diagonalize(assemble(path, 0.0)).ground_state
    psi1 = diagonalize(assemble(path, 1.0)).ground_state
    assert abs(np.vdot(psi1, res.U @ psi0)) ** 2 > 1 - 1e-6


def test_support_violation_detects_leakage(rng):
    lat = Lattice.chain(4)
    op = LocalOperator((1, 2), random_hermitian(4, rng))
    X = embed(op, lat)
    assert support_violation(X, (1, 2), lat, probes=5, rng=rng) < 1e-12
    assert support_violation(X, (1,), lat, probes=5, rng=rng) > 0.1


@pytest.fixture(scope="module")
def sweep6():
    lat = Lattice.chain(6)
    path = tfim_path(lat, lam=0.5, gap_floor=1.0)
    cut = lat.cut(lat.interval(0, 2))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GeometryWarning)
        sw = decomposition_sweep(path, cut, [1, 2], [0.0, 0.5, 1.0], FilterFunction(1.0), steps=20)
    return lat, path, cut, sw


def test_sweep_at_zero_is_trivial(sweep6):
    lat, path, cut, sw = sweep6
    for R in (1, 2):
        rep = sw.report(0.0, R)
        assert rep.e_meas == 0.0
        np.testing.assert_array_equal(rep.U_A, np.eye(8))


def test_sweep_reports_are_consistent(sweep6):
    lat, path, cut, sw = sweep6
    for rep in sw.rows():
        assert rep.triangle_slack >= -1e-12
        assert rep.unitarity_defect < 1e-10
        assert set(rep.collar) == set(cut.collar(2 * rep.R))
    for s in (0.5, 1.0):
        rep = sw.report(s, 1)
        assert rep.e_meas > 1e-6  # the decomposition is not exact on a small chain
        # the product of region flows equals the flow of D(A) + D(A^c)
        UAUAc = np.kron(rep.U_A, rep.U_Ac)
        assert unitarity_defect(UAUAc) < 1e-10


def test_sweep_W_converges_when_coupling_is_complete():
    # once dA(R) holds every crossing ball, D(dA(R)) = F(dA) and W_R equals
    # V = U^dag (U_A x U_Ac) up to midpoint discretisation error O(h^2)
    lat = Lattice.chain(6)
    path = tfim_path(lat, lam=0.5, gap_floor=1.0)
    cut = lat.cut(lat.interval(0, 2))
    errs = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GeometryWarning)
        for steps in (10, 20, 40):
            sw = decomposition_sweep(path, cut, [5], [1.0], FilterFunction(1.0), steps=steps)
            rep = sw.report(1.0, 5)
            assert rep.trivial_geometry
            assert rep.err_WB == 0.0
            errs.append(rep.err_VW)
    assert errs[-1] < 1e-6
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.05)


def test_geometry_warning_emitted():
    lat = Lattice.chain(4)
    path = tfim_path(lat, lam=0.5, gap_floor=1.0)
    cut = lat.cut(lat.interval(0, 1))
    with pytest.warns(GeometryWarning):
        decomposition_sweep(path, cut, [1], [1.0], FilterFunction(1.0), steps=4)


def test_decoupled_spins_have_no_error():
    lat = Lattice.chain(5)
    path = field_ramp_path(lat, eps=0.3)
    cut = lat.cut(lat.interval(0, 1))
    with pytest.warns(GeometryWarning):
        sw = decomposition_sweep(path, cut, [1], [1.0], FilterFunction(1.0), steps=10)
    assert sw.report(1.0, 1).e_meas < 1e-12


def test_error_scan_single_R(sweep6):
    lat, path, cut, sw = sweep6
    scan = error_scan(path, cut, 1.0, [1], FilterFunction(1.0), sweep=sw)
    assert scan.R.tolist() == [1]
    assert np.isnan(scan.slope)
    assert scan.note
    assert len(list(scan.rows())) == 1


def test_fit_error_model_recovers_constants():
    s = np.repeat([0.2, 0.5, 1.0], 3)
    R = np.tile([1, 2, 3], 3)
    e = np.exp(-1.0 + 2.0 * s - 0.7 * R)
    a, b, c = fit_error_model(s, R, e)
    assert (a, b, c) == pytest.approx((-1.0, 2.0, 0.7), abs=1e-10)
    assert all(np.isnan(fit_error_model([0.0], [1], [0.0])))


def test_generator_decomposition_region_flow_stays_local():
    lat = Lattice.chain(6)
    path = tfim_path(lat, lam=0.5, gap_floor=1.0)
    dec = GeneratorDecomposition(path, 0.5, FilterFunction(1.0))
    A = lat.interval(0, 2)
    U = sla.expm(0.1 * dec.region(A, ah=True))
    assert support_violation(U, A.sites, lat, probes=5) < 1e-10
