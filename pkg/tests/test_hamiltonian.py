from functools import reduce

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from arealaw.errors import GapClosed, StructuralError
from arealaw.hamiltonian import (
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    LocalOperator,
    Perturbation,
    assemble,
    derivative_matrix,
    derivative_terms,
    diagonalize,
    embed,
    gap_along_path,
    heisenberg,
    make_path,
    opnorm,
    random_hermitian,
    tfim_path,
    validate_path,
)
from arealaw.lattice import Lattice

# independent oracle: 21-point gap scan of the n = 8 chain (kron-built H)
GAP_N8_MIN = 1.0951235699420456
GAP_N10_S1 = 1.0666535963587727


def _site_op(op, u, n):
    mats = [np.eye(2)] * n
    mats[u] = op
    return reduce(np.kron, mats)


def _tfim_kron(n, lam, s):
    H = -sum(_site_op(PAULI_X, u, n) for u in range(n))
    for u in range(n - 1):
        H = H - s * lam * _site_op(PAULI_Z, u, n) @ _site_op(PAULI_Z, u + 1, n)
    return H


def test_embed_matches_kron():
    op = LocalOperator((1, 3), np.kron(PAULI_X, PAULI_Z))
    M = embed(op, 4)
    np.testing.assert_allclose(M, _site_op(PAULI_X, 1, 4) @ _site_op(PAULI_Z, 3, 4))


def test_local_operator_validation():
    with pytest.raises(StructuralError):
        LocalOperator((2, 1), np.eye(4))
    with pytest.raises(StructuralError):
        LocalOperator((0,), np.eye(4))
    with pytest.raises(StructuralError):
        LocalOperator((0,), np.array([[0, 1], [0, 0]]), hermitian=True)
    with pytest.raises(StructuralError):
        Perturbation(0, LocalOperator((0,), PAULI_Z), profile="cubic")


@pytest.mark.parametrize("s", [0.0, 0.3, 1.0])
def test_tfim_assembly_term_by_term(s):
    lat = Lattice.chain(8)
    path = tfim_path(lat, lam=0.5)
    np.testing.assert_allclose(assemble(path, s), _tfim_kron(8, 0.5, s), atol=1e-13)


def test_derivative_analytic_vs_fd():
    lat = Lattice.chain(6)
    for family, params in [("tfim", {"profile": "sine"}), ("random", {"seed": 4}), ("field_ramp", {})]:
        path = make_path(family, lat, **params)
        for s in (0.0, 0.4, 1.0):
            a = derivative_terms(path, s)
            f = derivative_terms(path, s, method="fd", h=1e-6)
            for (ua, opa), (uf, opf) in zip(a, f):
                assert ua == uf
                np.testing.assert_allclose(opa.matrix, opf.matrix, atol=1e-6)
            # the dense derivative is the sum of the local ones
            D = sum(embed(op, lat) for _, op in a)
            np.testing.assert_allclose(derivative_matrix(path, s), D, atol=1e-12)
            # and agrees with a finite difference of H itself
            h = 1e-6
            lo, hi = max(0, s - h), min(1, s + h)
            fd = (assemble(path, hi) - assemble(path, lo)) / (hi - lo)
            np.testing.assert_allclose(derivative_matrix(path, s), fd, atol=1e-5)


def test_validate_shipped_paths():
    lat = Lattice.chain(6)
    for family in ("tfim", "field_ramp", "random"):
        v = validate_path(make_path(family, lat))
        assert v.ok, v.messages
        assert v.max_V0 == 0.0


def test_validate_flags_bad_constants():
    lat = Lattice.chain(4)
    path = tfim_path(lat, lam=0.5, J2=0.1)
    v = validate_path(path)
    assert not v.ok
    assert any("J2" in m for m in v.messages)


def test_gap_oracle_n8():
    path = tfim_path(Lattice.chain(8), lam=0.5, gap_floor=1.0)
    scan = gap_along_path(path, np.linspace(0, 1, 21))
    gmin, s_at = scan
    assert gmin == pytest.approx(GAP_N8_MIN, abs=1e-10)
    assert s_at == 1.0
    assert scan.ok
    # the s = 0 Hamiltonian is -sum X: gap exactly 2
    assert scan.gaps[0] == pytest.approx(2.0, abs=1e-12)


def test_gap_n10_at_one():
    path = tfim_path(Lattice.chain(10), lam=0.5)
    spec = diagonalize(assemble(path, 1.0))
    assert spec.gap == pytest.approx(GAP_N10_S1, abs=1e-10)


def test_gap_below_floor_reported():
    path = tfim_path(Lattice.chain(6), lam=0.5, gap_floor=5.0)
    assert not gap_along_path(path, [0.0, 1.0]).ok


def test_gap_closed_raised():
    with pytest.raises(GapClosed):
        diagonalize(np.zeros((4, 4)))
    spec = diagonalize(np.zeros((4, 4)), allow_degenerate=True)
    assert spec.degenerate


def test_diagonalize_rejects_non_hermitian():
    with pytest.raises(StructuralError):
        diagonalize(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_heisenberg_closed_form():
    spec = diagonalize(PAULI_X, allow_degenerate=True)
    for t in (0.0, 0.3, 1.7):
        expected = np.cos(2 * t) * PAULI_Z + np.sin(2 * t) * PAULI_Y
        np.testing.assert_allclose(heisenberg(spec, PAULI_Z, t), expected, atol=1e-14)


@given(st.integers(0, 10_000), st.floats(-5, 5))
def test_heisenberg_preserves_norm(seed, t):
    rng = np.random.default_rng(seed)
    H = random_hermitian(8, rng)
    O = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    spec = diagonalize(H, allow_degenerate=True)
    Ot = heisenberg(spec, O, t)
    assert opnorm(Ot) == pytest.approx(opnorm(O), rel=1e-10)
    Ut = sla.expm(1j * H * t)
    np.testing.assert_allclose(Ot, Ut @ O @ Ut.conj().T, atol=1e-10)


def test_opnorm():
    assert opnorm(np.diag([3.0, -4.0])) == pytest.approx(4.0)
    assert opnorm(np.zeros((0, 0))) == 0.0
