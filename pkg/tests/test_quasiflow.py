import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from arealaw.errors import DomainError, StructuralError
from arealaw.evolve import support_violation
from arealaw.hamiltonian import (
    assemble,
    derivative_matrix,
    diagonalize,
    embed,
    field_ramp_path,
    opnorm,
    random_path,
    tfim_path,
)
from arealaw.lattice import Lattice
from arealaw.quasiflow import (
    DecayModel,
    FilterFunction,
    GeneratorDecomposition,
    exact_generator,
    filtered_generator,
    filtered_generator_ah,
    fit_decay,
    full_generator,
    localize,
    measure_decay,
    quadrature_generator,
    region_generator,
)


@pytest.fixture(scope="module")
def chain6():
    lat = Lattice.chain(6)
    path = tfim_path(lat, lam=0.5, gap_floor=1.0)
    return lat, path


@pytest.fixture(scope="module")
def dec6(chain6):
    lat, path = chain6
    return GeneratorDecomposition(path, 0.7, FilterFunction(1.0))


def test_filter_profile_shape():
    w = FilterFunction(1.0)
    om = np.array([-3.0, -1.0, -0.5, 0.0, 0.5, 1.0, 3.0])
    np.testing.assert_allclose(w(om), [1 / 3, 1.0, 0.5, 0.0, -0.5, -1.0, -1 / 3])
    assert w.sup == pytest.approx(1.0, rel=1e-3)
    ws = FilterFunction(1.0, "smooth")
    assert ws(0.4) == 0.0
    assert ws(1.5) == pytest.approx(-1 / 1.5)
    with pytest.raises(DomainError):
        FilterFunction(0.0)
    with pytest.raises(StructuralError):
        FilterFunction(1.0, "gaussian")


@pytest.mark.parametrize("profile", ["linear", "smooth"])
def test_window_is_fourier_pair(profile):
    # -(1/pi) int_0^inf w(omega) sin(omega t) d omega, checked by direct quadrature
    from scipy.integrate import quad
    from scipy.special import sici

    filt = FilterFunction(0.8, profile)
    for t in (0.3, 2.0, 7.5):
        ref, _ = quad(lambda w: -float(filt(w)) * math.sin(w * t), 0, 0.8, limit=200)
        # beyond gamma the integrand is sin(wt)/w: pi/2 - Si(gamma t)
        ref += 0.5 * math.pi - sici(0.8 * t)[0]
        assert filt.window(t)[0] == pytest.approx(ref / math.pi, abs=1e-9)
        assert filt.window(-t)[0] == pytest.approx(-filt.window(t)[0])


@pytest.mark.parametrize("s", [0.0, 0.25, 0.5, 0.75, 1.0])
def test_filtered_equals_exact_on_ground_column(chain6, s):
    lat, path = chain6
    spec = diagonalize(assemble(path, s))
    dH = derivative_matrix(path, s)
    Df = filtered_generator(spec, dH, FilterFunction(1.0))
    De = exact_generator(spec, dH)
    psi0 = spec.ground_state
    np.testing.assert_allclose(Df @ psi0, De @ psi0, atol=1e-9)
    np.testing.assert_allclose(Df, Df.conj().T, atol=1e-12)
    np.testing.assert_allclose(De, De.conj().T, atol=1e-12)


def test_exact_generator_transports_ground_state(chain6):
    lat, path = chain6
    s, h = 0.4, 1e-5
    spec = diagonalize(assemble(path, s))
    De = exact_generator(spec, derivative_matrix(path, s))
    psi = spec.ground_state
    p_plus = diagonalize(assemble(path, s + h)).ground_state
    p_minus = diagonalize(assemble(path, s - h)).ground_state
    p_plus *= np.sign(np.vdot(psi, p_plus).real)
    p_minus *= np.sign(np.vdot(psi, p_minus).real)
    dpsi = (p_plus - p_minus) / (2 * h)
    np.testing.assert_allclose(1j * De @ psi, dpsi, atol=1e-7)


def test_quadrature_cross_check(chain6):
    lat, path = chain6
    s = 0.6
    spec = diagonalize(assemble(path, s))
    dH = derivative_matrix(path, s)
    filt = FilterFunction(1.0)
    D = filtered_generator(spec, dH, filt)
    Dq = quadrature_generator(spec, dH, filt, T=100.0, nodes=4000)
    assert opnorm(Dq - D) / opnorm(D) < 1e-3


def test_full_generator_is_sum_of_site_generators(chain6, dec6):
    lat, path = chain6
    D = full_generator(path, 0.7, FilterFunction(1.0))
    np.testing.assert_allclose(dec6.full(), D, atol=1e-12)


@pytest.mark.parametrize("u", [0, 2, 4])
def test_pieces_telescope(dec6, u, chain6):
    lat, _ = chain6
    pieces = localize(None, None, None, u, decomposition=dec6)
    total = sum(embed(p, lat) for p in pieces)
    np.testing.assert_allclose(total, dec6.site_generator(u), atol=1e-12)
    for r, p in enumerate(pieces, start=dec6.r0):
        assert set(p.support) == set(lat.ball(u, r))


def test_conditional_expectation_is_contractive(dec6):
    for u in dec6.sites:
        full = opnorm(dec6.site_generator(u))
        for r in range(dec6.r0, dec6.covering_radius(u) + 1):
            _, M = dec6.projected(u, r)
            assert opnorm(M) <= full * (1 + 1e-12)


def test_region_generator_support(dec6, chain6):
    lat, _ = chain6
    A = lat.interval(0, 2)
    DA = region_generator(dec6, A)
    assert support_violation(DA, A.sites, lat, probes=5) < 1e-10
    np.testing.assert_allclose(DA, DA.conj().T, atol=1e-12)
    # local form embeds to the full one
    from arealaw.hamiltonian import LocalOperator

    loc = region_generator(dec6, A, local=True)
    np.testing.assert_allclose(embed(LocalOperator(A.sites, loc), lat), DA, atol=1e-12)
    np.testing.assert_allclose(region_generator(dec6, lat.all_sites), dec6.full(), atol=1e-12)


def test_coupling_converges_to_boundary(dec6, chain6):
    lat, _ = chain6
    cut = lat.cut(lat.interval(0, 2))
    F = dec6.boundary(cut)
    big = dec6.coupling(cut, lat.diameter)
    np.testing.assert_allclose(big, F, atol=1e-12)
    C1 = dec6.coupling(cut, 1)
    assert support_violation(C1, cut.collar(1).sites, lat, probes=5) < 1e-10


def test_field_ramp_generator_is_local():
    lat = Lattice.chain(5)
    path = field_ramp_path(lat, eps=0.3)
    dec = GeneratorDecomposition(path, 0.5, FilterFunction(1.0))
    # decoupled spins: every piece beyond r0 = 0 vanishes
    for u in range(5):
        radii, norms = measure_decay(dec, u)
        assert norms[0] > 0.01
        assert np.all(norms[1:] < 1e-12)
    cut = lat.cut(lat.interval(0, 1))
    assert opnorm(dec.boundary(cut)) < 1e-12


def test_decay_measured_and_fitted():
    lat = Lattice.chain(8)
    path = tfim_path(lat, lam=0.5, gap_floor=1.0)
    dec = GeneratorDecomposition(path, 1.0, FilterFunction(1.0))
    radii, norms = measure_decay(dec, 3)
    assert radii[0] == 1
    assert np.all(norms[1:] < norms[0])
    model = fit_decay(radii, norms, r0=1, prefactor=norms[0])
    assert model.c0 > 0
    assert np.all(norms[1:] <= model.bound(radii[1:], r0=1) * (1 + 1e-12))


def test_decay_model_tail():
    m = DecayModel(2.0)
    assert m.f(0) == pytest.approx(1.0)
    direct = sum(float(m.f(r)) for r in range(3, 5000))
    assert m.tail(3) == pytest.approx(direct, rel=1e-10)
    assert math.isinf(DecayModel(0.0).tail(0))
    assert math.isinf(fit_decay([1, 2], [1.0, 0.0], 1, 1.0).c0)
    assert fit_decay([1, 2], [1.0, 2.0], 1, 1.0).c0 == 0.0


@given(st.integers(0, 2**31 - 1), st.floats(0.0, 1.0))
def test_random_path_generator_hermitian(seed, s):
    lat = Lattice.chain(4)
    path = random_path(lat, eps=0.2, seed=seed)
    spec = diagonalize(assemble(path, s), allow_degenerate=True)
    filt = FilterFunction(0.5)
    K = filtered_generator_ah(spec, derivative_matrix(path, s), filt)
    np.testing.assert_allclose(K, -K.conj().T, atol=1e-12)
    # ||D|| <= sup|w| * ||dH|| in the eigenbasis is not a norm bound in general,
    # but the Frobenius norm is: |w| <= sup|w| entrywise
    assert np.linalg.norm(K) <= filt.sup * np.linalg.norm(derivative_matrix(path, s)) * (1 + 1e-9)
