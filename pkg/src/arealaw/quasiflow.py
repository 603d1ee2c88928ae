"""Quasi-adiabatic generators, their localisation and decay.

Sign conventions
----------------
The flow is ``dU/ds = i D U`` with Hermitian ``D``.  Internally we carry
the anti-Hermitian ``K = i D``, so that ``dU/ds = K U``.  For real
Hamiltonians (TFIM, field ramps) ``K`` is a real matrix, which halves
the cost of every dense product downstream.

In the eigenbasis of ``H(s)`` the filtered generator is

    K_nm = w(E_n - E_m) * dH_nm,        i.e.  D_nm = i w(E_m - E_n) dH_nm,

with an odd profile ``w`` equal to ``-1/omega`` once ``|omega| >= gamma``.
On the ground-state column this reproduces first-order perturbation
theory, ``K_n0 = -dH_n0 / (E_n - E_0)``, which transports the ground
state: ``d psi_0/ds = K psi_0``.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.special

from . import _kernels
from .errors import DomainError, StructuralError
from .hamiltonian import (
    LocalOperator,
    assemble,
    derivative_matrix,
    diagonalize,
    embed,
    opnorm,
)
from .lattice import Region


class FilterFunction:
    """Odd spectral profile ``w`` with ``w(omega) = -1/omega`` for ``|omega| >= gamma``.

    Parameters
    ----------
    gamma : float
        Gap scale.  Must not exceed the true gap along the path.
    profile : {"linear", "smooth"}
        Completion inside the gap.  ``"linear"`` uses ``-omega/gamma**2``;
        ``"smooth"`` multiplies ``-1/omega`` by a C-infinity step that
        vanishes for ``|omega| <= gamma/2``.
    T : float, optional
        Cutoff of the time-domain quadrature, default ``10/gamma``.
    nodes : int
        Gauss-Legendre nodes per half-line for the quadrature variant.
    """

    PROFILES = ("linear", "smooth")

    def __init__(self, gamma, profile="linear", T=None, nodes=400):
        if not gamma > 0:
            raise DomainError(f"filter gap scale must be positive, got {gamma}")
        if profile not in self.PROFILES:
            raise StructuralError(f"unknown filter profile {profile!r}")
        self.gamma = float(gamma)
        self.profile = profile
        self.T = 10.0 / self.gamma if T is None else float(T)
        self.nodes = int(nodes)

    @property
    def smooth(self):
        return self.profile == "smooth"

    def __call__(self, omega):
        return _kernels.filter_profile(omega, self.gamma, self.smooth)

    def __repr__(self):
        return f"FilterFunction(gamma={self.gamma:g}, profile={self.profile!r})"

    def weights(self, E):
        """Antisymmetric matrix ``w(E_n - E_m)``."""
        return _kernels.filter_weights(E, self.gamma, self.smooth)

    @property
    def sup(self):
        """``sup |w|``, attained at ``|omega| = gamma`` for both profiles."""
        grid = np.linspace(0.0, 2.0 * self.gamma, 4001)[1:]
        return float(np.abs(self(grid)).max())

    def window(self, t):
        """Time-domain window ``W(t) = -(1/pi) int_0^inf w(omega) sin(omega t) d omega``.

        ``W`` is odd, so that ``int W(t) exp(i omega t) dt = -i w(omega)``
        and ``D = int W(t) tau_t(dH) dt``.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty_like(t)
        for i, ti in enumerate(t):
            out[i] = np.sign(ti) * self._window_pos(abs(ti))
        return out

    def _window_pos(self, t):
        g = self.gamma
        if self.profile == "linear":
            x = g * t
            si, _ = scipy.special.sici(x)
            if x < 1e-3:
                inner = x / 3.0 - x**3 / 30.0
            else:
                inner = (math.sin(x) - x * math.cos(x)) / (x * x)
            return (inner + 0.5 * math.pi - si) / math.pi
        # smooth: the part beyond gamma is exact, the ramp is integrated numerically
        si, _ = scipy.special.sici(g * t)
        tail = 0.5 * math.pi - si
        ramp, _ = scipy.integrate.quad(
            lambda w: -float(self(w)) * math.sin(w * t), 0.5 * g, g, limit=200
        )
        return (tail + ramp) / math.pi


# -- generators --------------------------------------------------------------


def _eig_block(spectral, dH):
    V = spectral.eigenvectors
    return V.conj().T @ dH @ V


def _from_eig(spectral, M):
    V = spectral.eigenvectors
    return V @ M @ V.conj().T


def _check_hermitian(dH):
    dH = np.asarray(dH)
    if dH.ndim != 2 or dH.shape[0] != dH.shape[1]:
        raise StructuralError("dH must be a square matrix")
    return dH


def exact_generator_ah(spectral, dH):
    """Anti-Hermitian ``K = i D`` of the exact (ground-state) generator."""
    dH = _check_hermitian(dH)
    gap = spectral.eigenvalues[1:] - spectral.E0
    if spectral.degenerate or (gap.size and gap[0] <= 0):
        from .errors import GapClosed

        raise GapClosed(gap[0] if gap.size else 0.0)
    Me = _eig_block(spectral, dH)
    Ke = np.zeros_like(Me)
    Ke[1:, 0] = -Me[1:, 0] / gap
    Ke[0, 1:] = -Ke[1:, 0].conj()
    return _from_eig(spectral, Ke)


def exact_generator(spectral, dH):
    """Hermitian generator transporting the ground state exactly.

    Only the ground-state row and column are non-zero in the eigenbasis:
    ``<n|D|0> = i <n|dH|0> / (E_n - E_0)``.
    """
    return -1j * exact_generator_ah(spectral, dH)


def filtered_generator_ah(spectral, dH, filt):
    """Anti-Hermitian ``K`` with ``K_nm = w(E_n - E_m) dH_nm`` in the eigenbasis."""
    dH = _check_hermitian(dH)
    Me = _eig_block(spectral, dH)
    return _from_eig(spectral, filt.weights(spectral.eigenvalues) * Me)


def filtered_generator(spectral, dH, filt):
    """Hermitian ``D`` with ``D_nm = i w(E_m - E_n) dH_nm`` in the eigenbasis."""
    return -1j * filtered_generator_ah(spectral, dH, filt)


def quadrature_generator(spectral, dH, filt, T=None, nodes=None):
    """Time-domain cross-check ``D = int_{-T}^{T} W(t) tau_t(dH) dt``.

    Gauss-Legendre nodes on ``[0, T]`` are mirrored to ``[-T, 0]``.  The
    truncated tail of the window decays like ``1/t``, so agreement with
    :func:`filtered_generator` is only at the level ``~ 1/(gamma**2 T)``.
    """
    T = filt.T if T is None else float(T)
    nodes = filt.nodes if nodes is None else int(nodes)
    x, wq = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * T * (x + 1.0)
    wq = 0.5 * T * wq * filt.window(t)
    omega = spectral.eigenvalues[:, None] - spectral.eigenvalues[None, :]
    # tau_t(dH)_nm = exp(i omega_nm t) dH_nm; W odd pairs t with -t
    kernel = np.zeros_like(omega, dtype=complex)
    for tk, wk in zip(t, wq):
        kernel += 2j * wk * np.sin(omega * tk)
    return _from_eig(spectral, kernel * _eig_block(spectral, dH))


# -- localisation ---------------------------------------------------------


class GeneratorDecomposition:
    """Per-site generators ``D(u)`` at one path parameter and their local pieces.

    ``D(u)`` is the filtered image of ``dV_u/ds``.  The conditional
    expectation onto ``b_u(r)`` is ``Pi_r(X) = tr_{b^c}(X)/dim(b^c)``
    tensored with the identity, and the pieces are
    ``D(u; r0) = Pi_r0(D(u))`` and ``D(u; r) = Pi_r - Pi_{r-1}`` above.

    All matrices are held in the anti-Hermitian form ``K = i D``; the
    public accessors return the Hermitian ``D`` unless ``ah=True``.
    """

    def __init__(self, path, s, filt, spectral=None, r_max=None):
        self.path = path
        self.lattice = path.lattice
        self.s = float(s)
        self.filter = filt
        self.r0 = int(path.r0)
        if spectral is None:
            spectral = diagonalize(assemble(path, self.s), s=self.s)
        self.spectral = spectral
        self.r_max = self.lattice.diameter if r_max is None else int(r_max)
        self._K = {}
        self._local = {}
        self._weights = filt.weights(spectral.eigenvalues)
        V = spectral.eigenvectors
        self._V = V
        self._Vh = V.conj().T
        n = self.lattice.n_sites
        self.n_sites = n
        for p in path.perturbations:
            g1 = _profile_slope(p, self.s)
            if g1 == 0.0:
                continue
            idx = _kernels.gather_table(n, path.N, p.operator.support)
            Me = self._Vh @ _kernels.apply_left(g1 * p.operator.matrix, idx, V)
            Ku = V @ (self._weights * Me) @ self._Vh
            if p.site in self._K:
                self._K[p.site] = self._K[p.site] + Ku
            else:
                self._K[p.site] = Ku

    # -- building blocks ---------------------------------------------------

    @property
    def sites(self):
        return tuple(sorted(self._K))

    def site_generator(self, u, ah=False):
        K = self._K.get(u)
        if K is None:
            K = np.zeros((self.path.dim,) * 2)
        return K if ah else -1j * K

    def full(self, ah=False):
        """``sum_u D(u)``, the full filtered generator of ``dH/ds``."""
        K = sum(self._K.values(), np.zeros((self.path.dim,) * 2))
        return K if ah else -1j * K

    def covering_radius(self, u):
        """Smallest ``r`` with ``b_u(r) = Lambda``."""
        return int(self.lattice.distances[u].max())

    def projected(self, u, r):
        """``Pi_r(K(u))`` as a matrix on ``b_u(r)`` (anti-Hermitian form)."""
        r = min(int(r), self.covering_radius(u))
        key = (u, r)
        if key not in self._local:
            ball = self.lattice.ball(u, r)
            if u not in self._K:
                dk = self.path.N ** len(ball)
                M = np.zeros((dk, dk))
            elif len(ball) == self.n_sites:
                M = self._K[u]
            else:
                idx = _kernels.gather_table(self.n_sites, self.path.N, ball.sites)
                M = _kernels.partial_trace(self._K[u], idx) / idx.shape[1]
            self._local[key] = (ball, M)
        return self._local[key]

    def piece(self, u, r, ah=False):
        """``D(u; r)`` as a :class:`LocalOperator` on ``b_u(r)``."""
        if r < self.r0:
            raise DomainError(f"radius {r} below r0 = {self.r0}")
        ball, M = self.projected(u, r)
        if r > self.r0:
            inner, Mi = self.projected(u, r - 1)
            M = M - embed(LocalOperator(inner.sites, Mi, self.path.N), ball)
        M = M if ah else -1j * M
        return LocalOperator(ball.sites, M, self.path.N)

    def pieces(self, u, r_max=None, ah=False):
        r_max = self.r_max if r_max is None else r_max
        return [self.piece(u, r, ah) for r in range(self.r0, r_max + 1)]

    # -- region generators ------------------------------------------------------

    def max_radius_inside(self, u, Z):
        """Largest ``r`` with ``b_u(r)`` inside ``Z`` (``-1`` if none, ``inf`` if Z is everything)."""
        zset = set(Z)
        if len(zset) == self.n_sites:
            return math.inf
        if u not in zset:
            return -1
        outside = [v for v in range(self.n_sites) if v not in zset]
        return int(self.lattice.distances[u, outside].min()) - 1

    def _sum_on(self, terms, host):
        """``sum sign * embed(M on ball)`` on the space of ``host`` (a Region or None for Lambda)."""
        if host is None:
            dim = self.path.dim
        else:
            dim = self.path.N ** len(host)
        out = np.zeros((dim, dim), dtype=self._dtype)
        for sign, ball, M in terms:
            op = LocalOperator(ball.sites, M, self.path.N)
            out += sign * embed(op, self.lattice if host is None else host)
        return out

    @property
    def _dtype(self):
        return np.result_type(*self._K.values()) if self._K else np.float64

    def region_terms(self, Z):
        terms = []
        for u in self.sites:
            rs = self.max_radius_inside(u, Z)
            if rs < self.r0:
                continue
            ball, M = self.projected(u, self.covering_radius(u) if rs == math.inf else rs)
            terms.append((1.0, ball, M))
        return terms

    def region(self, Z, local=False, ah=False):
        """``D(Z)``: every piece whose ball lies inside ``Z``, telescoped per site.

        With ``local=True`` the result acts on the space of ``Z`` only.
        """
        Z = _as_region(self.lattice, Z)
        K = self._sum_on(self.region_terms(Z), Z if local else None)
        return K if ah else -1j * K

    def coupling_terms(self, cut, R):
        """Telescoped pieces whose ball crosses the cut and lies in ``dA(R)``."""
        collar = cut.collar(R)
        inside = cut.region._set
        terms = []
        for u in self.sites:
            other = [v for v in range(self.n_sites) if (v in inside) != (u in inside)]
            if not other:
                continue
            r_lo = max(int(self.lattice.distances[u, other].min()), self.r0)
            r_hi = self.max_radius_inside(u, collar)
            if r_hi == math.inf:
                r_hi = self.covering_radius(u)
            if r_hi < r_lo:
                continue
            ball, M = self.projected(u, r_hi)
            terms.append((1.0, ball, M))
            if r_lo > self.r0:
                ball_lo, M_lo = self.projected(u, r_lo - 1)
                terms.append((-1.0, ball_lo, M_lo))
        return terms, collar

    def coupling(self, cut, R, local=False, ah=False):
        """``D(dA(R))``: the boundary coupling of width ``R``.

        With ``local=True`` the result acts on the space of the collar.
        """
        terms, collar = self.coupling_terms(cut, R)
        K = self._sum_on(terms, collar if local else None)
        return K if ah else -1j * K

    def boundary(self, cut, ah=False):
        """``F(dA) = D - D(A) - D(A^c)``."""
        K = self.full(ah=True) - self.region(cut.region, ah=True) - self.region(
            cut.complement, ah=True
        )
        return K if ah else -1j * K


def _profile_slope(pert, s):
    from .hamiltonian import PROFILES

    return PROFILES[pert.profile][1](s)


def _as_region(lattice, Z):
    return Z if isinstance(Z, Region) else Region(lattice, Z)


def decompose_generator(path, s, filt, spectral=None, r_max=None):
    return GeneratorDecomposition(path, s, filt, spectral=spectral, r_max=r_max)


def localize(path, s, filt, u, r_max=None, decomposition=None):
    """Local pieces ``[D(u; r0), ..., D(u; r_max)]`` of site ``u``."""
    dec = decomposition or GeneratorDecomposition(path, s, filt)
    return dec.pieces(u, r_max)


def region_generator(decomposition, Z, local=False):
    """Hermitian ``D(Z)``; ``Z`` may be a Region or an iterable of sites."""
    return decomposition.region(Z, local=local)


def full_generator(path, s, filt, spectral=None):
    """Filtered generator of the whole ``dH/ds`` (Hermitian form)."""
    spectral = spectral or diagonalize(assemble(path, s), s=s)
    return filtered_generator(spectral, derivative_matrix(path, s), filt)


# -- decay ------------------------------------------------------------------


@dataclass(frozen=True)
class DecayModel:
    """``f(r) = exp(-c0 r / ln^2(r + e))`` with a fitted ``c0``."""

    c0: float
    prefactor: float = 1.0

    def f(self, r):
        r = np.asarray(r, dtype=float)
        return np.exp(-self.c0 * r / np.log(r + math.e) ** 2)

    def bound(self, r, r0=0):
        return self.prefactor * self.f(np.asarray(r, dtype=float) - r0)

    def tail(self, s, tol=1e-16, max_terms=10**6):
        """``F(s) = sum_{r >= s} f(r)``, summed until terms drop below ``tol``."""
        if self.c0 <= 0:
            return math.inf
        total, r = 0.0, int(s)
        while r - s < max_terms:
            term = float(self.f(r))
            total += term
            if term < tol * max(total, 1e-300):
                break
            r += 1
        return total


def measure_decay(decomposition, u, r_max=None):
    """``(radii, ||D(u; r)||)`` for ``r = r0 .. r_max`` (operator norms)."""
    r_max = min(decomposition.r_max if r_max is None else r_max, decomposition.covering_radius(u))
    radii = np.arange(decomposition.r0, r_max + 1)
    norms = np.array([decomposition.piece(u, int(r), ah=True).norm() for r in radii])
    return radii, norms


def fit_decay(radii, norms, r0, prefactor, floor=1e-13):
    """Largest ``c0`` such that ``norms[r] <= prefactor * f(r - r0)`` for ``r > r0``.

    Radii whose norm is below ``floor`` (numerically zero) impose no
    constraint.  Returns a model with ``c0 = inf`` when nothing constrains it.
    """
    radii = np.asarray(radii, dtype=float)
    norms = np.asarray(norms, dtype=float)
    x = radii - r0
    keep = (x > 0) & (norms > floor)
    if not keep.any():
        return DecayModel(math.inf, prefactor)
    ratio = norms[keep] / prefactor
    if (ratio >= 1).any():
        return DecayModel(0.0, prefactor)
    c = -np.log(ratio) * np.log(x[keep] + math.e) ** 2 / x[keep]
    return DecayModel(float(c.min()), prefactor)


def fit_log_slope(x, y):
    """Least-squares slope of ``ln y`` against ``x`` (positive entries only)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = y > 0
    if keep.sum() < 2:
        return math.nan
    return float(np.polyfit(x[keep], np.log(y[keep]), 1)[0])


def generator_norm(D):
    return opnorm(D)
