"""Gapped Hamiltonian paths on small lattices and exact diagonalisation.

A path is ``H(s) = H0 + sum_u V_u(s)`` with ``H0 = sum_u Q_u``.  Every
``V_u(s) = g(s) P_u`` is a fixed local operator scaled by a named profile
``g`` with ``g(0) = 0``, which gives analytic derivatives for free.
All matrices are dense; the default dimension cap is ``2**12``.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from . import _kernels
from .errors import DomainError, GapClosed, StructuralError
from .lattice import Lattice, Region

DIMENSION_CAP = 2**12

PAULI_I = np.eye(2)
PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]])
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]])
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]])


def opnorm(M):
    """Operator (spectral) norm: the largest singular value."""
    M = np.asarray(M)
    if M.size == 0:
        return 0.0
    if M.ndim == 1:
        return float(np.linalg.norm(M))
    return float(sla.svdvals(M, check_finite=False)[0])


def _sites(support):
    if isinstance(support, Region):
        return support.sites
    return tuple(int(s) for s in support)


@dataclass(frozen=True, eq=False)
class LocalOperator:
    """A matrix acting on the sites ``support`` (in increasing order)."""

    support: tuple
    matrix: np.ndarray
    N: int = 2
    hermitian: bool = False

    def __post_init__(self):
        support = _sites(self.support)
        if list(support) != sorted(set(support)):
            raise StructuralError(f"support must be strictly increasing, got {support}")
        M = np.asarray(self.matrix)
        dim = self.N ** len(support)
        if M.shape != (dim, dim):
            raise StructuralError(
                f"matrix shape {M.shape} does not match N^|support| = {dim}"
            )
        if self.hermitian and opnorm(M - M.conj().T) > 1e-12:
            raise StructuralError("matrix flagged hermitian is not hermitian")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "matrix", M)

    @property
    def dim(self):
        return self.matrix.shape[0]

    def norm(self):
        return opnorm(self.matrix)

    def scaled(self, c):
        herm = self.hermitian and np.isrealobj(c)
        return LocalOperator(self.support, c * self.matrix, self.N, herm)


def embed(op, lattice, N=None):
    """Full-space matrix of ``op`` (identity on the complement).

    ``lattice`` may be a :class:`Lattice`, a :class:`Region` (the result
    then acts on that region's space) or a site count.
    """
    N = op.N if N is None else N
    if N != op.N:
        raise StructuralError(f"local dimension mismatch: {op.N} vs {N}")
    if isinstance(lattice, Region):
        host = lattice.sites
        pos = {s: i for i, s in enumerate(host)}
        if not set(op.support) <= set(host):
            raise StructuralError(f"support {op.support} not inside {host}")
        keep = tuple(pos[s] for s in op.support)
        n = len(host)
    else:
        n = lattice.n_sites if isinstance(lattice, Lattice) else int(lattice)
        if op.support and (op.support[0] < 0 or op.support[-1] >= n):
            raise StructuralError(f"support {op.support} not inside {n} sites")
        keep = op.support
    if N**n > DIMENSION_CAP * 4:
        raise StructuralError(f"dimension {N}^{n} exceeds the dense cap")
    return _kernels.expand(op.matrix, _kernels.gather_table(n, N, keep))


# -- perturbation profiles ----------------------------------------------------

PROFILES = {
    "linear": (lambda s: s, lambda s: 1.0),
    "quadratic": (lambda s: s * s, lambda s: 2.0 * s),
    "sine": (
        lambda s: math.sin(0.5 * math.pi * s),
        lambda s: 0.5 * math.pi * math.cos(0.5 * math.pi * s),
    ),
}


@dataclass(frozen=True, eq=False)
class Perturbation:
    """``V_u(s) = g(s) * operator`` for a named profile ``g``."""

    site: int
    operator: LocalOperator
    profile: str = "linear"

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise StructuralError(f"unknown perturbation family {self.profile!r}")

    def value(self, s):
        return self.operator.scaled(PROFILES[self.profile][0](s))

    def derivative(self, s):
        return self.operator.scaled(PROFILES[self.profile][1](s))


@dataclass(frozen=True, eq=False)
class HamiltonianPath:
    """``H(s) = sum_u Q_u + sum_u V_u(s)`` together with its declared constants."""

    lattice: Lattice
    static_terms: tuple
    perturbations: tuple
    r0: int = 1
    J1: float = 1.0
    J2: float = 1.0
    gap_floor: float = 0.0
    N: int = 2
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "static_terms", tuple(self.static_terms))
        object.__setattr__(self, "perturbations", tuple(self.perturbations))
        if self.dim > DIMENSION_CAP:
            raise StructuralError(
                f"Hilbert-space dimension {self.dim} exceeds cap {DIMENSION_CAP}"
            )
        for op in self.static_terms:
            if op.N != self.N:
                raise StructuralError("static term has the wrong local dimension")
        for p in self.perturbations:
            if p.operator.N != self.N:
                raise StructuralError("perturbation has the wrong local dimension")

    @property
    def n_sites(self):
        return self.lattice.n_sites

    @property
    def dim(self):
        return self.N**self.n_sites

    @cached_property
    def H0(self):
        H = np.zeros((self.dim, self.dim), dtype=self._dtype)
        for op in self.static_terms:
            H = H + embed(op, self.lattice)
        H.setflags(write=False)
        return H

    @cached_property
    def _dtype(self):
        ops = [op.matrix for op in self.static_terms] + [
            p.operator.matrix for p in self.perturbations
        ]
        return np.result_type(np.float64, *ops)

    @cached_property
    def _profile_sums(self):
        sums = {}
        for p in self.perturbations:
            M = embed(p.operator, self.lattice)
            sums[p.profile] = sums.get(p.profile, 0) + M
        return sums

    @cached_property
    def perturbation_matrices(self):
        """Embedded ``P_u`` for every perturbation, in declaration order."""
        return tuple(embed(p.operator, self.lattice) for p in self.perturbations)

    def assemble(self, s):
        return assemble(self, s)

    def validate(self, n_grid=21):
        return validate_path(self, n_grid)


def assemble(path, s):
    """Dense ``H(s)``."""
    if not 0.0 <= s <= 1.0:
        raise DomainError(f"path parameter must lie in [0, 1], got {s}")
    H = np.array(path.H0, copy=True)
    for name, M in path._profile_sums.items():
        H += PROFILES[name][0](s) * M
    return H


def derivative_terms(path, s, method="analytic", h=1e-5):
    """``[(u, dV_u/ds)]`` as local operators.

    ``method="fd"`` uses a central finite difference of each family
    (clamped to [0, 1] at the ends) instead of the analytic derivative.
    """
    out = []
    for p in path.perturbations:
        if method == "analytic":
            out.append((p.site, p.derivative(s)))
        elif method == "fd":
            lo, hi = max(0.0, s - h), min(1.0, s + h)
            g = PROFILES[p.profile][0]
            out.append((p.site, p.operator.scaled((g(hi) - g(lo)) / (hi - lo))))
        else:
            raise StructuralError(f"unknown derivative method {method!r}")
    return out


def derivative_matrix(path, s):
    """Dense ``dH/ds``."""
    D = np.zeros((path.dim, path.dim), dtype=path._dtype)
    for name, M in path._profile_sums.items():
        D += PROFILES[name][1](s) * M
    return D


@dataclass(frozen=True)
class PathValidation:
    ok: bool
    max_V0: float
    max_Q: float
    max_V: float
    max_dV: float
    support_ok: bool
    messages: tuple


def validate_path(path, n_grid=21):
    """Check the declared constants against measured term norms."""
    msgs = []
    grid = np.linspace(0.0, 1.0, n_grid)
    lat = path.lattice
    max_Q = max((op.norm() for op in path.static_terms), default=0.0)
    max_V0 = max_V = max_dV = 0.0
    support_ok = True
    for op in path.static_terms:
        if not _inside_some_ball(lat, op.support, path.r0):
            support_ok = False
            msgs.append(f"static term on {op.support} is not inside any b_u(r0)")
    for p in path.perturbations:
        ball = set(lat.ball(p.site, path.r0))
        if not set(p.operator.support) <= ball:
            support_ok = False
            msgs.append(f"V_{p.site} support {p.operator.support} not inside b_u(r0)")
        P = p.operator.norm()
        max_V0 = max(max_V0, abs(PROFILES[p.profile][0](0.0)) * P)
        for s in grid:
            max_V = max(max_V, abs(PROFILES[p.profile][0](s)) * P)
            max_dV = max(max_dV, abs(PROFILES[p.profile][1](s)) * P)
    if max_V0 > 1e-12:
        msgs.append(f"V_u(0) != 0 (norm {max_V0:.3e})")
    if max_Q > path.J1 * (1 + 1e-12):
        msgs.append(f"||Q_u|| = {max_Q:.6g} exceeds J1 = {path.J1}")
    if max_V > path.J1 * (1 + 1e-12):
        msgs.append(f"||V_u(s)|| = {max_V:.6g} exceeds J1 = {path.J1}")
    if max_dV > path.J2 * (1 + 1e-12):
        msgs.append(f"||dV_u/ds|| = {max_dV:.6g} exceeds J2 = {path.J2}")
    return PathValidation(not msgs, max_V0, max_Q, max_V, max_dV, support_ok, tuple(msgs))


def _inside_some_ball(lattice, support, r):
    sup = list(support)
    if not sup:
        return True
    d = lattice.distances[:, sup].max(axis=1)
    return bool((d <= r).any())


# -- spectra ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Eigen-decomposition of a Hermitian matrix, eigenvalues ascending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    degenerate: bool = False

    @property
    def E0(self):
        return float(self.eigenvalues[0])

    @property
    def gap(self):
        return float(self.eigenvalues[1] - self.eigenvalues[0]) if self.eigenvalues.size > 1 else np.inf

    @property
    def ground_state(self):
        return self.eigenvectors[:, 0]

    @property
    def dim(self):
        return self.eigenvalues.size

    def matrix(self):
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.conj().T


def diagonalize(H, cap=DIMENSION_CAP, allow_degenerate=False, s=None):
    """Dense eigendecomposition; raises :class:`GapClosed` on a degenerate ground state."""
    H = np.asarray(H)
    if H.shape[0] > cap:
        raise StructuralError(f"dimension {H.shape[0]} exceeds cap {cap}")
    if np.abs(H - H.conj().T).max(initial=0.0) > 1e-10 * max(1.0, np.abs(H).max(initial=0.0)):
        raise StructuralError("matrix is not hermitian")
    evals, evecs = np.linalg.eigh(H)
    scale = float(np.abs(evals).max(initial=0.0))
    degenerate = evals.size > 1 and (evals[1] - evals[0]) <= 1e-8 * scale
    if degenerate and not allow_degenerate:
        raise GapClosed(evals[1] - evals[0], s=s)
    return SpectralData(evals, evecs, bool(degenerate))


@dataclass(frozen=True)
class GapScan:
    s: np.ndarray
    E0: np.ndarray
    E1: np.ndarray
    floor: float

    @property
    def gaps(self):
        return self.E1 - self.E0

    @property
    def min_gap(self):
        return float(self.gaps.min())

    @property
    def argmin_s(self):
        return float(self.s[int(np.argmin(self.gaps))])

    @property
    def ok(self):
        return self.min_gap >= self.floor

    def __iter__(self):
        # unpacks as (min gap, argmin s)
        return iter((self.min_gap, self.argmin_s))


def gap_along_path(path, s_grid, floor=None):
    """Ground energy and gap at every grid point; ``ok`` is False below ``floor``."""
    floor = path.gap_floor if floor is None else floor
    s_grid = np.asarray(s_grid, dtype=float)
    E0, E1 = np.empty_like(s_grid), np.empty_like(s_grid)
    for i, s in enumerate(s_grid):
        H = assemble(path, float(s))
        evals = np.linalg.eigvalsh(H)
        scale = float(np.abs(evals).max(initial=0.0))
        if evals[1] - evals[0] <= 1e-8 * scale:
            raise GapClosed(evals[1] - evals[0], s=float(s))
        E0[i], E1[i] = evals[0], evals[1]
    return GapScan(s_grid, E0, E1, float(floor))


def heisenberg(spectral, O, t):
    """``exp(iHt) O exp(-iHt)`` computed in the eigenbasis."""
    V = spectral.eigenvectors
    phase = np.exp(1j * spectral.eigenvalues * t)
    Ot = V.conj().T @ O @ V
    Ot = phase[:, None] * Ot * phase.conj()[None, :]
    return V @ Ot @ V.conj().T


# -- shipped path families ---------------------------------------------------


def _transverse_field_terms(lattice):
    return [LocalOperator((u,), -PAULI_X, hermitian=True) for u in range(lattice.n_sites)]


def _forward_bonds(lattice, u):
    return [v for (a, v) in lattice.edges if a == u]


def tfim_path(lattice, lam=0.5, gap_floor=None, J2=None, profile="linear"):
    """``H0 = -sum X_u``, ``V_u(s) = -s lam sum_{v fwd of u} Z_u Z_v``."""
    perts = []
    for u in range(lattice.n_sites):
        fwd = _forward_bonds(lattice, u)
        if not fwd:
            continue
        support = tuple(sorted([u] + fwd))
        M = np.zeros((2 ** len(support),) * 2)
        for v in fwd:
            zz = LocalOperator(
                (u, v), -lam * np.kron(PAULI_Z, PAULI_Z), hermitian=True
            )
            M = M + embed(zz, Region(lattice, support))
        perts.append(Perturbation(u, LocalOperator(support, M, hermitian=True), profile))
    bond_norm = abs(lam) * max(len(_forward_bonds(lattice, u)) for u in range(lattice.n_sites)) if perts else 0.0
    slope = max(abs(PROFILES[profile][1](s)) for s in np.linspace(0, 1, 21))
    return HamiltonianPath(
        lattice,
        _transverse_field_terms(lattice),
        perts,
        r0=1,
        J1=max(1.0, bond_norm),
        J2=bond_norm * slope if J2 is None else J2,
        gap_floor=0.5 if gap_floor is None else gap_floor,
        name="tfim",
        params={"lam": lam, "profile": profile},
    )


def field_ramp_path(lattice, eps=0.2, gap_floor=None):
    """``H0 = -sum X_u``, ``V_u(s) = s eps Z_u``: decoupled spins."""
    perts = [
        Perturbation(u, LocalOperator((u,), eps * PAULI_Z, hermitian=True))
        for u in range(lattice.n_sites)
    ]
    return HamiltonianPath(
        lattice,
        _transverse_field_terms(lattice),
        perts,
        r0=0,
        J1=max(1.0, abs(eps)),
        J2=abs(eps),
        gap_floor=1.0 if gap_floor is None else gap_floor,
        name="field_ramp",
        params={"eps": eps},
    )


def random_hermitian(dim, rng):
    A = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    H = 0.5 * (A + A.conj().T)
    return H / opnorm(H)


def random_path(lattice, eps=0.2, seed=0, gap_floor=None):
    """``V_u(s) = s eps P_u`` with seeded random two-site ``P_u``, ``||P_u|| = 1``."""
    rng = np.random.default_rng(seed)
    perts = []
    for u in range(lattice.n_sites):
        fwd = _forward_bonds(lattice, u)
        if not fwd:
            continue
        support = (u, fwd[0])
        P = random_hermitian(4, rng)
        perts.append(Perturbation(u, LocalOperator(support, eps * P, hermitian=True)))
    return HamiltonianPath(
        lattice,
        _transverse_field_terms(lattice),
        perts,
        r0=1,
        J1=max(1.0, abs(eps)),
        J2=abs(eps),
        gap_floor=0.5 if gap_floor is None else gap_floor,
        name="random",
        params={"eps": eps, "seed": seed},
    )


def make_path(family, lattice, **params):
    """Build a shipped family by name: ``tfim``, ``field_ramp`` or ``random``."""
    builders = {"tfim": tfim_path, "field_ramp": field_ramp_path, "random": random_path}
    if family not in builders:
        raise StructuralError(f"unknown path family {family!r}")
    return builders[family](lattice, **params)
