"""Schmidt spectra across a cut, truncations and overlap bookkeeping.

Schmidt coefficients ``sigma`` are the *squared* singular values of the
``A : A^c`` matricisation, so they form a probability vector.  Rank
thresholds such as ``N**(R |dA|)`` are Python integers and are clipped at
the full Schmidt dimension ``min(N**|A|, N**|A^c|)``.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainError, StructuralError

log = logging.getLogger(__name__)

NORM_TOL = 1e-8
RANK_TOL = 1e-10


def _matricize(state, cut, N):
    n = cut.lattice.n_sites
    A, Ac = cut.region.sites, cut.complement.sites
    psi = np.asarray(state).reshape((N,) * n)
    return psi.transpose(A + Ac).reshape(N ** len(A), N ** len(Ac))


def _check_normalized(state):
    nrm = float(np.linalg.norm(state))
    if abs(nrm - 1.0) > NORM_TOL:
        raise DomainError(f"state is not normalised (norm {nrm:.12g})")


def full_schmidt_dim(cut, N=2):
    return min(N ** len(cut.region), N ** len(cut.complement))


@dataclass(frozen=True, eq=False)
class SchmidtSpectrum:
    """Decreasing Schmidt probabilities ``sigma`` across ``cut``.

    ``left``/``right`` hold the Schmidt vectors as columns (on A and on
    A^c respectively) when requested.
    """

    sigma: np.ndarray
    cut: object
    N: int = 2
    left: np.ndarray = None
    right: np.ndarray = None

    @property
    def boundary_size(self):
        return self.cut.boundary_size

    @property
    def full_dim(self):
        return full_schmidt_dim(self.cut, self.N)

    def rank(self, tol=RANK_TOL):
        """Number of singular values (``sqrt(sigma)``) above ``tol``."""
        return int(np.count_nonzero(np.sqrt(self.sigma) > tol))

    def head(self, k):
        """``sum_{alpha <= k} sigma(alpha)``."""
        k = int(min(k, self.sigma.size))
        return float(self.sigma[:k].sum())

    def tail(self, k):
        """``sum_{alpha > k} sigma(alpha)``, computed directly for accuracy."""
        k = int(min(k, self.sigma.size))
        return float(self.sigma[k:].sum())

    def rows(self):
        for a, p in enumerate(self.sigma, start=1):
            yield {"alpha": a, "sigma": float(p)}


def schmidt(state, cut, N=2, vectors=False):
    """Schmidt spectrum of a normalised pure state across ``cut``."""
    _check_normalized(state)
    M = _matricize(state, cut, N)
    if vectors:
        Uu, sv, Vh = np.linalg.svd(M, full_matrices=False)
        return SchmidtSpectrum(sv**2, cut, N, Uu, Vh.conj().T)
    sv = np.linalg.svd(M, compute_uv=False)
    return SchmidtSpectrum(sv**2, cut, N)


def entropy(spec):
    """Von Neumann entropy in nats, ``-sum sigma ln sigma`` with ``0 ln 0 = 0``."""
    p = spec.sigma if isinstance(spec, SchmidtSpectrum) else np.asarray(spec, dtype=float)
    p = p[p > 0]
    # roundoff can push a dominant weight a hair above 1
    return max(float(-(p * np.log(p)).sum()), 0.0)


def rank_threshold(N, exponent, cut=None):
    """``N**exponent`` as an exact integer, clipped at the full Schmidt dimension."""
    k = int(N) ** int(exponent)
    if cut is not None:
        full = full_schmidt_dim(cut, N)
        if k > full:
            log.debug("rank threshold %d clipped to full dimension %d", k, full)
            k = full
    return k


@dataclass(frozen=True)
class DecayProfile:
    """Tabulated ``f_A(R) = sum_{alpha > N^(R |dA|)} sigma(alpha)``.

    ``f[0]`` is set to 1 by convention; the measured tail at ``R = 0`` is
    kept in ``f0_measured``.
    """

    R: np.ndarray
    f: np.ndarray
    thresholds: tuple
    f0_measured: float

    def __call__(self, R):
        R = int(R)
        if R < 0:
            raise DomainError("R must be non-negative")
        return float(self.f[R]) if R < self.f.size else 0.0

    def rows(self):
        for R, v in zip(self.R, self.f):
            yield {"R": int(R), "f_A": float(v)}


def decay_profile(spec, R_max=None):
    """Empirical decay profile; extends until the tail vanishes (or to ``R_max``)."""
    b = spec.boundary_size
    if b < 1:
        raise DomainError("decay profile needs a cut with a non-empty boundary")
    values, thresholds = [], []
    R = 0
    while True:
        k = rank_threshold(spec.N, R * b, spec.cut)
        thresholds.append(k)
        values.append(spec.tail(k))
        R += 1
        if R_max is not None and R > R_max:
            break
        if R_max is None and k >= spec.sigma.size:
            break
    f = np.array(values)
    f0 = float(f[0])
    f[0] = 1.0
    # tails are mathematically non-increasing; clean roundoff
    f = np.minimum.accumulate(np.clip(f, 0.0, 1.0))
    return DecayProfile(np.arange(f.size), f, tuple(thresholds), f0)


def truncate(state, cut, R, N=2):
    """Keep the top ``N**(R |dA|)`` Schmidt terms and renormalise.

    Returns ``(psi_R, c_R)`` with ``c_R`` the kept weight; by construction
    ``<psi|psi_R> = sqrt(c_R)`` is real and non-negative.
    """
    if R < 0:
        raise DomainError(f"R must be non-negative, got {R}")
    _check_normalized(state)
    k = rank_threshold(N, R * cut.boundary_size, cut)
    M = _matricize(state, cut, N)
    Uu, sv, Vh = np.linalg.svd(M, full_matrices=False)
    c_R = float((sv[:k] ** 2).sum())
    Mk = (Uu[:, :k] * (sv[:k] / np.sqrt(c_R))) @ Vh[:k]
    n = cut.lattice.n_sites
    A, Ac = cut.region.sites, cut.complement.sites
    inv = np.argsort(A + Ac)
    psi = Mk.reshape((N,) * n).transpose(inv).reshape(-1)
    return psi, c_R


def overlap_P(exact, approx):
    """``|<exact|approx>|**2`` for two normalised states."""
    _check_normalized(exact)
    _check_normalized(approx)
    v = abs(np.vdot(exact, approx)) ** 2
    return float(min(max(v, 0.0), 1.0))


@dataclass(frozen=True)
class TailCheck:
    ok: bool
    margin: float
    partial_sum: float
    rank_cap: int


def tail_rank_cap(cut, R, N=2):
    """``min(N**(5 R |dA|), full Schmidt dimension)``."""
    return rank_threshold(N, 5 * R * cut.boundary_size, cut)


def tail_constraint_check(spec_s, P, rank_cap, tol=1e-10):
    """Check ``sum_{alpha <= rank_cap} sigma_s(alpha) >= P``."""
    head = spec_s.head(rank_cap)
    margin = head - P
    return TailCheck(bool(margin >= -tol), float(margin), head, int(rank_cap))


@dataclass(frozen=True)
class RankReport:
    """Schmidt rank after a boundary unitary, with both bounds.

    ``bound`` is ``k * min(N^|I_A(2R)|, N^|E_A(2R)|)**2`` (the dimension
    count of the matrix-unit expansion on the collar), ``nominal`` is
    ``k * N^(4R |dA|)``; both are clipped at the full Schmidt dimension.
    """

    rank: int
    input_rank: int
    bound: int
    nominal: int
    full_dim: int

    @property
    def ok(self):
        return self.rank <= self.bound

    @property
    def within_nominal(self):
        return self.rank <= self.nominal


def schmidt_rank_of_boundary_action(state, cut, boundary_unitary, R, N=2,
                                    support=None, tol=RANK_TOL):
    """Numerical Schmidt rank of ``boundary_unitary @ state``.

    Parameters
    ----------
    boundary_unitary : ndarray
        Either a full-space matrix or, when ``support`` is given, a matrix
        on the sites ``support`` (which must lie in ``dA(2R)``).
    """
    collar = cut.collar(2 * R)
    n = cut.lattice.n_sites
    if support is None:
        from .evolve import support_violation

        Ub = np.asarray(boundary_unitary)
        if Ub.shape != (N**n, N**n):
            raise StructuralError("full-space boundary unitary has the wrong shape")
        if support_violation(Ub, collar.sites, cut.lattice, N, probes=4) > 1e-8:
            raise StructuralError("boundary unitary is not supported in dA(2R)")
        acted = Ub @ state
    else:
        support = tuple(sorted(int(x) for x in support))
        if not set(support) <= set(collar.sites):
            raise StructuralError(f"support {support} is not inside dA(2R) = {collar.sites}")
        idx = _kernels.gather_table(n, N, support)
        acted = _kernels.apply_left(np.asarray(boundary_unitary), idx, np.asarray(state))
    full = full_schmidt_dim(cut, N)
    k_in = _rank(state, cut, N, tol)
    k_out = _rank(acted, cut, N, tol)
    inner = len(cut.inner_collar(2 * R))
    outer = len(cut.outer_collar(2 * R))
    bound = min(k_in * min(N**inner, N**outer) ** 2, full)
    nominal = min(k_in * N ** (4 * R * cut.boundary_size), full)
    return RankReport(k_out, k_in, bound, nominal, full)


def _rank(state, cut, N, tol):
    sv = np.linalg.svd(_matricize(state, cut, N), compute_uv=False)
    return int(np.count_nonzero(sv > tol))
