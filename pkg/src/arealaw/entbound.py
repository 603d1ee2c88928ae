"""Entropy bounds from tail constraints, and majorisation utilities.

A tail constraint fixes cut points ``0 = s_0 < s_1 < ... < s_K`` and tail
values ``1 = f(0) > f(1) > ... > f(K)`` and asks that the sorted
probability vector ``sigma`` satisfy ``sum_{alpha > s_n} sigma <= f(n)``.
With ``delta(n) = f(n) - f(n+1)`` the block-uniform candidate puts mass
``delta(n)`` uniformly on block ``(s_n, s_{n+1}]``.  Its entropy obeys

    H <= ln s_1 + c1 ln r + h1,   c1 = sum n delta(n),   h1 = -sum delta ln delta,

whenever ``s_{n+1} <= r s_n``.  Series are truncated once ``f < 1e-15``;
the remaining mass is folded into the last block.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError, NoFeasibleR0, StructuralError

log = logging.getLogger(__name__)

SERIES_CUTOFF = 1e-15
SUM_TOL = 1e-10


def _xlogx(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log(x[pos])
    return out


def shannon(p):
    """Shannon entropy in nats with ``0 ln 0 = 0``."""
    return float(-_xlogx(p).sum())


@dataclass(frozen=True, eq=False)
class TailConstraint:
    """Cut points ``s`` (with ``s[0] = 0``), tail values ``f`` (``f[0] = 1``) and ratio ``r``."""

    s: tuple
    f: np.ndarray
    r: float

    def __post_init__(self):
        s = tuple(int(x) for x in self.s)
        f = np.asarray(self.f, dtype=float)
        if len(s) != f.size:
            raise StructuralError("s and f must have the same length")
        if len(s) < 2:
            raise DomainError("need at least s_0 and s_1")
        if s[0] != 0 or s[1] < 1:
            raise DomainError(f"need s_0 = 0 and s_1 >= 1, got {s[:2]}")
        if any(b <= a for a, b in zip(s, s[1:])):
            raise DomainError("cut points must be strictly increasing")
        for n in range(1, len(s) - 1):
            if s[n + 1] > self.r * s[n] * (1 + 1e-12):
                raise DomainError(f"ratio condition s_{n+1} <= r s_{n} fails at n = {n}")
        if abs(f[0] - 1.0) > 1e-12:
            raise DomainError(f"f(0) must be 1, got {f[0]}")
        if np.any(np.diff(f) >= 0):
            raise DomainError("tail values must be strictly decreasing")
        if f[-1] < 0:
            raise DomainError("tail values must be non-negative")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "r", float(self.r))

    @classmethod
    def from_functions(cls, s_of_n, f_of_n, r, n_max=200):
        """Tabulate ``s(n)``, ``f(n)`` until ``f`` drops below the series cutoff."""
        s, f = [0], [1.0]
        for n in range(1, n_max + 1):
            s.append(int(s_of_n(n)))
            f.append(float(f_of_n(n)))
            if f[-1] < SERIES_CUTOFF:
                break
        return cls(tuple(s), np.array(f), r)

    @property
    def K(self):
        return len(self.s) - 1

    @property
    def widths(self):
        return tuple(b - a for a, b in zip(self.s, self.s[1:]))

    @property
    def delta(self):
        """``delta(n)`` for the blocks ``n = 0..K-1``; the last one absorbs ``f(K)``."""
        d = self.f[:-1] - self.f[1:]
        d[-1] += self.f[-1]
        return d

    @property
    def remainder(self):
        """Mass folded into the last block by truncation."""
        return float(self.f[-1])

    def satisfied_by(self, sigma, tol=1e-12):
        """Does the (sorted) vector ``sigma`` satisfy every tail inequality?"""
        p = np.sort(np.asarray(sigma, dtype=float))[::-1]
        tails = np.concatenate([np.cumsum(p[::-1])[::-1], [0.0]])
        for n, sn in enumerate(self.s):
            tail = tails[sn] if sn < p.size else 0.0
            if tail > self.f[n] + tol:
                return False
        return True


@dataclass(frozen=True)
class BlockDistribution:
    """Piecewise-uniform probability vector: ``masses[i]`` spread over ``sizes[i]`` entries."""

    sizes: tuple
    masses: np.ndarray

    @property
    def densities(self):
        return self.masses / np.array(self.sizes, dtype=float)

    @property
    def total(self):
        return float(self.masses.sum())

    @property
    def length(self):
        return int(sum(self.sizes))

    def entropy(self):
        w = np.array(self.sizes, dtype=float)
        m = self.masses
        pos = m > 0
        return float(-(m[pos] * (np.log(m[pos]) - np.log(w[pos]))).sum())

    def dense(self, max_len=10**7):
        if self.length > max_len:
            raise DomainError(f"distribution too long to expand ({self.length} entries)")
        return np.repeat(self.densities, self.sizes)

    def is_sorted(self):
        d = self.densities
        return bool(np.all(np.diff(d) <= 1e-15 * max(1.0, d.max(initial=0.0))))


def maximizing_distribution(tc, n_max=None):
    """Block-uniform ``mu``: mass ``delta(n)`` on block ``n``.

    ``n_max`` truncates the constraint to its first ``n_max`` blocks,
    folding the rest of the mass into the last kept block.
    """
    if n_max is not None and n_max < tc.K:
        tc = TailConstraint(tc.s[: n_max + 1], tc.f[: n_max + 1], tc.r)
    sizes = tc.widths
    if any(w <= 0 for w in sizes):
        raise StructuralError("zero-width block")
    return BlockDistribution(sizes, tc.delta.copy())


def max_entropy_distribution(tc):
    """Entropy maximiser over sorted vectors supported on the first ``s_K`` entries.

    The cumulative function must be concave and pass above
    ``(s_n, 1 - f(n))``; the least concave majorant is found by pooling
    adjacent blocks whose density increases.  It coincides with
    :func:`maximizing_distribution` whenever that one is already sorted.
    """
    blocks = [[w, m] for w, m in zip(tc.widths, tc.delta)]
    stack = []
    for w, m in blocks:
        stack.append([w, m])
        while len(stack) > 1 and stack[-1][1] * stack[-2][0] > stack[-2][1] * stack[-1][0]:
            w2, m2 = stack.pop()
            stack[-1][0] += w2
            stack[-1][1] += m2
    return BlockDistribution(tuple(b[0] for b in stack), np.array([b[1] for b in stack]))


def numeric_max_entropy(tc, x0=None, tol=1e-12):
    """Direct numerical maximisation over the constraint polytope (small ``s_K`` only).

    Maximises ``H(p)`` over ``p`` in the simplex on ``s_K`` entries with
    positional tails ``sum_{alpha > s_n} p <= f(n)``, using SLSQP.
    """
    from scipy.optimize import minimize

    L = tc.s[-1]
    if L > 400:
        raise DomainError(f"polytope dimension {L} too large for the numeric maximiser")
    if x0 is None:
        x0 = max_entropy_distribution(tc).dense()
        x0 = 0.9 * x0 + 0.1 / L

    def negH(p):
        q = np.clip(p, 1e-300, None)
        return float((q * np.log(q)).sum())

    def grad(p):
        return np.log(np.clip(p, 1e-300, None)) + 1.0

    cons = [{"type": "eq", "fun": lambda p: p.sum() - 1.0, "jac": lambda p: np.ones_like(p)}]
    for n in range(1, tc.K):
        sn, fn = tc.s[n], tc.f[n]
        mask = np.zeros(L)
        mask[sn:] = 1.0
        cons.append({"type": "ineq", "fun": lambda p, m=mask, v=fn: v - m @ p, "jac": lambda p, m=mask: -m})
    res = minimize(
        negH, x0, jac=grad, method="SLSQP", bounds=[(0.0, 1.0)] * L,
        constraints=cons, options={"ftol": tol, "maxiter": 2000},
    )
    p = np.clip(res.x, 0.0, None)
    p /= p.sum()
    return shannon(p), p


@dataclass
class EntropyBound:
    bound: float
    ln_s1: float
    c1: float
    h1: float
    ln_r: float
    mu_entropy: float
    max_entropy: float
    remainder: float


def entropy_bound(tc):
    """``ln s_1 + c1 ln r + h1`` together with ``H(mu)`` and the true maximum."""
    if not isinstance(tc, TailConstraint):
        raise StructuralError("entropy_bound needs a TailConstraint")
    d = tc.delta
    n = np.arange(d.size)
    c1 = float((n * d).sum())
    h1 = shannon(d)
    bound = math.log(tc.s[1]) + c1 * math.log(tc.r) + h1
    mu = maximizing_distribution(tc)
    H_mu = mu.entropy()
    H_max = max_entropy_distribution(tc).entropy()
    if tc.remainder > 0:
        log.debug("series truncated at n = %d; remainder %.3e folded", tc.K, tc.remainder)
    if H_mu > bound + 1e-12 or H_max > bound + 1e-12:
        raise AssertionError("maximising distribution exceeds the entropy bound")
    return EntropyBound(bound, math.log(tc.s[1]), c1, h1, math.log(tc.r), H_mu, H_max, tc.remainder)


def h1_decay_diagnostic(delta, t):
    """If ``delta(n) <= t**(-n)`` for all ``n``, return ``1/ln t``; otherwise ``None``."""
    delta = np.asarray(delta, dtype=float)
    if t <= 1:
        return None
    n = np.arange(delta.size)
    if np.all(delta <= t ** (-n.astype(float)) + 1e-15):
        return 1.0 / math.log(t)
    return None


# -- area-law bound ------------------------------------------------------------


@dataclass
class BoundReport:
    """Inputs and value of the area-law bound ``5 (1 + c1) R0 |dA| + h1``.

    ``bound_lnN`` multiplies the first term by ``ln N``, the form that
    follows when ``ln s_1`` and ``ln r`` are kept in nats.
    """

    R0: int
    boundary: int
    N: int
    delta: list
    f: list
    c1: float
    h1: float
    bound: float
    bound_lnN: float
    remainder: float
    measured_entropy: float = None
    notes: list = field(default_factory=list)

    @property
    def margin(self):
        if self.measured_entropy is None:
            return None
        return self.bound - self.measured_entropy

    @property
    def holds(self):
        return self.margin is None or self.margin >= -1e-9

    def to_dict(self):
        d = asdict(self)
        d["margin"] = self.margin
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _table(x):
    """Accept a DecayProfile, mapping ``R -> value`` or a sequence indexed by ``R``."""
    if hasattr(x, "f") and hasattr(x, "R"):
        return {int(R): float(v) for R, v in zip(x.R, x.f)}
    if isinstance(x, dict):
        return {int(k): float(v) for k, v in x.items()}
    return {R: float(v) for R, v in enumerate(x)}


def find_R0(fA, eps):
    """``min R >= 1`` with ``f_A(R) + 2 eps(R) <= 1/2`` over the common table range."""
    fa, ep = _table(fA), _table(eps)
    common = sorted(R for R in set(fa) & set(ep) if R >= 1)
    if not common:
        raise NoFeasibleR0("f_A and eps tables share no R >= 1")
    for R in common:
        if fa[R] + 2.0 * ep[R] <= 0.5:
            return R
    raise NoFeasibleR0(
        "f_A(R) + 2 eps(R) stays above 1/2 for R in "
        f"{common[0]}..{common[-1]}; the bound is vacuous"
    )


def theorem_bound(fA, eps, boundary, N=2, measured_entropy=None):
    """Assemble the area-law bound from a decay profile and an error table.

    Parameters
    ----------
    fA : DecayProfile or mapping or sequence
        ``f_A(R)``; values beyond the table are zero only if the profile
        reached full rank (a profile's last entry) -- otherwise the last
        value is carried as the folded remainder.
    eps : mapping or sequence
        ``eps(R)``, the measured decomposition error.
    boundary : int
        ``|dA|``.
    """
    fa, ep = _table(fA), _table(eps)
    R0 = find_R0(fa, ep)
    notes = []
    f = [1.0]
    n = 1
    while True:
        R = n * R0
        if R not in ep:
            break
        val = fa.get(R, 0.0) + 2.0 * ep[R]
        f.append(val)
        if val < SERIES_CUTOFF:
            break
        n += 1
    # a valid constraint may only be weakened: take the non-increasing envelope from above
    env = np.maximum.accumulate(np.array(f)[::-1])[::-1]
    env[0] = 1.0
    if np.any(env > np.array(f) + 1e-15):
        notes.append("f(n) not monotone; replaced by its non-increasing upper envelope")
    remainder = float(env[-1])
    delta = np.append(env[:-1] - env[1:], 0.0)
    delta[-1] = remainder
    if remainder > 0:
        notes.append(
            f"series truncated at n = {len(env) - 1} (table end); remainder {remainder:.3e} folded"
        )
    idx = np.arange(delta.size)
    c1 = float((idx * delta).sum())
    h1 = shannon(delta)
    base = 5.0 * (1.0 + c1) * R0 * boundary
    return BoundReport(
        R0=int(R0),
        boundary=int(boundary),
        N=int(N),
        delta=[float(x) for x in delta],
        f=[float(x) for x in env],
        c1=c1,
        h1=h1,
        bound=base + h1,
        bound_lnN=base * math.log(N) + h1,
        remainder=remainder,
        measured_entropy=None if measured_entropy is None else float(measured_entropy),
        notes=notes,
    )


# -- majorisation ---------------------------------------------------------------


def _prob(p, name):
    p = np.asarray(p, dtype=float).ravel()
    if abs(p.sum() - 1.0) > SUM_TOL:
        raise DomainError(f"{name} does not sum to 1 (sum {p.sum():.12g})")
    return p


def majorizes(p, q, tol=1e-12):
    """True iff the sorted prefix sums of ``p`` dominate those of ``q``."""
    p, q = _prob(p, "p"), _prob(q, "q")
    L = max(p.size, q.size)
    p = np.sort(np.pad(p, (0, L - p.size)))[::-1]
    q = np.sort(np.pad(q, (0, L - q.size)))[::-1]
    return bool(np.all(np.cumsum(p) >= np.cumsum(q) - tol))


def schur_pairing_check(sigma, p, q, tol=1e-12):
    """Verify ``sum sigma p >= sum sigma q`` for decreasing weights ``sigma``.

    ``p`` and ``q`` are paired with ``sigma`` in the order given.
    """
    sigma = np.asarray(sigma, dtype=float)
    if np.any(np.diff(sigma) > 0):
        raise DomainError("weights must be sorted in decreasing order")
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    L = max(sigma.size, p.size, q.size)
    sigma, p, q = (np.pad(x, (0, L - x.size)) for x in (sigma, p, q))
    return bool(sigma @ p >= sigma @ q - tol)
