"""Flows ``dU/ds = i D_s U`` and the boundary decomposition of the flow unitary.

All integrators use exponential midpoint stepping,
``U <- exp(i h D(s + h/2)) U``, and carry the anti-Hermitian ``K = i D``
internally so that real models stay in real arithmetic.

The decomposition sweep integrates, on one shared grid,

* ``U``: flow of the full filtered generator,
* ``U_A``, ``U_Ac``: flows of the region generators ``D(A)``, ``D(A^c)``
  on their own (small) Hilbert spaces,
* ``W_R``: flow of ``-U^dag D(dA(R)) U`` on the full space, the
  interpolation of ``V = U^dag (U_A x U_Ac)``,
* ``UB_R``, ``WB_R``: the same construction with ``U`` replaced by the
  flow of ``D(dA(2R))`` on the collar space.

The boundary unitary is ``WB_R^dag`` and
``e_meas(R) = ||(U_A x U_Ac) WB_R^dag - U||``.
"""

import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import _kernels
from .errors import DomainError, GeometryWarning, StructuralError
from .hamiltonian import assemble, diagonalize, opnorm
from .quasiflow import GeneratorDecomposition, fit_log_slope

log = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-10


def unitarity_defect(U):
    """``||U^dag U - 1||_F``, an upper bound on the operator-norm defect."""
    G = U.conj().T @ U
    G[np.diag_indices_from(G)] -= 1.0
    return float(np.linalg.norm(G))


def _as_antihermitian(G, hermitian=True):
    """``K = i G`` for Hermitian ``G`` (or ``G`` itself), real when possible."""
    G = np.asarray(G)
    K = 1j * G if hermitian else G
    scale = max(1.0, float(np.abs(K).max(initial=0.0)))
    if np.abs(K + K.conj().T).max(initial=0.0) > HERMITIAN_TOL * scale:
        raise StructuralError("generator sample is not hermitian")
    if np.iscomplexobj(K) and not np.any(K.imag):
        K = K.real
    return K


@dataclass
class FlowResult:
    """Outcome of :func:`integrate_flow`.

    ``U`` is the endpoint, ``snapshots`` maps recorded ``s`` values to
    the unitary there.
    """

    U: np.ndarray
    s_grid: np.ndarray
    defects: np.ndarray
    evaluations: int
    snapshots: dict = field(default_factory=dict)

    @property
    def max_defect(self):
        return float(self.defects.max(initial=0.0))


def integrate_flow(gen, s_end=1.0, steps=200, s_start=0.0, record=(), U0=None,
                   hermitian=True):
    """Integrate ``dU/ds = i gen(s) U`` from ``U(s_start) = U0`` (default identity).

    Parameters
    ----------
    gen : callable
        ``s -> matrix``.  Hermitian generator ``D`` by default; with
        ``hermitian=False`` it must return the anti-Hermitian ``K = iD``.
    steps : int
        Number of uniform midpoint steps.
    record : iterable of float
        Parameter values (on the step grid) at which to keep snapshots.
    """
    if steps < 1:
        raise DomainError(f"need at least one step, got {steps}")
    h = (s_end - s_start) / steps
    grid = s_start + h * np.arange(steps + 1)
    want = _grid_positions(grid, record)
    K = _as_antihermitian(gen(s_start + 0.5 * h), hermitian)
    dim = K.shape[0]
    if U0 is None:
        U = np.eye(dim, dtype=K.dtype)
    else:
        U = np.array(U0, dtype=np.result_type(U0, K))
    snaps = {}
    if 0 in want:
        snaps[want[0]] = U.copy()
    defects = np.empty(steps)
    for k in range(steps):
        if k:
            K = _as_antihermitian(gen(grid[k] + 0.5 * h), hermitian)
        U = sla.expm(h * K) @ U
        defects[k] = unitarity_defect(U)
        if k + 1 in want:
            snaps[want[k + 1]] = U.copy()
    return FlowResult(U, grid, defects, steps, snaps)


def _grid_positions(grid, values, tol=1e-9):
    """Map grid indices to the requested values; every value must be on the grid."""
    out = {}
    h = grid[1] - grid[0] if grid.size > 1 else 1.0
    for v in values:
        k = int(round((v - grid[0]) / h))
        if not (0 <= k < grid.size and abs(grid[k] - v) <= tol * max(1.0, abs(h))):
            raise DomainError(f"s = {v} is not on the integration grid (h = {h:g})")
        out[k] = float(v)
    return out


# -- decomposition -------------------------------------------------------------


@dataclass
class DecompositionReport:
    """Measured boundary decomposition at one ``(s, R)``.

    The three unitaries are stored on their own spaces: ``U_A`` on A,
    ``U_Ac`` on A^c and ``boundary`` on the collar ``dA(2R)``.
    """

    R: int
    s: float
    U_A: np.ndarray
    U_Ac: np.ndarray
    boundary: np.ndarray
    collar: tuple
    e_meas: float
    err_VW: float
    err_WB: float
    unitarity_defect: float
    trivial_geometry: bool = False

    @property
    def triangle_slack(self):
        """``err_VW + err_WB - e_meas`` (non-negative up to roundoff)."""
        return self.err_VW + self.err_WB - self.e_meas


@dataclass
class SweepResult:
    """Every flow of the decomposition sweep, recorded at the requested ``s``."""

    s_values: tuple
    R_values: tuple
    cut: object
    U: dict
    U_A: dict
    U_Ac: dict
    reports: dict
    defects: dict
    steps: int
    seconds: float = 0.0

    def report(self, s, R):
        return self.reports[(_key(s), int(R))]

    def rows(self):
        for (s, R), rep in sorted(self.reports.items()):
            yield rep


def _key(s):
    return round(float(s), 12)


def decomposition_sweep(path, cut, R_list, s_values, filt, steps=200, progress=None):
    """Integrate all decomposition flows on a shared grid of ``steps`` steps on [0, 1].

    Parameters
    ----------
    path : HamiltonianPath
    cut : Cut
    R_list : sequence of int
        Boundary widths; one ``W``/``UB``/``WB`` triple is carried per ``R``.
    s_values : sequence of float
        Points (on the step grid) at which reports are produced.
    filt : FilterFunction
    progress : callable, optional
        Called as ``progress(k, steps)`` after every step.
    """
    t_start = time.perf_counter()
    lat = path.lattice
    n, N = lat.n_sites, path.N
    R_list = tuple(int(R) for R in R_list)
    if any(R < 0 for R in R_list):
        raise DomainError("boundary widths must be non-negative")
    h = 1.0 / steps
    grid = h * np.arange(steps + 1)
    want = _grid_positions(grid, s_values)
    A, Ac = cut.region, cut.complement
    idx_A = _kernels.gather_table(n, N, A.sites)
    idx_Ac = _kernels.gather_table(n, N, Ac.sites)

    collars = {}
    for R in R_list:
        big = cut.collar(2 * R)
        small = cut.collar(R)
        trivial = big.is_full
        if trivial:
            warnings.warn(
                f"dA(2R) covers the whole lattice for R={R}; the boundary "
                "unitary is the full-space flow and the decomposition is trivial",
                GeometryWarning,
                stacklevel=2,
            )
        pos = {x: i for i, x in enumerate(big.sites)}
        collars[R] = {
            "big": big,
            "small": small,
            "trivial": trivial,
            # collar(R) inside the full space and inside the dA(2R) space
            "idx_full": _kernels.gather_table(n, N, small.sites),
            "idx_big": _kernels.gather_table(len(big), N, tuple(pos[x] for x in small.sites)),
        }

    dtype = path._dtype
    dim = path.dim
    U = np.eye(dim, dtype=dtype)
    UA = np.eye(N ** len(A), dtype=dtype)
    UAc = np.eye(N ** len(Ac), dtype=dtype)
    W = {R: np.eye(dim, dtype=dtype) for R in R_list}
    UB, WB = {}, {}
    for R in R_list:
        if not collars[R]["trivial"]:
            d = N ** len(collars[R]["big"])
            UB[R] = np.eye(d, dtype=dtype)
            WB[R] = np.eye(d, dtype=dtype)

    defects = {"U": 0.0, "U_A": 0.0, "U_Ac": 0.0}
    for R in R_list:
        defects[f"W_{R}"] = 0.0
        defects[f"WB_{R}"] = 0.0
    snapU, snapA, snapAc, reports = {}, {}, {}, {}

    def record(k):
        s = want[k]
        snapU[_key(s)] = U.copy()
        snapA[_key(s)] = UA.copy()
        snapAc[_key(s)] = UAc.copy()
        prod = _kernels.apply_left(UAc, idx_Ac, _kernels.expand(UA, idx_A))
        for R in R_list:
            c = collars[R]
            if c["trivial"]:
                WBf = W[R]
                bnd = W[R].conj().T
            else:
                idx_b = _kernels.gather_table(n, N, c["big"].sites)
                WBf = _kernels.expand(WB[R], idx_b)
                bnd = WB[R].conj().T
            e_meas = opnorm(prod @ WBf.conj().T - U)
            err_VW = opnorm(prod - U @ W[R])
            err_WB = opnorm(W[R] - WBf)
            defect = max(
                defects["U"], defects["U_A"], defects["U_Ac"],
                defects[f"W_{R}"], defects[f"WB_{R}"],
            )
            reports[(_key(s), R)] = DecompositionReport(
                R, s, UA.copy(), UAc.copy(), bnd.copy(), c["big"].sites,
                e_meas, err_VW, err_WB, defect, c["trivial"],
            )

    if 0 in want:
        record(0)
    for k in range(steps):
        s_mid = grid[k] + 0.5 * h
        dec = GeneratorDecomposition(
            path, s_mid, filt, spectral=diagonalize(assemble(path, s_mid), s=s_mid)
        )
        K = dec.full(ah=True)
        E_half = sla.expm(0.5 * h * K)
        U_mid = E_half @ U
        U = E_half @ U_mid
        UA = sla.expm(h * dec.region(A, local=True, ah=True)) @ UA
        UAc = sla.expm(h * dec.region(Ac, local=True, ah=True)) @ UAc
        for R in R_list:
            c = collars[R]
            KX = dec.coupling(cut, R, local=True, ah=True)
            EX = sla.expm(-h * KX)
            # W <- U_mid^dag exp(-h K_X) U_mid W, with K_X local on dA(R)
            W[R] = U_mid.conj().T @ _kernels.apply_left(EX, c["idx_full"], U_mid @ W[R])
            defects[f"W_{R}"] = max(defects[f"W_{R}"], unitarity_defect(W[R]))
            if c["trivial"]:
                defects[f"WB_{R}"] = defects[f"W_{R}"]
                continue
            KB = dec.region(c["big"], local=True, ah=True)
            EB = sla.expm(0.5 * h * KB)
            UB_mid = EB @ UB[R]
            UB[R] = EB @ UB_mid
            WB[R] = UB_mid.conj().T @ _kernels.apply_left(EX, c["idx_big"], UB_mid @ WB[R])
            defects[f"WB_{R}"] = max(
                defects[f"WB_{R}"], unitarity_defect(WB[R]), unitarity_defect(UB[R])
            )
        defects["U"] = max(defects["U"], unitarity_defect(U))
        defects["U_A"] = max(defects["U_A"], unitarity_defect(UA))
        defects["U_Ac"] = max(defects["U_Ac"], unitarity_defect(UAc))
        if k + 1 in want:
            record(k + 1)
        if progress is not None:
            progress(k + 1, steps)
    s_sorted = tuple(sorted(float(v) for v in s_values))
    return SweepResult(
        s_sorted, R_list, cut, snapU, snapA, snapAc, reports, defects, steps,
        time.perf_counter() - t_start,
    )


def decompose_flow(path, cut, R, s, filt, steps=200):
    """Boundary decomposition at a single ``(s, R)``; ``s`` must lie on the step grid."""
    sweep = decomposition_sweep(path, cut, [R], [s], filt, steps=_steps_to(s, steps))
    return sweep.report(s, R)


def _steps_to(s, steps):
    """Steps on [0, 1] are kept at ``steps``; ``s`` is snapped to that grid."""
    if not 0.0 <= s <= 1.0:
        raise DomainError(f"path parameter must lie in [0, 1], got {s}")
    return steps


@dataclass
class ErrorScan:
    """``e_meas`` against ``R`` at fixed ``s`` with a descriptive log-linear fit."""

    s: float
    R: np.ndarray
    e_meas: np.ndarray
    err_VW: np.ndarray
    err_WB: np.ndarray
    defects: np.ndarray
    slope: float
    note: str = ""

    @property
    def monotone(self):
        return bool(np.all(np.diff(self.e_meas) < 0))

    def rows(self):
        for i in range(self.R.size):
            yield {
                "R": int(self.R[i]),
                "s": self.s,
                "e_meas": float(self.e_meas[i]),
                "err_VW": float(self.err_VW[i]),
                "err_Wboundary": float(self.err_WB[i]),
                "unitarity_defect": float(self.defects[i]),
            }


def error_scan(path, cut, s, R_list, filt, steps=200, sweep=None):
    """Tabulate the decomposition error over ``R_list`` and fit ``ln e_meas`` vs ``R``.

    The fitted slope is descriptive only; it is ``nan`` when fewer than
    two ``R`` values have a non-zero error.
    """
    if sweep is None:
        sweep = decomposition_sweep(path, cut, R_list, [s], filt, steps=steps)
    reps = [sweep.report(s, R) for R in R_list]
    R = np.array([r.R for r in reps], dtype=int)
    e = np.array([r.e_meas for r in reps])
    slope = fit_log_slope(R, e)
    note = "" if math.isfinite(slope) else "fewer than two usable R values; no fit"
    return ErrorScan(
        float(s), R, e,
        np.array([r.err_VW for r in reps]),
        np.array([r.err_WB for r in reps]),
        np.array([r.unitarity_defect for r in reps]),
        slope, note,
    )


def fit_error_model(s_values, R_values, e_values):
    """Fit ``ln e = a + b s - c R`` by least squares (descriptive constants).

    Returns ``(a, b, c)``; ``nan`` entries when the data are insufficient.
    """
    s = np.asarray(s_values, dtype=float)
    R = np.asarray(R_values, dtype=float)
    e = np.asarray(e_values, dtype=float)
    keep = e > 0
    if keep.sum() < 3:
        return (math.nan, math.nan, math.nan)
    X = np.column_stack([np.ones(keep.sum()), s[keep], -R[keep]])
    coef, *_ = np.linalg.lstsq(X, np.log(e[keep]), rcond=None)
    return tuple(float(c) for c in coef)


# -- support certification -------------------------------------------------


def support_violation(X, support, lattice, N=2, probes=20, rng=None, host=None):
    """``max ||[X, O]|| / ||O||`` over random ``O`` on the complement of ``support``.

    ``X`` acts on the full lattice space (or on ``host``'s space when a
    host region is given).  Commutator norms are bounded from above by the
    Frobenius norm, so a small value certifies the support.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    sites = tuple(range(lattice.n_sites)) if host is None else tuple(host)
    outside = tuple(i for i, x in enumerate(sites) if x not in set(support))
    if not outside:
        return 0.0
    idx = _kernels.gather_table(len(sites), N, outside)
    dk = idx.shape[0]
    worst = 0.0
    for _ in range(probes):
        O = rng.normal(size=(dk, dk)) + 1j * rng.normal(size=(dk, dk))
        O /= opnorm(O)
        C = _kernels.apply_right(X, O, idx) - _kernels.apply_left(O, idx, X)
        worst = max(worst, float(np.linalg.norm(C)))
    return worst
