"""Index-permutation kernels for operators on a tensor-product space.

Every operator on ``n`` sites of local dimension ``N`` is a dense
``N**n x N**n`` array with site 0 as the most significant digit.  The
kernels below work from a gather table ``idx`` of shape ``(dk, dc)``:
``idx[a, c]`` is the full basis index whose digits on the kept sites
spell ``a`` and whose digits on the remaining sites spell ``c``.

Two interchangeable backends are provided.  The numba backend compiles
explicit loops; the numpy backend uses fancy indexing and ``einsum``.
Set ``AREALAW_DISABLE_NUMBA=1`` (or call :func:`set_backend`) to force
the pure-numpy path.
"""

import os
from functools import lru_cache

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_FALSY = {"", "0", "false", "no", "off"}

_BACKEND = (
    "numba"
    if numba is not None
    and os.environ.get("AREALAW_DISABLE_NUMBA", "0").strip().lower() in _FALSY
    else "numpy"
)


def get_backend():
    return _BACKEND


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"``; returns the previous backend."""
    global _BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and numba is None:
        raise RuntimeError("numba is not importable")
    previous, _BACKEND = _BACKEND, name
    return previous


@lru_cache(maxsize=512)
def gather_table(n, N, keep):
    """Gather table for the sites ``keep`` (a sorted tuple) out of ``n``."""
    keep = tuple(keep)
    rest = tuple(i for i in range(n) if i not in keep)
    full = np.arange(N**n, dtype=np.int64).reshape((N,) * n)
    idx = full.transpose(keep + rest).reshape(N ** len(keep), N ** len(rest))
    idx = np.ascontiguousarray(idx)
    idx.setflags(write=False)
    return idx


# ---------------------------------------------------------------------------
# numpy reference implementations


def _partial_trace_np(X, idx):
    return X[idx[:, None, :], idx[None, :, :]].sum(axis=-1)


def _expand_np(op, idx):
    dk, dc = idx.shape
    out = np.zeros((dk * dc, dk * dc), dtype=op.dtype)
    out[idx[:, None, :], idx[None, :, :]] = op[:, :, None]
    return out


def _apply_left_np(op, idx, X):
    # (embed(op) @ X) row block for every complement value c
    gathered = X[idx]  # (dk, dc, m)
    out = np.empty(X.shape, dtype=np.result_type(op, X))
    out[idx] = np.einsum("ab,bcm->acm", op, gathered)
    return out


def _apply_right_np(X, op, idx):
    gathered = X[:, idx]  # (m, dk, dc)
    out = np.empty(X.shape, dtype=np.result_type(op, X))
    out[:, idx] = np.einsum("mac,ab->mbc", gathered, op)
    return out


def _w_linear_np(omega, gamma):
    a = np.abs(omega)
    safe = np.where(a >= gamma, omega, 1.0)
    return np.where(a >= gamma, -1.0 / safe, -omega / gamma**2)


def _smoothstep_np(x):
    x = np.clip(x, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


def _w_smooth_np(omega, gamma):
    a = np.abs(omega)
    chi = _smoothstep_np((a - 0.5 * gamma) / (0.5 * gamma))
    safe = np.where(a > 0, omega, 1.0)
    return np.where(a > 0, -chi / safe, 0.0)


def _filter_weights_np(E, gamma, smooth):
    omega = E[:, None] - E[None, :]
    return _w_smooth_np(omega, gamma) if smooth else _w_linear_np(omega, gamma)


# ---------------------------------------------------------------------------
# numba kernels

if numba is not None:

    @numba.njit(cache=True)
    def _partial_trace_nb(X, idx):
        dk, dc = idx.shape
        out = np.zeros((dk, dk), dtype=X.dtype)
        for a in range(dk):
            for b in range(dk):
                acc = out[a, b]
                for c in range(dc):
                    acc += X[idx[a, c], idx[b, c]]
                out[a, b] = acc
        return out

    @numba.njit(cache=True)
    def _expand_nb(op, idx):
        dk, dc = idx.shape
        out = np.zeros((dk * dc, dk * dc), dtype=op.dtype)
        for a in range(dk):
            for b in range(dk):
                v = op[a, b]
                if v != 0:
                    for c in range(dc):
                        out[idx[a, c], idx[b, c]] = v
        return out

    @numba.njit(cache=True)
    def _apply_left_nb(op, idx, X, out):
        dk, dc = idx.shape
        m = X.shape[1]
        buf = np.empty(m, dtype=out.dtype)
        for c in range(dc):
            for a in range(dk):
                buf[:] = 0
                for b in range(dk):
                    v = op[a, b]
                    if v != 0:
                        row = idx[b, c]
                        for j in range(m):
                            buf[j] += v * X[row, j]
                out[idx[a, c], :] = buf
        return out

    @numba.njit(cache=True)
    def _apply_right_nb(X, op, idx, out):
        dk, dc = idx.shape
        m = X.shape[0]
        for i in range(m):
            for c in range(dc):
                for a in range(dk):
                    x = X[i, idx[a, c]]
                    if x != 0:
                        for b in range(dk):
                            out[i, idx[b, c]] += x * op[a, b]
        return out

    @numba.njit(cache=True)
    def _w_scalar_nb(omega, gamma, smooth):
        a = abs(omega)
        if not smooth:
            if a >= gamma:
                return -1.0 / omega
            return -omega / (gamma * gamma)
        if a == 0.0:
            return 0.0
        x = (a - 0.5 * gamma) / (0.5 * gamma)
        if x <= 0.0:
            return 0.0
        if x >= 1.0:
            return -1.0 / omega
        p = np.exp(-1.0 / x)
        q = np.exp(-1.0 / (1.0 - x))
        return -(p / (p + q)) / omega

    @numba.njit(cache=True)
    def _filter_weights_nb(E, gamma, smooth):
        n = E.shape[0]
        out = np.empty((n, n))
        for i in range(n):
            out[i, i] = 0.0
            for j in range(i + 1, n):
                w = _w_scalar_nb(E[i] - E[j], gamma, smooth)
                out[i, j] = w
                out[j, i] = -w
        return out


# ---------------------------------------------------------------------------
# dispatching front-ends


def _common(*arrays):
    dt = np.result_type(*arrays)
    return [np.ascontiguousarray(a, dtype=dt) for a in arrays]


def partial_trace(X, idx):
    """Sum over the complement digits: ``out[a, b] = sum_c X[idx[a,c], idx[b,c]]``."""
    if _BACKEND == "numba":
        return _partial_trace_nb(np.ascontiguousarray(X), idx)
    return _partial_trace_np(X, idx)


def expand(op, idx):
    """``op`` on the kept sites tensored with the identity elsewhere."""
    if _BACKEND == "numba":
        return _expand_nb(np.ascontiguousarray(op), idx)
    return _expand_np(op, idx)


def apply_left(op, idx, X):
    """Return ``expand(op, idx) @ X`` without forming the expanded matrix."""
    vector = X.ndim == 1
    X2 = X.reshape(-1, 1) if vector else X
    if _BACKEND == "numba":
        op_, X_ = _common(op, X2)
        out = _apply_left_nb(op_, idx, X_, np.empty_like(X_))
    else:
        out = _apply_left_np(op, idx, X2)
    return out.reshape(X.shape) if vector else out


def apply_right(X, op, idx):
    """Return ``X @ expand(op, idx)`` without forming the expanded matrix."""
    if _BACKEND == "numba":
        X_, op_ = _common(X, op)
        return _apply_right_nb(X_, op_, idx, np.zeros_like(X_))
    return _apply_right_np(X, op, idx)


def filter_weights(E, gamma, smooth=False):
    """Antisymmetric matrix ``w(E_n - E_m)`` of the spectral filter profile."""
    E = np.ascontiguousarray(E, dtype=np.float64)
    if _BACKEND == "numba":
        return _filter_weights_nb(E, float(gamma), bool(smooth))
    return _filter_weights_np(E, float(gamma), bool(smooth))


def filter_profile(omega, gamma, smooth=False):
    """Vectorised filter profile (numpy only; used outside hot loops)."""
    omega = np.asarray(omega, dtype=np.float64)
    return _w_smooth_np(omega, gamma) if smooth else _w_linear_np(omega, gamma)
