import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from arealaw import _kernels


def _kron_embed(op, keep, n, N=2):
    """Reference: build I x op x I by kron and a site permutation."""
    rest = [i for i in range(n) if i not in keep]
    M = np.kron(op, np.eye(N ** len(rest)))
    perm = list(keep) + rest
    inv = np.argsort(perm)
    T = M.reshape((N,) * (2 * n))
    T = T.transpose(list(inv) + [n + i for i in inv])
    return T.reshape(N**n, N**n)


@pytest.fixture(params=["numpy", "numba"])
def backend(request):
    prev = _kernels.set_backend(request.param)
    yield request.param
    _kernels.set_backend(prev)


@st.composite
def subsystem(draw):
    n = draw(st.integers(1, 6))
    keep = tuple(sorted(draw(st.sets(st.integers(0, n - 1), min_size=1, max_size=n))))
    return n, keep


def _rand(rng, d, m=None, cplx=True):
    m = d if m is None else m
    X = rng.normal(size=(d, m))
    if cplx:
        X = X + 1j * rng.normal(size=(d, m))
    return X


@given(subsystem(), st.booleans())
def test_expand_matches_kron(case, cplx):
    n, keep = case
    rng = np.random.default_rng(len(keep) * 31 + n)
    op = _rand(rng, 2 ** len(keep), cplx=cplx)
    idx = _kernels.gather_table(n, 2, keep)
    ref = _kron_embed(op, keep, n)
    for name in ("numpy", "numba"):
        prev = _kernels.set_backend(name)
        try:
            np.testing.assert_allclose(_kernels.expand(op, idx), ref, atol=1e-13)
        finally:
            _kernels.set_backend(prev)


@given(subsystem())
def test_apply_left_right(case):
    n, keep = case
    rng = np.random.default_rng(n + 7 * len(keep))
    op = _rand(rng, 2 ** len(keep))
    X = _rand(rng, 2**n)
    v = X[:, 0].copy()
    idx = _kernels.gather_table(n, 2, keep)
    big = _kron_embed(op, keep, n)
    for name in ("numpy", "numba"):
        prev = _kernels.set_backend(name)
        try:
            np.testing.assert_allclose(_kernels.apply_left(op, idx, X), big @ X, atol=1e-12)
            np.testing.assert_allclose(_kernels.apply_right(X, op, idx), X @ big, atol=1e-12)
            np.testing.assert_allclose(_kernels.apply_left(op, idx, v), big @ v, atol=1e-12)
        finally:
            _kernels.set_backend(prev)


def test_partial_trace_of_product(backend):
    rng = np.random.default_rng(3)
    a, b = _rand(rng, 4), _rand(rng, 2)
    # sites 0,1 carry a, site 2 carries b
    X = np.kron(a, b)
    idx = _kernels.gather_table(3, 2, (0, 1))
    np.testing.assert_allclose(_kernels.partial_trace(X, idx), a * np.trace(b), atol=1e-12)
    idx2 = _kernels.gather_table(3, 2, (2,))
    np.testing.assert_allclose(_kernels.partial_trace(X, idx2), b * np.trace(a), atol=1e-12)


def test_filter_weights_backends_agree():
    E = np.sort(np.random.default_rng(0).normal(size=40) * 3)
    out = {}
    for name in ("numpy", "numba"):
        prev = _kernels.set_backend(name)
        try:
            out[name] = [_kernels.filter_weights(E, 0.7, sm) for sm in (False, True)]
        finally:
            _kernels.set_backend(prev)
    for a, b in zip(out["numpy"], out["numba"]):
        np.testing.assert_allclose(a, b, atol=1e-15)
        np.testing.assert_allclose(a, -a.T, atol=0)


def test_set_backend_rejects_unknown():
    with pytest.raises(ValueError):
        _kernels.set_backend("cuda")


def test_gather_table_is_readonly():
    idx = _kernels.gather_table(4, 2, (1, 3))
    assert idx.shape == (4, 4)
    assert not idx.flags.writeable
    assert sorted(idx.ravel()) == list(range(16))
