import numpy as np
import pytest

from prunenet import kernels


def test_eigvals_diagonal(backend):
    a = np.diag([3.0, -1.0, 2.0])
    np.testing.assert_allclose(kernels.sym_eigvals(a), [-1.0, 2.0, 3.0], atol=1e-14)


def test_eigvals_one_by_one(backend):
    assert kernels.sym_eigvals(np.array([[4.5]])).tolist() == [4.5]


@pytest.mark.parametrize("n", [2, 3, 7, 40, 129])
def test_eigvals_match_lapack(backend, n):
    rng = np.random.default_rng(n)
    x = rng.standard_normal((n, n))
    a = x + x.T
    got = kernels.sym_eigvals(a)
    ref = np.linalg.eigvalsh(a)
    np.testing.assert_allclose(got, ref, rtol=0, atol=1e-11 * np.abs(ref).max())


def test_eigvals_repeated(backend):
    q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((6, 6)))
    a = q @ np.diag([1.0, 1.0, 1.0, 5.0, 5.0, 0.0]) @ q.T
    np.testing.assert_allclose(kernels.sym_eigvals(a), [0, 1, 1, 1, 5, 5], atol=1e-12)


def test_eigvals_rejects_non_square(backend):
    with pytest.raises(ValueError):
        kernels.sym_eigvals(np.zeros((2, 3)))


def test_backends_agree_on_statistics():
    from prunenet import _backend

    rng = np.random.default_rng(9)
    pairs = []
    for _ in range(50):
        a = np.sort(np.round(rng.standard_normal(rng.integers(1, 30)), 1))
        b = np.sort(np.round(rng.standard_normal(rng.integers(1, 30)) + 0.3, 1))
        pairs.append((a, b))
    results = {}
    for name in ("numba", "numpy") if _backend.HAS_NUMBA else ("numpy",):
        prev = _backend.set_backend(name)
        try:
            results[name] = [(kernels.ks_statistic(a, b), kernels.ad_statistic(a, b)) for a, b in pairs]
        finally:
            _backend.set_backend(prev)
    if len(results) == 2:
        np.testing.assert_allclose(results["numba"], results["numpy"], rtol=1e-12, atol=1e-14)


def test_set_backend_validates():
    from prunenet import _backend

    with pytest.raises(ValueError):
        _backend.set_backend("fortran")
