import numpy as np
import pytest

from iceconf import _kernels_py

try:
    from iceconf import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

KERNEL_MODULES = [pytest.param(_kernels_py, id="python")]
if _kernels_c is not None:
    KERNEL_MODULES.append(pytest.param(_kernels_c, id="cython"))


@pytest.fixture(params=KERNEL_MODULES)
def kernels(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_simplex(rng, n, k, scale=2.0):
    z = rng.normal(scale=scale, size=(n, k))
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def central_difference(f, x, h):
    return (f(x + h) - f(x - h)) / (2 * h)


def rel_error(analytic, numeric, floor=1e-3):
    """Elementwise relative error; the floor keeps near-zero entries from dominating."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def joint_gradcheck(method, model, source, x, y, index, params=None, h=1e-5):
    """Max relative error of the analytic gradient against central differences.

    Perturbs every classifier weight and every confidence parameter (table
    rows or head weights) in place.
    """
    from iceconf.model import ConfidenceHead, ConfidenceTable
    from iceconf.objective import backward

    grads = backward(method, model, source, x, y, index, params)
    pairs = list(zip(model.params, grads.model))
    if isinstance(source, ConfidenceTable):
        dense = np.zeros_like(source.raw)
        np.add.at(dense, grads.table[0], grads.table[1])
        pairs.append((source.raw, dense))
    elif isinstance(source, ConfidenceHead):
        pairs += list(zip(source.params, grads.head))

    def loss():
        return backward(method, model, source, x, y, index, params).loss

    worst = 0.0
    for arr, g in pairs:
        flat, gflat = arr.reshape(-1), np.asarray(g).reshape(-1)
        for j in range(flat.size):
            keep = flat[j]
            flat[j] = keep + h
            up = loss()
            flat[j] = keep - h
            down = loss()
            flat[j] = keep
            worst = max(worst, float(rel_error(gflat[j], (up - down) / (2 * h))))
    return worst


_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record and print one pass/fail line for an acceptance criterion."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
        _CRITERIA[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
