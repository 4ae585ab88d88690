import numpy as np
import pytest

from sparg import autodiff as ad
from sparg.data import SiteSpec, SyntheticConfig, generate_synthetic, make_folds


def numeric_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of the scalar function ``f`` at ``x``."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        up = f(x)
        x[idx] = old - h
        down = f(x)
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def rel_err(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))))


@pytest.fixture(autouse=True)
def _clean_tape():
    ad.get_tape().clear()
    yield
    ad.get_tape().clear()


SMALL = SyntheticConfig(
    k=6,
    sites=(SiteSpec("a", 30), SiteSpec("b", 30), SiteSpec("o", 20, ood=True)),
    n_informative=3, n_nuisance=4, delta=0.8, seed=0,
)


@pytest.fixture(scope="session")
def small_dataset():
    return generate_synthetic(SMALL)


@pytest.fixture(scope="session")
def small_fold(small_dataset):
    return make_folds(small_dataset, seed=0)[0]
