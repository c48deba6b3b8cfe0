import numpy as np
import pytest

from ivselect import (
    DesignData,
    HyperParams,
    InstrumentMap,
    generate_setup1,
    normalize_instruments,
)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture
def small_design(rng):
    """Random normalized design with a pairwise instrument map (n=30, p=6, q=12)."""
    data, truth, imap = generate_setup1(30, 6, 3, 0.5, rng)
    return data, truth, imap


@pytest.fixture
def small_hyper():
    return HyperParams(lam=30.0, rho_sq=1.3, gamma=0.4, u=1.0, s_bar=3)


def random_design(rng, n, p, q, groups=None):
    """Unstructured Gaussian design, normalized, with an explicit map."""
    data = normalize_instruments(DesignData(
        y=rng.standard_normal(n),
        X=rng.standard_normal((n, p)),
        W=rng.standard_normal((n, q)),
    ))
    if groups is None:
        per = q // p
        groups = [np.arange(per * j, per * (j + 1)) for j in range(p)]
    return data, InstrumentMap(groups=groups, q=q)
