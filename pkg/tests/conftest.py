import numpy as np
import pytest

import pretestcov as pc

CS = pc.CorrStructure.COMPOUND_SYMMETRY
AR1 = pc.CorrStructure.AR1


def make_config(**overrides):
    """Baseline demonstration scenario defaults; override freely."""
    kw = dict(
        n=100,
        t=3,
        structure=CS,
        rho=0.3,
        tau=0.0,
        psi=1.0 / 3.0,
        alpha=0.05,
        alpha_tilde=0.05,
        estimator=pc.VarianceEstimator.UNBIASED,
    )
    kw.update(overrides)
    return pc.ModelConfig(**kw)


@pytest.fixture
def hand_x():
    return np.array([[0.0, 1.0], [0.0, 2.0]])


@pytest.fixture
def hand_y():
    return np.array([[0.0, 1.0], [0.0, 4.0]])
