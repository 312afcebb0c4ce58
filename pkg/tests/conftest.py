import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pluvia import (
    LikelihoodContext,
    ModelParams,
    SimulationConfig,
    simulate,
)
from pluvia.simstudy import (
    DEFAULT_COVARIATE_SPECS,
    reference_params,
    synth_covariates,
)


@pytest.fixture(scope="session")
def ref_params():
    return reference_params()


@pytest.fixture(scope="session")
def small_covariates():
    return synth_covariates(DEFAULT_COVARIATE_SPECS, 300, seed=101)


@pytest.fixture(scope="session")
def small_panel(ref_params, small_covariates):
    return simulate(
        ref_params,
        small_covariates,
        SimulationConfig(
            initial_state=np.zeros(3), n_steps=300, rng_seed=102
        ),
    )


@pytest.fixture(scope="session")
def small_context(ref_params, small_panel, small_covariates):
    return LikelihoodContext(small_panel, small_covariates, ref_params.threshold)


def make_tiny_instance(rng):
    """Random tiny model plus data with wet, dry, and masked cells."""
    m = rng.integers(1, 3)
    d = rng.integers(1, 3)
    n_hours = rng.integers(2, 6)
    contagion = rng.uniform(-0.5, 0.7, size=(m, m))
    coefs = np.concatenate(
        [rng.uniform(-0.5, 0.5, size=1), rng.uniform(-0.3, 0.3, size=d)]
    )
    threshold = rng.uniform(0.3, 1.0)
    covariates = rng.uniform(-1.5, 1.5, size=(n_hours, d))
    values = np.zeros((n_hours, m))
    for t in range(n_hours):
        for i in range(m):
            kind = rng.integers(0, 3)
            if kind == 0:
                values[t, i] = 0.0
            elif kind == 1:
                values[t, i] = threshold + rng.uniform(0.0, 3.0)
            else:
                # strictly inside (0, threshold): a masked cell
                values[t, i] = threshold * rng.uniform(0.05, 0.95)
    params = ModelParams(
        contagion=contagion, volatility_coefs=coefs, threshold=threshold
    )
    return params, values, covariates
