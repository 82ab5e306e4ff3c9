import numpy as np
import pytest

from semimediation.data import ModelSpec, build_design, dataset_from_arrays


@pytest.fixture
def laplace_mediation_data():
    """Moderate-size mediation dataset with one covariate and Laplace errors."""
    rng = np.random.default_rng(42)
    n = 200
    t = (rng.random(n) < 0.5).astype(float)
    x1 = rng.standard_normal(n)
    m = 0.3 + 0.5 * t + 0.2 * x1 + rng.laplace(0.0, 1 / np.sqrt(2), n)
    y = 0.1 + 0.4 * t - 0.6 * m + 0.8 * t * m + 0.3 * x1 + rng.laplace(0.0, 1 / np.sqrt(2), n)
    return dataset_from_arrays(T=t, M=m, Y=y, X1=x1)


def make_design(dataset, response, treatment="T", mediator=None, covariates=(), interaction=False):
    spec = ModelSpec(response=response, treatment=treatment, mediator=mediator, covariates=tuple(covariates), interaction=interaction)
    return build_design(dataset, spec), dataset.column(response)
