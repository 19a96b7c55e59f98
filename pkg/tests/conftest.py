"""Shared fixtures.  The expensive artifacts (datasets, trained models,
transport runs) are built once per session and reused by the module
tests and the acceptance suite."""

import numpy as np
import pytest

from slabmn.entropy_core import ClosureConfig
from slabmn.kinetic_solver import run_case
from slabmn.quadrature import build_rule
from slabmn.sampler import SamplerConfig, generate
from slabmn.surrogate import TrainSettings, train

TRAIN_EPOCHS = 500
TRAIN_SEED = 3
DATA_SEED = 7
HIDDEN = (16, 16)


@pytest.fixture(scope="session")
def rule64():
    return build_rule(64)


@pytest.fixture(scope="session")
def dataset_m1_g01():
    cfg = SamplerConfig(order=1, gamma=1e-2, norm_bound=40.0, tau=1e-4,
                        count=10_000, seed=DATA_SEED)
    return generate(cfg)


@pytest.fixture(scope="session")
def dataset_m1_g0():
    cfg = SamplerConfig(order=1, gamma=0.0, norm_bound=40.0, tau=1e-4,
                        count=10_000, seed=DATA_SEED)
    return generate(cfg)


@pytest.fixture(scope="session")
def icnn_m1_g01(dataset_m1_g01):
    settings = TrainSettings(epochs=TRAIN_EPOCHS, hidden=HIDDEN, seed=TRAIN_SEED)
    return train(dataset_m1_g01, "icnn", settings)


@pytest.fixture(scope="session")
def icnn_m1_g0(dataset_m1_g0):
    settings = TrainSettings(epochs=TRAIN_EPOCHS, hidden=HIDDEN, seed=TRAIN_SEED)
    return train(dataset_m1_g0, "icnn", settings)


@pytest.fixture(scope="session")
def dataset_m1_transport():
    """Moderate-norm training set for the solver-facing surrogate; the
    transport states stay well inside the reach of |beta| <= 8."""
    cfg = SamplerConfig(order=1, gamma=1e-2, norm_bound=8.0, tau=1e-4,
                        count=10_000, seed=21)
    return generate(cfg)


@pytest.fixture(scope="session")
def icnn_m1_transport(dataset_m1_transport):
    settings = TrainSettings(epochs=900, hidden=(32, 32), seed=5)
    return train(dataset_m1_transport, "icnn", settings)


@pytest.fixture(scope="session")
def plane_newton_run():
    return run_case("plane_source", "mn_newton", order=1, gamma=1e-2, t_final=0.5)


@pytest.fixture(scope="session")
def plane_icnn_run(icnn_m1_transport):
    return run_case("plane_source", "mn_network", order=1, gamma=1e-2,
                    trained=icnn_m1_transport, t_final=0.5)


@pytest.fixture(scope="session")
def closure_batch(rule64):
    """Realizable inputs and tight solves for N in {1,2,3}, four gammas.

    Inputs are generated through the gamma = 0 reconstruction map from
    multipliers in a moderate ball, so they are strictly realizable;
    each (N, gamma) pair is then solved to gradient tolerance 1e-12.
    """
    from slabmn.entropy_core import solve_reduced_batch
    from slabmn.moment_basis import basis_matrix

    rng = np.random.default_rng(2024)
    gammas = (0.0, 1e-3, 1e-2, 1e-1)
    radii = {1: 8.0, 2: 5.0, 3: 4.0}
    out = {}
    for order, radius in radii.items():
        ms = basis_matrix(order, rule64.nodes)[1:]
        direction = rng.standard_normal((1000, order))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        betas = direction * (radius * rng.uniform(size=(1000, 1)) ** (1.0 / order))
        e = np.exp(betas @ ms) * rule64.weights
        w = (e @ ms.T) / e.sum(axis=1, keepdims=True)
        u0 = rng.uniform(0.1, 10.0, size=1000)
        for gamma in gammas:
            config = ClosureConfig(order=order, gamma=gamma).with_grad_tol(1e-12)
            batch = solve_reduced_batch(w, config, rule=rule64)
            assert not np.any(batch.failed)
            out[(order, gamma)] = {"w": w, "u0": u0, "batch": batch}
    return out
