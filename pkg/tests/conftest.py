import numpy as np
import pytest

from bilevel_vr.problems import (
    HyperCleanProblem,
    SyntheticDataset,
    SyntheticProblem,
    make_hyperclean_synthetic,
    make_synthetic,
)

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def record_criterion():
    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


@pytest.fixture(scope="session")
def small_synthetic():
    train, val = make_synthetic(60, 5, reg=0.5, seed=3)
    return SyntheticProblem(train, val)


@pytest.fixture(scope="session")
def small_hyperclean():
    data = make_hyperclean_synthetic(40, 30, 50, 4, 3, 0.3, seed=5)
    return HyperCleanProblem(data)


@pytest.fixture(scope="session")
def binary_hyperclean():
    data = make_hyperclean_synthetic(30, 20, 20, 3, 2, 0.3, seed=6)
    return HyperCleanProblem(data)


def one_d_problem(train_label=1.0, val_label=1.0, reg=0.5):
    """1-D synthetic instance: a single intercept feature u = 1 in each split."""
    train = SyntheticDataset(np.ones((1, 1)), np.array([train_label]), reg)
    val = SyntheticDataset(np.ones((1, 1)), np.array([val_label]), reg)
    return SyntheticProblem(train, val)


def random_point(problem, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    return (
        scale * rng.normal(size=problem.dim_x),
        scale * rng.normal(size=problem.dim_y),
        scale * rng.normal(size=problem.dim_y),
    )
