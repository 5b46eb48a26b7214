import itertools

import numpy as np
import pytest

from lexrl import neural


def finite_difference_gradient(params, features, actions, targets, h=1e-5):
    """Central differences of the minibatch loss, one coordinate at a time."""
    arrays = [a.copy() for a in params.arrays]
    grads = []
    for k, arr in enumerate(arrays):
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = neural.batch_loss(neural.MlpParameters.from_arrays(params.arch, arrays), features, actions, targets)
            arr[idx] = old - h
            down = neural.batch_loss(neural.MlpParameters.from_arrays(params.arch, arrays), features, actions, targets)
            arr[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def lex_score(values, thresholds):
    """Key for the three-case ordering of a single action: more met constraints
    first, then the value of the first unmet constraint, or Q0 if all are met."""
    primary, constraints = values[0], values[1:]
    met = 0
    for q, k in zip(constraints, thresholds):
        if q <= k:
            met += 1
        else:
            break
    deciding = primary if met == len(thresholds) else constraints[met]
    return (-met, deciding)


def exhaustive_lex_action(primary, constraints, thresholds):
    """Best action by scoring every action independently under the ordering."""
    n = len(primary)
    scores = [lex_score([primary[u]] + [c[u] for c in constraints], thresholds) for u in range(n)]
    best = min(scores)
    return scores.index(best), best


@pytest.fixture(scope="session")
def fd_gradient():
    return finite_difference_gradient


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def all_policies(n_states, n_actions):
    return [np.array(p) for p in itertools.product(range(n_actions), repeat=n_states)]


@pytest.fixture(scope="session")
def lex_oracle():
    return exhaustive_lex_action


ACCEPTANCE_RESULTS = {}


@pytest.fixture(scope="session")
def acceptance_report():
    def record(number, passed, detail):
        ACCEPTANCE_RESULTS[number] = (bool(passed), detail)
        return bool(passed)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
