import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bnac.model import BayesianNetwork, Cpt, Variable

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def _binary(vid, name, p1):
    return Cpt(vid, (), np.array([[p1, 1.0 - p1]]))


@pytest.fixture
def abc_net() -> BayesianNetwork:
    """Two binary roots feeding a ternary child, no determinism."""
    variables = [
        Variable(0, "A", ("a1", "a2")),
        Variable(1, "B", ("b1", "b2")),
        Variable(2, "C", ("c1", "c2", "c3")),
    ]
    cpts = {
        0: _binary(0, "A", 0.6),
        1: _binary(1, "B", 0.3),
        2: Cpt(2, (0, 1), np.array([
            [0.1, 0.2, 0.7],
            [0.5, 0.25, 0.25],
            [0.3, 0.3, 0.4],
            [0.2, 0.5, 0.3],
        ])),
    }
    return BayesianNetwork(variables, cpts)


@pytest.fixture
def det3_net() -> BayesianNetwork:
    """Deterministic ternary gate: c1 only from (a1,b1), c2 from the mixed
    rows, c3 only from (a2,b2); uniform priors."""
    variables = [
        Variable(0, "A", ("a1", "a2")),
        Variable(1, "B", ("b1", "b2")),
        Variable(2, "C", ("c1", "c2", "c3")),
    ]
    cpts = {
        0: _binary(0, "A", 0.5),
        1: _binary(1, "B", 0.5),
        2: Cpt(2, (0, 1), np.array([
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ])),
    }
    return BayesianNetwork(variables, cpts)


@pytest.fixture
def selector_net() -> BayesianNetwork:
    """Binary child copying parent A when S=s1 and parent B when S=s2."""
    variables = [
        Variable(0, "A", ("a1", "a2")),
        Variable(1, "B", ("b1", "b2")),
        Variable(2, "C", ("c1", "c2")),
        Variable(3, "S", ("s1", "s2")),
    ]
    rows = []
    for a in range(2):
        for b in range(2):
            for s in range(2):
                c = a if s == 0 else b
                row = [0.0, 0.0]
                row[c] = 1.0
                rows.append(row)
    cpts = {
        0: _binary(0, "A", 0.5),
        1: _binary(1, "B", 0.5),
        2: Cpt(2, (0, 1, 3), np.array(rows)),
        3: _binary(3, "S", 0.6),
    }
    return BayesianNetwork(variables, cpts)
