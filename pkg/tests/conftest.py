import pytest

from stopbp.model import load_model

M1_TEXT = """
{
  "version": 1,
  "types": ["a"],
  "offspring": [
    [{"counts": [0], "p": 0.7}, {"counts": [2], "p": 0.3}]
  ],
  "stopping_set": [[2]]
}
"""

M2_TEXT = """
{
  "version": 1,
  "types": ["a", "b"],
  "offspring": [
    [{"counts": [0, 0], "p": 0.5}, {"counts": [0, 1], "p": 0.3}, {"counts": [2, 0], "p": 0.2}],
    [{"counts": [0, 0], "p": 0.6}, {"counts": [1, 0], "p": 0.4}]
  ],
  "stopping_set": [[1, 0]]
}
"""

SUPERCRITICAL_TEXT = """
{
  "version": 1,
  "types": ["a"],
  "offspring": [
    [{"counts": [0], "p": 0.2}, {"counts": [2], "p": 0.8}]
  ],
  "stopping_set": [[2]]
}
"""


@pytest.fixture(scope="session")
def m1_text():
    return M1_TEXT


@pytest.fixture(scope="session")
def m2_text():
    return M2_TEXT


@pytest.fixture(scope="session")
def m1():
    model, stopping = load_model(M1_TEXT)
    return model, stopping


@pytest.fixture(scope="session")
def m2():
    model, stopping = load_model(M2_TEXT)
    return model, stopping


@pytest.fixture(scope="session")
def supercritical():
    model, stopping = load_model(SUPERCRITICAL_TEXT)
    return model, stopping
