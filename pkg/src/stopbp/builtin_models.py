"""Built-in example models used by the verification battery and the docs.

``m1``: one type, each particle leaves 0 children (p = 0.7) or 2 (p = 0.3);
stopping set {(2)}.  Subcritical with mean 0.6.

``m2``: two types; type 1 leaves nothing (0.5), one type-2 child (0.3), or
two type-1 children (0.2); type 2 leaves nothing (0.6) or one type-1 child
(0.4); stopping set {(1, 0)}.  Mean matrix [[0.4, 0.3], [0.4, 0.0]] with
Perron root 0.6.
"""

from stopbp.model import BranchingModel, StoppingSet, load_model

M1_TEXT = """\
{
  "version": 1,
  "types": ["a"],
  "offspring": [
    [{"counts": [0], "p": 0.7}, {"counts": [2], "p": 0.3}]
  ],
  "stopping_set": [[2]]
}
"""

M2_TEXT = """\
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


def builtin(name: str) -> tuple[BranchingModel, StoppingSet]:
    texts = {"m1": M1_TEXT, "m2": M2_TEXT}
    if name not in texts:
        raise KeyError(f"unknown builtin model {name!r}; have {sorted(texts)}")
    model, stopping = load_model(texts[name])
    assert stopping is not None
    return model, stopping
