"""
Boundary-guided attention by hand
=================================

The context module scores every key position i against every query position j,
normalises the scores over i and adds the weighted value features back onto the
input. Here the arithmetic is small enough to follow.
"""

import numpy as np

from bcanet import tensor as T
from bcanet.config import ModelConfig
from bcanet.model import BCANet
from bcanet.tensor import Tensor

# a two-pixel map with one attention channel
cfg = ModelConfig(widths=(1, 1, 1, 1), unify_channels=1, attn_channels=1, head_channels=1)
model = BCANet(cfg, 2, "bcanet")
for name in ("bca.query", "bca.key"):
    model.params[f"{name}.weight"].data = np.ones((1, 1, 1, 1)) if name == "bca.query" else np.ones((1, 4, 1, 1)) / 4
    model.params[f"{name}.bias"].data = np.zeros(1)

# queries A1 = [2, 1], keys B1 = [1, 0]
a = Tensor(np.array([2.0, 1.0]).reshape(1, 1, 1, 2))
b = Tensor(np.tile(np.array([1.0, 0.0]).reshape(1, 1, 1, 2), (1, 4, 1, 1)))
_, att = model.bca(a, b)
print("attention matrix, columns are queries:\n", att.data[0].round(4))
print("column sums:", att.data[0].sum(axis=0))

# restricting the sum to a boundary set renormalises the weights over it
mask = np.array([[True, False]])
full, _ = model.bca(a, b)
masked = model.bca_masked(a, b, mask)
print("full:  ", full.data.ravel().round(4))
print("masked:", masked.data.ravel().round(4))

# with zeroed value projections the module is an exact identity
for part in ("value1", "value2"):
    model.params[f"bca.{part}.weight"].data[...] = 0.0
    model.params[f"bca.{part}.bias"].data[...] = 0.0
d, _ = model.bca(a, b)
print("identity when values vanish:", np.array_equal(d.data, a.data))
