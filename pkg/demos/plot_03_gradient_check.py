"""
Checking gradients against finite differences
=============================================

Every backward rule in the tensor engine is verified by central differences in
double precision. The same harness drives ``bcanet gradcheck``.
"""

import numpy as np

from bcanet import functional as fn
from bcanet import tensor as T
from bcanet.gradcheck import check_gradients, run_scope

rng = np.random.default_rng(0)
x = T.parameter(rng.standard_normal((1, 2, 6, 6)))
w = T.parameter(rng.standard_normal((3, 2, 3, 3)))


def loss():
    y = fn.conv2d(x, w, stride=2, dilation=1, padding=1)
    return T.mean(T.relu(fn.bilinear_resize(y, 5, 5)))


for report in check_gradients(loss, {"x": x, "w": w}):
    print(f"{report.name}: max relative error {report.max_rel_err:.2e} over {report.n_checked} entries")

# the whole network and all four loss terms on a 3x16x16 input
reports = run_scope("full")
print("full model: worst", max(r.max_rel_err for r in reports), "over", sum(r.n_checked for r in reports), "entries")
