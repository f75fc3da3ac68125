"""
Tensors, backward passes, and gradient checking
===============================================

The package trains its forecaster with a small reverse-mode autodiff
engine built on numpy float64 arrays. This script walks through the
Tensor type, a hand-checked backward pass, and the finite-difference
checker that the test suite leans on.
"""

import numpy as np

from pvforecast import autodiff as ad
from pvforecast.autodiff import Tensor

# A Tensor wraps a float64 array. Only leaves created with
# requires_grad=True accumulate gradients.
x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]), requires_grad=True)
w = Tensor(np.array([[0.5], [-1.0]]), requires_grad=True)

# Ops build a graph as they run. mse() reduces to a scalar.
pred = x @ w
target = Tensor(np.array([[0.0], [1.0]]))
loss = ad.mse(pred, target)
print("loss:", loss.item())

# backward() fills .grad on every leaf that requires it.
loss.backward()
print("dL/dw:\n", w.grad)
print("dL/dx:\n", x.grad)

# Hand check for one coordinate: L = mean((x@w - t)^2), so
# dL/dw[0] = mean over rows of 2*(pred - t)*x[:,0].
residual = x.data @ w.data - target.data
by_hand = (2.0 * residual * x.data[:, :1]).mean()
print("dL/dw[0] by hand:", by_hand, "engine:", w.grad[0, 0])

# A graph is consumed by backward(); a second call raises. Rebuild the
# graph instead of reusing it.
try:
    loss.backward()
except ad.GraphError as exc:
    print("second backward refused:", exc)

# grad_check probes a scalar function of one leaf with central
# differences and reports the worst relative error.
def f(t: Tensor) -> Tensor:
    return ((t @ w.detach()).relu() * Tensor(np.array([[2.0], [3.0]]))).sum()

report = ad.grad_check(f, x.data + 0.1)
print("grad check passed:", bool(report.passed),
      "max rel error:", float(report.max_rel_error))

# The masked softmax is the op that makes the forecaster causal: the
# mask puts a large negative sentinel on future positions, and the
# shifted exponentials underflow to exact zeros there.
scores = Tensor(np.zeros((1, 3, 3)))
mask = np.triu(np.full((3, 3), -1e9), k=1)
weights = ad.masked_softmax(scores, mask)
print("attention rows (upper triangle is exactly zero):\n", weights.data[0])
