# %% [markdown]
# # The gradient tape
# Operations on tracked tensors record themselves; `Tape.backward` replays
# them in reverse.

# %%
import numpy as np

from attnlut import ops
from attnlut.gradcheck import check_function, run_gradcheck
from attnlut.tensor import Tape, Tensor

w = Tensor(np.array([[0.5, -1.0], [2.0, 0.1]]), requires_grad=True)
x = Tensor(np.array([[1.0, 2.0]]))
with Tape() as tape:
    scores = ops.softmax_rows(ops.matmul(x, w))
    loss = ops.sum(ops.square(scores))
print("loss:", loss.item())
print("dloss/dw:\n", tape.backward(loss)[w])

# %%
# any function built from ops can be checked against central differences
rng = np.random.default_rng(0)
result = check_function("softmax of product", lambda a, b: ops.softmax_rows(ops.matmul(a, b)),
                        [rng.normal(size=(2, 3)), rng.normal(size=(3, 4))], rng)
print(result)

# %%
# the full suite: every op plus end-to-end checks through the model
print(run_gradcheck(seed=0).format())
