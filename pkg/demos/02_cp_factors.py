# %% [markdown]
# # CP-factored LUTs
# Instead of 3 N^3 grid values, each output channel is a sum of X rank-1
# outer products of per-axis vectors, 9 X N values in all.

# %%
import numpy as np

from attnlut.cp import param_count, reconstruct
from attnlut.lut import apply_trilinear
from attnlut.model import identity_cp_bias
from attnlut.tensor import Tensor

for x, n in [(1, 9), (15, 33), (15, 65)]:
    cp_values, dense_values = param_count(x, n)
    print(f"X={x:>2} N={n:>2}: {cp_values:>7,} CP values vs {dense_values:>9,} dense ({dense_values / cp_values:.0f}x)")

# %%
# bank rows 0-2: red-axis factors, 3-5: green-axis, 6-8: blue-axis (one row per output channel)
rng = np.random.default_rng(1)
bank = rng.normal(0, 0.3, (9, 4, 9))
lut = reconstruct(Tensor(bank))
print("grid shape:", lut.grid.shape)
c, i, j, k = 1, 2, 3, 4
direct = sum(bank[c, x, i] * bank[3 + c, x, j] * bank[6 + c, x, k] for x in range(4))
print("grid value vs explicit sum:", lut.values[c, i, j, k], direct)

# %%
# the model's starting bank: zero own-axis factors, so the residual LUT is 0,
# while the other factors are nonzero and carry gradient
start = identity_cp_bias(n=9, x=4).reshape(9, 9)[:, None, :].repeat(4, axis=1)
print("start residual is zero:", not reconstruct(Tensor(start)).values.any())

# %%
# a residual LUT is added to the input: out = I + residual(I)
image = rng.uniform(0, 1, (2, 2, 3))
print(image + apply_trilinear(lut, image).data)
