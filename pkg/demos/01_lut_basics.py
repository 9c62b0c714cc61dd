# %% [markdown]
# # 3D LUT basics
# A LUT of size N stores a 3 x N x N x N grid; a pixel is looked up by blending
# the 8 lattice points around it.

# %%
import tempfile
from pathlib import Path

import numpy as np

from attnlut.lut import Lut3D, apply_trilinear, constant_lut, identity_lut, read_cube, write_cube

rng = np.random.default_rng(0)
image = rng.uniform(0, 1, (4, 6, 3))

# %%
ident = identity_lut(17)
ident.grid.shape  # (3, 17, 17, 17)
print("identity max error:", np.abs(apply_trilinear(ident, image).data - image).max())

# %%
# a constant LUT ignores its input
print(apply_trilinear(constant_lut(5, (0.2, 0.4, 0.6)), image).data[0, 0])

# %%
# a "warm" grade: lift red, cut blue, built directly on the lattice
warm = ident.values.copy()
warm[0] = np.clip(warm[0] * 1.1 + 0.03, 0, 1)
warm[2] = warm[2] * 0.9
graded = apply_trilinear(Lut3D.from_array(warm), image).data
print("mean shift per channel:", (graded - image).mean(axis=(0, 1)).round(4))

# %%
# .cube files interoperate with grading tools; red index varies fastest
with tempfile.TemporaryDirectory() as d:
    path = Path(d) / "warm.cube"
    write_cube(Lut3D.from_array(warm), path, title="warm")
    print(path.read_text().splitlines()[:6])
    back = read_cube(path)
    print("round-trip max error:", np.abs(back.values - warm).max())
