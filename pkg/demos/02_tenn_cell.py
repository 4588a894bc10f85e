"""
A teNN cell: reference, attention and activation
=================================================

A cell compares an input series with a learned reference R. The attention
matrix At sets a per-sample, per-dimension bandwidth and the activation
matrix Ac gates the cells of the alignment grid. With Ac = 1 and a constant
At = nu the cell is exactly KDTW.
"""

import numpy as np

from tenn.cell import TeNNCell, cell_forward, cell_gradients, finite_difference_gradients
from tenn.elastic import kdtw

rng = np.random.default_rng(1)
n, d = 12, 2
R = rng.normal(size=(n, d))
X = R + 0.3 * rng.normal(size=(n, d))

# %%
# The reduction to KDTW.
cell = TeNNCell.initial(R, nu0=0.5, alpha0=1.0, label="demo")
print("cell output :", cell_forward(cell, X))
print("KDTW        :", kdtw(R, X, nu=0.5))

# %%
# Pruning the activation outside a band carves a corridor into the grid.
band = TeNNCell.initial(R, nu0=0.5, label="demo", corridor=2)
print("banded cell :", cell_forward(band, X))

# %%
# Gradients come from one reversed and one forward pass over the grid.
# Finite differences confirm them.
g = cell_gradients(cell, X).absolute()
fd = finite_difference_gradients(cell, X, h=1e-5)
for name, a, b in zip(("R", "At", "Ac"), g, fd):
    rel = np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-9))
    print(f"d z / d {name:2s}: max relative deviation {rel:.1e}")
