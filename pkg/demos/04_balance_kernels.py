"""
Balance kernels on unit-distance configurations
================================================

Edge weights ``a_ij`` on unit contacts balance when every point has
``sum_j a_ij (Q_i - Q_j) = 0``.  Small clusters admit no nonzero balanced
weights; the hexagon with its centre does.
"""
import numpy as np

from spikecluster.equilibrium import (
    balance_kernel,
    contact_graph,
    dilation_value,
    hexagon_center,
    search_equilibria,
    sign_constrained_kernel,
)

tri = contact_graph([[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]])
print("triangle:", tri.n_edges, "edges, kernel dim", balance_kernel(tri).dim)

hexc = contact_graph(hexagon_center())
bk = balance_kernel(hexc)
a = bk.basis[0] / np.abs(bk.basis[0]).max()
print("hexagon+center:", hexc.n_edges, "edges, kernel dim", bk.dim)
print("  spokes", np.round(a[[k for k, e in enumerate(hexc.edges) if 0 in e]], 6))
print("  ring  ", np.round(a[[k for k, e in enumerate(hexc.edges) if 0 not in e]], 6))
print("  dilation value and contraction", dilation_value(hexc, a))

# weights of the form (mu2 - mu1 tau_i tau_j) b_ij with b >= 0
cone = sign_constrained_kernel(hexc, [-1] + [1] * 6)
print("  sign cone feasible at", len(cone.angles), "of the sampled (mu1, mu2) directions")

for ell in range(2, 8):
    rep = search_equilibria(ell, trials=1000, seed=ell)
    print(rep.verdict())
