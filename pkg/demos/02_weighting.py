# The three expectation terms used in edge weights, side by side.
import numpy as np

from gcnrefine.graph import GraphParams, diversity, edge_weight, inv_div, norm_div

# one node with expectation 0 against partners of growing expectation
p2 = np.array([0.0, 0.05, 0.2, 0.368, 0.7, 0.999, 1.0])
print("p2        ", p2)
print("diversity ", np.round(diversity(0.0, p2), 3))
print("norm_div  ", np.round(norm_div(0.0, p2), 3))  # saturates quickly
print("inv_div   ", np.round(inv_div(0.0, p2), 3))  # similarity, 1 when equal

# full weights: diversity dominates the Gaussian kernels (each at most 1)
pos = np.zeros(3)
for w in ("w1", "w2", "w3"):
    params = GraphParams(weighting=w)
    vals = edge_weight(0.0, p2, 0.2, 0.25, pos, pos + [1, 0, 0], params)
    print(w, np.round(vals, 3))

# with lambda = 0 all three collapse to the kernels
same = [edge_weight(0.0, p2, 0.2, 0.25, pos, pos, GraphParams(weighting=w, lam=0.0)) for w in ("w1", "w2", "w3")]
print("lambda=0 identical:", all(np.array_equal(same[0], s) for s in same))
