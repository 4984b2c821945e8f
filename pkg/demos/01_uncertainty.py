# Expectation, entropy and the uncertain mask on a small phantom.
import numpy as np

from gcnrefine.synth import PhantomSpec, SimSpec, default_blobs, make_phantom, simulate_passes
from gcnrefine.uncertainty import analyze, binary_entropy

# entropy is in bits: 1 at p = 0.5, close to 0 at p = 0 or 1
print(binary_entropy(np.array([0.0, 0.1, 0.5, 0.9, 1.0])))

# a 32^3 organ with one added and one carved-out blob
v, gt = make_phantom(PhantomSpec(dims=(32, 32, 32), radii=(10, 9, 7), seed=1))
blobs = default_blobs(gt, radius=5, seed=1)
passes, y = simulate_passes(gt, SimSpec(T=20, error_blobs=blobs, seed=1))
print("passes:", passes.T, "dims:", passes.dims)

b = analyze(passes, tau=0.5)
print("foreground voxels in Y:", int(y.data.sum()), "in GT:", int(gt.data.sum()))
print("uncertain voxels at tau=0.5:", int(b.uncertain_mask.data.sum()))

# a higher threshold keeps only the most uncertain voxels
for tau in (0.1, 0.5, 0.9, 0.999):
    print(f"tau={tau}: {int(analyze(passes, tau).uncertain_mask.data.sum())}")

# the injected errors are where the entropy is
h = b.entropy.data
wrong = y.mask() != gt.mask()
print("mean entropy on wrong voxels: %.3f, elsewhere: %.3f" % (h[wrong].mean(), h[~wrong].mean()))
