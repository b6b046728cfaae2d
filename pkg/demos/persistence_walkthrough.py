"""Walk through the topology layer on a point cloud you can picture.

Four corners of the unit square form one loop.  The loop is born when the
edges of length 1 appear and dies at the diagonal, sqrt(2), when the square
fills in.  We compute that, cross-check it against the brute-force reducer,
and then turn the diagram into the fixed-size feature vectors the taggers eat.
"""

import numpy as np

from topoterm.features import persistence_image, wasserstein_norm
from topoterm.persistence import (
    DistanceMatrix,
    brute_force_persistence,
    vr_persistence,
)

# --- a point cloud with one obvious hole ------------------------------------
corners = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
distances = DistanceMatrix(np.linalg.norm(corners[:, None] - corners[None, :], axis=2))

diagram = vr_persistence(distances, max_filtration=2.0)
print("H0 (component merges):", diagram.h0)
print("H0 essential classes: ", diagram.essential_h0)
print("H1 (loops):           ", diagram.h1)  # expect [(1.0, 1.414...)]

# the production reducer and the exhaustive one must agree exactly
reference = brute_force_persistence(distances, max_filtration=2.0)
assert diagram.sorted().h1 == reference.sorted().h1
print("brute-force reducer agrees.")

# --- from diagram to features ------------------------------------------------
# The image window covers births in [0,1] and lifetimes in [0,0.3]; shrink the
# square by half so its loop (birth 0.5, lifetime ~0.21) lands inside it.
half = vr_persistence(DistanceMatrix(distances.entries * 0.5), max_filtration=1.0)
image = persistence_image(half)
print("\npersistence image: h0 vector", image.h0_vector.shape, "h1 grid", image.h1_grid.shape)
print("h1 image mass %.4f (bounded by total lifetime %.4f)" % (
    image.h1_grid.sum(), sum(d - b for b, d in half.h1)))

norms = wasserstein_norm(diagram)
print("wasserstein norms (h0, h1):", np.round(norms, 4))

# A cloud with no hole, for contrast: an equilateral triangle.
triangle = DistanceMatrix(np.array([[0.0, 1, 1], [1, 0.0, 1], [1, 1, 0.0]]))
print("\nequilateral triangle H1:", vr_persistence(triangle, max_filtration=2.0).h1)
