"""What a reciprocal point is, on a problem small enough to look at.

Two attack classes in the plane. Each class learns a reciprocal point
representing what it is NOT: training pushes class samples AWAY from
their own point, margins bound how far anything drifts, and the region
near the points becomes the low-score "open space" where unknown
traffic lands.
"""
import numpy as np

from rpmnet import TrainConfig, reciprocal_distance, train
from rpmnet.model import class_distances, embed
from rpmnet.openset import score
from rpmnet.synthetic import gaussian_clusters

rng = np.random.default_rng(7)
data = gaussian_clusters([[2.0, 2.0], [-2.0, -2.0]], [80, 80], 0.2, rng,
                         class_names=["ddos", "scan"])

config = TrainConfig(hidden_dims=(32, 16), embed_dim=2, epochs=120, batch_size=32, seed=1)
params, history = train(data.features, data.labels, config)
print(f"trained to accuracy {history[-1].accuracy:.2f}")
print("class order:", params.class_names)
print("reciprocal points:\n", np.round(params.reciprocal_points, 3))
print("margins:", np.round(params.margins, 3))

# hand-evaluate the hybrid distance: squared Euclidean over dims minus cosine
z = embed(params, data.features[:1])[0]
p_own = params.reciprocal_points[0]
print("\none ddos embedding:", np.round(z, 3))
print("distance to own reciprocal point:", round(reciprocal_distance(z, p_own), 3))
print("(a sample sitting exactly ON a point would score the floor -1: maximally 'not' that class)")

# distances of class members vs center probes
dist = class_distances(params, data.features)
print("\nmean distance of each class to each point (rows=true class):")
for i, name in enumerate(params.class_names):
    rows = [j for j, l in enumerate(data.labels) if l == name]
    print(f"  {name:5s}", np.round(dist[rows].mean(axis=0), 3))

center_probe = rng.normal(0.0, 0.2, size=(200, 2))  # unknown-ish traffic between the classes
known_scores = score(params, data.features).scores
probe_scores = score(params, center_probe).scores
print("\nmax-distance scores (higher = more confidently known):")
print(f"  known traffic   min {known_scores.min():.3f}   median {np.median(known_scores):.3f}")
print(f"  center probes   max {probe_scores.max():.3f}   median {np.median(probe_scores):.3f}")
print("the gap between those two ranges is where the rejection threshold lives")
