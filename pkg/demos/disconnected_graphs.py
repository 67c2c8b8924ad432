"""Why disconnected graphs need the component gate.

Two tight clusters, one label in each.  The k-NN graph splits into two
components, so the spectral sum has a zero eigenvalue past the first one.
Dropping it leaves a within-cluster kernel that averages to zero, and
members of the second cluster far from its labeled point vote negative
for their own class, below the 0 they receive from the other cluster.
"""
import numpy as np

from metricprop import KernelSpec, LabeledSet, propagate

rng = np.random.default_rng(0)
X = np.vstack([rng.normal(0, 0.1, (40, 2)), rng.normal(5, 0.1, (40, 2))])
labels = LabeledSet([0, 40], [0, 1], n_classes=2)
spec = KernelSpec("negative-euclidean")

for policy in ("drop", "gate"):
    res = propagate(X, labels, k=5, eta=10, spec=spec, null_policy=policy)
    acc = np.mean(res.logits.argmax(axis=1) == (res.indices >= 40))
    print(f"null_policy={policy}: accuracy {acc:.3f}")
