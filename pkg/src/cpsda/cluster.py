"""K-means over latents, centroid-to-class mapping, the nearest-centroid
anomaly decision, and a brute-force Dunn Index used as a test oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AmbiguousMapping, DegenerateData, UnmappedCentroids

K_CLUSTERS = 2


@dataclass(frozen=True)
class Centroids:
    """Two cluster centers plus, once mapped, the cluster -> class
    assignment (0 benign, 1 anomaly)."""

    mu: np.ndarray  # (2, latent_dim)
    class_of: tuple[int, int] | None = None

    def __post_init__(self):
        mu = np.asarray(self.mu)
        if mu.ndim != 2 or mu.shape[0] != K_CLUSTERS:
            raise DegenerateData(f"centroids must be (2, D), got {mu.shape}")
        if self.class_of is not None and sorted(self.class_of) != [0, 1]:
            raise AmbiguousMapping(
                f"class_of must be a bijection onto {{0, 1}}, got {self.class_of}")
        object.__setattr__(self, "mu", mu)

    @property
    def benign_mu(self) -> np.ndarray:
        if self.class_of is None:
            raise UnmappedCentroids("centroids have no class mapping yet")
        return self.mu[self.class_of.index(0)]

    @property
    def anomaly_mu(self) -> np.ndarray:
        if self.class_of is None:
            raise UnmappedCentroids("centroids have no class mapping yet")
        return self.mu[self.class_of.index(1)]


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """(n, k) squared Euclidean distances."""
    diff = points[:, None, :] - centers[None, :, :]
    return (diff * diff).sum(axis=-1)


def _plus_plus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=points.dtype)
    centers[0] = points[int(rng.integers(n))]
    for j in range(1, k):
        d2 = _sq_dists(points, centers[:j]).min(axis=1)
        total = d2.sum()
        if total <= 0:
            raise DegenerateData("k-means++ found no spread for another center")
        centers[j] = points[int(rng.choice(n, p=d2 / total))]
    return centers


def kmeans_fit(points: np.ndarray, k: int = K_CLUSTERS, seed: int = 0,
               max_iter: int = 300, tol: float = 1e-6,
               inertia_trace: list[float] | None = None) -> Centroids:
    """Lloyd iterations from a k-means++ start; stops when the max centroid
    shift drops below tol. Centers keep the dtype of the input points.

    inertia_trace, when given, receives the within-cluster sum of squared
    distances once per assignment step; the sequence is non-increasing.
    """
    points = np.asarray(points)
    if points.ndim != 2:
        raise DegenerateData(f"kmeans expects (n, d) points, got {points.shape}")
    if len(np.unique(points, axis=0)) < k:
        raise DegenerateData(f"need at least {k} distinct points")
    rng = np.random.default_rng(seed)
    centers = _plus_plus_init(points, k, rng).copy()
    for _ in range(max_iter):
        d2 = _sq_dists(points, centers)
        assign = d2.argmin(axis=1)
        if inertia_trace is not None:
            inertia_trace.append(float(d2[np.arange(len(points)), assign].sum()))
        new_centers = centers.copy()
        for j in range(k):
            members = points[assign == j]
            if len(members):
                new_centers[j] = members.mean(axis=0, dtype=np.float64).astype(points.dtype)
            else:
                # an empty cluster restarts at the worst-served point
                new_centers[j] = points[int(d2.min(axis=1).argmax())]
        shift = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers = new_centers
        if shift < tol:
            break
    return Centroids(mu=centers)


def assign_clusters(points: np.ndarray, centroids: Centroids) -> np.ndarray:
    return _sq_dists(np.asarray(points), centroids.mu).argmin(axis=1)


def map_centroids_to_classes(centroids: Centroids, source_latents: np.ndarray,
                             source_labels: np.ndarray) -> Centroids:
    """Give each cluster the majority true label of the source latents it
    captures. A cluster with a tied or empty count defers: the larger
    cluster takes the source set's overall majority class, the other the
    complement. Two clusters resolving to the same class means the latent
    space collapsed."""
    labels = np.asarray(source_labels)
    if not {0, 1} <= set(np.unique(labels).tolist()):
        raise AmbiguousMapping("both source classes are needed to map centroids")
    assign = assign_clusters(source_latents, centroids)
    majority: list[int | None] = []
    totals = []
    for j in range(K_CLUSTERS):
        captured = labels[assign == j]
        totals.append(len(captured))
        n1 = int(captured.sum())
        n0 = len(captured) - n1
        majority.append(None if n0 == n1 else int(n1 > n0))
    m0, m1 = majority
    if m0 is not None and m1 is not None:
        if m0 == m1:
            raise AmbiguousMapping(
                f"both clusters have majority class {m0}; latent space collapsed")
        class_of = (m0, m1)
    elif m0 is None and m1 is None:
        global_majority = int(labels.sum() * 2 > len(labels))
        big = int(totals[1] > totals[0])
        mapped = [0, 0]
        mapped[big] = global_majority
        mapped[1 - big] = 1 - global_majority
        class_of = (mapped[0], mapped[1])
    else:
        known = m0 if m0 is not None else m1
        class_of = (known, 1 - known) if m0 is not None else (1 - known, known)
    return Centroids(mu=centroids.mu, class_of=class_of)


def decide(latent: np.ndarray, centroids: Centroids) -> int:
    """0 (benign) iff the latent is at least as close to the benign centroid
    as to the anomaly centroid; ties resolve to benign."""
    d_benign = float(np.linalg.norm(latent - centroids.benign_mu))
    d_anomaly = float(np.linalg.norm(latent - centroids.anomaly_mu))
    return 0 if d_benign <= d_anomaly else 1


def decide_batch(latents: np.ndarray, centroids: Centroids) -> np.ndarray:
    d_benign = np.linalg.norm(latents - centroids.benign_mu, axis=1)
    d_anomaly = np.linalg.norm(latents - centroids.anomaly_mu, axis=1)
    return (d_benign > d_anomaly).astype(np.int64)


def dunn_index_oracle(points: np.ndarray, labels: np.ndarray) -> float:
    """Exhaustive Dunn Index: min single-linkage inter-cluster distance over
    max cluster diameter, written as plain loops for independence from the
    vectorized training-side computation.

    All-zero diameters with positive separation return +inf.
    """
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    classes = sorted(set(labels.tolist()))
    if len(classes) < 2:
        raise DegenerateData(f"oracle needs >= 2 classes, got {classes}")
    n = len(points)
    max_diameter = 0.0
    min_inter = math.inf
    for i in range(n):
        for j in range(i + 1, n):
            d = math.dist(points[i], points[j])
            if labels[i] == labels[j]:
                if d > max_diameter:
                    max_diameter = d
            else:
                if d < min_inter:
                    min_inter = d
    if max_diameter == 0.0:
        return math.inf if min_inter > 0 else math.nan
    return min_inter / max_diameter
