"""Distribution diagnostics: PCA projection, cross-dataset nearest-neighbor
gap analysis, and nearest-point training-subset construction."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .core import Dataset, DistanceClass
from .ioutil import atomic_write_bytes, atomic_write_text
from .validation import check_array, check_fitted


class PrincipalComponents(BaseEstimator, TransformerMixin):
    """Exact PCA via eigendecomposition of the feature covariance.

    Components carry a deterministic sign: the largest-magnitude entry of
    each component is positive. Covariance uses the population convention
    (divide by n), matching the scaler.
    """

    def __init__(self, n_components: int = 2):
        self.n_components = n_components
        self.mean_: np.ndarray | None = None

    def fit(self, X, y=None):
        X = check_array(X, "X", ndim=2)
        n, d = X.shape
        k = self.n_components
        if k < 1:
            raise ValueError(f"need at least one component, got {k}")
        if k > d:
            raise ValueError(f"cannot extract {k} components from {d} features")
        if n < k + 1:
            raise ValueError(f"need at least {k + 1} samples to fit {k} components")
        self.mean_ = X.mean(axis=0)
        centered = X - self.mean_
        cov = centered.T @ centered / n
        eigenvalues, eigenvectors = np.linalg.eigh(cov)
        order = np.argsort(eigenvalues)[::-1]
        eigenvalues = eigenvalues[order]
        eigenvectors = eigenvectors[:, order]
        components = eigenvectors[:, :k].T.copy()
        for row in components:
            if row[np.argmax(np.abs(row))] < 0:
                row *= -1.0
        self.components_ = components
        self.eigenvalues_ = np.maximum(eigenvalues[:k], 0.0)
        self.all_eigenvalues_ = eigenvalues
        return self

    def transform(self, X) -> np.ndarray:
        check_fitted(self, "mean_")
        X = check_array(X, "X", ndim=2)
        return (X - self.mean_) @ self.components_.T

    def inverse_transform(self, projected) -> np.ndarray:
        check_fitted(self, "mean_")
        return np.asarray(projected) @ self.components_ + self.mean_


@dataclass(frozen=True)
class NnGapReport:
    """Summary of nearest-neighbor distances from one dataset into another."""

    mean_l2: float
    mismatched_mean_l2: float  # 0 when every nearest neighbor shares its class
    mismatch_fraction: float
    n_pairs: int

    def lines(self) -> list[str]:
        return [
            f"pairs: {self.n_pairs}",
            f"mean nearest-neighbor l2: {self.mean_l2:.6f}",
            f"mean l2 over class-mismatched pairs: {self.mismatched_mean_l2:.6f}",
            f"fraction of pairs with mismatched classes: {self.mismatch_fraction:.6f}",
        ]


def _flat_features(ds: Dataset, name: str) -> tuple[np.ndarray, np.ndarray]:
    if ds.kind not in ("flat", "histogram"):
        raise ValueError(f"{name} must hold vector samples, got kind {ds.kind!r}")
    return ds.features(), ds.label_indices()


def nearest_in(
    reference: np.ndarray, queries: np.ndarray, chunk: int = 256
) -> tuple[np.ndarray, np.ndarray]:
    """Index and l2 distance of each query's nearest reference row (exhaustive).

    Ties break toward the lowest reference index.
    """
    ref_sq = (reference * reference).sum(axis=1)
    indices = np.empty(queries.shape[0], dtype=np.int64)
    dists = np.empty(queries.shape[0])
    for start in range(0, queries.shape[0], chunk):
        q = queries[start : start + chunk]
        sq = (q * q).sum(axis=1)[:, None] + ref_sq[None, :] - 2.0 * q @ reference.T
        idx = sq.argmin(axis=1)  # argmin returns the first minimum
        indices[start : start + chunk] = idx
        # recompute the winning distances in direct form: exact, not the
        # cancellation-prone expansion used for the search
        diff = q - reference[idx]
        dists[start : start + chunk] = np.sqrt((diff * diff).sum(axis=1))
    return indices, dists


def nn_gap(a: Dataset, b: Dataset) -> NnGapReport:
    """For every sample of ``b``, find its l2-nearest sample in ``a`` and
    report the mean distance, the mean over class-mismatched pairs, and the
    mismatch fraction."""
    xa, ya = _flat_features(a, "a")
    xb, yb = _flat_features(b, "b")
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both datasets must be non-empty")
    if xa.shape[1] != xb.shape[1]:
        raise ValueError(
            f"feature widths differ: {xa.shape[1]} (a) vs {xb.shape[1]} (b)"
        )
    idx, dist = nearest_in(xa, xb)
    mismatched = ya[idx] != yb
    frac = float(mismatched.mean())
    return NnGapReport(
        mean_l2=float(dist.mean()),
        mismatched_mean_l2=float(dist[mismatched].mean()) if np.any(mismatched) else 0.0,
        mismatch_fraction=frac,
        n_pairs=len(b),
    )


def optimal_subset(a: Dataset, b: Dataset, m: int = 2) -> Dataset:
    """The union over ``b`` of the ``m`` nearest samples of ``a``, deduplicated,
    as a training dataset."""
    xa, _ = _flat_features(a, "a")
    xb, _ = _flat_features(b, "b")
    if m < 1:
        raise ValueError(f"need m >= 1, got {m}")
    if len(a) < m:
        raise ValueError(f"dataset a holds {len(a)} samples, fewer than m={m}")
    if xa.shape[1] != xb.shape[1]:
        raise ValueError(
            f"feature widths differ: {xa.shape[1]} (a) vs {xb.shape[1]} (b)"
        )
    keep: set[int] = set()
    ref_sq = (xa * xa).sum(axis=1)
    for start in range(0, xb.shape[0], 256):
        q = xb[start : start + 256]
        sq = (q * q).sum(axis=1)[:, None] + ref_sq[None, :] - 2.0 * q @ xa.T
        # stable m-nearest with lowest-index tie-breaks
        order = np.argsort(sq, axis=1, kind="stable")[:, :m]
        keep.update(int(i) for i in order.ravel())
    chosen = sorted(keep)
    return Dataset(
        kind=a.kind,
        samples=[a.samples[i] for i in chosen],
        vocab=a.vocab,
        normalizer=a.normalizer,
        split_tag="train",
    )


_CLASS_COLORS = {
    1.2: "#1f77b4",
    1.8: "#2ca02c",
    3.0: "#ff7f0e",
    4.5: "#d62728",
}


def emit_scatter(
    points: np.ndarray,
    labels: Sequence[DistanceClass],
    path: str | Path,
    table_path: str | Path | None = None,
    title: str = "",
) -> None:
    """Write a class-colored 2-D scatter as SVG plus a CSV dump of the points."""
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        raise ValueError("refusing to plot an empty point set")
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValueError(f"scatter needs (n, 2) points, got {points.shape}")
    if len(labels) != points.shape[0]:
        raise ValueError("one label per point is required")

    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "proxkit"  # deterministic SVG ids
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 5))
    for cls in DistanceClass:
        mask = np.array([lab is cls for lab in labels])
        if not np.any(mask):
            continue
        ax.scatter(
            points[mask, 0],
            points[mask, 1],
            s=12,
            alpha=0.7,
            color=_CLASS_COLORS[cls.meters],
            label=f"{cls.meters} m",
        )
    ax.set_xlabel("PC1")
    ax.set_ylabel("PC2")
    if title:
        ax.set_title(title)
    ax.legend()
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())

    if table_path is not None:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["pc1", "pc2", "label_m"])
        for (x, y), lab in zip(points, labels):
            writer.writerow([repr(float(x)), repr(float(y)), lab.meters])
        atomic_write_text(table_path, out.getvalue())
