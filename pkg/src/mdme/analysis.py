"""Motion-style analysis: wavelet-entropy features -> PCA -> K-means -> overlay.

Features come from the structured encoder run with a frozen, seeded
(untrained) front end unless trained parameters are supplied, so the
pipeline is a pure function of (motions, preset, seed). PCA uses an
eigendecomposition of the column covariance with a fixed sign convention;
K-means uses greedy farthest-point seeding and Lloyd iterations.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .motion import MotionSequence, gather_windows
from .network import MdmeConfig, MdmeModel, init_params
from .objectives import MetricReport
from .rng import Rng

FROZEN_FRONTEND_SEED = 20_240_101


@dataclass
class FeatureMatrix:
    """Per-motion mean+std of windowed subband entropies."""

    ids: list[str]
    values: np.ndarray                   # (motions, 2 * entropy_count)
    skipped: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != len(self.ids):
            raise DimensionError(f"feature matrix {self.values.shape} vs {len(self.ids)} ids")
        if self.values.size and not np.isfinite(self.values).all():
            raise ConfigError("feature matrix contains non-finite entries")


@dataclass
class ClusterReport:
    ids: list[str]
    coords: np.ndarray                   # (motions, 2)
    labels: np.ndarray                   # (motions,)
    explained_variance: np.ndarray
    inertia: float
    mean_error: dict[str, float] = field(default_factory=dict)


def extract_features(motions: list[MotionSequence], cfg: MdmeConfig,
                     params=None, frozen_seed: int = FROZEN_FRONTEND_SEED) -> FeatureMatrix:
    """Sliding-window entropies at stride max(1, H//2), pooled per motion."""
    if params is None:
        params = init_params(cfg, Rng(frozen_seed))
    model = MdmeModel(cfg, params=params)
    stride = max(1, cfg.history // 2)
    ids, rows, skipped = [], [], []
    for seq in motions:
        if seq.frames < cfg.history:
            warnings.warn(f"motion {seq.name!r} shorter than one window; skipped")
            skipped.append(seq.name)
            continue
        ts = np.arange(cfg.history - 1, seq.frames, stride)
        wins = gather_windows(seq, ts, cfg.history)
        ents = model.encode_structured(wins, train=False).data
        rows.append(np.concatenate([ents.mean(axis=0), ents.std(axis=0)]))
        ids.append(seq.name)
    values = np.vstack(rows) if rows else np.zeros((0, 2 * cfg.entropy_count))
    return FeatureMatrix(ids=ids, values=values, skipped=skipped)


def pca(features: np.ndarray, dims: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Project centered rows onto the top principal components.

    Returns (coords (n, dims), explained variance ratios sorted descending).
    Sign convention: the largest-magnitude loading of each component is
    positive, so projections are reproducible.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"pca expects a 2D matrix, got {x.shape}")
    n = x.shape[0]
    if n < dims:
        raise ConfigError(f"pca needs at least {dims} rows, got {n}")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / max(n - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.maximum(evals[order], 0.0)
    evecs = evecs[:, order]
    total = evals.sum()
    # degenerate only when the trailing eigenvalue is at eigensolver noise level
    if dims > 0 and (total <= 0.0 or evals[dims - 1] <= 1e-14 * evals[0]):
        raise ConfigError(f"feature matrix rank < {dims}; PCA is degenerate")
    comps = evecs[:, :dims]
    flips = np.sign(comps[np.abs(comps).argmax(axis=0), np.arange(dims)])
    comps = comps * np.where(flips == 0, 1.0, flips)[None, :]
    coords = centered @ comps
    ratios = evals / total
    return coords, ratios[:dims]


def kmeans(coords: np.ndarray, k: int = 4, rng: Rng | None = None, max_iter: int = 100,
           inertia_history: list | None = None) -> tuple[np.ndarray, float]:
    """Greedy farthest-point seeding, then Lloyd iterations to a fixpoint.

    Returns (labels, inertia). If a list is passed as `inertia_history`, the
    assignment-step inertia is appended each iteration (non-increasing).
    """
    x = np.asarray(coords, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < k:
        raise ConfigError(f"kmeans needs >= {k} rows, got shape {x.shape}")
    if np.unique(x, axis=0).shape[0] < k:
        raise ConfigError(f"kmeans needs {k} distinct points")
    rng = rng or Rng(0)
    centers = [x[rng.integers(x.shape[0])]]
    while len(centers) < k:
        d2 = np.min([((x - c) ** 2).sum(axis=1) for c in centers], axis=0)
        centers.append(x[int(np.argmax(d2))])
    centers = np.asarray(centers)
    labels = np.full(x.shape[0], -1, dtype=np.int64)
    for _ in range(max_iter):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        nearest = d2.min(axis=1)
        if inertia_history is not None:
            inertia_history.append(float(nearest.sum()))
        new_labels = d2.argmin(axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            mask = labels == j
            if mask.any():
                centers[j] = x[mask].mean(axis=0)
            else:  # re-seed an empty cluster at the worst-served point
                centers[j] = x[int(np.argmax(nearest))]
    inertia = float(((x - centers[labels]) ** 2).sum())
    return labels, inertia


def cluster_motions(features: FeatureMatrix, k: int = 4, seed: int = 0) -> ClusterReport:
    coords, ratios = pca(features.values, dims=2)
    labels, inertia = kmeans(coords, k=k, rng=Rng(seed))
    return ClusterReport(ids=list(features.ids), coords=coords, labels=labels,
                         explained_variance=ratios, inertia=inertia)


def error_overlay(report: ClusterReport, metrics: MetricReport | None) -> list[dict]:
    """Join cluster coordinates with per-motion mean error; strict on IDs.

    With no metrics, error cells are left empty. With metrics, both ID sets
    must match exactly; mismatches raise listing the unmatched IDs.
    """
    errors: dict[str, float] = {}
    if metrics is not None:
        errors = {row.motion: row.total for row in metrics.rows}
        missing = sorted(set(report.ids) ^ set(errors))
        if missing:
            raise ConfigError(f"cluster/error motion IDs do not match; unmatched: {missing}")
    rows = []
    for i, motion in enumerate(report.ids):
        rows.append({
            "motion": motion,
            "pc1": float(report.coords[i, 0]),
            "pc2": float(report.coords[i, 1]),
            "cluster": int(report.labels[i]),
            "mean_error": errors.get(motion),
        })
    return rows


def overlay_csv(rows: list[dict]) -> str:
    lines = ["motion,pc1[-],pc2[-],cluster,mean_error[-]"]
    for r in rows:
        err = "" if r["mean_error"] is None else repr(r["mean_error"])
        lines.append(f"{r['motion']},{r['pc1']!r},{r['pc2']!r},{r['cluster']},{err}")
    return "\n".join(lines) + "\n"
