"""Confidence ranking, flipped-vs-clean separation and density curves."""

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import InvalidInputError

GRID_SIZE = 256
_trapezoid = getattr(np, "trapezoid", None) or np.trapz
MIN_BANDWIDTH = 1e-3


def _confidences(table_or_values):
    if hasattr(table_or_values, "all_confidences"):
        return table_or_values.all_confidences()
    return np.asarray(table_or_values, dtype=np.float64)


def rank_by_confidence(table, top_k=None):
    """``(index, confidence)`` pairs by ascending confidence, ties by index."""
    conf = _confidences(table)
    if top_k is not None and top_k > len(conf):
        raise InvalidInputError(f"top_k={top_k} exceeds {len(conf)} instances")
    order = np.lexsort((np.arange(len(conf)), conf))
    if top_k is not None:
        order = order[:top_k]
    return [(int(i), float(conf[i])) for i in order]


def auroc(scores, positives):
    """Mann-Whitney AUROC: P(score_pos > score_neg) + 0.5 P(tie)."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    if scores.shape != positives.shape:
        raise InvalidInputError("scores and labels differ in shape")
    n_pos = int(positives.sum())
    n_neg = len(positives) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise InvalidInputError("AUROC needs at least one positive and one negative")
    ranks = rankdata(scores)  # average ranks give ties half credit
    u = ranks[positives].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def silverman_bandwidth(samples):
    samples = np.asarray(samples, dtype=np.float64)
    sigma = samples.std(ddof=1) if len(samples) > 1 else 0.0
    return max(1.06 * sigma * len(samples) ** -0.2, MIN_BANDWIDTH)


def kde_curve(samples, grid_size=GRID_SIZE):
    """Gaussian KDE on a uniform grid over [0, 1], renormalized to unit area there.

    Returns ``(grid, density)``. No boundary reflection is applied; mass the
    kernels place outside [0, 1] is redistributed by the renormalization.
    """
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if len(samples) < 2:
        raise InvalidInputError("KDE needs at least 2 samples")
    grid = np.linspace(0.0, 1.0, grid_size)
    bw = silverman_bandwidth(samples)
    dens = np.zeros(grid_size)
    # chunk to bound the grid x samples temporary
    for start in range(0, len(samples), 4096):
        s = samples[start : start + 4096]
        dens += np.exp(-0.5 * ((grid[:, None] - s[None, :]) / bw) ** 2).sum(axis=1)
    area = _trapezoid(dens, grid)
    return grid, dens / area


@dataclass
class DetectionReport:
    ranked: list
    grid: np.ndarray
    curves: list = field(default_factory=list)  # one dict per epoch: group -> density or None
    summary: dict = field(default_factory=dict)
    auroc: float | None = None
    auroc_by_epoch: list | None = None

    @property
    def ranked_indices(self):
        return [i for i, _ in self.ranked]

    def to_dict(self, top_k=None):
        ranked = self.ranked if top_k is None else self.ranked[:top_k]
        d = {
            "format": "iceconf-report",
            "version": 1,
            "ranked": [{"index": i, "confidence": c} for i, c in ranked],
            "summary": self.summary,
            "grid_size": len(self.grid),
            "curves": [
                {g: (None if v is None else v.tolist()) for g, v in epoch.items()} for epoch in self.curves
            ],
        }
        if self.auroc is not None:
            d["auroc"] = self.auroc
            d["auroc_by_epoch"] = self.auroc_by_epoch
        return d

    def dump(self, path, top_k=None):
        with open(path, "w") as fh:
            json.dump(self.to_dict(top_k), fh, sort_keys=True)
            fh.write("\n")

    def write_curves_csv(self, path):
        groups = list(self.curves[0]) if self.curves else []
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "grid"] + [f"density_{g}" for g in groups])
            for e, epoch in enumerate(self.curves):
                for j, x in enumerate(self.grid):
                    w.writerow([e, repr(float(x))] + ["" if epoch[g] is None else repr(float(epoch[g][j])) for g in groups])


def _group_curve(values, grid_size):
    return kde_curve(values, grid_size)[1] if len(values) >= 2 else None


def _stats(values):
    if len(values) == 0:
        return None
    return {"n": int(len(values)), "mean": float(np.mean(values)), "median": float(np.median(values))}


def build_report(history, dataset, grid_size=GRID_SIZE):
    """Assemble ranking, per-epoch curves and AUROC from a run's confidence snapshots.

    Ranked indices refer to the dataset (mapped through the run's training
    split). Curves are split into flipped and clean groups when the dataset
    carries a flip mask, otherwise a single ``all`` group is reported.
    """
    snaps = [e.confidence for e in history.epochs if e.confidence is not None]
    if not snaps:
        raise InvalidInputError("history has no confidence snapshots (not an ICE run?)")
    train_index = np.asarray(history.train_index)
    if any(len(s) != len(train_index) for s in snaps):
        raise InvalidInputError("snapshot length does not match the training split")
    if len(train_index) and train_index.max() >= len(dataset):
        raise InvalidInputError(f"run refers to instance {train_index.max()} but dataset has {len(dataset)}")
    final = snaps[-1]
    ranked = [(int(train_index[i]), c) for i, c in rank_by_confidence(final)]
    grid = np.linspace(0.0, 1.0, grid_size)
    mask = None if dataset.flip_mask is None else np.asarray(dataset.flip_mask)[train_index]
    curves = []
    aurocs = []
    for s in snaps:
        if mask is None:
            curves.append({"all": _group_curve(s, grid_size)})
            continue
        curves.append({"flipped": _group_curve(s[mask], grid_size), "clean": _group_curve(s[~mask], grid_size)})
        aurocs.append(auroc(1.0 - s, mask) if 0 < mask.sum() < len(mask) else None)
    if mask is None:
        summary = {"all": _stats(final)}
    else:
        summary = {"flipped": _stats(final[mask]), "clean": _stats(final[~mask])}
    report = DetectionReport(ranked, grid, curves, summary)
    if mask is not None and aurocs and aurocs[-1] is not None:
        report.auroc = aurocs[-1]
        report.auroc_by_epoch = aurocs
    return report
