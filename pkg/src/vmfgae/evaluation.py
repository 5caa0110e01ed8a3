"""Residual-based anomaly scores and ranking metrics."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .errors import ValidationError
from .graph import PartialGraph, PartialMask, apply_mask
from .matching import CompletionConfig, complete_graph
from .model import LOSS_VARIANTS

COLUMNS = ("graph_id", "edge_auc", "node_auc", "masked_auc", "mean_residual")
METRICS = COLUMNS[1:]


def minmax_weights(w):
    """Off-diagonal weights scaled to [0, 1]; a constant matrix maps to zeros."""
    w = np.asarray(w, dtype=np.float64)
    off = ~np.eye(len(w), dtype=bool)
    if not off.any():
        return np.zeros_like(w)
    lo, hi = w[off].min(), w[off].max()
    out = (w - lo) / (hi - lo) if hi > lo else np.zeros_like(w)
    np.fill_diagonal(out, 0.0)
    return out


def edge_anomaly_scores(g, ghat, variant="quadratic"):
    """``|target - G_hat|`` with a binarized (cross-entropy) or min-max scaled (quadratic) target."""
    ghat = np.asarray(ghat, dtype=np.float64)
    if ghat.shape != g.W.shape:
        raise ValidationError(f"reconstruction is {ghat.shape}, graph is {g.W.shape}")
    if variant not in LOSS_VARIANTS:
        raise ValidationError(f"unknown score variant {variant!r}")
    target = g.binary() if variant == "cross_entropy" else minmax_weights(g.W)
    s = np.abs(target - ghat)
    s = 0.5 * (s + s.T)
    np.fill_diagonal(s, 0.0)
    return np.clip(s, 0.0, 1.0)


def node_anomaly_scores(edge_scores):
    e = np.asarray(edge_scores, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] != e.shape[1]:
        raise ValidationError(f"edge scores must be square, got {e.shape}")
    n = e.shape[0]
    if n < 2:
        raise ValidationError("node scores need at least 2 nodes")
    return (e.sum(axis=1) - np.diag(e)) / (n - 1)


def roc_auc(scores, labels):
    """P(positive outranks negative) + 0.5 P(tie)."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValidationError(f"{scores.size} scores for {labels.size} labels")
    if not np.isin(labels, (0, 1)).all():
        raise ValidationError("labels must be 0/1")
    pos = int(labels.sum())
    if pos == 0 or pos == labels.size:
        raise ValidationError("AUC is undefined for single-class labels")
    return kernels.mann_whitney_auc(scores, labels.astype(np.int64))


def _auc_or_nan(scores, labels):
    labels = np.asarray(labels).ravel()
    if labels.size == 0 or labels.min() == labels.max():
        return math.nan
    return roc_auc(scores, labels)


@dataclass(frozen=True)
class EvalConfig:
    completion: CompletionConfig = field(default_factory=CompletionConfig)
    score_variant: str = "quadratic"
    restarts: int = 1
    k: int = 1
    mask_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.score_variant not in LOSS_VARIANTS:
            raise ValidationError(f"unknown score variant {self.score_variant!r}")
        if not 0 <= self.mask_fraction < 1:
            raise ValidationError("mask_fraction must lie in [0, 1)")
        if not 1 <= self.k <= self.restarts:
            raise ValidationError("need 1 <= k <= restarts")

    def fingerprint(self):
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class GraphMetrics:
    graph_id: str
    edge_auc: float
    node_auc: float
    masked_auc: float
    mean_residual: float


def _mean_std(values):
    vals = [v for v in values if not math.isnan(v)]
    if not vals:
        return math.nan, math.nan
    # fsum is exactly rounded, so the aggregates do not depend on row order
    mean = math.fsum(vals) / len(vals)
    var = math.fsum((v - mean) ** 2 for v in vals) / len(vals)
    return mean, math.sqrt(var)


@dataclass
class MetricsReport:
    rows: list
    fingerprint: str = ""

    @property
    def aggregates(self):
        """``{"mean": {...}, "std": {...}}`` over the defined per-graph values."""
        out = {"mean": {}, "std": {}}
        for col in METRICS:
            out["mean"][col], out["std"][col] = _mean_std([getattr(r, col) for r in self.rows])
        return out

    @property
    def notes(self):
        notes = []
        for col in METRICS[:3]:
            bad = sum(math.isnan(getattr(r, col)) for r in self.rows)
            if bad:
                notes.append(f"{col} undefined for {bad} of {len(self.rows)} graphs (single-class labels)")
        return notes

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for r in self.rows:
                w.writerow([r.graph_id] + [repr(float(getattr(r, c))) for c in METRICS])
            if self.rows:
                agg = self.aggregates
                for name in ("mean", "std"):
                    w.writerow([name] + [repr(float(agg[name][c])) for c in METRICS])

    @classmethod
    def from_csv(cls, path):
        """Per-graph rows of an emitted CSV (aggregate rows are recomputed, not read)."""
        rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if tuple(header or ()) != COLUMNS:
                raise ValidationError(f"{path}: expected header {','.join(COLUMNS)}")
            for rec in reader:
                if rec[0] in ("mean", "std"):
                    continue
                rows.append(GraphMetrics(rec[0], *(float(v) for v in rec[1:])))
        return cls(rows)


def read_aggregates(path):
    """The aggregate rows exactly as written."""
    out = {}
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if rec and rec[0] in ("mean", "std"):
                out[rec[0]] = dict(zip(METRICS, (float(v) for v in rec[1:])))
    return out


def _graph_seed(seed, g):
    digest = hashlib.sha256(np.ascontiguousarray(g.W).tobytes()).digest()
    return np.random.SeedSequence([seed, int.from_bytes(digest[:8], "little")])


def evaluate_graph(model, lg, cfg, graph_id="0"):
    """Complete under the full mask, score residuals, and (optionally) complete a masked copy."""
    g = lg.graph
    seq = _graph_seed(cfg.seed, g)
    full_rng, mask_rng, masked_rng = (np.random.default_rng(s) for s in seq.spawn(3))
    full = complete_graph(PartialGraph(g, PartialMask.full(g.n)), model, cfg.k, cfg.restarts,
                          full_rng, cfg.completion)
    edges = edge_anomaly_scores(g, full.best.graph, cfg.score_variant)
    nodes = node_anomaly_scores(edges)
    iu = np.triu_indices(g.n, 1)
    edge_auc = _auc_or_nan(edges[iu], lg.edge_label_matrix()[iu])
    node_auc = _auc_or_nan(nodes, lg.node_labels)
    masked_auc = math.nan
    if cfg.mask_fraction > 0:
        mask = PartialMask.random(g.n, cfg.mask_fraction, mask_rng)
        hi, hj = mask.hidden_pairs()
        if hi.size:
            done = complete_graph(apply_mask(g, mask), model, cfg.k, cfg.restarts, masked_rng, cfg.completion)
            masked_auc = _auc_or_nan(done.best.graph[hi, hj], g.binary()[hi, hj])
    return GraphMetrics(str(graph_id), edge_auc, node_auc, masked_auc, float(edges[iu].mean()))


def evaluate_run(model, test_set, cfg=None):
    """Per-graph metrics for a labeled test set.

    ``test_set`` is a sequence of LabeledGraph (ids are positions) or a mapping
    id -> LabeledGraph.  Each graph's randomness is keyed by its content, so
    aggregates do not depend on the order of the set.
    """
    cfg = EvalConfig() if cfg is None else cfg
    items = test_set.items() if hasattr(test_set, "items") else enumerate(test_set)
    rows = [evaluate_graph(model, lg, cfg, gid) for gid, lg in items]
    return MetricsReport(rows, cfg.fingerprint())


__all__ = [
    "COLUMNS", "EvalConfig", "GraphMetrics", "MetricsReport", "edge_anomaly_scores", "evaluate_graph",
    "evaluate_run", "minmax_weights", "node_anomaly_scores", "read_aggregates", "roc_auc",
]
