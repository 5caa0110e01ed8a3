"""Synthetic connectome-like graphs with injected, labeled anomalies.

Nodes ``0..n/2-1`` form the left hemisphere and ``n/2..n-1`` the right one;
node ``i`` and ``i + n/2`` are homologous.  Each of the ``b`` communities is
bilateral: it owns ``n/(2b)`` consecutive nodes in each hemisphere.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .graph import Graph, load_graph, save_graph

ANOMALY_KINDS = ("edge-deletion", "weight-dampening", "block-rewire")


@dataclass(frozen=True)
class ConnectomeSpec:
    n: int = 20
    blocks: int = 2
    p_in: float = 0.8
    p_out: float = 0.05
    weight_loc: float = 0.0
    weight_scale: float = 0.5
    mirror: float = 0.5

    def __post_init__(self):
        if self.n <= 0 or self.blocks <= 0:
            raise ValidationError("n and blocks must be positive")
        if self.n % (2 * self.blocks):
            raise ValidationError(f"n={self.n} is not divisible by 2*blocks={2 * self.blocks}")
        if not 0 <= self.p_out < self.p_in <= 1:
            raise ValidationError(f"need 0 <= p_out < p_in <= 1, got p_out={self.p_out}, p_in={self.p_in}")
        if self.weight_scale <= 0:
            raise ValidationError("weight_scale must be positive")
        if not 0 <= self.mirror <= 1:
            raise ValidationError(f"mirror strength must lie in [0, 1], got {self.mirror}")

    def membership(self):
        half = self.n // 2
        per = half // self.blocks
        side = np.arange(half) // per
        return np.concatenate([side, side])


@dataclass(frozen=True)
class AnomalySpec:
    kind: str
    block: int
    severity: float
    seed: int

    def __post_init__(self):
        if self.kind not in ANOMALY_KINDS:
            raise ValidationError(f"unknown anomaly kind {self.kind!r}")
        if not 0 < self.severity <= 1:
            raise ValidationError(f"severity must lie in (0, 1], got {self.severity}")


@dataclass(frozen=True, eq=False)
class LabeledGraph:
    graph: Graph
    edge_labels: tuple = ()
    node_labels: np.ndarray = field(default=None)
    anomaly: AnomalySpec | None = None

    def __post_init__(self):
        if self.node_labels is None:
            labels = np.zeros(self.graph.n, dtype=np.int64)
            for i, j in self.edge_labels:
                labels[i] = labels[j] = 1
            object.__setattr__(self, "node_labels", labels)

    def edge_label_matrix(self):
        lab = np.zeros((self.graph.n, self.graph.n), dtype=np.int64)
        for i, j in self.edge_labels:
            lab[i, j] = lab[j, i] = 1
        return lab

    def __eq__(self, other):
        return (isinstance(other, LabeledGraph) and self.graph == other.graph
                and self.edge_labels == other.edge_labels
                and np.array_equal(self.node_labels, other.node_labels)
                and self.anomaly == other.anomaly)

    __hash__ = None


def generate_connectome(spec, seed):
    """One block-model draw with log-normal weights and hemispheric mirroring."""
    rng = np.random.default_rng(seed)
    n, half = spec.n, spec.n // 2
    member = spec.membership()
    prob = np.where(member[:, None] == member[None, :], spec.p_in, spec.p_out)
    iu = np.triu_indices(n, 1)
    present = rng.random(len(iu[0])) < prob[iu]
    weights = rng.lognormal(spec.weight_loc, spec.weight_scale, size=len(iu[0]))
    w = np.zeros((n, n))
    w[iu] = np.where(present, weights, 0.0)
    w = w + w.T
    # right-hemisphere pairs copy their left homolog with probability `mirror`
    li, lj = np.triu_indices(half, 1)
    copy = rng.random(len(li)) < spec.mirror
    ri, rj = li[copy] + half, lj[copy] + half
    w[ri, rj] = w[li[copy], lj[copy]]
    w[rj, ri] = w[ri, rj]
    return Graph.from_weights(w)


def _block_pairs(member, block):
    nodes = np.flatnonzero(member == block)
    if nodes.size < 2:
        raise ValidationError(f"block {block} has no vertex pairs")
    ii, jj = np.triu_indices(nodes.size, 1)
    return nodes[ii], nodes[jj]


def inject_anomaly(g, anomaly, member):
    """Perturb the target block of ``g``; returns the graph with exact labels."""
    member = np.asarray(member)
    if anomaly.block not in set(member.tolist()):
        raise ValidationError(f"target block {anomaly.block} does not exist")
    rng = np.random.default_rng(anomaly.seed)
    bi, bj = _block_pairs(member, anomaly.block)
    w = np.array(g.W)
    has_edge = w[bi, bj] > 0
    ei, ej = bi[has_edge], bj[has_edge]
    s = anomaly.severity
    if anomaly.kind == "weight-dampening":
        w[ei, ej] = w[ei, ej] * (1.0 - s)
        w[ej, ei] = w[ei, ej]
        touched = list(zip(ei.tolist(), ej.tolist()))
    elif anomaly.kind == "edge-deletion":
        k = min(math.ceil(s * len(ei)), len(ei))
        pick = np.sort(rng.choice(len(ei), size=k, replace=False))
        w[ei[pick], ej[pick]] = 0.0
        w[ej[pick], ei[pick]] = 0.0
        touched = list(zip(ei[pick].tolist(), ej[pick].tolist()))
    else:
        # move ceil(s * m) edges, weights kept, onto empty pairs of the same block
        oi, oj = bi[~has_edge], bj[~has_edge]
        k = min(math.ceil(s * len(ei)), len(ei), len(oi))
        src = np.sort(rng.choice(len(ei), size=k, replace=False))
        dst = np.sort(rng.choice(len(oi), size=k, replace=False))
        moved = w[ei[src], ej[src]]
        w[ei[src], ej[src]] = 0.0
        w[ej[src], ei[src]] = 0.0
        w[oi[dst], oj[dst]] = moved
        w[oj[dst], oi[dst]] = moved
        touched = list(zip(ei[src].tolist(), ej[src].tolist())) + list(zip(oi[dst].tolist(), oj[dst].tolist()))
    return LabeledGraph(Graph.from_weights(w), tuple(sorted(touched)), anomaly=anomaly)


@dataclass(frozen=True)
class Dataset:
    train: list
    test: list
    manifest: dict


def _seed_ints(seq, count):
    return [int(s) for s in seq.generate_state(count, dtype=np.uint32)] if count else []


def generate_dataset(spec, count, anomaly_fraction, seed, *, train_count=None,
                     kind="weight-dampening", severity=0.8):
    """Anomaly-free training graphs plus a test set where a fixed fraction is perturbed.

    ``count`` is the test-set size; ``train_count`` defaults to ``count``.
    """
    if count <= 0:
        raise ValidationError("count must be positive")
    if not 0 <= anomaly_fraction <= 1:
        raise ValidationError(f"anomaly_fraction must lie in [0, 1], got {anomaly_fraction}")
    train_count = count if train_count is None else train_count
    train_seq, test_seq, anomaly_seq = np.random.SeedSequence(seed).spawn(3)
    n_bad = int(math.floor(anomaly_fraction * count + 0.5))
    pick_rng = np.random.default_rng(anomaly_seq)
    bad = sorted(pick_rng.choice(count, size=n_bad, replace=False).tolist())
    anomalies = {}
    for idx, s in zip(bad, _seed_ints(anomaly_seq.spawn(1)[0], n_bad)):
        anomalies[idx] = {"kind": kind, "block": int(s % spec.blocks), "severity": float(severity), "seed": s}
    manifest = {
        "spec": asdict(spec),
        "seed": seed,
        "train_seeds": _seed_ints(train_seq, train_count),
        "test_seeds": _seed_ints(test_seq, count),
        "anomalies": {str(k): v for k, v in anomalies.items()},
    }
    return dataset_from_manifest(manifest)


def dataset_from_manifest(manifest):
    spec = ConnectomeSpec(**manifest["spec"])
    member = spec.membership()
    train = [generate_connectome(spec, s) for s in manifest["train_seeds"]]
    test = []
    for idx, s in enumerate(manifest["test_seeds"]):
        g = generate_connectome(spec, s)
        a = manifest["anomalies"].get(str(idx))
        test.append(inject_anomaly(g, AnomalySpec(**a), member) if a else LabeledGraph(g))
    return Dataset(train, test, manifest)


def write_labels(lg, edges_path, nodes_path):
    with open(edges_path, "w") as fh:
        fh.write("i,j\n")
        for i, j in lg.edge_labels:
            fh.write(f"{i},{j}\n")
    with open(nodes_path, "w") as fh:
        fh.write("node,label\n")
        for i, v in enumerate(lg.node_labels):
            fh.write(f"{i},{int(v)}\n")


def read_labels(g, edges_path):
    pairs = []
    with open(edges_path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "i,j":
        raise ValidationError(f"{edges_path}: expected header i,j")
    for k, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            i, j = (int(t) for t in line.split(","))
        except ValueError:
            raise ValidationError(f"{edges_path}:{k}: expected two integers, got {line!r}") from None
        if not (0 <= i < g.n and 0 <= j < g.n) or i == j:
            raise ValidationError(f"{edges_path}:{k}: ({i},{j}) is not a vertex pair of an {g.n}-node graph")
        pairs.append((min(i, j), max(i, j)))
    return tuple(sorted(set(pairs)))


def write_dataset(ds, out_dir):
    """Graphs as adjacency CSVs, labels as CSVs and a JSON manifest listing every file."""
    out = Path(out_dir)
    (out / "train").mkdir(parents=True, exist_ok=True)
    (out / "test").mkdir(parents=True, exist_ok=True)
    files = {"train": [], "test": []}
    for k, g in enumerate(ds.train):
        rel = f"train/graph_{k:04d}.csv"
        save_graph(g, out / rel)
        files["train"].append(rel)
    for k, lg in enumerate(ds.test):
        stem = f"test/graph_{k:04d}"
        save_graph(lg.graph, out / f"{stem}.csv")
        write_labels(lg, out / f"{stem}_edges.csv", out / f"{stem}_nodes.csv")
        files["test"].append({"graph": f"{stem}.csv", "edge_labels": f"{stem}_edges.csv",
                              "node_labels": f"{stem}_nodes.csv"})
    manifest = dict(ds.manifest, files=files)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out / "manifest.json"


def read_dataset(data_dir):
    """Reload a written dataset from its files (not by regenerating from seeds)."""
    root = Path(data_dir)
    try:
        manifest = json.loads((root / "manifest.json").read_text())
        files = manifest["files"]
    except FileNotFoundError:
        raise ValidationError(f"{root}: no manifest.json") from None
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValidationError(f"{root}/manifest.json is malformed: {exc}") from None
    anomalies = manifest.get("anomalies", {})
    train = [load_graph(root / rel) for rel in files["train"]]
    test = []
    for k, entry in enumerate(files["test"]):
        g = load_graph(root / entry["graph"])
        a = anomalies.get(str(k))
        test.append(LabeledGraph(g, read_labels(g, root / entry["edge_labels"]),
                                 anomaly=AnomalySpec(**a) if a else None))
    return Dataset(train, test, {k: v for k, v in manifest.items() if k != "files"})
