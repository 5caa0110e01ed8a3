"""Weighted undirected graphs with node features, observation masks and CSV I/O."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError

SYMMETRY_TOL = 1e-9


def row_normalize(w):
    """Rows scaled to unit Euclidean norm; zero rows stay zero."""
    w = np.asarray(w, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", w, w))
    return w / np.where(norms > 0, norms, 1.0)[:, None]


def _check_weights(w, tol=SYMMETRY_TOL):
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValidationError(f"adjacency must be square, got shape {w.shape}")
    if not np.isfinite(w).all():
        raise ValidationError("adjacency has non-finite entries")
    asym = np.abs(w - w.T)
    if asym.size and asym.max() > tol:
        i, j = np.unravel_index(int(np.argmax(asym)), asym.shape)
        i, j = min(i, j), max(i, j)
        raise ValidationError(
            f"adjacency is not symmetric at ({i},{j}): W[{i},{j}]={w[i, j]!r} vs W[{j},{i}]={w[j, i]!r}"
        )
    if (w < 0).any():
        i, j = np.argwhere(w < 0)[0]
        raise ValidationError(f"negative weight W[{i},{j}]={w[i, j]!r}")
    diag = np.flatnonzero(np.diag(w) != 0)
    if diag.size:
        raise ValidationError(f"nonzero diagonal at node {int(diag[0])}")


@dataclass(frozen=True, eq=False)
class Graph:
    """Weighted undirected graph.  ``W`` is symmetric with zero diagonal, ``X`` holds node features."""

    W: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        w = np.array(self.W, dtype=np.float64)
        x = np.array(self.X, dtype=np.float64)
        _check_weights(w, tol=1e-12)
        if x.ndim != 2 or x.shape[0] != w.shape[0]:
            raise ValidationError(f"feature matrix has shape {x.shape}, expected {w.shape[0]} rows")
        if not np.isfinite(x).all():
            raise ValidationError("feature matrix has non-finite entries")
        w.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "W", w)
        object.__setattr__(self, "X", x)

    @classmethod
    def from_weights(cls, w, x=None):
        """Build a graph; features default to the row-normalized adjacency."""
        w = np.array(w, dtype=np.float64)
        return cls(w, row_normalize(w) if x is None else x)

    @property
    def n(self):
        return self.W.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.W.shape == other.W.shape and self.X.shape == other.X.shape
                and np.array_equal(self.W, other.W) and np.array_equal(self.X, other.X))

    __hash__ = None

    def binary(self):
        return (self.W > 0).astype(np.float64)


@dataclass(frozen=True, eq=False)
class PartialMask:
    """Symmetric 0/1 observation mask; the diagonal is always observed."""

    delta: np.ndarray

    def __post_init__(self):
        d = np.array(self.delta, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValidationError(f"mask must be square, got {d.shape}")
        if not np.isin(d, (0.0, 1.0)).all():
            raise ValidationError("mask entries must be 0 or 1")
        if not np.array_equal(d, d.T):
            i, j = np.argwhere(d != d.T)[0]
            raise ValidationError(f"mask is not symmetric at ({min(i, j)},{max(i, j)})")
        if not (np.diag(d) == 1).all():
            raise ValidationError("mask diagonal must be 1")
        d.setflags(write=False)
        object.__setattr__(self, "delta", d)

    @classmethod
    def full(cls, n):
        return cls(np.ones((n, n)))

    @classmethod
    def random(cls, n, fraction, rng):
        """Hide ``round(fraction * n(n-1)/2)`` off-diagonal pairs chosen uniformly."""
        iu = np.triu_indices(n, 1)
        n_pairs = len(iu[0])
        hide = int(np.floor(fraction * n_pairs + 0.5))
        chosen = rng.choice(n_pairs, size=hide, replace=False)
        d = np.ones((n, n))
        d[iu[0][chosen], iu[1][chosen]] = 0.0
        d[iu[1][chosen], iu[0][chosen]] = 0.0
        return cls(d)

    @property
    def n(self):
        return self.delta.shape[0]

    def observed_offdiag(self):
        return self.delta * (1.0 - np.eye(self.n))

    def hidden_pairs(self):
        iu = np.triu_indices(self.n, 1)
        keep = self.delta[iu] == 0
        return iu[0][keep], iu[1][keep]


@dataclass(frozen=True)
class PartialGraph:
    graph: Graph
    mask: PartialMask

    def __post_init__(self):
        if (self.graph.W[self.mask.delta == 0] != 0).any():
            raise ValidationError("partial graph has nonzero weight on an unobserved entry")


def normalize_adjacency(g):
    """Scale ``W`` by its largest row sum so the spectral radius is at most 1."""
    s = g.W.sum(axis=1).max() if g.n else 0.0
    if s == 0:
        return g
    return Graph(g.W / s, g.X)


def permute(g, perm):
    """Relabel nodes: node ``i`` becomes node ``perm[i]``.  ``W' = P W P^T``, ``X' = P X``."""
    perm = np.asarray(perm)
    if perm.shape != (g.n,) or not np.array_equal(np.sort(perm), np.arange(g.n)):
        raise ValidationError(f"not a permutation of 0..{g.n - 1}: {perm.tolist()}")
    inv = np.argsort(perm)
    return Graph(g.W[np.ix_(inv, inv)], g.X[inv])


def apply_mask(g, m):
    if m.n != g.n:
        raise ValidationError(f"mask is {m.n}x{m.n} but graph has {g.n} nodes")
    w = g.W * m.delta
    # connectivity-profile features would leak hidden entries, so they are rebuilt
    x = row_normalize(w) if np.array_equal(g.X, row_normalize(g.W)) else g.X
    return PartialGraph(Graph(w, x), m)


# ---------------------------------------------------------------------------
# file formats


def _read_rows(path):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
    return rows


def _read_matrix(path):
    rows = _read_rows(path)
    if not rows:
        raise ValidationError(f"{path}: no matrix rows")
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise ValidationError(f"{path}: ragged rows (widths {sorted(widths)})")
    return np.array(rows, dtype=np.float64).reshape(len(rows), -1)


def _read_edgelist(path):
    with open(path) as fh:
        header = fh.readline().strip()
    try:
        n = int(header.split("n=")[1])
    except (IndexError, ValueError):
        raise ValidationError(f"{path}: bad edgelist header {header!r}") from None
    w = np.zeros((n, n))
    for r in _read_rows(path):
        if len(r) != 3:
            raise ValidationError(f"{path}: edgelist rows need i,j,w")
        i, j, val = int(r[0]), int(r[1]), r[2]
        if not (0 <= i < n and 0 <= j < n):
            raise ValidationError(f"{path}: edge ({i},{j}) out of range for n={n}")
        w[i, j] = val
        w[j, i] = val
    return w


def read_adjacency(path):
    path = Path(path)
    with open(path) as fh:
        first = fh.readline()
    if first.startswith("# edgelist"):
        return _read_edgelist(path)
    w = _read_matrix(path)
    if w.shape[0] != w.shape[1]:
        raise ValidationError(f"{path}: adjacency has {w.shape[0]} rows of width {w.shape[1]}")
    return w


def load_graph(adjacency_path, features_path=None):
    w = read_adjacency(adjacency_path)
    _check_weights(w)
    # sub-tolerance asymmetry is averaged away so the Graph invariant holds exactly
    w = 0.5 * (w + w.T)
    if features_path is None:
        return Graph.from_weights(w)
    x = _read_matrix(features_path)
    return Graph(w, x)


def load_mask(path):
    return PartialMask(_read_matrix(path))


def write_matrix(path, a):
    with open(path, "w") as fh:
        for row in np.asarray(a, dtype=np.float64):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def save_graph(g, adjacency_path, features_path=None):
    write_matrix(adjacency_path, g.W)
    if features_path is not None:
        write_matrix(features_path, g.X)
