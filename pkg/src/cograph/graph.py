"""Graph data model: adjacency math, synthetic generation, node splitting.

Graphs are undirected, unweighted, with dense real node features and
optional integer class labels. Instances are immutable after construction
and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError

Edge = tuple[int, int]


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    if a.flags.writeable:
        a = a.copy()  # never flip flags on a caller's array
        a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected graph with node features and optional labels.

    edges holds pairs (i, j) with i < j; the implied adjacency is symmetric
    with zero diagonal. X has one row per node. labels, when present, are
    class ids in [0, C).
    """

    n: int
    edges: frozenset[Edge]
    X: np.ndarray
    labels: np.ndarray | None = None
    C: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"graph needs at least one node, got n={self.n}")
        if self.X.ndim != 2 or self.X.shape[0] != self.n or self.X.shape[1] < 1:
            raise ValidationError(
                f"feature matrix must be ({self.n}, m>=1), got {self.X.shape}"
            )
        for i, j in self.edges:
            if not (0 <= i < j < self.n):
                raise ValidationError(f"edge ({i}, {j}) out of range for n={self.n}")
        if self.labels is not None:
            if self.labels.shape != (self.n,):
                raise ValidationError(
                    f"labels must have shape ({self.n},), got {self.labels.shape}"
                )
            if self.C is None or self.C < 1:
                raise ValidationError("labeled graph requires a positive class count")
            if self.labels.min() < 0 or self.labels.max() >= self.C:
                raise ValidationError(
                    f"labels must lie in [0, {self.C}), got range "
                    f"[{self.labels.min()}, {self.labels.max()}]"
                )

    @property
    def m(self) -> int:
        return self.X.shape[1]

    @property
    def num_edges(self) -> int:
        return len(self.edges)


def make_graph(n, edges, X, labels=None, C=None) -> Graph:
    """Build a Graph, normalizing the edge set.

    Input pairs are symmetrized by union (both (i,j) and (j,i) collapse to
    one undirected edge), duplicates are dropped, and self-loops are
    silently discarded.
    """
    norm: set[Edge] = set()
    for i, j in edges:
        i, j = int(i), int(j)
        if i == j:
            continue
        norm.add((i, j) if i < j else (j, i))
    X = _freeze(np.asarray(X, dtype=np.float64))
    if labels is not None:
        labels = _freeze(np.asarray(labels, dtype=np.int64))
        if C is None:
            C = int(labels.max()) + 1 if labels.size else 0
    return Graph(n=int(n), edges=frozenset(norm), X=X, labels=labels, C=C)


def graphs_equal(a: Graph, b: Graph) -> bool:
    """Exact (bitwise) equality of two graphs."""
    if a.n != b.n or a.edges != b.edges or a.C != b.C:
        return False
    if not np.array_equal(a.X, b.X):
        return False
    if (a.labels is None) != (b.labels is None):
        return False
    return a.labels is None or np.array_equal(a.labels, b.labels)


def with_edges(g: Graph, edges) -> Graph:
    """Copy of g with a replaced edge set (features and labels shared)."""
    return make_graph(g.n, edges, g.X, g.labels, g.C)


def with_features(g: Graph, X) -> Graph:
    """Copy of g with a replaced feature matrix (edges and labels shared)."""
    return make_graph(g.n, g.edges, X, g.labels, g.C)


def edge_array(g: Graph) -> np.ndarray:
    """Edges as a sorted (|E|, 2) int array; deterministic order."""
    if not g.edges:
        return np.zeros((0, 2), dtype=np.int64)
    return np.array(sorted(g.edges), dtype=np.int64)


def adjacency(g: Graph) -> sp.csr_matrix:
    """Binary symmetric adjacency matrix A in CSR form."""
    e = edge_array(g)
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    data = np.ones(rows.shape[0], dtype=np.float64)
    return sp.csr_matrix((data, (rows, cols)), shape=(g.n, g.n))


def normalize_adjacency_matrix(A: sp.spmatrix) -> sp.csr_matrix:
    """Self-loop-augmented symmetric normalization of an adjacency matrix.

    Returns D~^{-1/2} (A + I) D~^{-1/2} where D~ is the degree matrix of
    A + I. Entries are computed as d_i^{-1/2} * a_ij * d_j^{-1/2}, which
    keeps the result exactly symmetric. Self-loops guarantee every degree
    is at least 1, so no division by zero can occur.
    """
    n = A.shape[0]
    A_tilde = (A + sp.identity(n, format="csr", dtype=np.float64)).tocoo()
    deg = np.asarray(A_tilde.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    data = inv_sqrt[A_tilde.row] * A_tilde.data * inv_sqrt[A_tilde.col]
    return sp.csr_matrix((data, (A_tilde.row, A_tilde.col)), shape=(n, n))


def normalized_adjacency(g: Graph) -> sp.csr_matrix:
    """Normalized adjacency with self-loops used by graph convolutions."""
    return normalize_adjacency_matrix(adjacency(g))


def generate_synthetic(
    n: int,
    C: int,
    p_in: float,
    p_out: float,
    m: int,
    feature_noise: float,
    seed: int,
) -> Graph:
    """Planted-partition graph with class-correlated binary features.

    Nodes take classes round-robin. Intra-class pairs connect with
    probability p_in, inter-class pairs with p_out. Each node's feature
    vector is the indicator of its class's m//C-wide column block, with
    every bit independently flipped with probability feature_noise.
    Deterministic for a fixed seed.
    """
    if not (0.0 <= p_out < p_in <= 1.0):
        raise ValidationError(f"need 0 <= p_out < p_in <= 1, got p_in={p_in} p_out={p_out}")
    if not (0.0 <= feature_noise <= 1.0):
        raise ValidationError(f"feature_noise must be a probability, got {feature_noise}")
    if n < C or C < 1:
        raise ValidationError(f"need n >= C >= 1, got n={n} C={C}")
    if m < 1:
        raise ValidationError(f"need m >= 1, got m={m}")

    rng = np.random.default_rng(seed)
    labels = np.arange(n, dtype=np.int64) % C

    iu, ju = np.triu_indices(n, k=1)
    p = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(iu.shape[0]) < p
    edges = zip(iu[keep].tolist(), ju[keep].tolist())

    width = m // C
    X = np.zeros((n, m), dtype=np.float64)
    for c in range(C):
        X[labels == c, c * width : (c + 1) * width] = 1.0
    if feature_noise > 0.0:
        flips = rng.random((n, m)) < feature_noise
        X = np.where(flips, 1.0 - X, X)

    return make_graph(n, edges, X, labels, C)


@dataclass(frozen=True, eq=False)
class NodeSplit:
    """Disjoint labeled/validation/test index sets over one graph.

    class_histogram counts labels over the labeled set; warnings record
    classes absent from it (their pseudo-label quotas become zero).
    """

    labeled: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    class_histogram: np.ndarray
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self):
        parts = [set(self.labeled.tolist()), set(self.validation.tolist()), set(self.test.tolist())]
        total = len(self.labeled) + len(self.validation) + len(self.test)
        if len(parts[0] | parts[1] | parts[2]) != total:
            raise ValidationError("split sets must be pairwise disjoint")
        if int(self.class_histogram.sum()) != len(self.labeled):
            raise ValidationError("class_histogram must sum to the labeled-set size")


def split_nodes(g: Graph, train_frac: float, val_frac: float, seed: int) -> NodeSplit:
    """Seeded uniform split into labeled/validation/test index sets.

    Sizes are floor(frac * n); all remaining nodes go to the test set.
    The split is uniform random, not class-stratified.
    """
    if train_frac <= 0 or val_frac <= 0 or train_frac + val_frac > 1:
        raise ValidationError(
            f"fractions must be positive with sum <= 1, got {train_frac}, {val_frac}"
        )
    if g.labels is None:
        raise ValidationError("split_nodes requires a labeled graph")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(g.n)
    n_train = int(train_frac * g.n)
    n_val = int(val_frac * g.n)
    labeled = np.sort(perm[:n_train])
    validation = np.sort(perm[n_train : n_train + n_val])
    test = np.sort(perm[n_train + n_val :])

    hist = np.bincount(g.labels[labeled], minlength=g.C)
    warnings = tuple(
        f"class {c} absent from labeled set" for c in range(g.C) if hist[c] == 0
    )
    return NodeSplit(
        labeled=_freeze(labeled),
        validation=_freeze(validation),
        test=_freeze(test),
        class_histogram=_freeze(hist),
        warnings=warnings,
    )
