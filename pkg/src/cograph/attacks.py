"""Graph perturbation generators for robustness evaluation.

Structural attacks flip edges (uniformly at random, or label-aware: delete
same-class edges / insert cross-class edges). The feature attack greedily
flips binary feature bits along the victim's loss gradient. Externally
produced perturbed adjacencies are ingested from edge-list files. All
perturbers preserve the node count and labels; structural ones leave X
untouched and the feature attack leaves the edge set untouched.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError
from .graph import Graph, with_edges, with_features
from .io import parse_edge_list
from .models import FEATURE_KINDS, TrainedSubModel, input_gradient

ATTACK_METHODS = ("random", "dice", "grad-feat", "external")
_FLIP_BATCH = 32


@dataclass(frozen=True)
class PerturbationPlan:
    """Budget split and method for one attack run.

    total_rate is a fraction of the clean edge count; ratio assigns that
    budget to feature-bit flips (the rest goes to edge flips, keeping the
    two commensurable in edge-count units).
    """

    total_rate: float
    ratio: float = 0.0
    method: str = "random"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.total_rate <= 1.0:
            raise ValidationError(f"total_rate must lie in [0, 1], got {self.total_rate}")
        if not 0.0 <= self.ratio <= 1.0:
            raise ValidationError(f"ratio must lie in [0, 1], got {self.ratio}")
        if self.method not in ATTACK_METHODS:
            raise ValidationError(f"method must be one of {ATTACK_METHODS}, got {self.method!r}")


def mixed_budget(total_rate: float, feature_ratio: float, n_edges: int) -> tuple[int, int]:
    """(feature bits, structure edge flips) for a shared budget of
    total_rate * n_edges, split by feature_ratio."""
    if not 0.0 <= total_rate <= 1.0 or not 0.0 <= feature_ratio <= 1.0:
        raise ValidationError("rates must lie in [0, 1]")
    feature = round(feature_ratio * total_rate * n_edges)
    structure = round((1.0 - feature_ratio) * total_rate * n_edges)
    return int(feature), int(structure)


def _sample_pairs(rng: np.random.Generator, n: int, budget: int) -> list[tuple[int, int]]:
    """budget distinct unordered pairs (i < j), uniform over all non-self pairs."""
    total = n * (n - 1) // 2
    if budget > total:
        raise ValidationError(f"cannot flip {budget} pairs; only {total} exist")
    chosen: set[tuple[int, int]] = set()
    out: list[tuple[int, int]] = []
    while len(out) < budget:
        i = int(rng.integers(n))
        j = int(rng.integers(n))
        if i == j:
            continue
        pair = (i, j) if i < j else (j, i)
        if pair in chosen:
            continue
        chosen.add(pair)
        out.append(pair)
    return out


def random_structure_perturb(g: Graph, rate: float, seed: int) -> Graph:
    """Toggle round(rate * |E|) uniformly chosen node pairs (edge <-> non-edge)."""
    if rate < 0:
        raise ValidationError(f"rate must be nonnegative, got {rate}")
    budget = int(round(rate * g.num_edges))
    if budget == 0:
        return g
    rng = np.random.default_rng(seed)
    edges = set(g.edges)
    for pair in _sample_pairs(rng, g.n, budget):
        if pair in edges:
            edges.remove(pair)
        else:
            edges.add(pair)
    return with_edges(g, edges)


def dice_perturb(g: Graph, labels: np.ndarray | None, rate: float, seed: int) -> Graph:
    """Label-aware structural attack: delete internal, insert cross-class.

    Each budget unit deletes a random same-class edge or inserts a random
    cross-class non-edge with equal probability. When one kind of candidate
    runs out the remaining budget goes to the other kind.
    """
    if rate < 0:
        raise ValidationError(f"rate must be nonnegative, got {rate}")
    labels = np.asarray(labels if labels is not None else g.labels)
    if labels is None or labels.shape != (g.n,):
        raise ValidationError("dice_perturb needs one label per node")
    budget = int(round(rate * g.num_edges))
    if budget == 0:
        return g

    rng = np.random.default_rng(seed)
    edges = set(g.edges)
    same_class = [e for e in sorted(edges) if labels[e[0]] == labels[e[1]]]
    insert_exhausted = False

    def try_insert() -> bool:
        nonlocal insert_exhausted
        if insert_exhausted:
            return False
        for _ in range(200):
            i = int(rng.integers(g.n))
            j = int(rng.integers(g.n))
            if i == j or labels[i] == labels[j]:
                continue
            pair = (i, j) if i < j else (j, i)
            if pair in edges:
                continue
            edges.add(pair)
            return True
        insert_exhausted = True
        return False

    def try_delete() -> bool:
        if not same_class:
            return False
        idx = int(rng.integers(len(same_class)))
        pair = same_class[idx]
        same_class[idx] = same_class[-1]
        same_class.pop()
        edges.remove(pair)
        return True

    spent = 0
    while spent < budget:
        if rng.random() < 0.5:
            done = try_delete() or try_insert()
        else:
            done = try_insert() or try_delete()
        if not done:
            break  # both candidate kinds exhausted
        spent += 1
    return with_edges(g, edges)


def feature_flip_attack(
    g: Graph,
    victim: TrainedSubModel,
    budget: int,
    seed: int,
    targets: np.ndarray | None = None,
) -> Graph:
    """Greedy gradient-guided bit flips on binary features.

    Repeatedly flips the feature bits whose gradient most increases the
    victim's loss on the target nodes (sign-consistent with the flip
    direction: score = grad * (1 - 2x)), recomputing gradients after every
    batch of 32 flips. Bits never flip twice; the attack stops early if no
    remaining flip increases the loss. The victim must consume raw node
    features. The procedure itself is deterministic; seed is recorded for
    provenance only.
    """
    del seed  # greedy selection is fully deterministic
    if budget < 0:
        raise ValidationError(f"budget must be nonnegative, got {budget}")
    if victim.spec.kind not in FEATURE_KINDS:
        raise ValidationError(
            f"feature attack needs a feature-dominant victim, got {victim.spec.kind!r}"
        )
    X = np.array(g.X)
    if not np.isin(X, (0.0, 1.0)).all():
        raise ValidationError("feature attack requires binary features")
    if budget == 0:
        return g
    targets = np.asarray(targets if targets is not None else np.arange(g.n), dtype=np.int64)
    target_labels = g.labels[targets]

    was_sparse = sp.issparse(victim.inputs)
    flipped = np.zeros(X.shape, dtype=bool)
    remaining = budget
    while remaining > 0:
        inputs = sp.csr_matrix(X) if was_sparse else X
        grad = input_gradient(replace(victim, inputs=inputs), targets, target_labels)
        score = grad * (1.0 - 2.0 * X)
        score[flipped] = -np.inf
        flat = score.ravel()
        take = min(_FLIP_BATCH, remaining)
        top = np.argpartition(-flat, min(take + 256, flat.size - 1))[: take + 256]
        top = sorted(top.tolist(), key=lambda i: (-flat[i], i))[:take]
        top = [i for i in top if flat[i] > 0.0]
        if not top:
            break
        rows, cols = np.unravel_index(np.array(top, dtype=np.int64), X.shape)
        X[rows, cols] = 1.0 - X[rows, cols]
        flipped[rows, cols] = True
        remaining -= len(top)
    return with_features(g, X)


def load_perturbed_adjacency(g: Graph, path) -> Graph:
    """Replace the edge set with an externally produced edge-list file."""
    pairs = parse_edge_list(path)
    for i, j in pairs:
        if not (0 <= i < g.n and 0 <= j < g.n):
            raise ValidationError(f"{path}: node index ({i}, {j}) out of range for n={g.n}")
    return with_edges(g, pairs)


def flip_log_hash(original: Graph, perturbed: Graph) -> str:
    """SHA-256 over the symmetric edge difference and changed feature bits."""
    h = hashlib.sha256()
    for i, j in sorted(original.edges ^ perturbed.edges):
        h.update(f"e{i},{j};".encode())
    diff = np.argwhere(original.X != perturbed.X)
    for i, j in diff:
        h.update(f"x{i},{j};".encode())
    return h.hexdigest()


def write_sidecar(path, plan: PerturbationPlan, original: Graph, perturbed: Graph) -> None:
    """Provenance record emitted next to a perturbed dataset."""
    record = {
        "method": plan.method,
        "rate": plan.total_rate,
        "ratio": plan.ratio,
        "seed": plan.seed,
        "flip_log_hash": flip_log_hash(original, perturbed),
        "edges_before": original.num_edges,
        "edges_after": perturbed.num_edges,
        "feature_bits_changed": int((original.X != perturbed.X).sum()),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
