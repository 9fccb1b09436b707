"""Two-view co-training with class-balanced pseudo-labeling.

Each iteration retrains both sub-models from scratch on the current
labeled set, refits their temperatures on the untouched validation set,
scores the unlabeled pool with calibrated confidence, and moves the
per-class most confident nodes into the labeled set under quotas derived
from the initial label distribution. Inference averages the two calibrated
probability vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .calibration import calibrate, fit_temperature
from .errors import ValidationError
from .graph import Graph, NodeSplit
from .models import (
    SubModel,
    SubModelSpec,
    TrainedSubModel,
    build_submodel,
    predict_logits,
    train_submodel,
)

PROV_TRUTH = "ground-truth"
PROV_STRUCT = "pseudo:struct"
PROV_FEAT = "pseudo:feat"


@dataclass(frozen=True)
class Quota:
    """Per-class pseudo-label budget for one iteration."""

    per_class: tuple[int, ...]
    total: int

    def __post_init__(self):
        if any(q < 0 for q in self.per_class):
            raise ValidationError("quota counts must be nonnegative")
        if sum(self.per_class) != self.total:
            raise ValidationError("quota counts must sum to the total")


def class_quota(histogram, n_add: int) -> Quota:
    """Split n_add across classes proportionally to the labeled histogram.

    Exact proportions (N_c / N) * n_add are rounded by largest remainder so
    the counts sum to n_add exactly; remainder ties go to the smaller
    class id.
    """
    hist = np.asarray(histogram, dtype=np.float64)
    total = hist.sum()
    if total <= 0:
        raise ValidationError("class histogram must have positive total")
    if n_add < 0:
        raise ValidationError(f"n_add must be nonnegative, got {n_add}")
    exact = hist / total * n_add
    counts = np.floor(exact).astype(np.int64)
    remainder = n_add - int(counts.sum())
    order = sorted(range(hist.size), key=lambda c: (-(exact[c] - counts[c]), c))
    for c in order[:remainder]:
        counts[c] += 1
    return Quota(per_class=tuple(int(q) for q in counts), total=n_add)


class Selection(NamedTuple):
    node: int
    label: int
    confidence: float


def select_confident(
    nodes: np.ndarray, probs: np.ndarray, quota: Quota | None, n_add: int | None = None
) -> tuple[list[Selection], tuple[int, ...]]:
    """Pick the most confident predictions, per class under a quota.

    For each class, nodes whose argmax is that class compete by max
    probability; confidence ties break toward the smaller node index.
    Classes with fewer candidates than quota yield a recorded shortfall
    that is never redistributed. With quota=None (class balancing off) the
    top n_add nodes are taken regardless of class; the shortfall tuple is
    then a single total.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    if probs.shape[0] != nodes.size:
        raise ValidationError("probability rows must align with the node list")
    if nodes.size == 0:
        empty = (0,) * len(quota.per_class) if quota is not None else (n_add or 0,)
        return [], empty
    conf = probs.max(axis=1)
    pred = probs.argmax(axis=1)

    if quota is None:
        if n_add is None:
            raise ValidationError("unbalanced selection needs n_add")
        order = sorted(range(nodes.size), key=lambda r: (-conf[r], nodes[r]))
        chosen = order[: min(n_add, nodes.size)]
        picks = [Selection(int(nodes[r]), int(pred[r]), float(conf[r])) for r in chosen]
        return picks, (max(0, n_add - len(picks)),)

    picks: list[Selection] = []
    shortfall = []
    for c, budget in enumerate(quota.per_class):
        rows = np.flatnonzero(pred == c)
        order = sorted(rows.tolist(), key=lambda r: (-conf[r], nodes[r]))
        take = order[: min(budget, len(order))]
        shortfall.append(budget - len(take))
        picks.extend(Selection(int(nodes[r]), c, float(conf[r])) for r in take)
    return picks, tuple(shortfall)


class Addition(NamedTuple):
    label: int
    provenance: str
    confidence: float


def resolve_conflicts(
    sel_struct: list[Selection], sel_feat: list[Selection]
) -> tuple[dict[int, Addition], int]:
    """Union of both selections; conflicts keep the more confident label.

    A node chosen by both models counts as one conflict; on an exact
    confidence tie the structure model wins.
    """
    merged = {
        s.node: Addition(s.label, PROV_STRUCT, s.confidence) for s in sel_struct
    }
    if len(merged) != len(sel_struct):
        raise ValidationError("duplicate node in structure selection")
    conflicts = 0
    for s in sel_feat:
        if s.node in merged:
            conflicts += 1
            if s.confidence > merged[s.node].confidence:
                merged[s.node] = Addition(s.label, PROV_FEAT, s.confidence)
        else:
            merged[s.node] = Addition(s.label, PROV_FEAT, s.confidence)
    return merged, conflicts


@dataclass(frozen=True)
class LabelEntry:
    label: int
    provenance: str
    iteration: int


@dataclass(frozen=True)
class IterationRecord:
    """History row; the accuracies reflect models trained on this row's S."""

    iteration: int
    s_size: int
    added_per_class_struct: tuple[int, ...]
    added_per_class_feat: tuple[int, ...]
    shortfall_struct: tuple[int, ...]
    shortfall_feat: tuple[int, ...]
    conflicts: int
    acc_struct: float
    acc_feat: float
    acc_ensemble: float
    confusion: tuple[tuple[int, ...], ...]

    def to_json(self) -> dict:
        return {
            "iter": self.iteration,
            "S_size": self.s_size,
            "added_per_class_struct": list(self.added_per_class_struct),
            "added_per_class_feat": list(self.added_per_class_feat),
            "shortfall_struct": list(self.shortfall_struct),
            "shortfall_feat": list(self.shortfall_feat),
            "conflicts": self.conflicts,
            "acc_struct": self.acc_struct,
            "acc_feat": self.acc_feat,
            "acc_ensemble": self.acc_ensemble,
            "confusion_matrix": [list(r) for r in self.confusion],
        }


@dataclass
class CoTrainState:
    """Growing labeled set with provenance, shrinking unlabeled pool, history.

    Mutated only by its owning cotrain loop; ground-truth entries are never
    overwritten and pseudo-labels freeze once added.
    """

    entries: dict[int, LabelEntry]
    unlabeled: set[int]
    iteration: int = 0
    history: list[IterationRecord] = field(default_factory=list)

    @property
    def s_size(self) -> int:
        return len(self.entries)

    def labeled_map(self) -> dict[int, int]:
        return {node: e.label for node, e in self.entries.items()}


def audit_state(state: CoTrainState, g: Graph, split: NodeSplit) -> None:
    """Assert the co-training bookkeeping invariants; raises on violation."""
    s_nodes = set(state.entries)
    if s_nodes & state.unlabeled:
        raise ValidationError("labeled and unlabeled sets overlap")
    universe = set(split.labeled.tolist()) | set(split.test.tolist())
    if s_nodes | state.unlabeled != universe:
        raise ValidationError("labeled/unlabeled union drifted from the split")
    for node in split.labeled:
        e = state.entries[int(node)]
        if e.provenance != PROV_TRUTH or e.label != int(g.labels[node]):
            raise ValidationError(f"ground-truth entry for node {node} was altered")
    sizes = [rec.s_size for rec in state.history]
    if any(b < a for a, b in zip(sizes, sizes[1:])):
        raise ValidationError("labeled-set size decreased across iterations")


def ensemble_predict(
    f_struct: TrainedSubModel, f_feat: TrainedSubModel, nodes
) -> tuple[np.ndarray, np.ndarray]:
    """Average the two calibrated probability rows; argmax ties take the
    smaller class id."""
    probs_s = calibrate(predict_logits(f_struct, nodes), f_struct.temperature)
    probs_f = calibrate(predict_logits(f_feat, nodes), f_feat.temperature)
    probs = (probs_s + probs_f) / 2.0
    return probs.argmax(axis=1), probs


def _iteration_seed(seed: int, iteration: int, role: int) -> int:
    return int(np.random.SeedSequence((seed, iteration, role)).generate_state(1)[0])


def _confusion(true_labels: np.ndarray, pred: np.ndarray, C: int):
    mat = np.zeros((C, C), dtype=np.int64)
    np.add.at(mat, (true_labels, pred), 1)
    return tuple(tuple(int(v) for v in row) for row in mat)


def _label_histogram(picks: list[Selection], C: int) -> tuple[int, ...]:
    hist = np.zeros(C, dtype=np.int64)
    for s in picks:
        hist[s.label] += 1
    return tuple(int(v) for v in hist)


def cotrain(
    g: Graph,
    split: NodeSplit,
    spec_struct: SubModelSpec,
    spec_feat: SubModelSpec,
    n_add: int,
    max_iters: int,
    seed: int,
    calibration: bool = True,
    class_balancing: bool = True,
) -> tuple[TrainedSubModel, TrainedSubModel, CoTrainState]:
    """Run the two-view co-training loop.

    Pseudo-label candidates are drawn from the test pool; validation nodes
    are reserved for temperature fitting. Quotas derive from the initial
    labeled histogram and each model selects n_add nodes per iteration from
    the same unlabeled snapshot. Stops after max_iters iterations or when
    the pool empties; max_iters=0 degrades to the plain calibrated
    two-model ensemble. Reported accuracies always cover the original test
    set, using true labels for evaluation only.
    """
    if not spec_struct.is_structure_view:
        raise ValidationError(f"{spec_struct.kind!r} is not a structure-view kind")
    if spec_feat.is_structure_view:
        raise ValidationError(f"{spec_feat.kind!r} is not a feature-view kind")
    if n_add < 0 or max_iters < 0:
        raise ValidationError("n_add and max_iters must be nonnegative")

    model_s = build_submodel(spec_struct, g)
    model_f = build_submodel(spec_feat, g)
    val_nodes = split.validation
    val_labels = g.labels[val_nodes] if val_nodes.size else None
    test_nodes = split.test
    test_labels = g.labels[test_nodes]

    state = CoTrainState(
        entries={
            int(i): LabelEntry(int(g.labels[i]), PROV_TRUTH, 0) for i in split.labeled
        },
        unlabeled=set(int(i) for i in split.test),
    )
    quota = class_quota(split.class_histogram, n_add) if class_balancing else None

    def fit(model: SubModel, iteration: int, role: int) -> TrainedSubModel:
        trained = train_submodel(
            model, state.labeled_map(), seed=_iteration_seed(seed, iteration, role)
        )
        if calibration and val_nodes.size:
            T = fit_temperature(predict_logits(trained, val_nodes), val_labels)
            trained = trained.with_temperature(T)
        return trained

    added_s: tuple[int, ...] = (0,) * g.C
    added_f: tuple[int, ...] = (0,) * g.C
    short_s: tuple[int, ...] = (0,) * g.C
    short_f: tuple[int, ...] = (0,) * g.C
    conflicts = 0

    while True:
        it = state.iteration
        f_struct = fit(model_s, it, 0)
        f_feat = fit(model_f, it, 1)

        pred, _ = ensemble_predict(f_struct, f_feat, test_nodes)
        record = IterationRecord(
            iteration=it,
            s_size=state.s_size,
            added_per_class_struct=added_s,
            added_per_class_feat=added_f,
            shortfall_struct=short_s,
            shortfall_feat=short_f,
            conflicts=conflicts,
            acc_struct=float(
                (predict_logits(f_struct, test_nodes).argmax(axis=1) == test_labels).mean()
            ),
            acc_feat=float(
                (predict_logits(f_feat, test_nodes).argmax(axis=1) == test_labels).mean()
            ),
            acc_ensemble=float((pred == test_labels).mean()),
            confusion=_confusion(test_labels, pred, g.C),
        )
        state.history.append(record)
        audit_state(state, g, split)

        if it >= max_iters or not state.unlabeled:
            return f_struct, f_feat, state

        pool = np.array(sorted(state.unlabeled), dtype=np.int64)
        probs_s = calibrate(predict_logits(f_struct, pool), f_struct.temperature)
        probs_f = calibrate(predict_logits(f_feat, pool), f_feat.temperature)
        sel_s, short_s = select_confident(pool, probs_s, quota, n_add)
        sel_f, short_f = select_confident(pool, probs_f, quota, n_add)
        merged, conflicts = resolve_conflicts(sel_s, sel_f)

        next_iter = it + 1
        for node, add in merged.items():
            if node in state.entries:
                raise ValidationError(f"node {node} already labeled; refusing overwrite")
            state.entries[node] = LabelEntry(add.label, add.provenance, next_iter)
            state.unlabeled.remove(node)
        added_s = _label_histogram(sel_s, g.C)
        added_f = _label_histogram(sel_f, g.C)
        state.iteration = next_iter
