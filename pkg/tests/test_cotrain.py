import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cograph import SubModelSpec, ValidationError, class_quota, cotrain, ensemble_predict
from cograph.calibration import calibrate
from cograph.cotrain import (
    PROV_FEAT,
    PROV_STRUCT,
    PROV_TRUTH,
    Selection,
    audit_state,
    resolve_conflicts,
    select_confident,
)
from cograph.models import build_submodel, predict_logits, train_submodel
from cograph.nn import TrainHyper
from helpers import labeled_map

FAST = TrainHyper(epochs=60)


# --- quotas ----------------------------------------------------------------


def test_quota_exact_proportions():
    q = class_quota([50, 30, 20], 10)
    assert q.per_class == (5, 3, 2)
    assert q.total == 10


def test_quota_largest_remainder():
    # exact shares 2.8 and 1.2 -> (3, 1)
    q = class_quota([7, 3], 4)
    assert q.per_class == (3, 1)


def test_quota_zero_add():
    assert class_quota([5, 5], 0).per_class == (0, 0)


def test_quota_absent_class_gets_zero():
    q = class_quota([10, 0, 10], 8)
    assert q.per_class == (4, 0, 4)


def test_quota_rejects_empty_histogram():
    with pytest.raises(ValidationError):
        class_quota([0, 0], 4)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.integers(0, 50), min_size=1, max_size=8).filter(lambda h: sum(h) > 0),
    st.integers(0, 200),
)
def test_quota_sums_exact_and_near_proportional(hist, n_add):
    q = class_quota(hist, n_add)
    assert sum(q.per_class) == n_add
    assert all(c >= 0 for c in q.per_class)
    total = sum(hist)
    for got, h in zip(q.per_class, hist):
        assert abs(got - h / total * n_add) < 1.0  # largest-remainder property


# --- confident selection ----------------------------------------------------


def test_select_confident_enumerated_example():
    nodes = np.array([10, 20, 30])
    probs = np.array([[0.9, 0.1], [0.8, 0.2], [0.3, 0.7]])
    q = class_quota([1, 1], 2)
    picks, shortfall = select_confident(nodes, probs, q)
    assert set(picks) == {Selection(10, 0, 0.9), Selection(30, 1, 0.7)}
    assert shortfall == (0, 0)


def test_select_confident_tie_breaks_to_lower_node_index():
    nodes = np.array([7, 3])
    probs = np.array([[0.8, 0.2], [0.8, 0.2]])
    picks, _ = select_confident(nodes, probs, class_quota([1], 1))
    assert picks == [Selection(3, 0, 0.8)]


def test_select_confident_shortfall_not_redistributed():
    nodes = np.array([1, 2])
    probs = np.array([[0.9, 0.1], [0.8, 0.2]])  # nobody predicts class 1
    picks, shortfall = select_confident(nodes, probs, class_quota([1, 1], 2))
    assert [p.node for p in picks] == [1]
    assert shortfall == (0, 1)


def test_select_unbalanced_top_n():
    nodes = np.array([1, 2, 3])
    probs = np.array([[0.6, 0.4], [0.95, 0.05], [0.1, 0.9]])
    picks, shortfall = select_confident(nodes, probs, None, n_add=2)
    assert [p.node for p in picks] == [2, 3]
    assert shortfall == (0,)


def test_select_empty_pool():
    picks, shortfall = select_confident(np.array([], dtype=int), np.zeros((0, 2)), class_quota([1, 1], 2))
    assert picks == [] and shortfall == (0, 0)


# --- conflict resolution -----------------------------------------------------


def test_resolve_disjoint_union():
    merged, conflicts = resolve_conflicts(
        [Selection(1, 0, 0.9)], [Selection(2, 1, 0.8)]
    )
    assert conflicts == 0
    assert merged[1].provenance == PROV_STRUCT
    assert merged[2].provenance == PROV_FEAT


def test_resolve_conflict_higher_confidence_wins():
    merged, conflicts = resolve_conflicts(
        [Selection(5, 2, 0.95)], [Selection(5, 4, 0.90)]
    )
    assert conflicts == 1
    assert merged[5].label == 2 and merged[5].provenance == PROV_STRUCT

    merged, _ = resolve_conflicts([Selection(5, 2, 0.80)], [Selection(5, 4, 0.90)])
    assert merged[5].label == 4 and merged[5].provenance == PROV_FEAT


def test_resolve_exact_tie_structure_wins():
    merged, conflicts = resolve_conflicts(
        [Selection(5, 2, 0.9)], [Selection(5, 2, 0.9)]
    )
    assert conflicts == 1
    assert merged[5].provenance == PROV_STRUCT


# --- ensemble -----------------------------------------------------------------


def test_ensemble_identical_models_equal_either(easy_graph, easy_split):
    spec = SubModelSpec(kind="f-mlp", hyper=FAST)
    model = train_submodel(
        build_submodel(spec, easy_graph), labeled_map(easy_graph, easy_split.labeled), seed=0
    )
    nodes = easy_split.test[:20]
    labels, probs = ensemble_predict(model, model, nodes)
    solo = calibrate(predict_logits(model, nodes), model.temperature)
    assert probs == pytest.approx(solo)
    assert np.array_equal(labels, solo.argmax(axis=1))


def test_ensemble_averaging_arithmetic():
    # struct says A at 0.9, feat says B at 0.51 -> average says A
    a = np.array([0.9, 0.1])
    b = np.array([0.49, 0.51])
    avg = (a + b) / 2
    assert avg == pytest.approx([0.695, 0.305])
    assert avg.argmax() == 0


def test_ensemble_rows_sum_to_one(attack_graph, attack_split):
    fs = train_submodel(
        build_submodel(SubModelSpec(kind="gcn", hyper=FAST), attack_graph),
        labeled_map(attack_graph, attack_split.labeled),
        seed=0,
    )
    ff = train_submodel(
        build_submodel(SubModelSpec(kind="f-mlp", hyper=FAST), attack_graph),
        labeled_map(attack_graph, attack_split.labeled),
        seed=0,
    )
    _, probs = ensemble_predict(fs, ff, attack_split.test)
    assert np.abs(probs.sum(axis=1) - 1.0).max() <= 1e-9


# --- the full loop --------------------------------------------------------------


@pytest.fixture(scope="module")
def small_run(easy_graph, easy_split):
    spec_s = SubModelSpec(kind="gcn", hyper=FAST)
    spec_f = SubModelSpec(kind="f-mlp", hyper=FAST)
    return cotrain(easy_graph, easy_split, spec_s, spec_f, n_add=15, max_iters=3, seed=0)


def test_cotrain_rejects_wrong_view_pairing(easy_graph, easy_split):
    with pytest.raises(ValidationError):
        cotrain(easy_graph, easy_split, SubModelSpec(kind="f-mlp"), SubModelSpec(kind="gcn"), 5, 1, 0)


def test_cotrain_bookkeeping(easy_graph, easy_split, small_run):
    _, _, state = small_run
    audit_state(state, easy_graph, easy_split)
    assert len(state.history) == 4  # iterations 0..3
    n_labeled = len(easy_split.labeled)
    for prev, rec in zip(state.history, state.history[1:]):
        added = sum(rec.added_per_class_struct) + sum(rec.added_per_class_feat)
        grown = rec.s_size - prev.s_size
        assert grown <= 2 * 15  # at most n_add per model per iteration
        # nodes chosen by both models enter S once
        assert grown == added - rec.conflicts
    assert state.history[0].s_size == n_labeled
    assert state.s_size == state.history[-1].s_size


def test_cotrain_additions_match_quota_minus_shortfall(small_run, easy_split):
    _, _, state = small_run
    from cograph.cotrain import class_quota

    quota = class_quota(easy_split.class_histogram, 15)
    for rec in state.history[1:]:
        for added, short, q in zip(rec.added_per_class_struct, rec.shortfall_struct, quota.per_class):
            assert added == q - short
        for added, short, q in zip(rec.added_per_class_feat, rec.shortfall_feat, quota.per_class):
            assert added == q - short


def test_cotrain_provenance_and_freezing(easy_graph, easy_split, small_run):
    _, _, state = small_run
    for node in easy_split.labeled:
        assert state.entries[int(node)].provenance == PROV_TRUTH
        assert state.entries[int(node)].iteration == 0
    pseudo = {n: e for n, e in state.entries.items() if e.provenance != PROV_TRUTH}
    assert pseudo, "co-training must have added pseudo-labels"
    assert all(e.provenance in (PROV_STRUCT, PROV_FEAT) for e in pseudo.values())
    assert all(1 <= e.iteration <= 3 for e in pseudo.values())
    # pseudo-labeled nodes come from the test pool only
    test_set = set(easy_split.test.tolist())
    assert set(pseudo) <= test_set
    val_set = set(easy_split.validation.tolist())
    assert not (set(pseudo) & val_set)


def test_cotrain_zero_iterations_is_plain_ensemble(easy_graph, easy_split):
    spec_s = SubModelSpec(kind="gcn", hyper=FAST)
    spec_f = SubModelSpec(kind="f-mlp", hyper=FAST)
    fs, ff, state = cotrain(easy_graph, easy_split, spec_s, spec_f, n_add=15, max_iters=0, seed=4)
    assert len(state.history) == 1
    assert state.s_size == len(easy_split.labeled)

    # oracle: train the two models directly with the same derived seeds
    from cograph.cotrain import _iteration_seed

    lab = labeled_map(easy_graph, easy_split.labeled)
    ref_s = train_submodel(build_submodel(spec_s, easy_graph), lab, seed=_iteration_seed(4, 0, 0))
    ref_f = train_submodel(build_submodel(spec_f, easy_graph), lab, seed=_iteration_seed(4, 0, 1))
    assert all(np.array_equal(fs.params[k], ref_s.params[k]) for k in fs.params.names())
    assert all(np.array_equal(ff.params[k], ref_f.params[k]) for k in ff.params.names())


def test_cotrain_stops_when_pool_empties(easy_graph):
    from cograph import split_nodes

    split = split_nodes(easy_graph, 0.4, 0.4, seed=0)  # tiny test pool (60 nodes)
    spec_s = SubModelSpec(kind="gcn", hyper=FAST)
    spec_f = SubModelSpec(kind="f-mlp", hyper=FAST)
    fs, ff, state = cotrain(easy_graph, split, spec_s, spec_f, n_add=25, max_iters=50, seed=0)
    assert not state.unlabeled
    assert state.iteration < 50
    assert state.s_size == len(split.labeled) + len(split.test)


def test_cotrain_deterministic(easy_graph, easy_split):
    spec_s = SubModelSpec(kind="gcn", hyper=FAST)
    spec_f = SubModelSpec(kind="f-mlp", hyper=FAST)
    r1 = cotrain(easy_graph, easy_split, spec_s, spec_f, n_add=10, max_iters=2, seed=11)
    r2 = cotrain(easy_graph, easy_split, spec_s, spec_f, n_add=10, max_iters=2, seed=11)
    assert [rec.to_json() for rec in r1[2].history] == [rec.to_json() for rec in r2[2].history]
    assert r1[0].temperature == r2[0].temperature


def test_history_json_field_names(small_run):
    _, _, state = small_run
    rec = state.history[0].to_json()
    assert set(rec) == {
        "iter",
        "S_size",
        "added_per_class_struct",
        "added_per_class_feat",
        "shortfall_struct",
        "shortfall_feat",
        "conflicts",
        "acc_struct",
        "acc_feat",
        "acc_ensemble",
        "confusion_matrix",
    }


def test_confusion_matrix_sums_to_test_size(small_run, easy_split):
    _, _, state = small_run
    for rec in state.history:
        assert np.array(rec.confusion).sum() == len(easy_split.test)
