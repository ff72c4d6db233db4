import warnings

import numpy as np
import pytest

from oracles import double_loop_objective, unreduced_enumeration
from simnet_cpd.datagen import planted_isolation_instance
from simnet_cpd.errors import DomainError, SizeError
from simnet_cpd.graph_snapshot import SimilaritySnapshot
from simnet_cpd.isolation import (
    brute_force_membership,
    isolate,
    label_anomalous,
    local_search_refine,
    naive_isolation,
    objective,
    spectral_membership,
)

# normals 0-3, anomalous {4, 5}: the pair is mutually similar, so a per-node
# score leaves a weakly connected normal node above both anomalous ones
COUNTEREXAMPLE = np.array(
    [
        [0, 0.5, 0.5, 0.1, -0.1, -0.1],
        [0.5, 0, 0.5, 0.1, -0.1, -0.1],
        [0.5, 0.5, 0, 0.1, -0.1, -0.1],
        [0.1, 0.1, 0.1, 0, -0.1, -0.1],
        [-0.1, -0.1, -0.1, -0.1, 0, 1.0],
        [-0.1, -0.1, -0.1, -0.1, 1.0, 0],
    ]
)


def blocks(sizes, inside=1.0, across=-1.0):
    labels = np.repeat(np.arange(len(sizes)), sizes)
    y = np.where(labels[:, None] == labels[None, :], inside, across).astype(float)
    np.fill_diagonal(y, 0.0)
    return y


def random_symmetric(rng, n):
    a = rng.normal(size=(n, n))
    y = (a + a.T) / 2
    np.fill_diagonal(y, 0.0)
    return y


def test_objective_basics():
    rng = np.random.default_rng(0)
    y = random_symmetric(rng, 5)
    x = rng.choice([-1.0, 1.0], size=5)
    assert objective(np.zeros((5, 5)), x) == 0.0
    assert objective(y, x) == pytest.approx(double_loop_objective(y.tolist(), x.tolist()), abs=1e-12)
    assert objective(y, -x) == objective(y, x)
    with pytest.raises(DomainError):
        objective(y, [1, 0, 1, 1, 1])


def test_masked_edges_contribute_zero():
    y = np.array([[0, 1, np.nan], [1, 0, 2], [np.nan, 2, 0]])
    mask = ~np.isnan(y) & ~np.eye(3, dtype=bool)
    x = [1, -1, 1]
    assert objective(y, x) == double_loop_objective(np.nan_to_num(y).tolist(), x, mask.tolist())


def test_brute_force_positive_matrix_no_split():
    y = np.abs(random_symmetric(np.random.default_rng(1), 6)) + 0.1
    np.fill_diagonal(y, 0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = brute_force_membership(y)
    assert m.S == frozenset()
    assert m.objective == pytest.approx(y.sum())


def test_brute_force_block_split():
    m = brute_force_membership(blocks([4, 3]))
    assert m.S == frozenset({4, 5, 6})


@pytest.mark.parametrize("seed", range(5))
def test_brute_force_matches_unreduced_enumeration(seed):
    y = random_symmetric(np.random.default_rng(seed), 8)
    best, args = unreduced_enumeration(y.tolist())
    m = brute_force_membership(y, chunk=7)
    assert m.objective == pytest.approx(best, abs=1e-10)
    raw = tuple(m.diagnostics["raw_x"])
    assert raw in {tuple(int(v) for v in a) for a in args}


def test_brute_force_size_limit():
    with pytest.raises(SizeError):
        brute_force_membership(np.zeros((21, 21)))


def test_spectral_block_split():
    m = spectral_membership(blocks([5, 3]))
    assert m.S == frozenset({5, 6, 7})
    assert m.diagnostics["eigengap"] > 0 and not m.diagnostics["low_confidence"]


def test_spectral_zero_matrix_low_confidence():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = spectral_membership(np.zeros((4, 4)))
    assert m.diagnostics["low_confidence"] and m.diagnostics["eigengap"] == 0.0


def test_spectral_permutation_invariance():
    snap = planted_isolation_instance(10, [2, 7], 0.8, -0.5, 0.2, seed=3)
    y = snap.weights()
    perm = np.random.default_rng(4).permutation(10)
    a = spectral_membership(y)
    b = spectral_membership(y[np.ix_(perm, perm)])
    assert frozenset(int(perm[i]) for i in b.S) == a.S


def test_refine_fixed_point_and_one_flip():
    y = blocks([4, 4])
    opt = np.array([-1.0] * 4 + [1.0] * 4)
    assert local_search_refine(y, opt).diagnostics["flips"] == 0
    wrong = opt.copy()
    wrong[1] = 1.0
    m = local_search_refine(y, wrong)
    assert m.diagnostics["flips"] == 1
    gain = double_loop_objective(y.tolist(), opt.tolist()) - double_loop_objective(y.tolist(), wrong.tolist())
    assert gain == 4 * abs(sum(y[1, j] * wrong[j] for j in range(8)))
    assert m.S == frozenset({0, 1, 2, 3})  # equal blocks: side holding node 0


def test_label_tie_prefers_smaller_side():
    assert label_anomalous(blocks([9, 3]), [-1] * 9 + [1] * 3) == frozenset({9, 10, 11})
    assert label_anomalous(blocks([9, 3]), [1] * 9 + [-1] * 3) == frozenset({9, 10, 11})
    assert label_anomalous(blocks([2, 2]), [1, 1, -1, -1]) == frozenset({0, 1})


def test_label_no_split_warns():
    with pytest.warns(UserWarning):
        assert label_anomalous(np.ones((3, 3)), [1, 1, 1]) == frozenset()


def test_planted_recovery_and_dominance():
    hits = 0
    for seed in range(30):
        snap = planted_isolation_instance(12, [0, 1, 2], 0.8, -0.5, 0.2, seed=seed)
        exact = brute_force_membership(snap)
        refined = isolate(snap, "spectral+refine", seed)
        spec = isolate(snap, "spectral", seed)
        assert exact.objective >= refined.objective - 1e-9
        assert exact.objective >= spec.objective - 1e-9
        assert refined.objective >= spec.objective - 1e-9
        assert refined.diagnostics["flips"] <= 10 * 12**2
        hits += refined.S == exact.S == frozenset({0, 1, 2})
    assert hits == 30


def test_naive_rule_examples():
    assert naive_isolation(np.ones((4, 4)), 0.0) == frozenset()
    y = np.full((4, 4), 0.5)
    y[0, :] = y[:, 0] = -0.5
    assert naive_isolation(y, 0.0) == frozenset({0})


def test_counterexample_defeats_naive_rule():
    truth = frozenset({4, 5})
    assert brute_force_membership(COUNTEREXAMPLE).S == truth
    assert isolate(COUNTEREXAMPLE, "spectral+refine").S == truth
    rho = -COUNTEREXAMPLE.sum(axis=1) / 5
    for b in np.unique(rho):
        for thr in (b - 1e-9, b):
            assert naive_isolation(COUNTEREXAMPLE, thr) != truth


def test_snapshot_input_and_order():
    snap = SimilaritySnapshot.from_matrix(blocks([3, 2]))
    d = isolate(snap, "brute_force").to_dict()
    assert d["S"] == [3, 4] and d["order"][:2] == [3, 4]
