import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netda.data import LabeledDomain, make_shifted_gaussians
from netda.graph import build_adjacency, normalized_laplacian
from netda.kernel import KernelSpec, kernel_matrix
from netda.mmd import build_mmd_set
from netda.net import (
    HyperParams,
    NetFitError,
    accuracy,
    assemble_system,
    na_baseline,
    net_fit,
    nn_classify,
    project,
)

from oracles import brute_nn, naive_product

SPEC = KernelSpec()


def small_pair(seed, n_s=24, n_t=18, classes=3, shift=1.0):
    return make_shifted_gaussians(seed, n_s, n_t, classes, 2, shift, 0.3)


def test_hyperparams_validation():
    for kwargs in (dict(alpha=-1), dict(alpha=0, beta=0, gamma=0), dict(k=0), dict(k=2.5), dict(iterations=0)):
        with pytest.raises(ValueError):
            HyperParams(**kwargs)
    assert HyperParams().key() == (20, 1.0, 1.0, 1.0)


def test_assemble_degenerate_weights_identity():
    rng = np.random.default_rng(0)
    K = rng.standard_normal((5, 5))
    K = K @ K.T
    lhs, rhs = assemble_system(K, np.eye(5), np.eye(5), np.ones(5), HyperParams(0, 0, 1, 2))
    np.testing.assert_array_equal(lhs, np.eye(5))
    np.testing.assert_allclose(rhs, K @ K.T, atol=1e-12)


def test_assemble_beta_zero_drops_laplacian():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((6, 6))
    K = X @ X.T
    M = build_mmd_set([1, 2, 1], [2, 1, 1], 2).sum
    L1, L2 = np.eye(6), 3 * np.eye(6)
    a, _ = assemble_system(K, M, L1, np.ones(6), HyperParams(1, 0, 1, 2))
    b, _ = assemble_system(K, M, L2, np.ones(6), HyperParams(1, 0, 1, 2))
    np.testing.assert_array_equal(a, b)


def test_assemble_triple_product_oracle():
    rng = np.random.default_rng(2)
    n = 8
    X = rng.standard_normal((n, 3))
    K = kernel_matrix(X, KernelSpec("rbf", 1.0)).values
    ys, yt = [1, 2, 2, 1, 2], [1, 1, 2]
    M = build_mmd_set(ys, yt, 2).sum
    g = normalized_laplacian(build_adjacency(ys, 3))
    p = HyperParams(0.7, 0.3, 2.0, 3)
    lhs, rhs = assemble_system(K, M, g.laplacian, np.diag(g.degrees), p)
    KMK = naive_product(naive_product(K, M), K.T)
    KLK = naive_product(naive_product(K, g.laplacian), K.T)
    KDK = naive_product(naive_product(K, np.diag(g.degrees)), K.T)
    np.testing.assert_allclose(lhs, 0.7 * KMK + 0.3 * KLK + 2.0 * np.eye(n), atol=1e-10)
    np.testing.assert_allclose(rhs, KDK, atol=1e-10)


def test_project_cases():
    rng = np.random.default_rng(3)
    K = rng.standard_normal((6, 6))
    np.testing.assert_array_equal(project(K, np.eye(6)), K)
    A = rng.standard_normal((6, 2))
    z = project(K[:, 0], A)
    assert z.shape == (2, 1)
    np.testing.assert_allclose(z[:, 0], A.T @ K[:, 0])
    Kb = rng.standard_normal((6, 4))
    np.testing.assert_allclose(project(Kb, A), naive_product(A.T, Kb), atol=1e-12)
    with pytest.raises(ValueError):
        project(np.ones((5, 2)), A)


def test_nn_zero_distance_and_tie_break():
    train = np.array([[0.0, 2.0, 5.0]])
    assert nn_classify(train, np.array([3, 1, 2]), np.array([[2.0]])).tolist() == [1]
    # 1.0 is equidistant from columns 0 and 1: the lower index wins
    assert nn_classify(train, np.array([3, 1, 2]), np.array([[1.0]])).tolist() == [3]


def test_nn_brute_force_oracle():
    rng = np.random.default_rng(4)
    train, test = rng.standard_normal((3, 50)), rng.standard_normal((3, 20))
    labels = rng.integers(1, 4, 50)
    np.testing.assert_array_equal(nn_classify(train, labels, test), brute_nn(train, labels, test))


def test_nn_argument_checks():
    with pytest.raises(ValueError):
        nn_classify(np.ones((2, 3)), np.array([1, 2]), np.ones((2, 1)))
    with pytest.raises(ValueError):
        nn_classify(np.ones((2, 3)), np.array([1, 2, 3]), np.ones((3, 1)))


def test_accuracy_helper():
    assert accuracy([1, 2, 2], [1, 2, 1]) == pytest.approx(2 / 3)
    assert accuracy([1], None) is None


def test_duplicate_domain_perfect():
    s, _ = small_pair(0)
    t = s.without_labels()
    _, na_acc = na_baseline(s, s)
    assert na_acc == 1.0
    model = net_fit(s, LabeledDomain(s.features, s.labels), SPEC, HyperParams(k=5, iterations=3))
    assert model.accuracy == 1.0
    assert net_fit(s, t, SPEC, HyperParams(k=5, iterations=3)).accuracy is None


def test_shifted_gaussians_net_beats_na(shifted_pair):
    s, t = shifted_pair
    model = net_fit(s, t, SPEC, HyperParams(1, 1, 1, 20, 10))
    assert model.accuracy > model.initial_accuracy
    assert model.initial_accuracy == na_baseline(s, t)[1]


def test_beta_zero_has_higher_embedding_cost(shifted_pair):
    s, t = shifted_pair
    full = net_fit(s, t, SPEC, HyperParams(1, 1, 1, 20, 10))
    jda = net_fit(s, t, SPEC, HyperParams(1, 0, 1, 20, 10))
    assert full.history[-1].embedding_cost < jda.history[-1].embedding_cost


def test_na_same_distribution_matches_iid_oracle():
    s, t = make_shifted_gaussians(1, 300, 300, 2, 2, 0.0, 0.0)
    _, acc = na_baseline(s, t)
    # held-out oracle: a second i.i.d. source sample classified by the same rule
    s2, _ = make_shifted_gaussians(2, 300, 300, 2, 2, 0.0, 0.0)
    _, iid = na_baseline(s, s2)
    assert abs(acc - iid) <= 0.03


def test_na_swapped_means_below_half():
    rng = np.random.default_rng(5)
    ys = np.arange(200) % 2 + 1
    src = LabeledDomain(np.where(ys == 1, -1.5, 1.5)[:, None] + 0.5 * rng.standard_normal((200, 1)), ys)
    # shift of 3 moves class 1 onto class 2's mean and vice versa
    tgt = LabeledDomain(np.where(ys == 1, 1.5, -1.5)[:, None] + 0.5 * rng.standard_normal((200, 1)), ys)
    assert na_baseline(src, tgt)[1] < 0.5


def test_history_and_constraint():
    s, t = small_pair(1)
    p = HyperParams(1.0, 0.5, 1.0, 6, 4)
    m = net_fit(s, t, SPEC, p)
    assert len(m.history) == 4
    K = m.gram.values
    g = normalized_laplacian(build_adjacency(s.labels, t.n))
    rhs = (K * g.degrees) @ K.T + m.jitter * np.eye(K.shape[0])
    A = m.coefficients
    np.testing.assert_allclose(A.T @ rhs @ A, np.eye(6), atol=1e-5)
    for prev, rec in zip([m.initial_labels] + [h.pseudo_labels for h in m.history[:-1]], m.history):
        M = build_mmd_set(s.labels, prev, s.num_classes).sum
        expected = p.alpha * rec.mmd_cost + p.beta * rec.embedding_cost + p.gamma * rec.frobenius
        assert rec.objective == pytest.approx(expected, rel=1e-6)
        assert rec.changed == int(np.sum(rec.pseudo_labels != prev))
    # the last record was solved with the previous pseudo-labels
    prev = m.history[-2].pseudo_labels
    M = build_mmd_set(s.labels, prev, s.num_classes).sum
    Z = project(K, A)
    assert m.history[-1].mmd_cost == pytest.approx(float(np.trace(Z @ M @ Z.T)), rel=1e-9)
    lhs, _ = assemble_system(K, M, g.laplacian, g.degrees, p)
    assert np.trace(A.T @ lhs @ A) == pytest.approx(m.eigenvalues.sum(), rel=1e-6)


def test_k_larger_than_n_rejected():
    s, t = small_pair(2, n_s=6, n_t=6)
    with pytest.raises(ValueError):
        net_fit(s, t, SPEC, HyperParams(k=13))


def test_unlabeled_source_rejected():
    s, t = small_pair(3)
    with pytest.raises(ValueError):
        net_fit(s.without_labels(), t, SPEC, HyperParams(k=2))


def test_factorization_failure_becomes_fit_error(monkeypatch):
    import netda.net as net_module
    from netda.eigsolve import EigenSolveError

    def broken(rhs, jitter=None):
        raise EigenSolveError("not definite", {"jitters_tried": [1.0]})

    monkeypatch.setattr(net_module, "FactoredMetric", broken)
    s, t = small_pair(4)
    with pytest.raises(NetFitError) as info:
        net_fit(s, t, SPEC, HyperParams(k=3, iterations=2))
    assert info.value.iteration == 0 and info.value.diagnostics == {"jitters_tried": [1.0]}


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.permutations([1, 2, 3]))
def test_label_permutation_invariance(seed, perm):
    s, t = small_pair(seed)
    p = HyperParams(1.0, 1.0, 1.0, 5, 3)
    base = net_fit(s, t, SPEC, p)
    remap = np.array([0] + list(perm))
    s2 = LabeledDomain(s.features, remap[s.labels])
    moved = net_fit(s2, t, SPEC, p)
    np.testing.assert_array_equal(moved.target_labels, remap[base.target_labels])


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.randoms(use_true_random=False))
def test_source_order_invariance(seed, rnd):
    s, t = small_pair(seed)
    p = HyperParams(1.0, 1.0, 1.0, 5, 3)
    base = net_fit(s, t, SPEC, p)
    perm = list(range(s.n))
    rnd.shuffle(perm)
    moved = net_fit(s.subset(perm), t, SPEC, p)
    np.testing.assert_array_equal(moved.target_labels, base.target_labels)


def test_determinism():
    s, t = small_pair(9)
    p = HyperParams(0.5, 0.1, 1.0, 4, 5)
    a, b = net_fit(s, t, SPEC, p), net_fit(s, t, SPEC, p)
    for x, y in zip(a.history, b.history):
        assert x.pseudo_labels.tobytes() == y.pseudo_labels.tobytes()
        assert (x.objective, x.mmd_cost, x.embedding_cost) == (y.objective, y.mmd_cost, y.embedding_cost)
    assert a.coefficients.tobytes() == b.coefficients.tobytes()
