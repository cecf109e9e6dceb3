import json
import math

import numpy as np
import pytest

from oracles import energy_bruteforce, friends_bruteforce, weak_l1_sampled
from trilinear_tf.dyadic import (
    QuadTile,
    ShiftedDyadicInterval as SI,
    Tile,
    generate_case_collection,
    good_indices,
    order_leq,
    rank10_check,
)
from trilinear_tf.multiplier_op import random_bandlimited
from trilinear_tf.tilenorms import (
    EXHAUSTIVE_LIMIT,
    JOHN_NIRENBERG_RANGE,
    CoefficientSequence,
    Tree,
    energy_j,
    enumerate_trees,
    friends,
    john_nirenberg_check,
    lambda_form,
    lambda_from_coefficients,
    random_coefficients,
    random_rank10_collection,
    single_tree_bound_check,
    size_energy_decompose,
    size_energy_inequality_check,
    size_energy_ratio,
    size_j,
    strongly_disjoint_check,
    tree_types,
    weak_l1_size,
)
from trilinear_tf.wavepacket import inner_product, make_wave_packet


def quad(j, k, freqs):
    """Quadtile over I = SI(j, k) with frequency positions freqs at scale -j."""
    I = SI(j, k)
    return QuadTile(tuple(Tile(I, SI(-j, m)) for m in freqs))


def coeffs_for(quads, column, j=2):
    values = np.zeros((len(quads), 4), complex)
    values[:, j - 1] = column
    return CoefficientSequence(quads, values)


def lattice():
    """One top over [0, 1) and its four children at scale 2, one per time interval."""
    quads = generate_case_collection(1, 2.0, scales=[0, 2], positions=4, seed=0)
    seen = {}
    for q in quads:
        seen.setdefault(q.I, q)
    return list(seen.values())


# ---------------------------------------------------------------------------
# friends


def test_friends_examples():
    assert friends(0) == {0}
    assert friends(1) == {0, 1}
    assert friends(5) == {0, 1, 2, 3, 5}
    with pytest.raises(ValueError):
        friends(-1)


def test_friends_match_bruteforce():
    for n in range(65):
        assert friends(n) == friends_bruteforce(n), n
    assert friends(5) == friends_bruteforce(5, depth=24)


def test_friends_cardinality_bound_sampled():
    for n in list(range(2000)) + [10**6, 2**19 - 1, 2**19 + 1, 999_999]:
        assert len(friends(n)) <= 2 * math.ceil(math.log2(n + 2)) + 1


# ---------------------------------------------------------------------------
# trees


def test_tree_validation():
    q = quad(0, 0, (0, 1, 2, 3))
    with pytest.raises(ValueError):
        Tree(q, frozenset([q]), 1)
    with pytest.raises(ValueError):
        Tree(q, frozenset(), 2)


def test_singleton_collection_gives_one_tree_per_type():
    q = quad(0, 0, (0, 1, 2, 3))
    for i in (2, 3, 4):
        trees = enumerate_trees([q], i)
        assert trees == [Tree(q, frozenset([q]), i)]


def test_lattice_membership_matches_predicate():
    quads = lattice()
    assert len(quads) == 5
    top = next(q for q in quads if q.I.length == 1)
    # positions 2 and 3 share a frequency column across scales; positions 1 and 4 drift apart
    for i in (2, 3):
        trees = enumerate_trees(quads, i)
        maximal = next(t for t in trees if t.top == top and not t.is_singleton())
        expected = {p for p in quads if order_leq(p[i], top[i])}
        assert maximal.members == expected
        assert len(expected) == 5
    assert all(t.is_singleton() for t in enumerate_trees(quads, 4))


def test_trees_are_closed_under_their_predicate():
    rng = np.random.default_rng(4)
    quads = random_rank10_collection(rng, 40, case=2, max_scale=7, positions=8)
    for i in (2, 3, 4):
        for t in enumerate_trees(quads, i):
            if t.is_singleton():
                continue
            assert all(order_leq(p[i], t.top[i]) for p in t.members)
            assert {p for p in quads if order_leq(p[i], t.top[i])} == t.members


def test_good_index_restriction_drops_maximal_trees():
    quads = generate_case_collection(1, 2.0, scales=(0, 30), positions=2)
    cert = good_indices(quads)
    assert cert[2] == {1, 4}
    # 2 is not good with respect to 3 in case 1, so only one-quadtile trees remain
    assert all(t.is_singleton() for t in enumerate_trees(quads, 3, j=2))
    assert tree_types(1, cert) == (2, 3, 4)
    assert tree_types(2, cert) == (4,)


# ---------------------------------------------------------------------------
# size and the John-Nirenberg variant


def test_size_single_quadtile():
    q = quad(0, 0, (0, 1, 2, 3))
    assert size_j(coeffs_for([q], [3 - 4j]), [q], 2) == pytest.approx(5.0, rel=1e-15)


def test_size_equal_coefficients_under_one_top():
    quads = lattice()
    c = 0.7
    column = [0.0 if q.I.length == 1 else c for q in quads]
    L, I_T = 4, 1.0
    assert size_j(coeffs_for(quads, column), quads, 2) == pytest.approx(c * math.sqrt(L / I_T), rel=1e-14)


def test_size_of_zero_coefficients():
    quads = lattice()
    assert size_j(coeffs_for(quads, np.zeros(5)), quads, 2) == 0.0


def test_size_monotone_under_growth():
    rng = np.random.default_rng(5)
    quads = random_rank10_collection(rng, 60, case=1, max_scale=9, positions=8)
    coeffs = random_coefficients(rng, quads)
    order = rng.permutation(len(quads))
    for j in (1, 2, 3, 4):
        sizes = [size_j(coeffs, [quads[k] for k in order[:m]], j) for m in (5, 15, 30, 60)]
        assert all(b >= a for a, b in zip(sizes, sizes[1:]))


def test_missing_coefficients():
    quads = lattice()
    values = np.full((5, 4), np.nan, complex)
    values[:, 1] = 1.0
    coeffs = CoefficientSequence(quads, values)
    size_j(coeffs, quads, 2)
    with pytest.raises(ValueError):
        size_j(coeffs, quads, 3)
    with pytest.raises(ValueError):
        size_j(coeffs, [quad(0, 7, (0, 1, 2, 3))], 2)


def test_weak_l1_single_tile():
    q = quad(0, 0, (0, 1, 2, 3))
    coeffs = coeffs_for([q], [1.0])
    tree = Tree(q, frozenset([q]), 2)
    assert weak_l1_size(coeffs, tree, 2) == pytest.approx(1.0, rel=1e-15)
    assert john_nirenberg_check(coeffs, [q], 2) == pytest.approx(1.0, rel=1e-15)


def test_weak_l1_two_children_by_hand():
    quads = lattice()
    top = next(q for q in quads if q.I.length == 1)
    kids = [q for q in quads if q.I.length == 0.25][:2]
    coeffs = coeffs_for(quads, [1.0 if q in kids else 0.0 for q in quads])
    tree = Tree(top, frozenset(kids), 2)
    # square function 2 on two quarter intervals, 0 elsewhere: sup is 2 * 1/2
    assert weak_l1_size(coeffs, tree, 2) == pytest.approx(1.0, rel=1e-15)
    ratio = john_nirenberg_check(coeffs, quads, 2)
    assert 1 / 4 <= ratio <= 4


def test_weak_l1_matches_sampled_oracle():
    rng = np.random.default_rng(6)
    quads = random_rank10_collection(rng, 30, case=3, max_scale=6, positions=8)
    coeffs = random_coefficients(rng, quads)
    for t in enumerate_trees(quads, 2)[:12]:
        members = sorted(t.members)
        w = np.abs(coeffs.column(3, members)) ** 2
        ivs = [tuple(float(x) for x in p.I.bounds) for p in members]
        lo, hi = (float(x) for x in t.top.I.bounds)
        ref = weak_l1_sampled(ivs, w, lo, hi) / (hi - lo)
        assert weak_l1_size(coeffs, t, 3) == pytest.approx(ref, rel=1e-4)


def test_john_nirenberg_homogeneity_and_range():
    rng = np.random.default_rng(7)
    for seed in range(5):
        quads = random_rank10_collection(rng, 50, case=1 + seed % 3, max_scale=8, positions=8)
        coeffs = random_coefficients(rng, quads)
        for j in (1, 2, 3, 4):
            r = john_nirenberg_check(coeffs, quads, j)
            assert JOHN_NIRENBERG_RANGE[0] <= r <= JOHN_NIRENBERG_RANGE[1]
            assert john_nirenberg_check(coeffs.scaled(3.7), quads, j) == pytest.approx(r, rel=1e-12)


# ---------------------------------------------------------------------------
# strong disjointness


def test_duplicated_trees_are_not_strongly_disjoint():
    q = quad(0, 0, (0, 1, 2, 3))
    t = Tree(q, frozenset([q]), 2)
    assert not strongly_disjoint_check([t, t], 2)


def test_frequency_separated_trees_are_strongly_disjoint():
    a, b = quad(0, 0, (0, 0, 0, 0)), quad(0, 0, (9, 5, 5, 5))
    trees = [Tree(a, frozenset([a]), 2), Tree(b, frozenset([b]), 2)]
    assert strongly_disjoint_check(trees, 2)


def test_two_omega_overlap_inside_the_top_fails():
    # omega_2 = [0, 1) and [1, 2): the doubles overlap on (0.5, 1.5) and both live on [0, 1)
    a, b = quad(0, 0, (0, 0, 0, 0)), quad(0, 0, (9, 1, 5, 5))
    assert not strongly_disjoint_check([Tree(a, frozenset([a]), 2), Tree(b, frozenset([b]), 2)], 2)
    # the same frequencies on disjoint time intervals are fine
    c = quad(0, 3, (9, 1, 5, 5))
    assert strongly_disjoint_check([Tree(a, frozenset([a]), 2), Tree(c, frozenset([c]), 2)], 2)


# ---------------------------------------------------------------------------
# energy


def test_energy_single_tile():
    q = quad(0, 0, (0, 1, 2, 3))
    coeffs = coeffs_for([q], [1.0])
    assert energy_j(coeffs, [q], 2) == 1.0
    assert energy_j(coeffs, [q], 2, "exhaustive") == 1.0


def test_energy_of_zero_coefficients():
    quads = lattice()
    coeffs = coeffs_for(quads, np.zeros(5))
    assert energy_j(coeffs, quads, 2) == 0.0
    assert energy_j(coeffs, quads, 2, "exhaustive") == 0.0


def test_exhaustive_size_limit():
    rng = np.random.default_rng(8)
    quads = random_rank10_collection(rng, EXHAUSTIVE_LIMIT + 1, max_scale=5, positions=8)
    with pytest.raises(ValueError):
        energy_j(random_coefficients(rng, quads), quads, 2, "exhaustive")
    with pytest.raises(ValueError):
        energy_j(random_coefficients(rng, quads), quads, 2, "fast")


def test_exhaustive_matches_bruteforce_on_tiny_instances():
    rng = np.random.default_rng(9)
    for seed in range(6):
        quads = random_rank10_collection(rng, 4, case=1 + seed % 3, max_scale=3, positions=2)
        coeffs = random_coefficients(rng, quads)
        for j in (2, 4):
            w = np.abs(coeffs.column(j)) ** 2
            ref = energy_bruteforce(quads, w, j, tree_types(j, good_indices(quads)))
            assert energy_j(coeffs, quads, j, "exhaustive") == pytest.approx(ref, rel=1e-12)


def test_greedy_within_factor_two_of_exhaustive():
    for seed in range(20):
        rng = np.random.default_rng([seed, 7])
        quads = random_rank10_collection(rng, int(rng.integers(6, 13)), case=1 + seed % 3, max_scale=4, positions=4)
        coeffs = random_coefficients(rng, quads)
        for j in (2, 3, 4):
            g = energy_j(coeffs, quads, j)
            e = energy_j(coeffs, quads, j, "exhaustive")
            assert e / 2 <= g <= e


def test_greedy_family_is_admissible():
    rng = np.random.default_rng(10)
    quads = random_rank10_collection(rng, 80, case=2, max_scale=9, positions=16)
    coeffs = random_coefficients(rng, quads)
    result = energy_j(coeffs, quads, 3, details=True)
    assert strongly_disjoint_check(result.trees, 3)
    index = {q: k for k, q in enumerate(quads)}
    w = np.abs(coeffs.column(3)) ** 2
    for t in result.trees:
        total = sum(w[index[p]] for p in t.members)
        assert total >= 4.0**result.level * t.length
    assert result.value == pytest.approx(2.0**result.level * math.sqrt(sum(t.length for t in result.trees)))


def test_size_and_energy_scale_with_powers_of_two():
    # energy levels are dyadic, so exact homogeneity holds for lambda = 2^k
    rng = np.random.default_rng(11)
    quads = random_rank10_collection(rng, 40, max_scale=7, positions=8)
    coeffs = random_coefficients(rng, quads)
    for lam in (0.25, 8.0):
        scaled = coeffs.scaled(lam)
        for j in (2, 3):
            assert size_j(scaled, quads, j) == pytest.approx(lam * size_j(coeffs, quads, j), rel=1e-13)
            assert energy_j(scaled, quads, j) == pytest.approx(lam * energy_j(coeffs, quads, j), rel=1e-13)
        assert lambda_from_coefficients(coeffs.scaled(1.3)) == pytest.approx(
            1.3**4 * lambda_from_coefficients(coeffs), rel=1e-12
        )


# ---------------------------------------------------------------------------
# the model form


def functions(seed):
    rng = np.random.default_rng(seed)
    return [random_bandlimited(rng, 16, period=1.0, mean_zero=False) for _ in range(4)]


def test_lambda_form_empty_and_single():
    fs = functions(0)
    assert lambda_form([], fs) == 0
    q = lattice()[0]
    shifts = (1, -2, 0)
    terms = [inner_product(f, make_wave_packet(q[j], 2.0, n)) for j, f, n in zip(range(1, 5), fs, shifts + (0,))]
    expected = np.prod(terms) / float(q.I.length)
    assert lambda_form([q], fs, shifts) == pytest.approx(expected, rel=1e-14)


def test_lambda_form_matches_term_by_term():
    fs = functions(1)
    rng = np.random.default_rng(12)
    quads = random_rank10_collection(rng, 32, case=1, max_scale=6, positions=8)
    shifts = (2, 0, -1)
    total = 0j
    for q in quads:
        term = 1 / float(q.I.length)
        for j, f, n in zip(range(1, 5), fs, shifts + (0,)):
            term *= inner_product(f, make_wave_packet(q[j], 2.0, n))
        total += term
    assert abs(lambda_form(quads, fs, shifts) - total) <= 1e-13 * max(1.0, abs(total))


# ---------------------------------------------------------------------------
# single-tree lemma


def test_single_tree_bound_on_singletons():
    rng = np.random.default_rng(13)
    quads = random_rank10_collection(rng, 20, max_scale=6, positions=8)
    coeffs = random_coefficients(rng, quads)
    for q in quads:
        assert single_tree_bound_check(coeffs, Tree(q, frozenset([q]), 2)) >= -1e-12


def test_single_tree_bound_on_uniform_tree():
    quads = lattice()
    top = next(q for q in quads if q.I.length == 1)
    values = np.ones((5, 4), complex)
    coeffs = CoefficientSequence(quads, values)
    tree = Tree(top, frozenset(quads), 2)
    # lhs: 1 + 4 * 4 = 17; each size is sqrt(max(1 + 4, 4)) on the 2-tree ... and sqrt(4) for singletons
    lhs = 1 + 4 * 4
    cert = good_indices(quads)
    sizes = [size_j(coeffs, quads, j, cert) for j in range(1, 5)]
    assert single_tree_bound_check(coeffs, tree) == pytest.approx(np.prod(sizes) - lhs, rel=1e-13)
    assert single_tree_bound_check(coeffs, tree) >= 0


def test_single_tree_bound_random_battery():
    margins = []
    for seed in range(8):
        rng = np.random.default_rng([seed, 13])
        quads = random_rank10_collection(rng, 40, case=1 + seed % 3, max_scale=7, positions=8)
        coeffs = random_coefficients(rng, quads)
        for i in (2, 3, 4):
            trees = enumerate_trees(quads, i)
            for k in rng.choice(len(trees), size=8, replace=False):
                margins.append(single_tree_bound_check(coeffs, trees[k]))
    assert min(margins) >= -1e-12


def test_single_tree_bound_with_top_outside_the_tree():
    quads = lattice()
    top = next(q for q in quads if q.I.length == 1)
    kids = frozenset(q for q in quads if q != top)
    rng = np.random.default_rng(14)
    coeffs = random_coefficients(rng, quads)
    assert single_tree_bound_check(coeffs, Tree(top, kids, 3)) >= -1e-12


# ---------------------------------------------------------------------------
# stratification


def test_stratification_of_zero_coefficients():
    quads = lattice()
    result = size_energy_decompose(coeffs_for(quads, np.zeros(5)), quads, 2)
    assert len(result.strata) == 1
    assert result.strata[0].quads == () and result.strata[0].trees == ()
    assert set(result.residual) == set(quads)


def test_stratification_of_single_tile():
    q = quad(-1, 1, (0, 1, 2, 3))
    result = size_energy_decompose(coeffs_for([q], [0.3]), [q], 2)
    assert len(result.strata) == 1
    (stratum,) = result.strata
    assert stratum.quads == (q,) and len(stratum.trees) == 1
    assert stratum.tree_measure == 0.5


def test_stratification_random_collections():
    constants = []
    for seed in range(6):
        rng = np.random.default_rng([seed, 11])
        quads = random_rank10_collection(rng, 120, case=1 + seed % 3, max_scale=10, positions=16)
        coeffs = random_coefficients(rng, quads)
        result = size_energy_decompose(coeffs, quads, 2 + seed % 3)
        assert result.bounds_hold()
        covered = [p for s in result.strata for p in s.quads] + list(result.residual)
        assert sorted(covered) == sorted(quads)
        for s in result.strata:
            assert strongly_disjoint_check(s.trees, result.j)
            assert set(s.quads) == set().union(*(t.members for t in s.cover))
        constants.append(result.fitted_constant())
        report = json.loads(result.to_json())
        assert {"n", "size_bound", "tree_count", "tree_measure", "ratio"} <= set(report["strata"][0])
    assert max(constants) / min(constants) < 4


# ---------------------------------------------------------------------------
# the composite inequality


def test_size_energy_ratio_zero_first_function():
    q = quad(0, 0, (0, 1, 2, 3))
    values = np.array([[0.0, 1.0, 2.0, 3.0]], complex)
    assert size_energy_ratio(CoefficientSequence([q], values)) == 0.0


def test_size_energy_ratio_single_quadtile_closed_form():
    q = quad(-2, 1, (0, 1, 2, 3))
    a = np.array([[0.7, 1.3 - 0.2j, 0.45, 2.9j]])
    ratio = size_energy_ratio(CoefficientSequence([q], a))
    # sizes are |a_j| / |I|^{1/2}; energies round those ratios down to powers of two
    r = np.abs(a[0, 1:]) / 2.0
    e = 2.0 ** np.floor(np.log2(r)) * 2.0
    expected = np.prod((np.abs(a[0, 1:]) / e) ** (2 / 3))
    assert ratio == pytest.approx(expected, rel=1e-12)
    assert 1 <= ratio < 4


def test_theta_validation():
    q = quad(0, 0, (0, 1, 2, 3))
    coeffs = CoefficientSequence([q], np.ones((1, 4)))
    for thetas in [(0.5, 0.5, 0.5), (1.0, 0.0, 0.0), (0.6, 0.6, -0.2)]:
        with pytest.raises(ValueError):
            size_energy_ratio(coeffs, thetas)


def test_size_energy_ratio_from_functions_is_finite():
    fs = functions(2)
    rng = np.random.default_rng(15)
    quads = random_rank10_collection(rng, 24, case=1, max_scale=6, positions=8)
    ratio = size_energy_inequality_check(quads, fs, (1, 0, 0))
    assert np.isfinite(ratio) and ratio >= 0


# ---------------------------------------------------------------------------
# random instances


def test_random_collections_are_rank10():
    for case in (1, 2, 3):
        rng = np.random.default_rng(case)
        quads = random_rank10_collection(rng, 100, case=case, max_scale=9, positions=16)
        assert len(set(quads)) == 100
        assert rank10_check(quads)[0]
