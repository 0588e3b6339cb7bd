import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hierlearn.tree_dist import (
    Arborescence,
    ConceptDomain,
    EmpiricalTreeDistribution,
    WeightMatrix,
    _valid_mask,
    contains_path,
    edge_marginals,
    enumerate_trees,
    log_partition,
    map_tree,
    sample_trees,
    tree_log_prob,
    trees_log_prob,
)

from conftest import (
    brute_log_partition,
    brute_tree_probs,
    marginals_of,
    seeded_weight_matrix,
)


class TestEnumeration:
    def test_counts(self):
        assert len(enumerate_trees(2)) == 3
        assert len(enumerate_trees(3)) == 16
        assert len(enumerate_trees(5)) == 1296

    def test_cayley_count_general(self):
        for n in range(1, 6):
            assert len(enumerate_trees(n)) == (n + 1) ** (n - 1)

    def test_all_valid_and_distinct(self, trees4):
        seen = {t.parents for t in trees4}
        assert len(seen) == len(trees4)

    def test_refusal_beyond_limit(self):
        with pytest.raises(ValueError, match="refusing"):
            enumerate_trees(8)


class TestLogPartition:
    def test_uniform_two_concepts(self):
        assert log_partition(WeightMatrix.uniform(2)) == pytest.approx(math.log(3))

    def test_uniform_five_concepts(self):
        assert log_partition(WeightMatrix.uniform(5)) == pytest.approx(math.log(1296))

    def test_matches_enumeration(self, trees4):
        for seed in range(5):
            w = seeded_weight_matrix(4, seed)
            assert log_partition(w) == pytest.approx(
                brute_log_partition(w, trees4), abs=1e-9
            )

    def test_large_n_finite(self):
        w = seeded_weight_matrix(200, 0, scale=3.0)
        assert np.isfinite(log_partition(w))


class TestEdgeMarginals:
    def test_uniform_two_concepts_exact(self):
        probs = edge_marginals(WeightMatrix.uniform(2)).probs
        assert probs[0, 1] == pytest.approx(2 / 3)
        assert probs[0, 2] == pytest.approx(2 / 3)
        assert probs[2, 1] == pytest.approx(1 / 3)
        assert probs[1, 2] == pytest.approx(1 / 3)

    def test_matches_enumeration(self, trees4):
        for seed in range(5):
            w = seeded_weight_matrix(4, seed)
            exact = marginals_of(trees4, brute_tree_probs(w, trees4))
            assert np.max(np.abs(edge_marginals(w).probs - exact)) < 1e-9

    @pytest.mark.parametrize("n", [2, 5, 20, 50])
    def test_column_sums(self, n):
        w = seeded_weight_matrix(n, seed=n)
        probs = edge_marginals(w).probs
        assert np.allclose(probs[:, 1:].sum(axis=0), 1.0, atol=1e-9)

    def test_total_equals_n(self):
        w = seeded_weight_matrix(7, 3)
        assert edge_marginals(w).probs.sum() == pytest.approx(7, abs=1e-8)


class TestMapTree:
    def test_dominant_root_star(self):
        lw = np.zeros((4, 4))
        lw[0, 1:] = 1.0
        assert map_tree(WeightMatrix(lw)).parents == (0, 0, 0)

    def test_all_equal_tie_break(self):
        assert map_tree(WeightMatrix.uniform(4)).parents == (0, 0, 0, 0)

    def test_matches_enumeration_argmax(self, trees4):
        for seed in range(20):
            w = seeded_weight_matrix(4, seed)
            scores = [
                sum(w.log_weights[i, j] for i, j in t.edges()) for t in trees4
            ]
            best = trees4[int(np.argmax(scores))]
            got = map_tree(w)
            assert got.parents == best.parents

    def test_deep_chain_recovered(self):
        # chain 0 -> 1 -> 2 -> 3 forced by strong weights
        lw = np.zeros((4, 4))
        lw[0, 1] = 5.0
        lw[1, 2] = 5.0
        lw[2, 3] = 5.0
        assert map_tree(WeightMatrix(lw)).parents == (0, 1, 2)


class TestSampling:
    def test_deterministic_under_seed(self):
        w = seeded_weight_matrix(4, 1)
        a = sample_trees(w, 500, seed=42)
        b = sample_trees(w, 500, seed=42)
        assert np.array_equal(a.parents_matrix, b.parents_matrix)

    def test_weight_dominated_edge(self):
        lw = np.zeros((4, 4))
        lw[0, 1] = 20.0
        d = sample_trees(WeightMatrix(lw), 2000, seed=0)
        assert np.mean(d.parents_matrix[:, 0] == 0) >= 0.99

    def test_uniform_weights_all_entries(self):
        d = sample_trees(WeightMatrix.uniform(3), 100, seed=5)
        assert np.allclose(d.tree_weights, 1 / 100)

    def test_empirical_frequencies_match_marginals(self):
        w = seeded_weight_matrix(6, 9)
        d = sample_trees(w, 100_000, seed=17)
        freq = np.zeros((7, 7))
        for j in range(6):
            np.add.at(freq[:, j + 1], d.parents_matrix[:, j], d.tree_weights)
        assert np.max(np.abs(freq - edge_marginals(w).probs)) < 0.01

    def test_samples_are_valid_trees(self):
        w = seeded_weight_matrix(5, 2, scale=2.0)
        d = sample_trees(w, 200, seed=3)
        for row in d.parents_matrix[:50]:
            Arborescence(tuple(row))  # raises on any invalid structure


class TestTreeLogProb:
    def test_uniform_two_concepts(self, trees3):
        w = WeightMatrix.uniform(2)
        for t in enumerate_trees(2):
            assert tree_log_prob(w, t) == pytest.approx(math.log(1 / 3))

    def test_uniform_five_concepts(self):
        w = WeightMatrix.uniform(5)
        t = enumerate_trees(5)[0]
        assert tree_log_prob(w, t) == pytest.approx(-math.log(1296))

    def test_normalization(self, trees3):
        w = seeded_weight_matrix(3, 11)
        total = sum(math.exp(tree_log_prob(w, t)) for t in trees3)
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_matches_enumeration(self, trees4):
        for seed in range(5):
            w = seeded_weight_matrix(4, seed)
            probs = brute_tree_probs(w, trees4)
            for k in (0, 31, 87):
                assert tree_log_prob(w, trees4[k]) == pytest.approx(
                    math.log(probs[k]), abs=1e-9
                )

    def test_vectorized_matches_scalar(self, trees3):
        w = seeded_weight_matrix(3, 4)
        pm = np.array([t.parents for t in trees3])
        vec = trees_log_prob(w, pm)
        for k, t in enumerate(trees3):
            assert vec[k] == pytest.approx(tree_log_prob(w, t), abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="nodes"):
            tree_log_prob(WeightMatrix.uniform(3), Arborescence((0, 1)))


class TestShiftInvariance:
    @given(st.floats(min_value=-3, max_value=3).filter(lambda c: abs(c) > 1e-6))
    @settings(max_examples=20, deadline=None)
    def test_constant_shift(self, c):
        w = seeded_weight_matrix(4, 13)
        mask = _valid_mask(4)
        shifted = WeightMatrix(np.where(mask, w.log_weights + c, -np.inf))
        assert log_partition(shifted) == pytest.approx(
            log_partition(w) + 4 * c, abs=1e-9
        )
        assert np.max(
            np.abs(edge_marginals(shifted).probs - edge_marginals(w).probs)
        ) < 1e-9
        assert map_tree(shifted).parents == map_tree(w).parents
        t = map_tree(w)
        assert tree_log_prob(shifted, t) == pytest.approx(
            tree_log_prob(w, t), abs=1e-9
        )


class TestContainsPath:
    def test_chain(self):
        chain = Arborescence((0, 1))  # 0 -> 1 -> 2
        assert contains_path(chain, 1, 2)
        assert not contains_path(chain, 2, 1)

    def test_root_reaches_all(self, trees4):
        for t in trees4[:20]:
            for j in range(1, 5):
                assert contains_path(t, 0, j)

    def test_invalid_endpoints(self):
        t = Arborescence((0, 1))
        with pytest.raises(ValueError):
            contains_path(t, 1, 1)


class TestNumericalGuards:
    def test_degenerate_laplacian_raises(self):
        from hierlearn.tree_dist import NumericalDegeneracyError

        # mutual +30 coupling with -30 root edges: the scaled minor is
        # numerically singular
        lw = np.array(
            [
                [-np.inf, -30.0, -30.0],
                [-np.inf, -np.inf, 30.0],
                [-np.inf, 30.0, -np.inf],
            ]
        )
        with pytest.raises(NumericalDegeneracyError, match="determinant"):
            log_partition(WeightMatrix(lw))
        with pytest.raises(NumericalDegeneracyError):
            edge_marginals(WeightMatrix(lw))

    def test_ill_conditioned_warns_but_computes(self):
        from hierlearn.tree_dist import IllConditionedWarning

        lw = np.array(
            [
                [-np.inf, -14.0, -14.0],
                [-np.inf, -np.inf, 14.0],
                [-np.inf, 14.0, -np.inf],
            ]
        )
        with pytest.warns(IllConditionedWarning):
            z = log_partition(WeightMatrix(lw))
        # the two chains dominate with unit weight each
        assert z == pytest.approx(math.log(2), abs=1e-4)

    def test_clamp_applied_on_update(self):
        w = WeightMatrix.uniform(2)
        deltas = np.zeros((3, 3))
        deltas[0, 1] = 100.0
        assert w.with_added(deltas).entry(0, 1) == 30.0


class TestTypesAndSerialization:
    def test_domain_validation(self):
        with pytest.raises(ValueError):
            ConceptDomain(())
        with pytest.raises(ValueError):
            ConceptDomain(("a", "a"))
        with pytest.raises(ValueError):
            ConceptDomain(("a", ""))

    def test_domain_lookup(self):
        d = ConceptDomain(("x", "y"))
        assert d.label(0) == "root"
        assert d.index("y") == 2
        with pytest.raises(KeyError):
            d.index("zz")

    def test_arborescence_rejects_cycles(self):
        with pytest.raises(ValueError):
            Arborescence((2, 1))
        with pytest.raises(ValueError):
            Arborescence((0, 3, 2))

    def test_arborescence_json_round_trip(self):
        t = Arborescence((0, 1, 2))
        assert Arborescence.from_json(t.to_json()) == t
        payload = json.loads(t.to_json())
        assert payload == {"n": 3, "parents": [0, 1, 2]}

    def test_weight_matrix_json_round_trip(self):
        w = seeded_weight_matrix(3, 21)
        back = WeightMatrix.from_json(w.to_json())
        assert back.allclose(w)
        payload = json.loads(w.to_json())
        assert payload["n"] == 3
        assert payload["log_weights"][1][0] is None  # root column inadmissible

    def test_dot_export(self):
        d = ConceptDomain(("fruit", "apple"))
        t = Arborescence((0, 1))  # root -> fruit -> apple
        dot = t.to_dot(d)
        assert "n0 -> n1" in dot and "n1 -> n2" in dot
        assert '"apple"' in dot

    def test_weight_matrix_rejects_nonfinite(self):
        lw = np.zeros((3, 3))
        lw[0, 1] = np.nan
        with pytest.raises(ValueError):
            WeightMatrix(lw)

    def test_empirical_distribution_basics(self, trees3):
        d = EmpiricalTreeDistribution.uniform_over(trees3)
        assert d.num_samples == 16
        assert d.ess == pytest.approx(16.0)
        uniq, w = d.grouped()
        assert uniq.shape == (16, 3)
        assert np.allclose(w, 1 / 16)
        with pytest.raises(ValueError):
            EmpiricalTreeDistribution(np.zeros((2, 3), dtype=int), np.zeros(2))
