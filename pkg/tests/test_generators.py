import numpy as np
import pytest

from choiceforest import cart, generators as gen
from choiceforest.core import (Assortment, all_assortments,
                               validate_distribution)


def asst(n, products):
    return Assortment.from_products(n, products)


class TestMnl:
    def test_single_product_equal_attraction(self):
        m = gen.MnlModel(np.array([0.0]))
        d = m.choice_probabilities(asst(1, [1]))
        assert d.as_dict() == {0: 0.5, 1: 0.5}

    def test_empty_assortment(self):
        m = gen.MnlModel(np.array([3.0, -1.0]))
        assert m.choice_probabilities(Assortment(2, 0)).as_dict() == \
            {0: 1.0, 1: 0.0, 2: 0.0}

    def test_attractions_one_two(self):
        m = gen.MnlModel(np.log([1.0, 2.0]))
        d = m.choice_probabilities(asst(2, [1, 2]))
        assert d[0] == pytest.approx(0.25)
        assert d[1] == pytest.approx(0.25)
        assert d[2] == pytest.approx(0.5)

    def test_prices_shift_attractions(self):
        m = gen.MnlModel(np.array([1.0, 1.0]), prices=np.array([1.0, 0.0]))
        d = m.choice_probabilities(asst(2, [1, 2]))
        assert d[2] > d[1]


class TestRank:
    def test_top_offered_product(self):
        m = gen.RankModel(((1, 2, 0),), np.array([1.0]))
        assert m.choice_probabilities(asst(2, [2])).as_dict()[2] == 1.0

    def test_two_type_mixture_full_assortment(self):
        m = gen.RankModel(((1, 2, 3, 4, 5, 0), (5, 4, 3, 2, 1, 0)),
                          np.array([0.7, 0.3]))
        d = m.choice_probabilities(Assortment.full(5))
        assert d[1] == pytest.approx(0.7)
        assert d[5] == pytest.approx(0.3)

    def test_empty_assortment_no_purchase(self):
        m = gen.RankModel(((0, 1, 2),), np.array([1.0]))
        assert m.choice_probabilities(Assortment(2, 0))[0] == 1.0

    def test_probabilities_equal_enumeration(self, rng):
        # oracle: direct enumeration over the ranking support
        n = 5
        m = gen.random_rank_model(n, 6, rng)
        for s in all_assortments(n)[::7]:
            expected = np.zeros(n + 1)
            for r, w in zip(m.rankings, m.weights):
                expected[m.top_choice(r, s)] += w
            assert np.allclose(m.choice_probabilities(s).probs, expected)


class TestMarkov:
    def test_full_assortment_returns_lambda(self, rng):
        m = gen.random_markov_model(4, rng)
        d = m.choice_probabilities(Assortment.full(4))
        assert np.allclose(d.probs, m.lam)

    def test_empty_assortment_absorbs_at_zero(self, rng):
        m = gen.random_markov_model(4, rng)
        d = m.choice_probabilities(Assortment(4, 0))
        assert d[0] == pytest.approx(1.0)

    def test_matches_monte_carlo_absorption(self):
        lam = np.array([0.2, 0.5, 0.3])
        rho = np.array([[1.0, 0.0, 0.0],
                        [0.5, 0.0, 0.5],
                        [0.5, 0.5, 0.0]])
        m = gen.MarkovModel(lam, rho)
        s = asst(2, [1])
        exact = m.choice_probabilities(s).probs
        # oracle: vectorized absorption walk
        rng = np.random.default_rng(42)
        n_walks = 1_000_000
        state = rng.choice(3, size=n_walks, p=lam)
        for _ in range(100):
            free = state == 2          # only product 2 is unoffered
            if not free.any():
                break
            state[free] = rng.choice(3, size=free.sum(), p=rho[2])
        freq = np.bincount(state, minlength=3) / n_walks
        assert np.abs(freq - exact).max() <= 0.01


class TestComparison:
    def test_condorcet_winner_always_chosen(self, rng):
        scores = rng.random((1, 4, 3)) * 0.5
        scores[0, 2] = 1.0              # product 2 beats everything on all attributes
        m = gen.ComparisonModel(scores, np.array([1.0]))
        d = m.choice_probabilities(asst(3, [1, 2, 3]))
        assert d[2] == pytest.approx(1.0)

    def test_identical_scores_split_evenly(self, rng):
        scores = np.zeros((1, 3, 2))
        scores[0, 1] = [0.7, 0.7]
        scores[0, 2] = [0.7, 0.7]
        m = gen.ComparisonModel(scores, np.array([1.0]), include_outside=False)
        draws = np.array([m.sample(asst(2, [1, 2]), rng) for _ in range(10_000)])
        freq = (draws == 1).mean()
        assert abs(freq - 0.5) <= 0.02

    def test_probabilities_match_round_robin_oracle(self, rng):
        # oracle: brute-force tournament tabulation per assortment
        n, a = 4, 3
        scores = rng.random((2, n + 1, a))
        w = np.array([0.6, 0.4])
        m = gen.ComparisonModel(scores, w)
        for s in all_assortments(n):
            items = [0] + s.products()
            expected = np.zeros(n + 1)
            for k in range(2):
                wins = {i: 0.0 for i in items}
                for ai, i in enumerate(items):
                    for j in items[ai + 1:]:
                        wi = (scores[k, i] > scores[k, j]).sum()
                        wj = (scores[k, j] > scores[k, i]).sum()
                        if wi > wj:
                            wins[i] += 1
                        elif wj > wi:
                            wins[j] += 1
                        else:
                            wins[i] += 0.5
                            wins[j] += 0.5
                top = max(wins.values())
                leaders = [i for i in items if wins[i] == top]
                for i in leaders:
                    expected[i] += w[k] / len(leaders)
            assert np.allclose(m.choice_probabilities(s).probs, expected)

    def test_outside_exclusion(self, rng):
        scores = rng.random((1, 3, 5))
        m = gen.ComparisonModel(scores, np.array([1.0]), include_outside=False)
        for s in all_assortments(2):
            assert m.choice_probabilities(s)[0] == 0.0
        assert m.choice_probabilities(Assortment(2, 0))[0] == 1.0


class TestSearch:
    def scenario(self):
        # reservation order z1 > z2 > z3; realized v2 > z3 > v1 > v3 > v0
        return gen.SearchCustomer(v0=0.5, values=np.array([2.0, 3.5, 1.0]),
                                  z=np.array([5.0, 4.0, 3.0]))

    def test_stops_and_keeps_first_searched(self):
        assert self.scenario().choose(asst(3, [1, 3])) == 1

    def test_continues_to_better_product(self):
        assert self.scenario().choose(asst(3, [1, 2])) == 2

    def test_high_outside_value_skips_search(self):
        c = gen.SearchCustomer(9.0, np.array([2.0, 3.5, 1.0]),
                               np.array([5.0, 4.0, 3.0]))
        assert c.choose(Assortment.full(3)) == 0

    def test_matches_hand_built_choice_tree(self):
        # structural equivalence with the explicit search decision tree
        cust = self.scenario()
        by_tree = cart.TreeNode.internal(
            1, 0.5,
            cart.TreeNode.internal(
                2, 0.5,
                cart.TreeNode.internal(3, 0.5, cart.TreeNode.leaf(0),
                                       cart.TreeNode.leaf(3)),
                cart.TreeNode.leaf(2)),
            cart.TreeNode.internal(
                2, 0.5,
                cart.TreeNode.internal(3, 0.5, cart.TreeNode.leaf(1),
                                       cart.TreeNode.leaf(1)),
                cart.TreeNode.leaf(2)))
        for s in all_assortments(3, include_empty=True):
            assert cust.choose(s) == cart.tree_predict(by_tree, s.to_x())

    def test_model_probabilities_are_valid(self, rng):
        dists = tuple(gen.ValueDistribution("uniform", 0.0, 2.0) for _ in range(3))
        m = gen.SearchModel(dists, np.array([0.1, 0.2, 0.3]),
                            gen.ValueDistribution("uniform", 0.0, 1.0),
                            mc_samples=500, seed=4)
        for s in all_assortments(3, include_empty=True):
            assert validate_distribution(m.choice_probabilities(s), s)


class TestReservationValue:
    def test_degenerate_value(self):
        d = gen.ValueDistribution("constant", 2.0)
        assert gen.reservation_value(d, 0.5) == pytest.approx(1.5)

    def test_uniform_closed_form(self):
        # E[(V - z)^+] = (1 - z)^2 / 2 for V ~ U[0,1]
        d = gen.ValueDistribution("uniform", 0.0, 1.0)
        assert gen.reservation_value(d, 0.125) == pytest.approx(0.5, abs=1e-8)

    def test_infeasible_cost_raises(self):
        d = gen.ValueDistribution("uniform", 0.0, 1.0)
        with pytest.raises(gen.InfeasibleSearchCostError):
            gen.reservation_value(d, 0.5)

    def test_residual_at_root_small(self):
        d = gen.ValueDistribution("uniform", 1.0, 4.0)
        z = gen.reservation_value(d, 0.3)
        assert abs(d.tail_expectation(z) - 0.3) <= 1e-10


class TestSamplers:
    def test_bernoulli_one_gives_full_assortment(self, rng):
        s = gen.sample_assortment("bernoulli", 5, rng, p=1.0)
        assert s.mask == (1 << 5) - 1

    def test_uniform_nonempty_frequencies(self, rng):
        counts = {1: 0, 2: 0, 3: 0}
        for _ in range(10_000):
            counts[gen.sample_assortment("uniform-nonempty", 2, rng).mask] += 1
        for mask in counts:
            assert abs(counts[mask] / 10_000 - 1 / 3) <= 0.02

    def test_fixed_pool_limits_distinct_assortments(self, rng):
        pool = gen.draw_pool(6, 30, rng)
        draws = {gen.sample_assortment("fixed-pool", 6, rng, pool=pool).mask
                 for _ in range(500)}
        assert len(draws) <= 30

    def test_invalid_probability_raises(self, rng):
        with pytest.raises(ValueError):
            gen.sample_assortment("bernoulli", 3, rng, p=1.5)


class TestWeights:
    def test_single_type(self, rng):
        assert gen.uniform_normalized_weights(1, rng)[0] == 1.0
        assert gen.dirichlet_weights(1, rng)[0] == pytest.approx(1.0)

    def test_uniform_normalized_mean(self, rng):
        draws = np.array([gen.uniform_normalized_weights(2, rng)[0]
                          for _ in range(10_000)])
        assert abs(draws.mean() - 0.5) <= 0.02

    def test_dirichlet_marginal_mean(self, rng):
        draws = np.array([gen.dirichlet_weights(3, rng)[0]
                          for _ in range(10_000)])
        assert abs(draws.mean() - 1 / 3) <= 0.02

    def test_zero_types_raise(self, rng):
        with pytest.raises(ValueError):
            gen.uniform_normalized_weights(0, rng)


@pytest.mark.parametrize("maker", [
    lambda rng: gen.random_mnl_model(4, rng),
    lambda rng: gen.random_rank_model(4, 5, rng),
    lambda rng: gen.random_markov_model(4, rng),
    lambda rng: gen.random_comparison_model(4, 2, 5, rng),
])
def test_sample_frequencies_converge_to_probabilities(maker):
    rng = np.random.default_rng(77)
    model = maker(rng)
    for s in [Assortment.full(4), Assortment.from_products(4, [2, 4])]:
        probs = model.choice_probabilities(s).probs
        draws = np.array([model.sample(s, rng) for _ in range(100_000)])
        freq = np.bincount(draws, minlength=5) / len(draws)
        assert np.abs(freq - probs).sum() <= 0.01 * 2 + 0.005


def test_model_spec_round_trip(rng):
    specs = [
        {"type": "mnl", "utilities": [0.5, -0.5]},
        {"type": "rank", "rankings": [[1, 2, 0], [2, 0, 1]], "weights": [0.6, 0.4]},
        {"type": "comparison", "scores": rng.random((1, 3, 2)).tolist(),
         "type_weights": [1.0], "include_outside": False},
    ]
    for spec in specs:
        model = gen.model_from_spec(spec)
        s = Assortment.full(model.n_products)
        assert validate_distribution(model.choice_probabilities(s), s)
    with pytest.raises(ValueError):
        gen.model_from_spec({"type": "nope"})
