import numpy as np
import pytest
from scipy.stats import spearmanr

from choiceforest import forest as forest_mod, generators as gen
from choiceforest.analysis import (correct_split_count,
                                   exact_largest_binary_zeros, first_split_gini,
                                   is_pnn, pnn_coleaf_frequency,
                                   pnn_distance_mc, pnn_set, prop3_bound,
                                   random_split_coleaf, ranking_labels,
                                   ranking_recovery, sample_ranking_masks,
                                   theoretical_gini)
from choiceforest.core import Assortment, Dataset
from choiceforest.forest import ForestParams


def example_one():
    """N=4; target {1,2,3,4}; family {1,2,3}, {1,2,4}, {3,4}, {1,2}."""
    n = 4
    family = [Assortment.from_products(n, s)
              for s in ([1, 2, 3], [1, 2, 4], [3, 4], [1, 2])]
    return Assortment.full(n), family


class TestIsPnn:
    def test_dominated_member_is_not_pnn(self):
        s, family = example_one()
        assert not is_pnn(s, family[3], family)   # {1,2} dominated by {1,2,3}

    def test_undominated_members_are_pnn(self):
        s, family = example_one()
        for cand in family[:3]:
            assert is_pnn(s, cand, family)

    def test_singleton_family_member_is_pnn(self):
        s = Assortment.from_products(3, [1, 2])
        fam = [Assortment.from_products(3, [3])]
        assert is_pnn(s, fam[0], fam)

    def test_candidate_outside_family_rejected(self):
        s, family = example_one()
        with pytest.raises(ValueError):
            is_pnn(s, Assortment.from_products(4, [4]), family[:2])


class TestColeafFrequency:
    def family_dataset(self, family, n, per=6):
        rows, chosen = [], []
        rng = np.random.default_rng(0)
        for s in family:
            prods = s.products()
            for _ in range(per):
                rows.append(s.to_x())
                chosen.append(int(rng.choice([0] + prods)))
        return Dataset(np.array(rows), np.array(chosen, dtype=np.int64), n)

    def test_dominated_assortment_never_used(self):
        # the dominated member must have co-leaf frequency exactly zero
        s, family = example_one()
        data = self.family_dataset(family, 4)
        f = forest_mod.fit(data, ForestParams(n_trees=300, leaf_min=1, seed=1))
        report = pnn_coleaf_frequency(f, s, family, check_pnn=True)
        assert report.frequencies[3] == 0.0
        assert sum(report.frequencies) == pytest.approx(1.0)
        assert report.pnn_flags == (True, True, True, False)

    def test_requires_leaf_min_one(self):
        s, family = example_one()
        data = self.family_dataset(family, 4)
        f = forest_mod.fit(data, ForestParams(n_trees=10, leaf_min=5, seed=1))
        with pytest.raises(ValueError):
            pnn_coleaf_frequency(f, s, family)

    def test_target_inside_family_owns_its_leaf(self):
        n = 3
        family = [Assortment.from_products(n, p) for p in ([1], [2], [1, 2])]
        data = self.family_dataset(family, n)
        f = forest_mod.fit(data, ForestParams(n_trees=50, leaf_min=1, seed=2))
        report = pnn_coleaf_frequency(f, family[0], family)
        assert report.frequencies[0] == pytest.approx(1.0)
        assert report.distances[0] == 0

    def test_frequency_negatively_associated_with_distance(self):
        # MNL data over a 40-assortment family; co-leaf frequency should fall
        # with symmetric distance to the unseen target
        rng = np.random.default_rng(5)
        n = 8
        truth = gen.random_mnl_model(n, rng)
        family_masks = sorted(rng.choice(np.arange(1, 1 << n), size=40,
                                         replace=False))
        target = Assortment.full(n)
        family = [Assortment(n, int(m)) for m in family_masks
                  if int(m) != target.mask]
        asst = [family[int(rng.integers(len(family)))] for _ in range(1500)]
        data = gen.synthesize(truth, asst, rng)
        f = forest_mod.fit(data, ForestParams(n_trees=300, leaf_min=1, seed=3))
        report = pnn_coleaf_frequency(f, target, family)
        used = [(d, fr) for d, fr in zip(report.distances, report.frequencies)
                if fr > 0]
        rho = spearmanr([d for d, _ in used], [fr for _, fr in used]).statistic
        assert rho < 0

    def test_coleaf_occupants_vote_for_forest_predictions(self):
        # an unseen target's raw prediction only carries labels that occur in
        # the training choices (PNN leaves supply the votes)
        s, family = example_one()
        data = self.family_dataset(family, 4)
        f = forest_mod.fit(data, ForestParams(n_trees=200, leaf_min=1, seed=4))
        raw = forest_mod.predict_raw(f, s.to_x())
        observed = set(int(c) for c in data.chosen)
        voted = {i for i, p in raw.as_dict().items() if p > 0}
        assert voted <= observed


class TestRandomSplitTrees:
    def test_biconditional_small_exhaustive(self):
        # both directions of the leaf/PNN correspondence over random families
        rng = np.random.default_rng(11)
        for trial in range(12):
            n = int(rng.integers(4, 7))
            size = int(rng.integers(3, 9))
            masks = rng.choice(np.arange(1 << n), size=size, replace=False)
            target = int(rng.integers(0, 1 << n))
            family_masks = [int(m) for m in masks if int(m) != target]
            if not family_masks:
                continue
            family = [Assortment(n, m) for m in family_masks]
            s = Assortment(n, target)
            pnns = {c.mask for c in pnn_set(s, family)}
            seen = set()
            for _ in range(200):
                occ = random_split_coleaf(target, family_masks, n, rng)
                assert occ in pnns          # co-leaf implies PNN
                seen.add(occ)
            assert seen == pnns             # every PNN realizable


class TestDistanceMonteCarlo:
    def test_single_draw_mean_is_half_n(self):
        r = pnn_distance_mc(10, 1, reps=100_000, seed=0)
        assert abs(r["mean"] - 5.0) <= 0.05

    def test_saturated_family_distance_vanishes(self):
        r = pnn_distance_mc(6, 1 << 10, reps=20_000, seed=1)
        assert r["mean"] <= 0.01
        assert exact_largest_binary_zeros(6, 1 << 10) <= 0.01

    def test_monte_carlo_matches_exact_enumeration(self):
        exact = exact_largest_binary_zeros(4, 4)
        r = pnn_distance_mc(4, 4, reps=1_000_000, seed=2)
        assert abs(r["mean"] - exact) <= 0.01

    def test_bound_formula(self):
        assert prop3_bound(10) == pytest.approx(np.ceil(np.log2(10) / 2) + 0.455)

    def test_all_pnn_max_mode_runs(self):
        r = pnn_distance_mc(6, 8, reps=50, seed=3, mode="all-pnn-max")
        assert 0.0 <= r["mean"] <= 6.0

    def test_invalid_n_rejected(self):
        with pytest.raises(ValueError):
            pnn_distance_mc(64, 10, reps=10, seed=0)


class TestTheoreticalGini:
    def test_closed_form_values(self):
        assert theoretical_gini(1, 2) == pytest.approx(0.25)
        assert theoretical_gini(2, 2) == pytest.approx(0.5)

    def test_strictly_increasing_in_product_for_all_n(self):
        from fractions import Fraction

        def exact(j, n):
            return (Fraction(2, 3) - Fraction(1, 3 * 2 ** (2 * j - 2))
                    - Fraction(1, 3 * 2 ** (2 * n - 2)))

        for n in range(1, 31):
            floats = [theoretical_gini(j, n) for j in range(1, n + 1)]
            exacts = [exact(j, n) for j in range(1, n + 1)]
            assert all(a < b for a, b in zip(exacts, exacts[1:]))
            assert int(np.argmin(floats)) == 0
            assert all(abs(f - float(e)) <= 1e-15 for f, e in zip(floats, exacts))

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            theoretical_gini(0, 4)
        with pytest.raises(ValueError):
            theoretical_gini(5, 4)

    def test_empirical_first_split_converges(self):
        # empirical post-split Gini at the root approaches the closed form
        rng = np.random.default_rng(7)
        n, t = 4, 200_000
        masks = sample_ranking_masks(n, t, "uniform", rng)
        labels = ranking_labels(masks, n)
        emp = first_split_gini(masks, labels, n)
        theo = np.array([theoretical_gini(j, n) for j in range(1, n + 1)])
        assert np.abs(emp - theo).max() <= 0.02
        assert int(np.argmin(emp)) == 0


class TestRankingRecovery:
    def test_full_coverage_recovers_everything(self):
        # every assortment once: the Gini argmin sequence walks the ranking
        n = 5
        masks = np.arange(1 << n, dtype=np.int64)
        labels = ranking_labels(masks, n)
        x = ((masks[:, None] >> np.arange(n)[None, :]) & 1).astype(float)
        data = Dataset(x, labels, n)
        f = forest_mod.fit(data, ForestParams(
            n_trees=1, with_replacement=False, mtry=n, leaf_min=1, seed=0))
        assert correct_split_count(f.trees[0], n) == n

    def test_ranking_labels_match_min_offered(self):
        masks = np.array([0b0, 0b100, 0b101, 0b110])
        assert list(ranking_labels(masks, 3)) == [0, 3, 1, 2]

    def test_sampling_schemes_produce_valid_masks(self, rng):
        for scheme in ("uniform", "dirichlet", "per-product"):
            masks = sample_ranking_masks(6, 500, scheme, rng)
            assert masks.min() >= 0 and masks.max() < 64

    def test_recovery_improves_with_data(self):
        lo = ranking_recovery(6, 60, "uniform", reps=10, seed=5)
        hi = ranking_recovery(6, 4000, "uniform", reps=10, seed=5)
        assert hi["mean"] > lo["mean"]
        assert hi["mean"] >= 5.5
