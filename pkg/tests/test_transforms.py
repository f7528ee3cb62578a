import math

import numpy as np
import pytest

from choiceforest import forest as forest_mod, generators as gen
from choiceforest.core import Dataset
from choiceforest.forest import ForestParams
from choiceforest.transforms import (AggregatedRecord, LinkFunction,
                                     aggregate_dataset, append_features,
                                     append_features_dataset, apply_link,
                                     apply_link_matrix, expand_aggregated,
                                     price_dataset)


class TestExpandAggregated:
    def test_five_booking_example(self):
        # closure (0.4, 0.6, 0.2, 0.6, 0.4), bookings for items (1, 0, 4, 3, 1)
        rec = AggregatedRecord(np.array([0.4, 0.6, 0.2, 0.6, 0.4]),
                               np.array([1, 2, 0, 1, 1, 0]))
        data = expand_aggregated([rec])
        assert data.n_transactions == 5
        assert np.allclose(data.x, np.tile([0.6, 0.4, 0.8, 0.4, 0.6], (5, 1)))
        assert list(data.chosen) == [0, 1, 1, 3, 4]

    def test_level_one_round_trips_binary_data(self, rng):
        truth = gen.random_mnl_model(4, rng)
        asst = [gen.sample_assortment("uniform-nonempty", 4, rng)
                for _ in range(60)]
        raw = gen.synthesize(truth, asst, rng)
        recs = aggregate_dataset(raw, 1)
        back = expand_aggregated(recs)
        assert np.array_equal(back.x, raw.x)
        assert np.array_equal(back.chosen, raw.chosen)

    def test_transaction_count_conserved(self, rng):
        recs = [AggregatedRecord(rng.random(3), rng.integers(0, 5, size=4))
                for _ in range(10)]
        data = expand_aggregated(recs)
        assert data.n_transactions == sum(r.total for r in recs)

    def test_booking_totals_preserved_per_product(self, rng):
        recs = [AggregatedRecord(rng.random(3) * 0.5, rng.integers(0, 5, size=4))
                for _ in range(7)]
        data = expand_aggregated(recs)
        for item in range(4):
            assert (data.chosen == item).sum() == sum(int(r.bookings[item])
                                                      for r in recs)

    def test_fully_closed_product_with_bookings_rejected(self):
        rec = AggregatedRecord(np.array([1.0]), np.array([0, 2]))
        with pytest.raises(ValueError):
            expand_aggregated([rec])

    def test_negative_bookings_rejected(self):
        with pytest.raises(ValueError):
            AggregatedRecord(np.array([0.5]), np.array([0, -1]))


class TestLinkFunctions:
    @pytest.mark.parametrize("kind", ["exp", "arctan"])
    def test_free_product_maps_to_one(self, kind):
        assert LinkFunction(kind)(0.0) == 1.0

    @pytest.mark.parametrize("kind", ["exp", "arctan"])
    def test_absent_product_maps_to_zero(self, kind):
        assert LinkFunction(kind)(math.inf) == 0.0

    def test_exp_halves_at_log_two(self):
        assert LinkFunction("exp")(math.log(2.0)) == pytest.approx(0.5)

    @pytest.mark.parametrize("kind,limit", [("exp", 1e-6), ("arctan", 1e-5)])
    def test_strictly_decreasing_on_grid(self, kind, limit):
        g = LinkFunction(kind)
        grid = np.concatenate([np.linspace(0, 10, 200), [50.0, 1e2]])
        vals = [g(v) for v in grid]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert g(1e6) < limit

    def test_negative_price_rejected(self):
        with pytest.raises(ValueError):
            LinkFunction("exp")(-1.0)
        with pytest.raises(ValueError):
            apply_link_matrix(np.array([[-0.5]]), LinkFunction("exp"))

    def test_matrix_and_scalar_paths_agree(self, rng):
        prices = rng.random((5, 3)) * 4
        prices[0, 1] = math.inf
        for kind in ("exp", "arctan"):
            link = LinkFunction(kind)
            m = apply_link_matrix(prices, link)
            for i, row in enumerate(prices):
                assert np.allclose(m[i], apply_link(row, link))


class TestAppendFeatures:
    def test_zero_features_identity(self):
        x = np.array([1.0, 0.0])
        assert np.array_equal(append_features(x, []), x)

    def test_concatenation_preserves_prefix(self):
        x = np.array([1.0, 0.0, 1.0])
        out = append_features(x, [0.2, 0.9])
        assert out.shape == (5,)
        assert np.array_equal(out[:3], x)

    def test_out_of_range_feature_rejected(self):
        with pytest.raises(ValueError):
            append_features(np.array([1.0]), [1.5])

    def test_forest_splits_on_feature_dimension(self, rng):
        # choice depends on a customer feature threshold, so some tree must
        # split on the feature column (dimension > N)
        T = 600
        f = rng.random(T)
        x = np.ones((T, 1))
        chosen = (f > 0.6).astype(np.int64)
        data = append_features_dataset(Dataset(x, chosen, 1), f[:, None])
        assert data.dimension == 2 and data.n_features == 1
        for_ = forest_mod.fit(data, ForestParams(n_trees=30, leaf_min=20,
                                                 mtry=2, seed=0))
        dims = {int(d) for tree in for_.trees
                for d in tree["feature"] if d >= 0}
        assert 1 in dims   # 0-based column 1 = the feature

    def test_prediction_requires_features(self, rng):
        data = append_features_dataset(
            Dataset(np.ones((50, 1)), np.zeros(50, dtype=int), 1),
            rng.random((50, 1)))
        f = forest_mod.fit(data, ForestParams(n_trees=5, leaf_min=10, seed=0))
        from choiceforest.core import Assortment, DimensionMismatchError
        s = Assortment.full(1)
        with pytest.raises(DimensionMismatchError):
            forest_mod.predict_normalized(f, s)
        d = forest_mod.predict_normalized(f, s, features=np.array([0.5]))
        assert d.probs.sum() == pytest.approx(1.0)


class TestLinkInvariance:
    def make_price_data(self, rng, n=5, T=300):
        u = rng.uniform(0, 3, size=n)
        truth = gen.MnlModel(u)
        prices = rng.uniform(0, 3, size=(T, n))
        absent = rng.random((T, n)) < 0.3
        prices[absent] = math.inf
        chosen = np.array([truth.price_probabilities(p).sample(rng)
                           for p in prices])
        return prices, chosen

    def fit_both(self, prices, chosen, params):
        out = {}
        for kind in ("exp", "arctan"):
            data = price_dataset(prices, chosen, LinkFunction(kind))
            out[kind] = (forest_mod.fit(data, params), data.x)
        return out

    def test_training_labels_identical_across_links(self, rng):
        # z = T without replacement: every training row is in-bag, so both
        # links must route every row to an identically labeled leaf
        prices, chosen = self.make_price_data(rng)
        params = ForestParams(n_trees=6, with_replacement=False,
                              leaf_min=25, seed=99)
        both = self.fit_both(prices, chosen, params)
        labels = {kind: np.stack([[tree["label"][_route(tree, row)] for row in X]
                                  for tree in f.trees])
                  for kind, (f, X) in both.items()}
        assert np.array_equal(labels["exp"], labels["arctan"])

    def test_inbag_labels_identical_under_bootstrap(self, rng):
        # with-replacement bootstrap: the invariance holds for each tree's
        # in-bag rows (out-of-bag rows sit inside split gaps and behave like
        # new price vectors, which may legitimately differ)
        from choiceforest import _kernels as K
        prices, chosen = self.make_price_data(rng)
        T = len(chosen)
        params = ForestParams(n_trees=6, leaf_min=25, seed=41)
        both = self.fit_both(prices, chosen, params)
        for b in range(params.n_trees):
            rows = np.unique(K.bootstrap_indices(params.seed, b, T, T, True))
            picked = {kind: [tree["label"][_route(tree, X[r])]
                             for tree, r in [(f.trees[b], r) for r in rows]]
                      for kind, (f, X) in both.items()}
            assert picked["exp"] == picked["arctan"]


def _route(tree, x):
    node = 0
    while tree["feature"][node] >= 0:
        if x[tree["feature"][node]] <= tree["threshold"][node]:
            node = tree["left"][node]
        else:
            node = tree["right"][node]
    return node


def test_aggregate_dataset_closure_math(rng):
    x = np.array([[1, 1, 1], [0, 1, 0], [1, 0, 1], [0, 0, 1], [1, 0, 1]],
                 dtype=float)
    chosen = np.array([1, 0, 3, 3, 1])
    recs = aggregate_dataset(Dataset(x, chosen, 3), 5)
    assert len(recs) == 1
    assert np.allclose(recs[0].closure, 1.0 - x.mean(axis=0))
    assert list(recs[0].bookings) == [1, 2, 0, 2]
