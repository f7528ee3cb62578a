"""Ground-truth choice models and samplers for synthetic experiments.

Each model exposes ``choice_probabilities(assortment)`` and
``sample(assortment, rng)``; sampling always uses a caller-supplied
numpy Generator so concurrent workers own independent streams.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import Assortment, ChoiceDistribution, Dataset, sample_from_model


@dataclass(frozen=True)
class MnlModel:
    """Multinomial logit with attractions exp(u_i - p_i); outside utility 0."""

    utilities: np.ndarray
    prices: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "utilities", np.asarray(self.utilities, dtype=float))
        if self.prices is not None:
            object.__setattr__(self, "prices", np.asarray(self.prices, dtype=float))
            if np.any(self.prices < 0):
                raise ValueError("prices must be non-negative")

    @property
    def n_products(self) -> int:
        return len(self.utilities)

    def attractions(self, prices: Optional[np.ndarray] = None) -> np.ndarray:
        p = prices if prices is not None else self.prices
        if p is None:
            p = np.zeros(self.n_products)
        return np.exp(self.utilities - np.asarray(p, dtype=float))

    def choice_probabilities(self, s: Assortment,
                             prices: Optional[np.ndarray] = None) -> ChoiceDistribution:
        v = self.attractions(prices)
        probs = np.zeros(self.n_products + 1)
        denom = 1.0
        for j in s.products():
            denom += v[j - 1]
        probs[0] = 1.0 / denom
        for j in s.products():
            probs[j] = v[j - 1] / denom
        return ChoiceDistribution(probs)

    def price_probabilities(self, prices: np.ndarray) -> ChoiceDistribution:
        """Probabilities when all finitely-priced products are offered."""
        prices = np.asarray(prices, dtype=float)
        offered = [j + 1 for j in range(self.n_products) if np.isfinite(prices[j])]
        s = Assortment.from_products(self.n_products, offered)
        return self.choice_probabilities(s, prices=np.where(np.isfinite(prices), prices, 0.0))

    def sample(self, s: Assortment, rng: np.random.Generator) -> int:
        return sample_from_model(self, s, rng)


@dataclass(frozen=True)
class RankModel:
    """Mixture of strict preference rankings over {0..N}.

    ``rankings[k]`` lists items in preference order (most preferred first)
    and must contain every product plus item 0.  A customer of type k buys
    the first listed item that is offered.
    """

    rankings: tuple
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rankings", tuple(tuple(r) for r in self.rankings))
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        object.__setattr__(self, "weights", w / w.sum())
        n = len(self.rankings[0]) - 1
        for r in self.rankings:
            if sorted(r) != list(range(n + 1)):
                raise ValueError("each ranking must be a permutation of {0..N}")

    @property
    def n_products(self) -> int:
        return len(self.rankings[0]) - 1

    def top_choice(self, ranking: Sequence[int], s: Assortment) -> int:
        for item in ranking:
            if item == 0 or s.offers(item):
                return item
        return 0

    def choice_probabilities(self, s: Assortment) -> ChoiceDistribution:
        probs = np.zeros(self.n_products + 1)
        for r, w in zip(self.rankings, self.weights):
            probs[self.top_choice(r, s)] += w
        return ChoiceDistribution(probs)

    def sample(self, s: Assortment, rng: np.random.Generator) -> int:
        k = int(rng.choice(len(self.rankings), p=self.weights))
        return self.top_choice(self.rankings[k], s)


def single_ranking(n_products: int) -> RankModel:
    """The canonical ranking 1 > 2 > ... > N > 0."""
    return RankModel((tuple(range(1, n_products + 1)) + (0,),), np.array([1.0]))


@dataclass(frozen=True)
class MarkovModel:
    """Markov chain choice: start at an item by lam, transition by rho until
    an offered item (or 0) absorbs."""

    lam: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        rho = np.asarray(self.rho, dtype=float)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "rho", rho)
        n1 = len(lam)
        if rho.shape != (n1, n1):
            raise ValueError("rho must be (N+1, N+1)")
        if abs(lam.sum() - 1.0) > 1e-9 or np.any(lam < 0):
            raise ValueError("lam must be a distribution")
        if np.any(np.abs(rho.sum(axis=1) - 1.0) > 1e-9) or np.any(rho < 0):
            raise ValueError("rho rows must be distributions")
        if rho[0, 0] != 1.0:
            raise ValueError("state 0 must be absorbing (rho[0,0] = 1)")

    @property
    def n_products(self) -> int:
        return len(self.lam) - 1

    def choice_probabilities(self, s: Assortment) -> ChoiceDistribution:
        return ChoiceDistribution(absorption_probabilities(self.lam, self.rho, s))

    def sample(self, s: Assortment, rng: np.random.Generator) -> int:
        state = int(rng.choice(len(self.lam), p=self.lam))
        while state != 0 and not s.offers(state):
            state = int(rng.choice(len(self.lam), p=self.rho[state]))
        return state


def absorption_probabilities(lam: np.ndarray, rho: np.ndarray,
                             s: Assortment) -> np.ndarray:
    """Absorption distribution over s + {0}: offered states absorb, all other
    products transition by rho.  Solved exactly by dense elimination."""
    n1 = len(lam)
    absorbed = np.zeros(n1, dtype=bool)
    absorbed[0] = True
    for j in s.products():
        absorbed[j] = True
    probs = np.where(absorbed, lam, 0.0)
    free = np.flatnonzero(~absorbed)
    if len(free) == 0:
        return probs
    targets = np.flatnonzero(absorbed)
    A = np.eye(len(free)) - rho[np.ix_(free, free)]
    theta = np.linalg.solve(A, rho[np.ix_(free, targets)])
    probs[targets] += lam[free] @ theta
    return probs


@dataclass(frozen=True)
class ComparisonModel:
    """Comparison-based choice: a round-robin tournament over the offered
    items on per-type attribute scores.

    In a pairwise comparison the item preferable on more attributes takes the
    pair; an attribute tie contributes half a win to each side.  The item with
    the most wins is chosen, uniformly among tied leaders.  When
    ``include_outside`` is set the no-purchase option competes with its own
    attribute scores (row 0); otherwise it is chosen only for the empty
    assortment.
    """

    scores: np.ndarray           # (n_types, N+1, n_attributes)
    type_weights: np.ndarray
    include_outside: bool = True
    _pair_wins: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "scores", np.asarray(self.scores, dtype=float))
        w = np.asarray(self.type_weights, dtype=float)
        object.__setattr__(self, "type_weights", w / w.sum())
        if self.scores.ndim != 3:
            raise ValueError("scores must be (n_types, N+1, n_attributes)")
        # pair_wins[k, i, j]: win credit of i against j for type k
        sc = self.scores
        more = (sc[:, :, None, :] > sc[:, None, :, :]).sum(axis=3)
        fewer = more.transpose(0, 2, 1)
        pw = np.where(more > fewer, 1.0, np.where(more < fewer, 0.0, 0.5))
        idx = np.arange(sc.shape[1])
        pw[:, idx, idx] = 0.0
        object.__setattr__(self, "_pair_wins", pw)

    @property
    def n_products(self) -> int:
        return self.scores.shape[1] - 1

    def _items(self, s: Assortment) -> list[int]:
        offered = s.products()
        if self.include_outside or not offered:
            return [0] + offered
        return offered

    def _leaders(self, k: int, items: list[int]) -> list[int]:
        sub = self._pair_wins[k][np.ix_(items, items)]
        wins = sub.sum(axis=1)
        top = wins.max()
        return [items[i] for i in np.flatnonzero(wins == top)]

    def choice_probabilities(self, s: Assortment) -> ChoiceDistribution:
        items = self._items(s)
        probs = np.zeros(self.n_products + 1)
        for k, w in enumerate(self.type_weights):
            leaders = self._leaders(k, items)
            for i in leaders:
                probs[i] += w / len(leaders)
        return ChoiceDistribution(probs)

    def sample(self, s: Assortment, rng: np.random.Generator) -> int:
        k = int(rng.choice(len(self.type_weights), p=self.type_weights))
        leaders = self._leaders(k, self._items(s))
        return int(leaders[rng.integers(len(leaders))]) if len(leaders) > 1 else leaders[0]


def comparison_choose(model: ComparisonModel, s: Assortment,
                      rng: np.random.Generator) -> int:
    return model.sample(s, rng)


# ---------------------------------------------------------------------------
# sequential search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValueDistribution:
    """Product-value distribution: 'constant' at ``a`` or 'uniform' on [a, b]."""

    kind: str
    a: float
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "uniform"):
            raise ValueError("kind must be 'constant' or 'uniform'")
        if self.kind == "uniform" and self.b <= self.a:
            raise ValueError("uniform needs b > a")

    def mean(self) -> float:
        return self.a if self.kind == "constant" else 0.5 * (self.a + self.b)

    def tail_expectation(self, z: float) -> float:
        """E[(V - z)^+]."""
        if self.kind == "constant":
            return max(self.a - z, 0.0)
        if z <= self.a:
            return self.mean() - z
        if z >= self.b:
            return 0.0
        return (self.b - z) ** 2 / (2.0 * (self.b - self.a))

    def draw(self, rng: np.random.Generator) -> float:
        return self.a if self.kind == "constant" else float(rng.uniform(self.a, self.b))


class InfeasibleSearchCostError(ValueError):
    pass


def reservation_value(dist: ValueDistribution, cost: float,
                      tol: float = 1e-10) -> float:
    """Root z of E[(V - z)^+] = cost.

    For a constant value v the root is v - cost.  For a continuous
    distribution the root must stay above the support infimum; a cost at or
    beyond E[V] - inf(support) pushes it below and is rejected.
    """
    if cost <= 0:
        raise ValueError("search cost must be positive")
    if dist.kind == "constant":
        return dist.a - cost
    limit = dist.mean() - dist.a
    if cost >= limit:
        raise InfeasibleSearchCostError(
            f"cost {cost} >= E[V] - inf support = {limit}; "
            "reservation value would fall below the support")
    lo, hi = dist.a, dist.b
    while hi - lo > 0:
        mid = 0.5 * (lo + hi)
        r = dist.tail_expectation(mid) - cost
        if abs(r) <= tol:
            return mid
        if r > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            return 0.5 * (lo + hi)
    return lo


@dataclass(frozen=True)
class SearchCustomer:
    """One realized sequential searcher: values, reservation values, and the
    deterministic choice rule they induce."""

    v0: float
    values: np.ndarray           # realized v_j, products in z-descending order 1..N
    z: np.ndarray                # reservation values, descending

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float))
        if np.any(np.diff(self.z) > 0):
            raise ValueError("products must be sorted in descending reservation value")

    @property
    def n_products(self) -> int:
        return len(self.values)

    def choose(self, s: Assortment) -> int:
        offered = s.products()     # ascending product index == descending z
        best_item = 0
        best_val = self.v0
        w = self.v0
        for j in offered:
            if w > self.z[j - 1]:
                break
            v = self.values[j - 1]
            if v > best_val:
                best_val = v
                best_item = j
            w = max(w, v)
        return best_item


def search_choose(customer: SearchCustomer, s: Assortment) -> int:
    """Weitzman rule for a realized customer: search offered products in
    descending reservation order while the running best value has not passed
    the next reservation value; buy the best searched item (0 if the outside
    value wins)."""
    return customer.choose(s)


@dataclass(frozen=True)
class SearchModel:
    """Population of sequential searchers; each sampled customer draws fresh
    values and chooses deterministically, so the induced DCM is a mixture of
    decision trees."""

    value_dists: tuple
    costs: np.ndarray
    outside_dist: ValueDistribution
    mc_samples: int = 4000
    seed: int = 0
    z: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "value_dists", tuple(self.value_dists))
        object.__setattr__(self, "costs", np.asarray(self.costs, dtype=float))
        z = np.array([reservation_value(d, c)
                      for d, c in zip(self.value_dists, self.costs)])
        if np.any(np.diff(z) > 0):
            raise ValueError("products must be indexed in descending z order")
        object.__setattr__(self, "z", z)

    @property
    def n_products(self) -> int:
        return len(self.value_dists)

    def realize(self, rng: np.random.Generator) -> SearchCustomer:
        values = np.array([d.draw(rng) for d in self.value_dists])
        return SearchCustomer(self.outside_dist.draw(rng), values, self.z)

    def sample(self, s: Assortment, rng: np.random.Generator) -> int:
        return self.realize(rng).choose(s)

    def choice_probabilities(self, s: Assortment) -> ChoiceDistribution:
        """Monte Carlo estimate over fresh customers; deterministic for a
        fixed (seed, mc_samples, assortment)."""
        rng = np.random.default_rng((self.seed, s.mask))
        counts = np.zeros(self.n_products + 1)
        for _ in range(self.mc_samples):
            counts[self.sample(s, rng)] += 1
        return ChoiceDistribution(counts / counts.sum())


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------

def sample_assortment(mode: str, n_products: int, rng: np.random.Generator,
                      p=None, pool: Optional[list[Assortment]] = None) -> Assortment:
    """One assortment draw.

    Modes: ``uniform-nonempty`` (uniform over the 2^N - 1 non-empty subsets),
    ``bernoulli`` (each product independently with probability ``p``, scalar
    or per-product; may be empty), ``fixed-pool`` (uniform over ``pool``).
    """
    if mode == "uniform-nonempty":
        mask = int(rng.integers(1, 1 << n_products))
        return Assortment(n_products, mask)
    if mode == "bernoulli":
        probs = np.broadcast_to(np.asarray(p, dtype=float), (n_products,))
        if np.any(probs < 0) or np.any(probs > 1):
            raise ValueError("inclusion probabilities must lie in [0, 1]")
        bits = rng.random(n_products) < probs
        mask = 0
        for j in range(n_products):
            if bits[j]:
                mask |= 1 << j
        return Assortment(n_products, mask)
    if mode == "fixed-pool":
        if not pool:
            raise ValueError("fixed-pool mode needs a non-empty pool")
        return pool[int(rng.integers(len(pool)))]
    raise ValueError(f"unknown assortment mode {mode!r}")


def draw_pool(n_products: int, pool_size: int,
              rng: np.random.Generator) -> list[Assortment]:
    """Pre-draw a pool of assortments uniformly from the non-empty subsets."""
    return [sample_assortment("uniform-nonempty", n_products, rng)
            for _ in range(pool_size)]


def uniform_normalized_weights(k: int, rng: np.random.Generator) -> np.ndarray:
    """u_i / sum(u) for k iid uniforms."""
    if k < 1:
        raise ValueError("k must be >= 1")
    u = rng.random(k)
    return u / u.sum()


def dirichlet_weights(k: int, rng: np.random.Generator,
                      alpha: float = 1.0) -> np.ndarray:
    if k < 1:
        raise ValueError("k must be >= 1")
    return rng.dirichlet(np.full(k, alpha))


def synthesize(model, assortments: Sequence[Assortment],
               rng: np.random.Generator, n_features: int = 0) -> Dataset:
    """Draw one choice per assortment from the model."""
    n = model.n_products
    x = np.stack([s.to_x(n_features) for s in assortments]) if assortments \
        else np.zeros((0, n + n_features))
    chosen = np.array([model.sample(s, rng) for s in assortments], dtype=np.int64)
    return Dataset(x, chosen, n, n_features)


def random_rank_model(n_products: int, n_types: int,
                      rng: np.random.Generator,
                      weight_mode: str = "uniform-normalized") -> RankModel:
    """Random preference permutations over all products plus the no-purchase
    option, with normalized-uniform or Dirichlet type weights."""
    rankings = [tuple(int(v) for v in rng.permutation(n_products + 1))
                for _ in range(n_types)]
    if weight_mode == "dirichlet":
        w = dirichlet_weights(n_types, rng)
    else:
        w = uniform_normalized_weights(n_types, rng)
    return RankModel(tuple(rankings), w)


def random_mnl_model(n_products: int, rng: np.random.Generator,
                     low: float = 0.0, high: float = 1.0) -> MnlModel:
    """Uniform utilities; the outside utility draw is absorbed by shifting, so
    the outside attraction stays 1."""
    u = rng.uniform(low, high, size=n_products)
    u0 = rng.uniform(low, high)
    return MnlModel(u - u0)


def random_comparison_model(n_products: int, n_types: int, n_attributes: int,
                            rng: np.random.Generator,
                            include_outside: bool = False) -> ComparisonModel:
    """Benchmark recipe: uniform attribute scores, normalized-uniform type
    weights.  The no-purchase option stays out of the tournament by default;
    scoring it as a competitor makes the instances markedly easier for every
    estimator."""
    scores = rng.random((n_types, n_products + 1, n_attributes))
    w = uniform_normalized_weights(n_types, rng)
    return ComparisonModel(scores, w, include_outside=include_outside)


def random_markov_model(n_products: int, rng: np.random.Generator) -> MarkovModel:
    n1 = n_products + 1
    lam = rng.dirichlet(np.ones(n1))
    rho = np.zeros((n1, n1))
    rho[0, 0] = 1.0
    for j in range(1, n1):
        row = rng.dirichlet(np.ones(n1 - 1))
        rho[j, [i for i in range(n1) if i != j]] = row
    return MarkovModel(lam, rho)


# ---------------------------------------------------------------------------
# model-spec JSON
# ---------------------------------------------------------------------------

def model_from_spec(spec: dict):
    """Instantiate a ground-truth model from its JSON spec."""
    kind = spec.get("type")
    if kind == "mnl":
        return MnlModel(np.asarray(spec["utilities"], dtype=float),
                        np.asarray(spec["prices"], dtype=float) if "prices" in spec else None)
    if kind == "rank":
        return RankModel(tuple(tuple(r) for r in spec["rankings"]),
                         np.asarray(spec["weights"], dtype=float))
    if kind == "markov":
        return MarkovModel(np.asarray(spec["lambda"], dtype=float),
                           np.asarray(spec["rho"], dtype=float))
    if kind == "comparison":
        return ComparisonModel(np.asarray(spec["scores"], dtype=float),
                               np.asarray(spec["type_weights"], dtype=float),
                               include_outside=spec.get("include_outside", True))
    if kind == "search":
        dists = tuple(ValueDistribution(**d) for d in spec["value_dists"])
        return SearchModel(dists, np.asarray(spec["costs"], dtype=float),
                           ValueDistribution(**spec["outside"]),
                           mc_samples=spec.get("mc_samples", 4000),
                           seed=spec.get("seed", 0))
    raise ValueError(f"unknown model type {kind!r}")


def model_spec_from_json(text: str):
    return model_from_spec(json.loads(text))
