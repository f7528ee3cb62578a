"""Metrics and the synthetic benchmark harness.

``rmse_soft`` compares two models' probabilities over a set of assortments;
``rmse_empirical`` compares predictions against observed choices.  The
harness synthesizes data from a configured ground truth, fits the requested
estimators, and reports per-estimator mean/std over replications.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import baselines, forest as forest_mod, generators, transforms
from .core import Assortment, Dataset, all_assortments
from .forest import Forest, ForestParams


def rmse_soft(truth, estimate, assortments: Sequence[Assortment]) -> float:
    """Root mean squared gap between two models' choice probabilities,
    summed over each assortment's offered items plus no purchase."""
    if not assortments:
        raise ValueError("assortment set is empty")
    P = _prob_rows(truth, assortments)
    Q = _prob_rows(estimate, assortments)
    num = 0.0
    den = 0
    for k, s in enumerate(assortments):
        items = [0] + s.products()
        for i in items:
            num += (P[k, i] - Q[k, i]) ** 2
        den += len(items)
    return math.sqrt(num / den)


def _prob_rows(model, assortments: Sequence[Assortment]) -> np.ndarray:
    batch = getattr(model, "batch_choice_probabilities", None)
    if batch is not None:
        return batch(assortments)
    return np.stack([model.choice_probabilities(s).probs for s in assortments])


def rmse_empirical(estimate, test: Dataset) -> float:
    """Empirical RMSE of predicted probabilities against observed choices."""
    if test.n_transactions == 0:
        raise ValueError("test set is empty")
    num = 0.0
    den = 0
    cache: dict[int, np.ndarray] = {}
    N = test.n_products
    weights = (1 << np.arange(N, dtype=np.int64))
    masks = ((test.x[:, :N] > 0).astype(np.int64) @ weights)
    for mask, chosen in zip(masks, test.chosen):
        q = cache.get(int(mask))
        if q is None:
            q = estimate.choice_probabilities(Assortment(N, int(mask))).probs
            cache[int(mask)] = q
        s_items = [0] + Assortment(N, int(mask)).products()
        for i in s_items:
            num += ((1.0 if i == chosen else 0.0) - q[i]) ** 2
        den += len(s_items)
    return math.sqrt(num / den)


def kfold_cv(data: Dataset, k: int, estimator_factory: Callable[[Dataset], object],
             seed: int) -> tuple[float, float]:
    """Shuffle, split into k near-equal folds, train on k-1 and score the
    held-out fold with the empirical RMSE; returns (mean, std) over folds."""
    T = data.n_transactions
    if k < 2:
        raise ValueError("k must be >= 2")
    if T < k:
        raise ValueError(f"need at least k={k} transactions, got {T}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(T)
    folds = np.array_split(order, k)
    scores = []
    for i in range(k):
        test_idx = folds[i]
        train_idx = np.concatenate([folds[j] for j in range(k) if j != i])
        model = estimator_factory(data.subset(train_idx))
        scores.append(rmse_empirical(model, data.subset(test_idx)))
    arr = np.array(scores)
    return float(arr.mean()), float(arr.std(ddof=1 if k > 1 else 0))


# ---------------------------------------------------------------------------
# experiment harness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """One benchmark cell: ground truth, data shape, estimators, replications.

    ``generator`` follows the model-spec vocabulary plus random recipes:
    {"type": "rank", "n_types": 4}, {"type": "mnl"}, {"type": "comparison",
    "n_types": 2, "n_attributes": 5}, {"type": "mnl-price", "utility_high":
    5.0, "price_high": 5.0}.
    """

    generator: dict
    n_products: int
    n_transactions: int
    estimators: tuple = ("rf", "mnl", "markov")
    pool_size: Optional[int] = None        # T1; None -> fresh assortment per row
    replications: int = 1
    seed: int = 0
    mode: str = "binary"                   # binary | aggregated | prices
    aggregation_level: int = 1
    n_test: int = 1000                     # price-mode test vectors
    forest: dict = field(default_factory=dict)
    em_tol: float = 1e-7
    em_max_iter: int = 1000
    link: str = "exp"
    threads: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.n_transactions < 1:
            raise ValueError("n_transactions must be >= 1")
        if self.mode not in ("binary", "aggregated", "prices"):
            raise ValueError(f"unknown mode {self.mode!r}")


def _draw_generator(cfg: ExperimentConfig, rng: np.random.Generator):
    g = cfg.generator
    kind = g.get("type")
    n = cfg.n_products
    if kind == "rank":
        return generators.random_rank_model(n, g.get("n_types", 4), rng,
                                            g.get("weights", "uniform-normalized"))
    if kind == "mnl":
        return generators.random_mnl_model(n, rng, g.get("utility_low", 0.0),
                                           g.get("utility_high", 1.0))
    if kind == "comparison":
        return generators.random_comparison_model(
            n, g.get("n_types", 2), g.get("n_attributes", 5), rng,
            include_outside=g.get("include_outside", False))
    if kind == "markov":
        return generators.random_markov_model(n, rng)
    return generators.model_from_spec(g)


class _ForestAdapter:
    """Forest wrapped for binary-assortment scoring."""

    def __init__(self, f: Forest):
        self.forest = f
        self.n_products = f.n_products

    def choice_probabilities(self, s: Assortment):
        return forest_mod.predict_normalized(self.forest, s)

    def batch_choice_probabilities(self, assortments: Sequence[Assortment]) -> np.ndarray:
        X = np.stack([s.to_x() for s in assortments])
        return forest_mod.predict_normalized_matrix(self.forest, X, list(assortments))


def _forest_params(cfg: ExperimentConfig) -> ForestParams:
    return ForestParams(**cfg.forest) if cfg.forest else ForestParams()


def _replication_seed(cfg: ExperimentConfig, rep: int) -> np.random.Generator:
    return np.random.default_rng((cfg.seed, rep))


def _eval_assortments(n: int, rng: np.random.Generator,
                      cap: int = 10_000) -> list[Assortment]:
    if (1 << n) - 1 <= cap:
        return all_assortments(n)
    return [generators.sample_assortment("uniform-nonempty", n, rng)
            for _ in range(cap)]


def _run_binary_rep(cfg: ExperimentConfig, rep: int) -> dict:
    rng = _replication_seed(cfg, rep)
    truth = _draw_generator(cfg, rng)
    n = cfg.n_products
    if cfg.pool_size:
        pool = generators.draw_pool(n, cfg.pool_size, rng)
        assortments = [pool[int(rng.integers(len(pool)))]
                       for _ in range(cfg.n_transactions)]
    else:
        assortments = [generators.sample_assortment("uniform-nonempty", n, rng)
                       for _ in range(cfg.n_transactions)]
    data = generators.synthesize(truth, assortments, rng)
    eval_set = _eval_assortments(n, rng)

    out = {}
    for name in cfg.estimators:
        t0 = time.perf_counter()
        try:
            model = _fit_binary_estimator(name, cfg, data)
            score = rmse_soft(truth, model, eval_set)
            out[name] = {"rmse": score, "seconds": time.perf_counter() - t0}
        except Exception as exc:                      # recorded, not fatal
            out[name] = {"error": f"{type(exc).__name__}: {exc}",
                         "seconds": time.perf_counter() - t0}
    return out


def _fit_binary_estimator(name: str, cfg: ExperimentConfig, data: Dataset):
    if name == "rf":
        params = _forest_params(cfg)
        return _ForestAdapter(forest_mod.fit(data, params, threads=cfg.threads))
    if name == "mnl":
        return baselines.fit_mnl_mle(data)
    if name == "markov":
        model, _ = baselines.fit_markov_em(data, tol=cfg.em_tol,
                                           max_iter=cfg.em_max_iter)
        return model
    if name == "independent":
        return baselines.fit_independent(data)
    raise ValueError(f"estimator {name!r} not available in binary mode")


def _run_aggregated_rep(cfg: ExperimentConfig, rep: int) -> dict:
    rng = _replication_seed(cfg, rep)
    truth = _draw_generator(cfg, rng)
    n = cfg.n_products
    assortments = [generators.sample_assortment("uniform-nonempty", n, rng)
                   for _ in range(cfg.n_transactions)]
    raw = generators.synthesize(truth, assortments, rng)
    records = transforms.aggregate_dataset(raw, cfg.aggregation_level)
    eval_set = _eval_assortments(n, rng)

    out = {}
    for name in cfg.estimators:
        t0 = time.perf_counter()
        try:
            if name == "rf":
                train = transforms.expand_aggregated(records)
                model = _ForestAdapter(
                    forest_mod.fit(train, _forest_params(cfg), threads=cfg.threads))
            else:
                train = transforms.deaggregate_records(records, rng)
                model = _fit_binary_estimator(name, cfg, train)
            out[name] = {"rmse": rmse_soft(truth, model, eval_set),
                         "seconds": time.perf_counter() - t0}
        except Exception as exc:
            out[name] = {"error": f"{type(exc).__name__}: {exc}",
                         "seconds": time.perf_counter() - t0}
    return out


def _run_price_rep(cfg: ExperimentConfig, rep: int) -> dict:
    rng = _replication_seed(cfg, rep)
    g = cfg.generator
    n = cfg.n_products
    u = rng.uniform(0.0, g.get("utility_high", 5.0), size=n)
    truth = generators.MnlModel(u)
    price_high = g.get("price_high", 5.0)

    def draw_prices(count):
        return rng.uniform(0.0, price_high, size=(count, n))

    def choices_for(prices):
        out = np.empty(len(prices), dtype=np.int64)
        for i, p in enumerate(prices):
            out[i] = truth.price_probabilities(p).sample(rng)
        return out

    train_p = draw_prices(cfg.n_transactions)
    train_c = choices_for(train_p)
    test_p = draw_prices(cfg.n_test)
    truth_probs = np.stack([truth.price_probabilities(p).probs for p in test_p])
    link = transforms.LinkFunction(cfg.link)

    out = {}
    for name in cfg.estimators:
        t0 = time.perf_counter()
        try:
            if name == "rf":
                data = transforms.price_dataset(train_p, train_c, link)
                f = forest_mod.fit(data, _forest_params(cfg), threads=cfg.threads)
                X = transforms.apply_link_matrix(test_p, link)
                masks = [Assortment.full(n)] * len(test_p)
                est = forest_mod.predict_normalized_matrix(f, X, masks)
            elif name == "mnl":
                model = baselines.fit_mnl_prices(train_p, train_c)
                est = np.stack([model.price_probabilities(p).probs for p in test_p])
            elif name == "linear":
                model = baselines.fit_linear_demand(train_p, train_c)
                est = np.stack([model.price_probabilities(p).probs for p in test_p])
            else:
                raise ValueError(f"estimator {name!r} not available in price mode")
            num = float(((truth_probs - est) ** 2).sum())
            score = math.sqrt(num / (len(test_p) * (n + 1)))
            out[name] = {"rmse": score, "seconds": time.perf_counter() - t0}
        except Exception as exc:
            out[name] = {"error": f"{type(exc).__name__}: {exc}",
                         "seconds": time.perf_counter() - t0}
    return out


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> dict:
    """Execute all replications and aggregate per-estimator statistics.

    Replications carry independent seeded streams; the report is assembled in
    replication order, so results are identical for any thread count.
    """
    runner = {"binary": _run_binary_rep, "aggregated": _run_aggregated_rep,
              "prices": _run_price_rep}[cfg.mode]
    reps = range(cfg.replications)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda r: runner(cfg, r), reps))
    else:
        results = [runner(cfg, r) for r in reps]

    report: dict = {"config": _config_dict(cfg), "replications": results,
                    "summary": {}}
    for name in cfg.estimators:
        scores = [r[name]["rmse"] for r in results if "rmse" in r[name]]
        errors = [r[name]["error"] for r in results if "error" in r[name]]
        times = [r[name]["seconds"] for r in results]
        entry = {"n_ok": len(scores), "n_failed": len(errors)}
        if scores:
            arr = np.array(scores)
            entry["mean"] = float(arr.mean())
            entry["std"] = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
            entry["mean_seconds"] = float(np.mean(times))
        if errors:
            entry["errors"] = errors
        report["summary"][name] = entry
    return report


def _config_dict(cfg: ExperimentConfig) -> dict:
    return {
        "generator": cfg.generator, "n_products": cfg.n_products,
        "n_transactions": cfg.n_transactions, "estimators": list(cfg.estimators),
        "pool_size": cfg.pool_size, "replications": cfg.replications,
        "seed": cfg.seed, "mode": cfg.mode,
        "aggregation_level": cfg.aggregation_level, "n_test": cfg.n_test,
        "forest": cfg.forest, "em_tol": cfg.em_tol,
        "em_max_iter": cfg.em_max_iter, "link": cfg.link,
    }


def config_from_dict(doc: dict) -> ExperimentConfig:
    known = {f for f in ExperimentConfig.__dataclass_fields__}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown config fields: {sorted(unknown)}")
    doc = dict(doc)
    if "estimators" in doc:
        doc["estimators"] = tuple(doc["estimators"])
    return ExperimentConfig(**doc)
