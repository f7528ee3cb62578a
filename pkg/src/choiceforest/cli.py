"""Command-line entry point.

Subcommands: fit, predict, importance, simulate, benchmark, analyze.
Reports are JSON on stdout (or --output); data and benchmark tables are CSV.
Errors are emitted as single-line JSON on stderr with a non-zero exit code.
All randomness is seeded, so outputs are byte-identical across runs and
thread counts; wall-clock goes to stderr (or into reports only with
--timings).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time

import numpy as np

from . import analysis, evaluation, forest as forest_mod, generators, io as cfio, transforms
from .core import Assortment, Dataset
from .forest import ForestParams


def _fail(message: str, code: int = 1) -> int:
    print(json.dumps({"error": message}), file=sys.stderr)
    return code


def _emit(doc: dict, output: str | None) -> None:
    text = json.dumps(doc, sort_keys=True)
    if output:
        with open(output, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _forest_params(args) -> ForestParams:
    return ForestParams(
        n_trees=args.trees, subsample=args.subsample,
        with_replacement=not args.no_replacement,
        mtry=args.mtry, leaf_min=args.leaf_min, seed=args.seed)


def _add_forest_flags(p) -> None:
    p.add_argument("--trees", type=int, default=1000, help="number of trees B")
    p.add_argument("--subsample", type=int, default=None,
                   help="per-tree subsample size z (default: T)")
    p.add_argument("--no-replacement", action="store_true",
                   help="draw the subsample without replacement")
    p.add_argument("--mtry", type=int, default=None,
                   help="candidate dimensions per split m (default: ceil(sqrt(d)))")
    p.add_argument("--leaf-min", type=int, default=50,
                   help="minimum in-bag observations for a leaf to keep splitting")
    p.add_argument("--seed", type=int, default=0)


def _load_training(args) -> Dataset:
    with open(args.input) as fh:
        if args.format == "transactions":
            return cfio.read_transactions(fh, n_products=getattr(args, "products", None))
        if args.format == "aggregated":
            return transforms.expand_aggregated(cfio.read_aggregated(fh))
        if args.format == "prices":
            prices, chosen = cfio.read_prices(fh)
            return transforms.price_dataset(prices, chosen,
                                            transforms.LinkFunction(args.link))
    raise ValueError(f"unknown format {args.format!r}")


def cmd_fit(args) -> int:
    t0 = time.perf_counter()
    data = _load_training(args)
    f = forest_mod.fit(data, _forest_params(args), threads=args.threads)
    forest_mod.save(f, args.output)
    elapsed = time.perf_counter() - t0
    print(json.dumps({"transactions": data.n_transactions,
                      "n_products": data.n_products,
                      "n_features": data.n_features,
                      "trees": f.n_trees, "model": args.output},
                     sort_keys=True))
    print(f"elapsed: {elapsed:.2f}s", file=sys.stderr)
    return 0


def _parse_floats(text: str) -> list[float]:
    return [math.inf if v.strip() == "inf" else float(v)
            for v in text.split(",") if v.strip()]


def cmd_predict(args) -> int:
    f = forest_mod.load(args.model)
    n = f.n_products
    features = np.array(_parse_floats(args.features)) if args.features else None
    if args.prices is not None:
        prices = _parse_floats(args.prices)
        if len(prices) != n:
            raise ValueError(f"{len(prices)} prices for a model over {n} products")
        link = transforms.LinkFunction(args.link)
        x = transforms.apply_link(prices, link)
        s = Assortment.from_products(n, [j + 1 for j in range(n) if x[j] > 0])
        if features is not None:
            x = transforms.append_features(x, features)
        votes = forest_mod.vote_matrix(f, x[None, :])[0].astype(float)
        dist = forest_mod._normalize_votes(votes, s, include_outside=True)
    else:
        products = [int(v) for v in args.assortment.split(",") if v.strip()] \
            if args.assortment else []
        s = Assortment.from_products(n, products)
        dist = forest_mod.predict_normalized(f, s, features=features)
    _emit({"assortment": s.products(), "probabilities": dist.as_dict()},
          args.output)
    return 0


def cmd_importance(args) -> int:
    f = forest_mod.load(args.model)
    data = _load_training(args)
    scores = forest_mod.mdi(f, data)
    table = {}
    for j, v in enumerate(scores, start=1):
        key = f"product_{j}" if j <= f.n_products else f"feature_{j - f.n_products}"
        table[key] = float(v)
    _emit({"mdi": table}, args.output)
    return 0


def cmd_simulate(args) -> int:
    with open(args.model_spec) as fh:
        model = generators.model_from_spec(json.load(fh))
    rng = np.random.default_rng(args.seed)
    n = model.n_products
    if args.pool_size:
        pool = generators.draw_pool(n, args.pool_size, rng)
        assortments = [pool[int(rng.integers(len(pool)))]
                       for _ in range(args.n_transactions)]
    elif args.bernoulli is not None:
        assortments = [generators.sample_assortment("bernoulli", n, rng, p=args.bernoulli)
                       for _ in range(args.n_transactions)]
    else:
        assortments = [generators.sample_assortment("uniform-nonempty", n, rng)
                       for _ in range(args.n_transactions)]
    data = generators.synthesize(model, assortments, rng)
    with open(args.output, "w") as fh:
        cfio.write_transactions(fh, data)
    print(json.dumps({"transactions": data.n_transactions,
                      "n_products": n, "output": args.output}, sort_keys=True))
    return 0


def cmd_benchmark(args) -> int:
    with open(args.config) as fh:
        doc = json.load(fh)
    ts = doc.pop("n_transactions")
    pools = doc.pop("pool_size", None)
    t_list = ts if isinstance(ts, list) else [ts]
    pool_list = pools if isinstance(pools, list) else [pools]
    threads = forest_mod._thread_count(args.threads)
    reports = []
    for t in t_list:
        for pool in pool_list:
            cfg = evaluation.config_from_dict(
                {**doc, "n_transactions": t, "pool_size": pool})
            reports.append(evaluation.run_experiment(cfg, threads=threads))
    if not args.timings:
        for rep in reports:
            for entry in rep["summary"].values():
                entry.pop("mean_seconds", None)
            for r in rep["replications"]:
                for entry in r.values():
                    entry.pop("seconds", None)
    out = reports[0] if len(reports) == 1 else {"cells": reports}
    _emit(out, args.output)
    if args.csv:
        _write_benchmark_csv(args.csv, reports, t_list, pool_list,
                             doc.get("estimators", ["rf", "mnl", "markov"]))
    return 0


def _write_benchmark_csv(path: str, reports: list, t_list, pool_list,
                         estimators) -> None:
    """Benchmark table: one row per T, columns estimator x pool size."""
    import csv as _csv
    with open(path, "w") as fh:
        w = _csv.writer(fh, lineterminator="\n")
        header = ["T"]
        for pool in pool_list:
            for est in estimators:
                tag = f"{est}@T1={pool}" if pool else est
                header.append(tag)
        w.writerow(header)
        k = 0
        grid = {}
        for t in t_list:
            for pool in pool_list:
                grid[(t, pool)] = reports[k]
                k += 1
        for t in t_list:
            row = [t]
            for pool in pool_list:
                summary = grid[(t, pool)]["summary"]
                for est in estimators:
                    cell = summary.get(est, {})
                    if "mean" in cell:
                        row.append(f"{cell['mean']:.4f} ({cell.get('std', 0.0):.4f})")
                    else:
                        row.append("failed")
            w.writerow(row)


def cmd_analyze(args) -> int:
    if args.study == "distance":
        report = analysis.pnn_distance_mc(args.n, args.m, args.reps, args.seed,
                                          mode=args.mode)
        report["bound"] = analysis.prop3_bound(args.n)
    elif args.study == "ranking":
        report = analysis.ranking_recovery(args.n, args.t, args.scheme,
                                           args.datasets, args.seed,
                                           n_trees=args.trees)
    elif args.study == "pnn":
        with open(args.input) as fh:
            data = cfio.read_transactions(fh)
        n = data.n_products
        masks = sorted({int(m) for m in
                        ((data.x[:, :n] > 0).astype(np.int64)
                         @ (1 << np.arange(n, dtype=np.int64)))})
        family = [Assortment(n, m) for m in masks]
        target = Assortment.from_products(
            n, [int(v) for v in args.target.split(",") if v.strip()])
        params = ForestParams(n_trees=args.trees, leaf_min=1, seed=args.seed)
        f = forest_mod.fit(data, params)
        report = analysis.pnn_coleaf_frequency(f, target, family).as_dict()
    else:
        raise ValueError(f"unknown study {args.study!r}")
    _emit(report, args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="choiceforest",
                                description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (env: CHOICEFOREST_THREADS)")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="train a forest from a data CSV")
    f.add_argument("--input", required=True)
    f.add_argument("--format", default="transactions",
                   choices=["transactions", "aggregated", "prices"])
    f.add_argument("--link", default="exp", choices=["exp", "arctan"])
    f.add_argument("--products", type=int, default=None,
                   help="number of product columns when the CSV carries "
                        "appended customer features (default: all columns)")
    f.add_argument("--output", required=True, help="model JSON path")
    _add_forest_flags(f)
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", help="choice probabilities from a model file")
    pr.add_argument("--model", required=True)
    pr.add_argument("--assortment", default="",
                    help="comma-separated offered products, e.g. '1,3,4'")
    pr.add_argument("--prices", default=None,
                    help="comma-separated prices, 'inf' for absent products")
    pr.add_argument("--features", default=None,
                    help="comma-separated customer features in [0,1]")
    pr.add_argument("--link", default="exp", choices=["exp", "arctan"])
    pr.add_argument("--output", default=None)
    pr.set_defaults(func=cmd_predict)

    im = sub.add_parser("importance", help="MDI product importance")
    im.add_argument("--model", required=True)
    im.add_argument("--input", required=True, help="the training data CSV")
    im.add_argument("--format", default="transactions",
                    choices=["transactions", "aggregated", "prices"])
    im.add_argument("--link", default="exp", choices=["exp", "arctan"])
    im.add_argument("--output", default=None)
    im.set_defaults(func=cmd_importance)

    si = sub.add_parser("simulate", help="synthesize transactions from a model spec")
    si.add_argument("--model-spec", required=True, help="generator JSON spec")
    si.add_argument("--n-transactions", type=int, required=True)
    si.add_argument("--pool-size", type=int, default=None)
    si.add_argument("--bernoulli", type=float, default=None,
                    help="per-product inclusion probability")
    si.add_argument("--seed", type=int, default=0)
    si.add_argument("--output", required=True)
    si.set_defaults(func=cmd_simulate)

    be = sub.add_parser("benchmark", help="run an experiment config")
    be.add_argument("--config", required=True, help="experiment JSON config")
    be.add_argument("--output", default=None)
    be.add_argument("--csv", default=None,
                    help="benchmark table CSV (rows = T, columns = estimator x pool)")
    be.add_argument("--timings", action="store_true",
                    help="include wall-clock seconds in the report")
    be.set_defaults(func=cmd_benchmark)

    an = sub.add_parser("analyze", help="pnn / distance / ranking studies")
    an.add_argument("--study", required=True,
                    choices=["pnn", "distance", "ranking"])
    an.add_argument("--n", type=int, default=10)
    an.add_argument("--m", type=int, default=103)
    an.add_argument("--reps", type=int, default=100000)
    an.add_argument("--mode", default="mean-largest-binary",
                    choices=["mean-largest-binary", "all-pnn-max"])
    an.add_argument("--t", type=int, default=10000)
    an.add_argument("--scheme", default="uniform",
                    choices=["uniform", "dirichlet", "per-product"])
    an.add_argument("--datasets", type=int, default=100)
    an.add_argument("--trees", type=int, default=10)
    an.add_argument("--input", default=None, help="training CSV (pnn study)")
    an.add_argument("--target", default="", help="target assortment (pnn study)")
    an.add_argument("--seed", type=int, default=0)
    an.add_argument("--output", default=None)
    an.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except Exception as exc:
        return _fail(f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
