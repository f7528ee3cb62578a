"""Adapters for nonstandard training data: aggregated booking records,
price vectors via link functions, and customer-feature augmentation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import Dataset


@dataclass(frozen=True)
class AggregatedRecord:
    """One reporting window: per-product closure fractions and bookings.

    ``closure[j-1]`` is the fraction of the window during which product j was
    unavailable; ``bookings[i]`` counts purchases of item i (index 0 = no
    purchase) during the window.
    """

    closure: np.ndarray
    bookings: np.ndarray

    def __post_init__(self):
        closure = np.asarray(self.closure, dtype=float)
        bookings = np.asarray(self.bookings, dtype=np.int64)
        object.__setattr__(self, "closure", closure)
        object.__setattr__(self, "bookings", bookings)
        if np.any(closure < 0) or np.any(closure > 1):
            raise ValueError("closure fractions must lie in [0, 1]")
        if np.any(bookings < 0):
            raise ValueError("bookings must be non-negative")
        if len(bookings) != len(closure) + 1:
            raise ValueError("bookings must have N+1 entries (item 0 first)")

    @property
    def n_products(self) -> int:
        return len(self.closure)

    @property
    def total(self) -> int:
        return int(self.bookings.sum())


def expand_aggregated(records: Sequence[AggregatedRecord]) -> Dataset:
    """Per record, emit one transaction per booking, all sharing the average
    offer intensity x = 1 - closure; choices are emitted in ascending item
    order, record order preserved."""
    if not records:
        raise ValueError("no aggregated records")
    n = records[0].n_products
    rows = []
    chosen = []
    for rec in records:
        if rec.n_products != n:
            raise ValueError("records have inconsistent product counts")
        x = 1.0 - rec.closure
        for item, count in enumerate(rec.bookings):
            if count and item > 0 and x[item - 1] <= 0:
                raise ValueError(
                    f"bookings for product {item} but it was fully closed")
            for _ in range(int(count)):
                rows.append(x)
                chosen.append(item)
    return Dataset(np.stack(rows), np.array(chosen, dtype=np.int64), n)


def aggregate_dataset(data: Dataset, level: int) -> list[AggregatedRecord]:
    """Group consecutive blocks of ``level`` binary transactions into
    aggregated records (closure = fraction of the block without the product)."""
    if level < 1:
        raise ValueError("aggregation level must be >= 1")
    recs = []
    N = data.n_products
    for start in range(0, data.n_transactions, level):
        block = slice(start, min(start + level, data.n_transactions))
        presence = data.x[block, :N].mean(axis=0)
        bookings = np.bincount(data.chosen[block], minlength=N + 1)
        recs.append(AggregatedRecord(1.0 - presence, bookings))
    return recs


def deaggregate_records(records: Sequence[AggregatedRecord],
                        rng: np.random.Generator) -> Dataset:
    """Reconstruct plausible binary transactions from aggregated records for
    estimators that need them: each booking receives a fresh assortment
    including product j with probability 1 - closure[j].

    The regenerated assortment may omit the booked product; such bookings are
    recorded as no-purchase, the same cleaning rule applied to transactions
    whose purchase falls outside the available set in real booking data.
    """
    n = records[0].n_products
    rows = []
    chosen = []
    for rec in records:
        include_p = 1.0 - rec.closure
        for item, count in enumerate(rec.bookings):
            for _ in range(int(count)):
                bits = (rng.random(n) < include_p).astype(float)
                if item > 0 and bits[item - 1] == 0.0:
                    item = 0
                rows.append(bits)
                chosen.append(item)
    return Dataset(np.stack(rows), np.array(chosen, dtype=np.int64), n)


_LINK_KINDS = ("exp", "arctan")


@dataclass(frozen=True)
class LinkFunction:
    """Strictly decreasing map from price [0, inf] to presence (0, 1] with
    g(0) = 1 and g(inf) = 0."""

    kind: str

    def __post_init__(self):
        if self.kind not in _LINK_KINDS:
            raise ValueError(f"link kind must be one of {_LINK_KINDS}")

    def __call__(self, price: float) -> float:
        if price < 0:
            raise ValueError("prices must be non-negative")
        if math.isinf(price):
            return 0.0
        if self.kind == "exp":
            return math.exp(-price)
        return 1.0 - (2.0 / math.pi) * math.atan(price)


def apply_link(prices: Iterable[float], link: LinkFunction) -> np.ndarray:
    """Map a price vector to presence intensities; +inf means absent and maps
    to exactly 0, a free offered product maps to exactly 1."""
    return np.array([link(float(p)) for p in prices])


def apply_link_matrix(prices: np.ndarray, link: LinkFunction) -> np.ndarray:
    prices = np.asarray(prices, dtype=float)
    if np.any(prices < 0):
        raise ValueError("prices must be non-negative")
    if link.kind == "exp":
        with np.errstate(over="ignore"):
            out = np.exp(-prices)
    else:
        out = 1.0 - (2.0 / np.pi) * np.arctan(prices)
    out[np.isinf(prices)] = 0.0
    return out


def price_dataset(prices: np.ndarray, chosen: np.ndarray,
                  link: LinkFunction) -> Dataset:
    """Transform price rows into a link-valued training dataset."""
    x = apply_link_matrix(prices, link)
    return Dataset(x, np.asarray(chosen, dtype=np.int64), prices.shape[1])


def append_features(x: np.ndarray, features: Sequence[float]) -> np.ndarray:
    """Concatenate normalized customer features after the product entries."""
    f = np.asarray(features, dtype=float)
    if f.size and (np.any(f < 0) or np.any(f > 1)):
        raise ValueError("customer features must lie in [0, 1]")
    return np.concatenate([np.asarray(x, dtype=float), f])


def append_features_dataset(data: Dataset, features: np.ndarray) -> Dataset:
    features = np.atleast_2d(np.asarray(features, dtype=float))
    if features.shape[0] != data.n_transactions:
        raise ValueError("one feature row per transaction required")
    if features.size and (features.min() < 0 or features.max() > 1):
        raise ValueError("customer features must lie in [0, 1]")
    x = np.concatenate([data.x, features], axis=1)
    return Dataset(x, data.chosen, data.n_products,
                   data.n_features + features.shape[1])
