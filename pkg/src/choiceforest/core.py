"""Shared domain types: assortments, transactions, choice distributions.

Conventions used everywhere in the package:

* item 0 is the no-purchase option and is always available;
* products are numbered 1..N and occupy feature-vector entries 0..N-1
  (entry j-1 carries the presence intensity of product j);
* optional customer features occupy entries N..N+M-1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Protocol, runtime_checkable

import numpy as np

PROB_TOL = 1e-9


class DimensionMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Assortment:
    """Subset of the N products, stored as a bit mask (bit i-1 = product i)."""

    n_products: int
    mask: int = 0

    def __post_init__(self):
        if self.n_products < 0:
            raise ValueError("n_products must be non-negative")
        if self.mask < 0 or self.mask >> self.n_products:
            raise ValueError("assortment mask has bits outside 1..N")

    @classmethod
    def from_products(cls, n_products: int, products: Iterable[int]) -> "Assortment":
        mask = 0
        for p in products:
            if not 1 <= p <= n_products:
                raise ValueError(f"product {p} outside 1..{n_products}")
            mask |= 1 << (p - 1)
        return cls(n_products, mask)

    @classmethod
    def full(cls, n_products: int) -> "Assortment":
        return cls(n_products, (1 << n_products) - 1)

    @classmethod
    def from_x(cls, x: np.ndarray, n_products: int | None = None) -> "Assortment":
        x = np.asarray(x, dtype=float)
        n = len(x) if n_products is None else n_products
        mask = 0
        for j in range(n):
            if x[j] > 0:
                mask |= 1 << j
        return cls(n, mask)

    def offers(self, product: int) -> bool:
        if not 1 <= product <= self.n_products:
            return product == 0
        return bool((self.mask >> (product - 1)) & 1)

    def products(self) -> list[int]:
        return [j + 1 for j in range(self.n_products) if (self.mask >> j) & 1]

    @property
    def size(self) -> int:
        return self.mask.bit_count()

    def to_x(self, n_features: int = 0) -> np.ndarray:
        x = np.zeros(self.n_products + n_features)
        for j in range(self.n_products):
            if (self.mask >> j) & 1:
                x[j] = 1.0
        return x

    def __iter__(self) -> Iterator[int]:
        return iter(self.products())

    def __contains__(self, product: int) -> bool:
        return self.offers(product) and product != 0


def symmetric_distance(s1: Assortment, s2: Assortment) -> int:
    """Cardinality of the symmetric difference of two assortments."""
    if s1.n_products != s2.n_products:
        raise DimensionMismatchError(
            f"assortments over {s1.n_products} and {s2.n_products} products")
    return (s1.mask ^ s2.mask).bit_count()


@dataclass(frozen=True)
class Transaction:
    """One observed choice: the item bought and the offer context."""

    chosen: int
    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))


@dataclass(frozen=True)
class ChoiceDistribution:
    """Probability table over items {0..N}; index 0 is no purchase."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=float))

    @classmethod
    def from_dict(cls, n_products: int, table: dict[int, float]) -> "ChoiceDistribution":
        probs = np.zeros(n_products + 1)
        for item, p in table.items():
            probs[item] = p
        return cls(probs)

    @property
    def n_products(self) -> int:
        return len(self.probs) - 1

    def __getitem__(self, item: int) -> float:
        return float(self.probs[item])

    def as_dict(self) -> dict[int, float]:
        return {i: float(p) for i, p in enumerate(self.probs)}

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.choice(len(self.probs), p=self.probs / self.probs.sum()))


@runtime_checkable
class ChoiceModel(Protocol):
    """Anything that maps an assortment to a choice distribution."""

    n_products: int

    def choice_probabilities(self, s: Assortment) -> ChoiceDistribution: ...

    def sample(self, s: Assortment, rng: np.random.Generator) -> int: ...


def sample_from_model(model, s: Assortment, rng: np.random.Generator) -> int:
    return model.choice_probabilities(s).sample(rng)


def validate_distribution(dist: ChoiceDistribution, s: Assortment,
                          tol: float = PROB_TOL) -> bool:
    """True iff ``dist`` is a valid choice distribution on ``s``.

    Checks non-negativity, unit total mass (within ``tol``), and zero mass on
    every product outside the assortment.  Item 0 may carry any mass.
    """
    if dist.n_products != s.n_products:
        raise DimensionMismatchError(
            f"distribution over {dist.n_products} products, assortment over {s.n_products}")
    p = dist.probs
    if np.any(p < 0):
        return False
    if abs(p.sum() - 1.0) > tol:
        return False
    for j in range(1, s.n_products + 1):
        if not s.offers(j) and p[j] != 0.0:
            return False
    return True


def phi_continuity(model, s1: Assortment, s2: Assortment) -> float:
    """Total choice-probability variation between two assortments per unit of
    symmetric-difference distance."""
    d = symmetric_distance(s1, s2)
    if d == 0:
        raise ValueError("assortments are identical; distance is zero")
    if s1.mask == 0 or s2.mask == 0:
        raise ValueError("both assortments must be non-empty")
    p1 = model.choice_probabilities(s1).probs
    p2 = model.choice_probabilities(s2).probs
    return float(np.abs(p1 - p2).sum()) / d


def continuity_constant(model, n_products: int) -> float:
    """Smallest c such that the model is empirically c-continuous, computed
    from all adjacent (distance-1) assortment pairs."""
    best = 0.0
    for mask in range(1, 1 << n_products):
        s1 = Assortment(n_products, mask)
        for j in range(n_products):
            mask2 = mask | (1 << j)
            if mask2 == mask:
                continue
            s2 = Assortment(n_products, mask2)
            best = max(best, phi_continuity(model, s1, s2))
    return best * n_products


@dataclass
class Dataset:
    """Ordered transactions stored densely: feature rows and chosen items."""

    x: np.ndarray
    chosen: np.ndarray
    n_products: int
    n_features: int = 0

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        self.chosen = np.ascontiguousarray(self.chosen, dtype=np.int64)
        if self.x.ndim != 2:
            raise ValueError("x must be a (T, d) array")
        if self.x.shape[0] != self.chosen.shape[0]:
            raise ValueError("x and chosen must have the same length")
        if self.x.shape[1] != self.n_products + self.n_features:
            raise DimensionMismatchError(
                f"x has {self.x.shape[1]} columns, expected "
                f"{self.n_products} products + {self.n_features} features")

    @property
    def n_transactions(self) -> int:
        return self.x.shape[0]

    @property
    def dimension(self) -> int:
        return self.n_products + self.n_features

    @classmethod
    def from_transactions(cls, transactions: Iterable[Transaction],
                          n_products: int, n_features: int = 0) -> "Dataset":
        rows = list(transactions)
        if rows:
            x = np.stack([t.x for t in rows])
            chosen = np.array([t.chosen for t in rows], dtype=np.int64)
        else:
            x = np.zeros((0, n_products + n_features))
            chosen = np.zeros(0, dtype=np.int64)
        return cls(x, chosen, n_products, n_features)

    def transactions(self) -> list[Transaction]:
        return [Transaction(int(c), row) for c, row in zip(self.chosen, self.x)]

    def validate(self) -> None:
        """Raise if any invariant is violated."""
        if np.any(self.x < 0) or np.any(self.x > 1):
            raise ValueError("feature entries must lie in [0, 1]")
        if np.any(self.chosen < 0) or np.any(self.chosen > self.n_products):
            raise ValueError("chosen items must lie in 0..N")
        bought = self.chosen > 0
        if bought.any():
            cols = self.chosen[bought] - 1
            if np.any(self.x[bought, cols] <= 0):
                raise ValueError("a chosen product must be at least partially offered")

    def occurrence_count(self, x_row: np.ndarray) -> int:
        x_row = np.asarray(x_row, dtype=float)
        return int(np.all(self.x == x_row[None, :], axis=1).sum())

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.x[indices], self.chosen[indices],
                       self.n_products, self.n_features)


def all_assortments(n_products: int, include_empty: bool = False) -> list[Assortment]:
    lo = 0 if include_empty else 1
    return [Assortment(n_products, m) for m in range(lo, 1 << n_products)]
