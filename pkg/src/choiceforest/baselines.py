"""Comparator estimators: MNL maximum likelihood, Markov-chain EM,
independent demand, and linear demand for price data."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
import numpy as np
from scipy.optimize import minimize

from .core import Assortment, ChoiceDistribution, Dataset, sample_from_model
from .generators import MarkovModel, MnlModel

_UTILITY_BOUND = 30.0


class BoundaryUtilityWarning(UserWarning):
    """A product was never purchased; its utility is clamped at the bound."""


def _group_binary(data: Dataset):
    """Aggregate binary-assortment data to (mask, per-item counts)."""
    bits = (data.x[:, :data.n_products] > 0).astype(np.int64)
    masks = bits @ (1 << np.arange(data.n_products, dtype=np.int64))
    groups: dict[int, np.ndarray] = {}
    for mask, chosen in zip(masks, data.chosen):
        row = groups.setdefault(int(mask), np.zeros(data.n_products + 1, np.int64))
        row[chosen] += 1
    return groups


def fit_mnl_mle(data: Dataset, gtol: float = 1e-6) -> MnlModel:
    """Maximum-likelihood MNL utilities on binary assortment data.

    The outside utility is fixed at zero; the log-likelihood is concave, so a
    quasi-Newton search from the all-zero start with the exact gradient
    converges to the global optimum.  A product that is never purchased has
    its utility clamped at the boundary (with a warning).
    """
    if data.n_transactions == 0:
        raise ValueError("dataset is empty")
    N = data.n_products
    groups = _group_binary(data)
    masks = np.array(sorted(groups), dtype=np.int64)
    counts = np.stack([groups[int(m)] for m in masks]).astype(float)   # (G, N+1)
    offered = ((masks[:, None] >> np.arange(N)[None, :]) & 1).astype(float)
    item_counts = counts[:, 1:].sum(axis=0)
    never_bought = np.flatnonzero(item_counts == 0)

    def negll_and_grad(u):
        ev = np.exp(u)
        denom = 1.0 + offered @ ev
        ll = float(counts[:, 1:].sum(axis=0) @ u) - float(counts.sum(axis=1) @ np.log(denom))
        probs = offered * ev[None, :] / denom[:, None]
        grad = counts[:, 1:].sum(axis=0) - counts.sum(axis=1) @ probs
        return -ll, -grad

    res = minimize(negll_and_grad, np.zeros(N), jac=True, method="L-BFGS-B",
                   bounds=[(-_UTILITY_BOUND, _UTILITY_BOUND)] * N,
                   options={"maxiter": 1000, "ftol": 1e-14, "gtol": gtol})
    u = res.x
    if len(never_bought):
        u[never_bought] = -_UTILITY_BOUND
        warnings.warn(
            f"products never purchased: {[int(j)+1 for j in never_bought]}; "
            "utilities clamped at the boundary", BoundaryUtilityWarning)
    return MnlModel(u)


def mnl_log_likelihood(model: MnlModel, data: Dataset) -> float:
    groups = _group_binary(data)
    ll = 0.0
    for mask, row in groups.items():
        probs = model.choice_probabilities(Assortment(data.n_products, mask)).probs
        for i, c in enumerate(row):
            if c:
                ll += c * np.log(probs[i])
    return float(ll)


def mnl_gradient(model: MnlModel, data: Dataset) -> np.ndarray:
    """Exact log-likelihood gradient in the utilities (for testing)."""
    N = data.n_products
    groups = _group_binary(data)
    grad = np.zeros(N)
    for mask, row in groups.items():
        probs = model.choice_probabilities(Assortment(N, mask)).probs
        n = row.sum()
        grad += row[1:] - n * probs[1:]
    return grad


@dataclass(frozen=True)
class PriceMnlModel:
    """MNL on price data: attraction exp(u_i - price_i), outside attraction 1;
    products priced at +inf are effectively absent."""

    utilities: np.ndarray

    @property
    def n_products(self) -> int:
        return len(self.utilities)

    def price_probabilities(self, prices: np.ndarray) -> ChoiceDistribution:
        prices = np.asarray(prices, dtype=float)
        v = np.where(np.isfinite(prices), np.exp(self.utilities - prices), 0.0)
        denom = 1.0 + v.sum()
        return ChoiceDistribution(np.concatenate([[1.0 / denom], v / denom]))


def fit_mnl_prices(prices: np.ndarray, chosen: np.ndarray,
                   gtol: float = 1e-6) -> PriceMnlModel:
    """MLE of price-offset MNL utilities from (price vector, choice) rows."""
    prices = np.asarray(prices, dtype=float)
    chosen = np.asarray(chosen, dtype=np.int64)
    T, N = prices.shape
    finite = np.isfinite(prices)

    def negll_and_grad(u):
        logits = np.where(finite, u[None, :] - prices, -np.inf)
        mx = np.maximum(logits.max(axis=1), 0.0)
        w = np.exp(logits - mx[:, None])
        denom = np.exp(-mx) + w.sum(axis=1)
        probs = w / denom[:, None]
        picked = np.where(chosen > 0, logits[np.arange(T), np.maximum(chosen - 1, 0)], 0.0)
        ll = float(picked.sum() - (np.log(denom) + mx).sum())
        ind = np.zeros((T, N))
        ind[chosen > 0, chosen[chosen > 0] - 1] = 1.0
        grad = (ind - probs).sum(axis=0)
        return -ll, -grad

    res = minimize(negll_and_grad, np.zeros(N), jac=True, method="L-BFGS-B",
                   bounds=[(-_UTILITY_BOUND, _UTILITY_BOUND)] * N,
                   options={"maxiter": 1000, "ftol": 1e-14, "gtol": gtol})
    return PriceMnlModel(res.x)


# ---------------------------------------------------------------------------
# Markov chain EM
# ---------------------------------------------------------------------------

def fit_markov_em(data: Dataset, tol: float = 1e-7, max_iter: int = 1000
                  ) -> tuple[MarkovModel, list[float]]:
    """EM estimation of the Markov chain choice model.

    E-step: for every observed (assortment, choice), the expected first-choice
    state and expected transition counts of the chain conditioned on absorbing
    at the chosen item.  M-step: renormalize the expected counts.  Stops when
    the relative log-likelihood improvement drops below ``tol``.  Returns the
    model and the log-likelihood trace (non-decreasing by EM monotonicity).
    """
    if data.n_transactions == 0:
        raise ValueError("dataset is empty")
    N = data.n_products
    n1 = N + 1
    groups = _group_binary(data)
    T = data.n_transactions

    lam = np.full(n1, 1.0 / n1)
    rho = np.zeros((n1, n1))
    rho[0, 0] = 1.0
    for j in range(1, n1):
        rho[j] = 1.0 / N
        rho[j, j] = 0.0

    trace: list[float] = []
    for _ in range(max_iter):
        start_counts = np.zeros(n1)
        trans_counts = np.zeros((n1, n1))
        ll = 0.0
        for mask, row in groups.items():
            s = Assortment(N, mask)
            absorbed = np.zeros(n1, dtype=bool)
            absorbed[0] = True
            for j in s.products():
                absorbed[j] = True
            A = np.flatnonzero(absorbed)
            U = np.flatnonzero(~absorbed)
            if len(U):
                W = np.linalg.inv(np.eye(len(U)) - rho[np.ix_(U, U)])
                theta = np.maximum(W @ rho[np.ix_(U, A)], 0.0)   # (|U|, |A|)
            else:
                W = np.zeros((0, 0))
                theta = np.zeros((0, len(A)))
            p_choice = lam[A] + (lam[U] @ theta if len(U) else 0.0)

            for ai, item in enumerate(A):
                c = float(row[item])
                if c == 0.0:
                    continue
                pc = max(p_choice[ai], 1e-300)
                ll += c * np.log(pc)
                start_counts[item] += c * lam[item] / pc
                if len(U) == 0:
                    continue
                th = theta[:, ai]
                reach = th > 0
                start_counts[U] += c * lam[U] * th / pc
                # expected visit mass q_j = (c/pc) * [lam_U W]_j restricted to
                # states that can reach the chosen item; clip the solver noise
                q = np.maximum((c / pc) * ((lam[U] * reach) @ W), 0.0)
                trans_counts[np.ix_(U, U)] += rho[np.ix_(U, U)] * np.outer(q, th)
                trans_counts[U, item] += q * rho[U, item]
        trace.append(ll)
        lam = np.maximum(start_counts, 0.0)
        lam /= lam.sum()
        row_sums = trans_counts.sum(axis=1)
        for j in range(1, n1):
            if row_sums[j] > 0:
                row = np.maximum(trans_counts[j], 0.0)
                rho[j] = row / row.sum()
        if len(trace) >= 2 and trace[-1] - trace[-2] < tol * abs(trace[-2]):
            break
    return MarkovModel(lam, rho), trace


# ---------------------------------------------------------------------------
# independent demand
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IndependentDemandModel:
    """Per-product purchase frequency among transactions where the product was
    offered; no substitution.  Prediction renormalizes only when the offered
    frequencies exceed one."""

    p_hat: np.ndarray

    @property
    def n_products(self) -> int:
        return len(self.p_hat)

    def choice_probabilities(self, s: Assortment) -> ChoiceDistribution:
        probs = np.zeros(self.n_products + 1)
        for j in s.products():
            probs[j] = self.p_hat[j - 1]
        total = probs.sum()
        if total > 1.0:
            probs /= total
            probs[0] = 0.0
        else:
            probs[0] = 1.0 - total
        return ChoiceDistribution(probs)

    def sample(self, s: Assortment, rng: np.random.Generator) -> int:
        return sample_from_model(self, s, rng)


def fit_independent(data: Dataset) -> IndependentDemandModel:
    N = data.n_products
    offered = data.x[:, :N] > 0
    bought = np.zeros(N)
    for j in range(N):
        bought[j] = np.sum(data.chosen == j + 1)
    shown = offered.sum(axis=0)
    with np.errstate(invalid="ignore"):
        p_hat = np.where(shown > 0, bought / np.maximum(shown, 1), 0.0)
    return IndependentDemandModel(p_hat)


# ---------------------------------------------------------------------------
# linear demand
# ---------------------------------------------------------------------------

class CollinearDesignError(ValueError):
    pass


@dataclass(frozen=True)
class LinearDemandModel:
    """p(i | prices) = max(0, a_i + b_i . prices); the no-purchase probability
    is the clipped remainder, renormalizing when products alone exceed one."""

    intercepts: np.ndarray       # (N,)
    slopes: np.ndarray           # (N, N)

    @property
    def n_products(self) -> int:
        return len(self.intercepts)

    def price_probabilities(self, prices: np.ndarray) -> ChoiceDistribution:
        prices = np.asarray(prices, dtype=float)
        raw = np.maximum(self.intercepts + self.slopes @ prices, 0.0)
        total = raw.sum()
        if total > 1.0:
            raw = raw / total
            p0 = 0.0
        else:
            p0 = 1.0 - total
        return ChoiceDistribution(np.concatenate([[p0], raw]))


def fit_linear_demand(prices: np.ndarray, chosen: np.ndarray) -> LinearDemandModel:
    """Per-product OLS of the purchase indicator on (1, prices)."""
    prices = np.asarray(prices, dtype=float)
    chosen = np.asarray(chosen, dtype=np.int64)
    T, N = prices.shape
    design = np.column_stack([np.ones(T), prices])
    rank = np.linalg.matrix_rank(design)
    if rank < N + 1:
        dead: list[str] = []
        if T >= N + 1:
            r = np.linalg.qr(design, mode="r")
            dead = [("intercept" if j == 0 else f"price_{j}")
                    for j in range(N + 1) if abs(r[j, j]) < 1e-10]
        raise CollinearDesignError(
            f"price design is rank-deficient (rank {rank} < {N + 1}); "
            f"collinear columns: {dead or 'undetermined'}")
    targets = (chosen[:, None] == np.arange(1, N + 1)[None, :]).astype(float)
    coef, *_ = np.linalg.lstsq(design, targets, rcond=None)
    return LinearDemandModel(coef[0], coef[1:].T)
