"""CSV readers/writers for the three data formats.

Transactions: header ``chosen,x1,...,xd`` with x entries in [0,1].
Aggregated records: ``closure_1..closure_N,book_0..book_N``.
Prices: ``chosen,price_1..price_N``; the literal token ``inf`` marks an
absent product.
"""

from __future__ import annotations

import csv
import math
from typing import Sequence, TextIO

import numpy as np

from .core import Dataset
from .transforms import AggregatedRecord


class CsvFormatError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _open_rows(fh: TextIO):
    return csv.reader(fh)


def read_transactions(fh: TextIO, n_products: int | None = None) -> Dataset:
    rows = _open_rows(fh)
    header = next(rows, None)
    if not header or header[0] != "chosen":
        raise CsvFormatError(1, "expected header 'chosen,x1,...,xd'")
    d = len(header) - 1
    if d < 1:
        raise CsvFormatError(1, "no feature columns")
    xs, chosen = [], []
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != d + 1:
            raise CsvFormatError(lineno, f"expected {d + 1} fields, got {len(row)}")
        try:
            c = int(row[0])
            x = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise CsvFormatError(lineno, str(exc)) from exc
        if any(v < 0 or v > 1 for v in x):
            raise CsvFormatError(lineno, "feature values must lie in [0, 1]")
        n = n_products if n_products is not None else d
        if not 0 <= c <= n:
            raise CsvFormatError(lineno, f"chosen item {c} outside 0..{n}")
        xs.append(x)
        chosen.append(c)
    if not xs:
        raise CsvFormatError(2, "no data rows")
    n = n_products if n_products is not None else d
    return Dataset(np.array(xs), np.array(chosen, dtype=np.int64), n, d - n)


def write_transactions(fh: TextIO, data: Dataset) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["chosen"] + [f"x{j+1}" for j in range(data.dimension)])
    for c, row in zip(data.chosen, data.x):
        w.writerow([int(c)] + [format(v, "g") for v in row])


def read_aggregated(fh: TextIO) -> list[AggregatedRecord]:
    rows = _open_rows(fh)
    header = next(rows, None)
    if not header or not header[0].startswith("closure_"):
        raise CsvFormatError(1, "expected header 'closure_1..closure_N,book_0..book_N'")
    n = sum(1 for h in header if h.startswith("closure_"))
    if len(header) != 2 * n + 1:
        raise CsvFormatError(1, f"expected {n} closure and {n + 1} booking columns")
    records = []
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != 2 * n + 1:
            raise CsvFormatError(lineno, f"expected {2 * n + 1} fields, got {len(row)}")
        try:
            closure = [float(v) for v in row[:n]]
            bookings = [int(v) for v in row[n:]]
        except ValueError as exc:
            raise CsvFormatError(lineno, str(exc)) from exc
        try:
            records.append(AggregatedRecord(np.array(closure), np.array(bookings)))
        except ValueError as exc:
            raise CsvFormatError(lineno, str(exc)) from exc
    if not records:
        raise CsvFormatError(2, "no data rows")
    return records


def write_aggregated(fh: TextIO, records: Sequence[AggregatedRecord]) -> None:
    n = records[0].n_products
    w = csv.writer(fh, lineterminator="\n")
    w.writerow([f"closure_{j+1}" for j in range(n)] + [f"book_{i}" for i in range(n + 1)])
    for r in records:
        w.writerow([format(v, "g") for v in r.closure] + [int(b) for b in r.bookings])


def read_prices(fh: TextIO) -> tuple[np.ndarray, np.ndarray]:
    """Returns (prices, chosen); absent products carry +inf."""
    rows = _open_rows(fh)
    header = next(rows, None)
    if not header or header[0] != "chosen":
        raise CsvFormatError(1, "expected header 'chosen,price_1..price_N'")
    n = len(header) - 1
    prices, chosen = [], []
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != n + 1:
            raise CsvFormatError(lineno, f"expected {n + 1} fields, got {len(row)}")
        try:
            c = int(row[0])
            p = [math.inf if v.strip() == "inf" else float(v) for v in row[1:]]
        except ValueError as exc:
            raise CsvFormatError(lineno, str(exc)) from exc
        if any(v < 0 for v in p):
            raise CsvFormatError(lineno, "prices must be non-negative")
        if c > 0 and math.isinf(p[c - 1]):
            raise CsvFormatError(lineno, f"chosen product {c} has price inf")
        prices.append(p)
        chosen.append(c)
    if not prices:
        raise CsvFormatError(2, "no data rows")
    return np.array(prices), np.array(chosen, dtype=np.int64)


def write_prices(fh: TextIO, prices: np.ndarray, chosen: np.ndarray) -> None:
    n = prices.shape[1]
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["chosen"] + [f"price_{j+1}" for j in range(n)])
    for c, row in zip(chosen, prices):
        w.writerow([int(c)] + ["inf" if math.isinf(v) else format(v, "g")
                               for v in row])
