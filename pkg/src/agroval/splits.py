"""Three-way partition: held-out validation years, a random test sample of
(region, year) cells, and training cells with expanding-window CV folds."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigInvalid, EmptyPool, LeakageDetected, TooFewYears, YearNotInPanel
from .ingest import YieldPanel
from .targets import detrend, fit_national_trend, national_means

DEFAULT_VALIDATION_YEARS = (2004, 2018)
DEFAULT_POOL_YEARS = (2000, 2022)


def select_validation_years(y: YieldPanel, mode="auto", pool_years=None) -> tuple:
    """Fixed list, or ``"auto"``: the years of highest and lowest national mean
    detrended yield (earliest year wins ties)."""
    available = set(y.years)
    if mode != "auto":
        years = tuple(sorted(int(v) for v in mode))
        missing = [v for v in years if v not in available]
        if missing:
            raise YearNotInPanel(f"validation years {missing} not in the yield panel")
        return years
    if len(available) < 3:
        raise TooFewYears("auto validation-year selection needs >= 3 years")
    det = detrend(y, fit_national_trend(y))
    years, means = national_means(det, pool_years)
    if len(years) < 3:
        raise TooFewYears("auto validation-year selection needs >= 3 years in the pool")
    # means within tol of the extreme count as ties; the earliest tied year wins
    tol = 1e-9 * max(1.0, float(np.max(np.abs(means))))
    hi = int(years[np.flatnonzero(means >= means.max() - tol)[0]])
    lo = int(years[np.flatnonzero(means <= means.min() + tol)[0]])
    if hi == lo:
        lo = int(years[1]) if hi == int(years[0]) else int(years[0])
    return tuple(sorted({hi, lo}))


@dataclass(frozen=True)
class SplitPlan:
    validation_years: tuple
    pool_years: tuple
    test_cells: frozenset
    train_cells: frozenset
    seed: int
    test_frac: float = 0.10

    def check(self) -> None:
        """Assert the no-leakage invariants; raises :class:`LeakageDetected`."""
        if self.test_cells & self.train_cells:
            raise LeakageDetected("train and test cells overlap")
        bad = [c for c in self.test_cells | self.train_cells if c[1] in set(self.validation_years)]
        if bad:
            raise LeakageDetected(f"validation-year cell {bad[0]} in train/test")
        lo, hi = self.pool_years
        outside = [c for c in self.test_cells | self.train_cells if not lo <= c[1] <= hi]
        if outside:
            raise LeakageDetected(f"cell {outside[0]} outside pool years")

    @property
    def train_years(self) -> tuple:
        return tuple(sorted({y for _, y in self.train_cells}))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "test_frac": self.test_frac,
            "validation_years": list(self.validation_years),
            "pool_years": list(self.pool_years),
            "test": [list(c) for c in sorted(self.test_cells)],
            "train": [list(c) for c in sorted(self.train_cells)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitPlan":
        plan = cls(
            validation_years=tuple(d["validation_years"]),
            pool_years=tuple(d["pool_years"]),
            test_cells=frozenset((str(r), int(y)) for r, y in d["test"]),
            train_cells=frozenset((str(r), int(y)) for r, y in d["train"]),
            seed=int(d["seed"]),
            test_frac=float(d.get("test_frac", 0.10)),
        )
        plan.check()
        return plan

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SplitPlan":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def make_split_plan(cells, validation_years, pool_years=DEFAULT_POOL_YEARS, test_frac: float = 0.10,
                    seed: int = 0) -> SplitPlan:
    """Sample ``round(test_frac * |pool|)`` test cells uniformly from the pool.

    The pool is every available cell in ``pool_years`` outside the validation
    years; the rest of the pool is training data.
    """
    if not 0 < test_frac < 1:
        raise ConfigInvalid("test_frac must lie strictly between 0 and 1")
    cells = sorted({(str(r), int(y)) for r, y in cells})
    available_years = {y for _, y in cells}
    missing = [v for v in validation_years if v not in available_years]
    if missing:
        raise YearNotInPanel(f"validation years {missing} have no cells")
    val = set(int(v) for v in validation_years)
    lo, hi = int(pool_years[0]), int(pool_years[1])
    pool = [c for c in cells if lo <= c[1] <= hi and c[1] not in val]
    if not pool:
        raise EmptyPool(f"no cells in pool years {lo}-{hi} outside validation years")
    n_test = int(round(test_frac * len(pool)))
    order = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF).permutation(len(pool))
    test = frozenset(pool[i] for i in order[:n_test])
    train = frozenset(pool[i] for i in order[n_test:])
    plan = SplitPlan(tuple(sorted(val)), (lo, hi), test, train, int(seed), float(test_frac))
    plan.check()
    return plan


def expanding_window_folds(train_years, n_folds: int = 3, step: int = 1) -> list[tuple]:
    """Fold i trains on the first ``initial + i*step`` years and tests on the
    next ``step`` years; the test blocks tile the last ``n_folds*step`` years."""
    years = sorted(set(int(y) for y in train_years))
    if n_folds < 1 or step < 1:
        raise ConfigInvalid("n_folds and step must be >= 1")
    initial = len(years) - n_folds * step
    if initial < 1:
        raise TooFewYears(f"{len(years)} years cannot hold {n_folds} folds of {step} year(s)")
    folds = []
    for i in range(n_folds):
        cut = initial + i * step
        folds.append((tuple(years[:cut]), tuple(years[cut:cut + step])))
    return folds
