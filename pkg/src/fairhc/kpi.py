"""Evaluation metrics: price of fairness and Gini coefficient of an allocation."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, asdict

import numpy as np

from .errors import ZeroUtilitarianHC


@dataclass(frozen=True)
class KpiReport:
    pof: float
    gini: float
    hc_uti_ref: float  # kW
    hc_fair: float  # kW
    n: int
    mean_allocation: float  # kW

    def to_dict(self) -> dict:
        return asdict(self)


def price_of_fairness(hc_uti: float, hc_fair: float) -> float:
    """Relative hosting capacity lost by enforcing fairness: (uti - fair) / uti.

    A fair solution exceeding the utilitarian reference (solver noise) yields a
    small negative value, reported verbatim with a warning so regressions stay
    visible.
    """
    if hc_uti <= 0:
        raise ZeroUtilitarianHC("utilitarian reference HC must be positive")
    pof = (hc_uti - hc_fair) / hc_uti
    if pof < 0:
        warnings.warn(f"fair HC exceeds utilitarian reference (PoF = {pof:.3e})",
                      stacklevel=2)
    return pof


def gini(allocation) -> float:
    """Normalized mean absolute pairwise difference over all ordered pairs.

    0 is perfect equality; the all-zero vector returns 0 by convention (with a
    warning) since no nonzero reference exists.
    """
    p = np.asarray(allocation, dtype=float)
    if p.ndim != 1 or len(p) == 0:
        raise ValueError("allocation must be a non-empty 1-d vector")
    if np.any(p < 0):
        raise ValueError("allocation must be non-negative")
    mean = p.mean()
    if mean == 0.0:
        warnings.warn("all-zero allocation: Gini defined as 0", stacklevel=2)
        return 0.0
    n = len(p)
    total = np.abs(p[:, None] - p[None, :]).sum()
    return float(total / (2.0 * mean * n * n))


def kpi_report(hc_uti: float, allocation_fair) -> KpiReport:
    """Bundle both metrics for one fair solution against a utilitarian reference (kW)."""
    p = np.asarray(allocation_fair, dtype=float)
    hc_fair = float(p.sum())
    return KpiReport(
        pof=price_of_fairness(hc_uti, hc_fair),
        gini=gini(p),
        hc_uti_ref=hc_uti,
        hc_fair=hc_fair,
        n=len(p),
        mean_allocation=float(p.mean()),
    )
