"""Iterative selection by screening partial correlations of increasing order.

Stage 1 is the marginal two-step screen. At stage m >= 2 a feature stays
active only if the two-step test keeps it for every conditioning set of
size m - 1 drawn from the remaining active features. The statistic for a
conditioned pair is the self-normalized statistic of the residuals after
regressing both the feature and the response on the conditioning set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from itertools import combinations

import numpy as np

from .errors import (BudgetExceededError, DegenerateColumnError, InputError,
                     SingularDesignError)
from .screening import MultiStudy, ScreeningConfig, Study, tsa_sis
from .stats_core import TStat, chi2_quantile, normal_quantile, self_normalized_t

__all__ = [
    "StopReason",
    "MultiPcState",
    "residualize",
    "partial_t",
    "multi_pc_run",
]

DEFAULT_BUDGET = 10 ** 6


class StopReason(Enum):
    REACHED_MREACH = "reached_mreach"
    MAX_ORDER = "max_order"
    FIXPOINT = "fixpoint"


@dataclass(frozen=True)
class MultiPcState:
    """Nested active sets produced by the staged procedure."""

    stage: int
    active_sets: tuple[tuple[int, ...], ...]
    stopped_reason: StopReason

    @property
    def active(self) -> tuple[int, ...]:
        return self.active_sets[-1]


def residualize(x: np.ndarray, cond, target) -> np.ndarray:
    """Residual of ``target`` after least-squares projection onto the
    intercept and the columns of ``x`` indexed by ``cond``.

    Raises :class:`SingularDesignError` when the conditioning columns are
    rank deficient (up to the least-squares tolerance).
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(target, dtype=float)
    if x.ndim != 2 or t.ndim != 1 or x.shape[0] != t.shape[0]:
        raise InputError("x must be (n, p) and target a length-n vector")
    n = x.shape[0]
    cond = tuple(sorted(int(c) for c in cond))
    if len(set(cond)) != len(cond):
        raise InputError(f"conditioning set has repeated indices: {cond}")
    if any(c < 0 or c >= x.shape[1] for c in cond):
        raise InputError(f"conditioning index out of range: {cond}")
    if len(cond) >= n - 2:
        raise InputError(
            f"conditioning set of size {len(cond)} too large for n={n}")
    design = np.column_stack([np.ones(n)] + [x[:, c] for c in cond])
    coef, _, rank, _ = np.linalg.lstsq(design, t, rcond=None)
    if rank < design.shape[1]:
        raise SingularDesignError(
            f"conditioning set {cond} is rank deficient (rank {rank} "
            f"of {design.shape[1]} including the intercept)")
    return t - design @ coef


def partial_t(study: Study, j: int, cond, adjust_n: bool = False,
              _resid_y: np.ndarray | None = None) -> TStat:
    """Self-normalized statistic of feature ``j`` against the response after
    both are residualized on the conditioning set.

    An empty conditioning set reproduces the marginal statistic exactly
    (the statistic centers internally, so no residualization is applied).
    With ``adjust_n`` the sqrt(n) factor is replaced by sqrt(n - |S| - 1)
    and the stored sample count is the adjusted one.
    """
    cond = tuple(sorted(int(c) for c in cond))
    j = int(j)
    if j in cond:
        raise InputError(f"feature {j} cannot condition on itself")
    n = study.n
    if len(cond) > n - 3:
        raise InputError(
            f"conditioning set of size {len(cond)} too large for n={n}")
    if not cond:
        return self_normalized_t(study.x[:, j], study.y, label=j)
    rx = residualize(study.x, cond, study.x[:, j])
    ry = residualize(study.x, cond, study.y) if _resid_y is None else _resid_y
    for resid, raw, what in ((rx, study.x[:, j], f"feature {j}"),
                             (ry, study.y, "response")):
        if _variance(resid) <= 1e-24 * max(_variance(raw), 1e-300):
            raise DegenerateColumnError(
                f"{what} lies in the span of conditioning set {cond} "
                f"(study {study.id!r})")
    stat = self_normalized_t(rx, ry, label=j)
    if adjust_n:
        n_eff = n - len(cond) - 1
        scale = math.sqrt(n_eff / n)
        stat = TStat(value=stat.value * scale, sigma_hat=stat.sigma_hat,
                     theta_hat=stat.theta_hat, n=n_eff)
    return stat


def _variance(v: np.ndarray) -> float:
    c = v - v.mean()
    return float(c @ c) / v.shape[0]


def _keeps_feature(data: MultiStudy, j: int, cond: tuple[int, ...],
                   threshold: float, chi2_thresholds: list[float],
                   adjust_n: bool, y_resid: dict) -> bool:
    """Two-step rule for one feature given one conditioning set."""
    t_vals = []
    for ki, study in enumerate(data.studies):
        key = (ki, cond)
        if key not in y_resid:
            y_resid[key] = residualize(study.x, cond, study.y)
        t_vals.append(partial_t(study, j, cond, adjust_n=adjust_n,
                                _resid_y=y_resid[key]).value)
    in_l = [t for t in t_vals if abs(t) <= threshold]
    if not in_l:
        return True
    l_stat = math.fsum(t * t for t in in_l)
    return l_stat > chi2_thresholds[len(in_l)]


def multi_pc_run(data: MultiStudy, config: ScreeningConfig, max_order: int,
                 budget: int = DEFAULT_BUDGET,
                 adjust_n: bool = False) -> MultiPcState:
    """Run the staged procedure up to ``max_order`` conditioning stages.

    The procedure stops at the first stage m with at most m active
    features, at ``max_order``, or when a stage leaves the active set
    unchanged, whichever comes first. Conditioning sets are enumerated in
    lexicographic index order with an early exit at the first set that
    drops a feature; since a feature survives only by passing every set,
    the result does not depend on that order.
    """
    if max_order < 1:
        raise InputError(f"max_order must be >= 1, got {max_order}")
    if budget < 1:
        raise InputError(f"budget must be positive, got {budget}")

    stage1 = tsa_sis(data, config)
    active = list(stage1.kept)
    active_sets = [tuple(active)]
    if len(active) <= 1:
        return MultiPcState(stage=1, active_sets=tuple(active_sets),
                            stopped_reason=StopReason.REACHED_MREACH)
    if max_order == 1:
        return MultiPcState(stage=1, active_sets=tuple(active_sets),
                            stopped_reason=StopReason.MAX_ORDER)

    threshold = normal_quantile(1.0 - config.alpha1 / 2.0)
    max_k = data.k
    chi2_thresholds = [math.inf] + [chi2_quantile(1.0 - config.alpha2, df)
                                    for df in range(1, max_k + 1)]

    min_n = min(s.n for s in data.studies)
    stage = 1
    reason = StopReason.MAX_ORDER
    for m in range(2, max_order + 1):
        order = m - 1
        if order > min_n - 3:
            raise InputError(
                f"stage {m} needs conditioning sets of size {order}, too "
                f"large for the smallest study (n={min_n})")
        pairs = len(active) * math.comb(len(active) - 1, order)
        if pairs > budget:
            raise BudgetExceededError(
                f"stage {m} would test {pairs} (feature, set) pairs, "
                f"exceeding the budget of {budget}")
        y_resid: dict = {}
        survivors = []
        for j in active:
            others = [q for q in active if q != j]
            keep = True
            for cond in combinations(others, order):
                if not _keeps_feature(data, j, cond, threshold,
                                      chi2_thresholds, adjust_n, y_resid):
                    keep = False
                    break
            if keep:
                survivors.append(j)
        previous = active
        active = survivors
        active_sets.append(tuple(active))
        stage = m
        if len(active) <= m:
            reason = StopReason.REACHED_MREACH
            break
        if active == previous:
            reason = StopReason.FIXPOINT
            break
    return MultiPcState(stage=stage, active_sets=tuple(active_sets),
                        stopped_reason=reason)
