"""Marginal screening of features across multiple studies.

Three screeners operate on a :class:`MultiStudy`:

* two-step aggregation: per-study self-normalized tests, then a chi-square
  test on the sum of squared statistics from the studies whose individual
  test did not reject;
* one-step: keep a feature only when every study individually rejects;
* min-correlation ranking: order features by the minimum absolute Pearson
  correlation across studies and keep the top d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateColumnError, InputError
from .stats_core import (_exact_sum, _t_from_centered, center_column,
                         chi2_quantile, normal_quantile)

__all__ = [
    "Study",
    "MultiStudy",
    "ScreeningConfig",
    "FeatureScreenRecord",
    "ScreeningResult",
    "Step1Output",
    "compute_t_matrix",
    "compute_correlation_matrix",
    "step1_separate",
    "step1_from_stats",
    "step2_aggregate",
    "tsa_sis",
    "tsa_sis_from_stats",
    "tsa_kept_mask",
    "one_step_sis",
    "min_sis_rank",
    "top_d_selection",
    "default_top_d",
]


@dataclass(frozen=True)
class Study:
    """One study's design matrix (n rows, p feature columns) and response."""

    id: str
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 2:
            raise InputError(f"study {self.id!r}: x must be a 2-d matrix")
        if y.ndim != 1:
            raise InputError(f"study {self.id!r}: y must be a 1-d vector")
        if x.shape[0] != y.shape[0]:
            raise InputError(
                f"study {self.id!r}: x has {x.shape[0]} rows but y has {y.shape[0]}")
        if x.shape[0] < 3:
            raise InputError(f"study {self.id!r}: need at least 3 observations")
        if x.shape[1] < 1:
            raise InputError(f"study {self.id!r}: need at least one feature")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InputError(f"study {self.id!r}: entries must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class MultiStudy:
    """An ordered collection of studies sharing one feature list.

    Per-study sample sizes may differ; the feature count and ordering must
    be identical everywhere.
    """

    studies: tuple[Study, ...]
    feature_names: tuple[str, ...]

    def __post_init__(self):
        studies = tuple(self.studies)
        names = tuple(str(s) for s in self.feature_names)
        if len(studies) < 1:
            raise InputError("need at least one study")
        if len(set(names)) != len(names):
            raise InputError("feature names must be unique")
        p = len(names)
        for s in studies:
            if s.p != p:
                raise InputError(
                    f"study {s.id!r} has {s.p} features, expected {p}")
        if len({s.id for s in studies}) != len(studies):
            raise InputError("study ids must be unique")
        object.__setattr__(self, "studies", studies)
        object.__setattr__(self, "feature_names", names)

    @property
    def p(self) -> int:
        return len(self.feature_names)

    @property
    def k(self) -> int:
        return len(self.studies)


@dataclass(frozen=True)
class ScreeningConfig:
    """Significance levels for the two screening steps."""

    alpha1: float = 1e-4
    alpha2: float = 0.05

    def __post_init__(self):
        for name in ("alpha1", "alpha2"):
            v = getattr(self, name)
            if not (np.ndim(v) == 0 and 0.0 < float(v) < 1.0):
                raise InputError(f"{name} must lie strictly inside (0, 1), got {v!r}")


@dataclass(frozen=True)
class FeatureScreenRecord:
    """Per-feature screening evidence.

    ``l_hat`` holds 0-based study positions whose individual test did not
    reject; ``l_stat`` and ``chi2_threshold`` are None when ``kappa_hat``
    is zero (or for step-1-only screeners).
    """

    feature: int
    t_stats: np.ndarray
    l_hat: tuple[int, ...]
    kappa_hat: int
    l_stat: float | None
    chi2_threshold: float | None
    kept: bool


@dataclass(frozen=True)
class ScreeningResult:
    """Partition of the features into kept and dropped sets."""

    kept: tuple[int, ...]
    dropped: tuple[int, ...]
    records: tuple[FeatureScreenRecord, ...]
    config: ScreeningConfig
    method: str = "tsa"


@dataclass(frozen=True)
class Step1Output:
    """Per-feature first-step evidence: (l_hat, kappa_hat, t_stats) tuples."""

    entries: tuple[tuple[tuple[int, ...], int, np.ndarray], ...]
    alpha1: float
    threshold: float

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]


def compute_t_matrix(data: MultiStudy) -> np.ndarray:
    """Self-normalized statistics for every (feature, study) pair, shape (p, K).

    Degenerate columns raise :class:`DegenerateColumnError` naming the
    feature and study.
    """
    p, k = data.p, data.k
    out = np.empty((p, k))
    for ki, study in enumerate(data.studies):
        cy, var_y = center_column(study.y)
        if var_y <= 0.0:
            raise DegenerateColumnError(
                f"response in study {study.id!r} has zero variance")
        n = study.n
        x = study.x
        for j in range(p):
            cx, var_x = center_column(x[:, j])
            label = f"{data.feature_names[j]} (study {study.id!r})"
            out[j, ki] = _t_from_centered(cx, cy, n, var_x, var_y, label=label).value
    return out


def compute_correlation_matrix(data: MultiStudy) -> np.ndarray:
    """Pearson sample correlations for every (feature, study) pair, shape (p, K)."""
    p, k = data.p, data.k
    out = np.empty((p, k))
    for ki, study in enumerate(data.studies):
        cy, var_y = center_column(study.y)
        if var_y <= 0.0:
            raise DegenerateColumnError(
                f"response in study {study.id!r} has zero variance")
        n = study.n
        x = study.x
        for j in range(p):
            cx, var_x = center_column(x[:, j])
            if var_x <= 0.0:
                raise DegenerateColumnError(
                    f"feature {data.feature_names[j]!r} has zero variance "
                    f"in study {study.id!r}")
            cov = _exact_sum(cx * cy) / n
            out[j, ki] = cov / math.sqrt(var_x * var_y)
    return out


def _resolve_threshold(alpha1: float | None, threshold: float | None) -> tuple[float, float]:
    """Returns (alpha1, threshold); either argument determines the other."""
    if threshold is not None:
        if not (np.ndim(threshold) == 0 and float(threshold) >= 0.0
                and math.isfinite(float(threshold))):
            raise InputError(f"threshold must be a finite nonnegative real, got {threshold!r}")
        threshold = float(threshold)
        # 2 * (1 - Phi(t)) without cancellation; clamp so the echoed config
        # stays inside (0, 1) even for absurdly large thresholds.
        implied = max(math.erfc(threshold / math.sqrt(2.0)), 1e-300)
        return (implied if alpha1 is None else float(alpha1)), threshold
    if alpha1 is None:
        raise InputError("either alpha1 or an explicit threshold is required")
    if not 0.0 < float(alpha1) < 1.0:
        raise InputError(f"alpha1 must lie strictly inside (0, 1), got {alpha1!r}")
    return float(alpha1), normal_quantile(1.0 - float(alpha1) / 2.0)


def step1_from_stats(t_mat: np.ndarray, alpha1: float | None = None,
                     threshold: float | None = None) -> Step1Output:
    """First screening step from an injected (p, K) statistic matrix.

    A study lands in a feature's l_hat when |T| <= threshold (ties go in).
    """
    t_mat = np.asarray(t_mat, dtype=float)
    if t_mat.ndim != 2:
        raise InputError("statistic matrix must be 2-d (features x studies)")
    alpha1, thr = _resolve_threshold(alpha1, threshold)
    entries = []
    for j in range(t_mat.shape[0]):
        row = t_mat[j]
        l_hat = tuple(int(k) for k in np.nonzero(np.abs(row) <= thr)[0])
        entries.append((l_hat, len(l_hat), row))
    return Step1Output(entries=tuple(entries), alpha1=alpha1, threshold=thr)


def step1_separate(data: MultiStudy, alpha1: float,
                   threshold: float | None = None) -> Step1Output:
    """First screening step: per-study tests for every feature.

    No feature is removed here; the step only separates, per feature, the
    studies with potential zero correlation from the rest.
    """
    return step1_from_stats(compute_t_matrix(data), alpha1=alpha1,
                            threshold=threshold)


def _chi2_thresholds(alpha2: float, max_df: int) -> list[float]:
    # Index by kappa; entry 0 is a placeholder (no test when kappa == 0).
    return [math.inf] + [chi2_quantile(1.0 - alpha2, df)
                         for df in range(1, max_df + 1)]


def step2_aggregate(step1_output: Step1Output, alpha2: float) -> ScreeningResult:
    """Second screening step: chi-square test on the aggregate of the
    potential-zero studies. A feature with an empty l_hat is kept outright;
    an aggregate statistic exactly at the threshold is dropped."""
    if not 0.0 < float(alpha2) < 1.0:
        raise InputError(f"alpha2 must lie strictly inside (0, 1), got {alpha2!r}")
    alpha2 = float(alpha2)
    max_df = max((kappa for _, kappa, _ in step1_output), default=0)
    thresholds = _chi2_thresholds(alpha2, max_df)
    records = []
    kept, dropped = [], []
    for j, (l_hat, kappa, t_row) in enumerate(step1_output):
        if kappa == 0:
            rec = FeatureScreenRecord(feature=j, t_stats=t_row, l_hat=l_hat,
                                      kappa_hat=0, l_stat=None,
                                      chi2_threshold=None, kept=True)
        else:
            l_stat = math.fsum(float(t_row[k]) ** 2 for k in l_hat)
            thr = thresholds[kappa]
            rec = FeatureScreenRecord(feature=j, t_stats=t_row, l_hat=l_hat,
                                      kappa_hat=kappa, l_stat=l_stat,
                                      chi2_threshold=thr, kept=l_stat > thr)
        records.append(rec)
        (kept if rec.kept else dropped).append(j)
    config = ScreeningConfig(alpha1=step1_output.alpha1, alpha2=alpha2)
    return ScreeningResult(kept=tuple(kept), dropped=tuple(dropped),
                           records=tuple(records), config=config, method="tsa")


def tsa_sis(data: MultiStudy, config: ScreeningConfig) -> ScreeningResult:
    """Two-step aggregation screening: step 1 then step 2."""
    return step2_aggregate(step1_separate(data, config.alpha1), config.alpha2)


def tsa_sis_from_stats(t_mat: np.ndarray, alpha2: float,
                       alpha1: float | None = None,
                       threshold: float | None = None) -> ScreeningResult:
    """Two-step screening from an injected statistic matrix.

    When an explicit first-step threshold is given, the config echoes the
    implied two-sided level 2 * (1 - Phi(threshold)).
    """
    return step2_aggregate(step1_from_stats(t_mat, alpha1=alpha1,
                                            threshold=threshold), alpha2)


def tsa_kept_mask(t_mat: np.ndarray, threshold: float, alpha2: float) -> np.ndarray:
    """Vectorized keep mask of the two-step rule; used by the simulation
    harness where per-feature records are not needed."""
    t_mat = np.asarray(t_mat, dtype=float)
    in_l = np.abs(t_mat) <= threshold
    kappa = in_l.sum(axis=1)
    l_stat = np.where(in_l, t_mat * t_mat, 0.0).sum(axis=1)
    thresholds = np.asarray(_chi2_thresholds(float(alpha2), t_mat.shape[1]))
    return (kappa == 0) | (l_stat > thresholds[kappa])


def one_step_sis(data: MultiStudy, alpha1: float) -> ScreeningResult:
    """Keep a feature only when every study individually rejects a zero
    correlation. Records carry step-1 evidence only (no aggregate fields);
    the config's alpha2 is a placeholder this rule never consults."""
    step1 = step1_separate(data, alpha1)
    records = []
    kept, dropped = [], []
    for j, (l_hat, kappa, t_row) in enumerate(step1):
        keep = kappa == 0
        records.append(FeatureScreenRecord(feature=j, t_stats=t_row,
                                           l_hat=l_hat, kappa_hat=kappa,
                                           l_stat=None, chi2_threshold=None,
                                           kept=keep))
        (kept if keep else dropped).append(j)
    config = ScreeningConfig(alpha1=step1.alpha1, alpha2=0.05)
    return ScreeningResult(kept=tuple(kept), dropped=tuple(dropped),
                           records=tuple(records), config=config,
                           method="onestep")


def min_sis_rank(data: MultiStudy, score: str = "pearson") -> list[tuple[int, float]]:
    """Rank features by the minimum absolute marginal association across
    studies, strongest first; ties break toward the lower feature index.

    ``score`` selects Pearson correlation (default) or the self-normalized
    statistic.
    """
    if score == "pearson":
        mat = compute_correlation_matrix(data)
    elif score == "tstat":
        mat = compute_t_matrix(data)
    else:
        raise InputError(f"unknown score {score!r}; expected 'pearson' or 'tstat'")
    scores = np.abs(mat).min(axis=1)
    order = sorted(range(data.p), key=lambda j: (-scores[j], j))
    return [(j, float(scores[j])) for j in order]


def top_d_selection(ranking: list[tuple[int, float]], d: int,
                    p: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Split a ranking into (kept, dropped) index tuples by keeping the top d."""
    if not 0 <= d <= p:
        raise InputError(f"d must lie in [0, {p}], got {d}")
    if len(ranking) != p:
        raise InputError(f"ranking covers {len(ranking)} features, expected {p}")
    top = {j for j, _ in ranking[:d]}
    kept = tuple(sorted(top))
    dropped = tuple(j for j in range(p) if j not in top)
    return kept, dropped


def default_top_d(n: int) -> int:
    """Default kept-set size floor(n / log n) for the ranking screener."""
    if n < 3:
        raise InputError(f"need n >= 3, got {n}")
    return max(1, int(math.floor(n / math.log(n))))
