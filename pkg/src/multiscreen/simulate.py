"""Monte-Carlo harness: benchmark data generation, replication runner, and
sensitivity/ROC evaluation.

Every random draw is a pure function of (setting, replication index): a
counter-based generator supplies uniforms on the open unit interval and
normals come from the package's own inverse CDF, so runs reproduce
bit-for-bit across platforms. Replications may run in parallel; results
are aggregated in replication order with exact summation, so the thread
count never changes the output.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InputError, MultiscreenError
from .screening import (MultiStudy, Study, compute_correlation_matrix,
                        compute_t_matrix, default_top_d, tsa_kept_mask)
from .stats_core import chi2_quantile, normal_quantile

__all__ = [
    "SimSetting",
    "RepMetrics",
    "MethodSpec",
    "ReplicationSummary",
    "RocPoint",
    "RocCurve",
    "SensitivityGrid",
    "even_spaced_active",
    "gen_instance",
    "evaluate",
    "run_replications",
    "roc_min_sis",
    "sensitivity_grid",
]

_SETTING_PRESETS = {
    1: dict(beta_low=0.1, beta_high=0.3, heterogeneous=False),
    2: dict(beta_low=0.7, beta_high=1.0, heterogeneous=False),
    3: dict(beta_low=0.1, beta_high=0.3, heterogeneous=True),
    4: dict(beta_low=0.7, beta_high=1.0, heterogeneous=True),
}


@dataclass(frozen=True)
class SimSetting:
    """Parameters of one benchmark scenario.

    Defaults mirror the standard benchmark: n=100 observations, p=1000
    features, K=5 studies, 10 evenly spaced active features, noise sd 0.5,
    and per-study AR(1) design correlation drawn from ``r_pool``. ``B`` is
    the desk-scale replication count; raise it to 1000 for full runs.
    """

    n: int = 100
    p: int = 1000
    K: int = 5
    s0: int = 10
    beta_low: float = 0.1
    beta_high: float = 0.3
    heterogeneous: bool = False
    hetero_sd: float = 0.5
    noise_sd: float = 0.5
    r_pool: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6)
    B: int = 200
    seed: int = 0
    fix_r: bool = False

    def __post_init__(self):
        if self.n < 3:
            raise InputError(f"n must be >= 3, got {self.n}")
        if self.p < 1:
            raise InputError(f"p must be >= 1, got {self.p}")
        if self.K < 1:
            raise InputError(f"K must be >= 1, got {self.K}")
        if not 1 <= self.s0 <= self.p:
            raise InputError(f"s0 must lie in [1, p], got {self.s0}")
        if not self.beta_low <= self.beta_high:
            raise InputError("beta_low must not exceed beta_high")
        if self.hetero_sd < 0:
            raise InputError(f"hetero_sd must be >= 0, got {self.hetero_sd}")
        if not self.noise_sd > 0:
            raise InputError(f"noise_sd must be > 0, got {self.noise_sd}")
        pool = tuple(float(r) for r in self.r_pool)
        if not pool or any(not 0.0 <= r < 1.0 for r in pool):
            raise InputError("every r in r_pool must satisfy 0 <= r < 1")
        if self.B < 1:
            raise InputError(f"B must be >= 1, got {self.B}")
        if not 0 <= self.seed < 2 ** 64:
            raise InputError("seed must fit in an unsigned 64-bit integer")
        object.__setattr__(self, "r_pool", pool)

    @classmethod
    def preset(cls, setting_id: int, **overrides) -> "SimSetting":
        """The four standard scenarios: 1/2 homogeneous weak/strong signal
        coefficients, 3/4 their heterogeneous counterparts."""
        if setting_id not in _SETTING_PRESETS:
            raise InputError(f"setting must be one of 1-4, got {setting_id}")
        params = dict(_SETTING_PRESETS[setting_id])
        params.update(overrides)
        return cls(**params)


@dataclass(frozen=True)
class RepMetrics:
    """Confusion summary of one replication's kept set."""

    sensitivity: float
    specificity: float
    fp: int
    fn: int


@dataclass(frozen=True)
class MethodSpec:
    """Which screener a replication run applies.

    ``name`` is one of tsa, onestep, minsis. ``d`` (minsis only) defaults
    to floor(n/log n) of the smallest study.
    """

    name: str = "tsa"
    alpha1: float = 1e-4
    alpha2: float = 0.05
    d: int | None = None

    def __post_init__(self):
        if self.name not in ("tsa", "onestep", "minsis"):
            raise InputError(f"unknown method {self.name!r}")
        for field_name in ("alpha1", "alpha2"):
            v = getattr(self, field_name)
            if not 0.0 < v < 1.0:
                raise InputError(f"{field_name} must lie inside (0, 1), got {v}")
        if self.d is not None and self.d < 0:
            raise InputError(f"d must be >= 0, got {self.d}")


@dataclass(frozen=True)
class ReplicationSummary:
    b: int
    n_failed: int
    mean_sensitivity: float
    se_sensitivity: float
    mean_specificity: float
    se_specificity: float
    mean_fp: float
    mean_fn: float
    per_rep: tuple[RepMetrics, ...]
    failures: tuple[str, ...]


@dataclass(frozen=True)
class RocPoint:
    d: int
    sensitivity: float
    one_minus_specificity: float


@dataclass(frozen=True)
class RocCurve:
    points: tuple[RocPoint, ...]
    b: int
    n_failed: int


@dataclass(frozen=True)
class SensitivityGrid:
    alpha1_list: tuple[float, ...]
    alpha2_list: tuple[float, ...]
    mean_sensitivity: np.ndarray
    mean_specificity: np.ndarray
    se_sensitivity: np.ndarray
    se_specificity: np.ndarray
    b: int
    n_failed: int


# ---------------------------------------------------------------------------
# Seeded generation.
# ---------------------------------------------------------------------------

def _rep_rng(seed: int, rep: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(0, rep))
    return np.random.Generator(np.random.Philox(ss))


def _side_rng(seed: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(1,))
    return np.random.Generator(np.random.Philox(ss))


def _uniform_open(rng: np.random.Generator, size) -> np.ndarray:
    # (2k + 1) / 2^54 lies strictly inside (0, 1) for k < 2^53.
    k = rng.integers(0, 1 << 53, size=size, dtype=np.uint64)
    return (2.0 * k.astype(np.float64) + 1.0) * 2.0 ** -54


def _standard_normal(rng: np.random.Generator, size) -> np.ndarray:
    return normal_quantile(_uniform_open(rng, size))


def even_spaced_active(p: int, s0: int) -> tuple[int, ...]:
    """0-based indices of s0 features evenly spaced over [0, p-1],
    deduplicated: round(1 + (i - 1)(p - 1)/(s0 - 1)) - 1 for i = 1..s0."""
    if not 1 <= s0 <= p:
        raise InputError(f"s0 must lie in [1, p], got {s0}")
    if s0 == 1:
        return (0,)
    positions = {int(math.floor(1.0 + i * (p - 1) / (s0 - 1) + 0.5)) - 1
                 for i in range(s0)}
    return tuple(sorted(positions))


def _fixed_r_values(setting: SimSetting) -> tuple[float, ...]:
    rng = _side_rng(setting.seed)
    u = _uniform_open(rng, setting.K)
    idx = np.minimum((u * len(setting.r_pool)).astype(int),
                     len(setting.r_pool) - 1)
    return tuple(setting.r_pool[i] for i in idx)


def gen_instance(setting: SimSetting, rep: int):
    """Generate one replication: (MultiStudy, active indices, beta matrix).

    Draw order per replication, from the (seed, rep) child stream: base
    coefficients for the active features; then per study the design
    correlation r (skipped when fix_r), the heterogeneous coefficient
    offsets (heterogeneous only), the n*p design normals in row-major
    order, and the n noise normals. The design follows the AR(1) recursion
    col_j = r * col_{j-1} + sqrt(1 - r^2) * z_j, whose population
    correlation between columns i and j is r^|i-j|.
    """
    if rep < 0:
        raise InputError(f"rep must be >= 0, got {rep}")
    rng = _rep_rng(setting.seed, rep)
    n, p, K, s0 = setting.n, setting.p, setting.K, setting.s0
    active = even_spaced_active(p, s0)
    s_act = len(active)
    beta_base = setting.beta_low + (setting.beta_high - setting.beta_low) \
        * _uniform_open(rng, s_act)
    fixed_r = _fixed_r_values(setting) if setting.fix_r else None

    studies = []
    beta_mat = np.zeros((p, K))
    pool = setting.r_pool
    for k in range(K):
        if fixed_r is not None:
            r = fixed_r[k]
        else:
            u = float(_uniform_open(rng, 1)[0])
            r = pool[min(int(u * len(pool)), len(pool) - 1)]
        betas = beta_base.copy()
        if setting.heterogeneous:
            betas = betas + setting.hetero_sd * _standard_normal(rng, s_act)
        z = _standard_normal(rng, (n, p))
        x = np.empty((n, p))
        x[:, 0] = z[:, 0]
        if p > 1:
            c = math.sqrt(1.0 - r * r)
            for j in range(1, p):
                x[:, j] = r * x[:, j - 1] + c * z[:, j]
        eps = setting.noise_sd * _standard_normal(rng, n)
        y = x[:, active] @ betas + eps
        studies.append(Study(id=f"study{k + 1}", x=x, y=y))
        beta_mat[active, k] = betas

    names = tuple(f"x{j + 1}" for j in range(p))
    data = MultiStudy(studies=tuple(studies), feature_names=names)
    return data, active, beta_mat


def evaluate(kept, truth, p: int) -> RepMetrics:
    """Confusion metrics of a kept set against the true active set."""
    kept = frozenset(int(j) for j in kept)
    truth = frozenset(int(j) for j in truth)
    if not truth:
        raise InputError("truth must not be empty")
    for name, s in (("kept", kept), ("truth", truth)):
        if s and (min(s) < 0 or max(s) >= p):
            raise InputError(f"{name} contains indices outside [0, {p})")
    tp = len(kept & truth)
    fp = len(kept - truth)
    fn = len(truth - kept)
    tn = p - len(truth) - fp
    sensitivity = tp / len(truth)
    specificity = tn / (p - len(truth)) if p > len(truth) else 1.0
    return RepMetrics(sensitivity=sensitivity, specificity=specificity,
                      fp=fp, fn=fn)


# ---------------------------------------------------------------------------
# Replication runner.
# ---------------------------------------------------------------------------

def method_kept(data: MultiStudy, method: MethodSpec) -> tuple[int, ...]:
    """Kept feature indices for one dataset under the given method."""
    if method.name == "minsis":
        scores = np.abs(compute_correlation_matrix(data)).min(axis=1)
        d = method.d
        if d is None:
            d = default_top_d(min(s.n for s in data.studies))
        d = min(d, data.p)
        order = np.lexsort((np.arange(data.p), -scores))
        return tuple(sorted(int(j) for j in order[:d]))
    t_mat = compute_t_matrix(data)
    threshold = normal_quantile(1.0 - method.alpha1 / 2.0)
    if method.name == "onestep":
        mask = np.all(np.abs(t_mat) > threshold, axis=1)
    else:
        mask = tsa_kept_mask(t_mat, threshold, method.alpha2)
    return tuple(int(j) for j in np.nonzero(mask)[0])


def _replication_metrics(setting: SimSetting, rep: int,
                         method: MethodSpec) -> RepMetrics:
    data, active, _ = gen_instance(setting, rep)
    kept = method_kept(data, method)
    return evaluate(kept, active, setting.p)


def _rep_worker(args):
    setting, rep, method = args
    try:
        return ("ok", _replication_metrics(setting, rep, method))
    except MultiscreenError as exc:
        return ("err", f"rep {rep}: {exc}")


def _collect(worker, args_list, threads: int):
    """Run a per-replication worker, in order, optionally across processes."""
    if threads <= 1:
        return [worker(a) for a in args_list]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, args_list, chunksize=1))


def _mean_se(values) -> tuple[float, float]:
    b = len(values)
    if b == 0:
        return math.nan, math.nan
    mean = math.fsum(values) / b
    if b < 2:
        return mean, math.nan
    var = math.fsum((v - mean) ** 2 for v in values) / (b - 1)
    return mean, math.sqrt(var / b)


def run_replications(setting: SimSetting, method: MethodSpec,
                     threads: int = 1) -> ReplicationSummary:
    """Mean and Monte-Carlo standard error of sensitivity/specificity over
    B replications. Failed replications are counted, not fatal."""
    args = [(setting, rep, method) for rep in range(setting.B)]
    results = _collect(_rep_worker, args, threads)
    metrics = [m for tag, m in results if tag == "ok"]
    failures = tuple(m for tag, m in results if tag == "err")
    sens = [m.sensitivity for m in metrics]
    spec = [m.specificity for m in metrics]
    mean_sens, se_sens = _mean_se(sens)
    mean_spec, se_spec = _mean_se(spec)
    mean_fp = math.fsum(m.fp for m in metrics) / len(metrics) if metrics else math.nan
    mean_fn = math.fsum(m.fn for m in metrics) / len(metrics) if metrics else math.nan
    return ReplicationSummary(b=setting.B, n_failed=len(failures),
                              mean_sensitivity=mean_sens,
                              se_sensitivity=se_sens,
                              mean_specificity=mean_spec,
                              se_specificity=se_spec,
                              mean_fp=mean_fp, mean_fn=mean_fn,
                              per_rep=tuple(metrics), failures=failures)


# ---------------------------------------------------------------------------
# ROC curve for the ranking screener.
# ---------------------------------------------------------------------------

def default_d_grid(p: int, max_points: int = 200) -> tuple[int, ...]:
    """0..p subsampled to at most max_points + 1 distinct counts."""
    return tuple(sorted({int(v) for v in
                         np.linspace(0, p, min(p, max_points) + 1).round()}))


def _roc_worker(args):
    setting, rep, d_grid = args
    try:
        data, active, _ = gen_instance(setting, rep)
        scores = np.abs(compute_correlation_matrix(data)).min(axis=1)
        order = np.lexsort((np.arange(setting.p), -scores))
        truth = np.zeros(setting.p, dtype=bool)
        truth[list(active)] = True
        cum_tp = np.concatenate([[0], np.cumsum(truth[order])])
        s0 = len(active)
        neg = setting.p - s0
        sens = np.array([cum_tp[d] / s0 for d in d_grid], dtype=float)
        fpr = np.array([(d - cum_tp[d]) / neg if neg else 0.0
                        for d in d_grid], dtype=float)
        return ("ok", (sens, fpr))
    except MultiscreenError as exc:
        return ("err", f"rep {rep}: {exc}")


def roc_min_sis(setting: SimSetting, d_grid=None,
                threads: int = 1) -> RocCurve:
    """Operating points of the ranking screener over a grid of kept-set
    sizes, averaged over replications."""
    if d_grid is None:
        d_grid = default_d_grid(setting.p)
    d_grid = tuple(int(d) for d in d_grid)
    if any(d < 0 or d > setting.p for d in d_grid):
        raise InputError(f"every d must lie in [0, {setting.p}]")
    args = [(setting, rep, d_grid) for rep in range(setting.B)]
    results = _collect(_roc_worker, args, threads)
    oks = [payload for tag, payload in results if tag == "ok"]
    n_failed = len(results) - len(oks)
    points = []
    for gi, d in enumerate(d_grid):
        sens = math.fsum(s[gi] for s, _ in oks) / len(oks) if oks else math.nan
        fpr = math.fsum(f[gi] for _, f in oks) / len(oks) if oks else math.nan
        points.append(RocPoint(d=d, sensitivity=sens,
                               one_minus_specificity=fpr))
    return RocCurve(points=tuple(points), b=setting.B, n_failed=n_failed)


# ---------------------------------------------------------------------------
# Sensitivity grid over the two significance levels.
# ---------------------------------------------------------------------------

def _grid_worker(args):
    setting, rep, alpha1_list, alpha2_list = args
    try:
        data, active, _ = gen_instance(setting, rep)
        t_mat = compute_t_matrix(data)
        truth = frozenset(active)
        K = data.k
        chi2_thr = {a2: np.array([math.inf] + [chi2_quantile(1.0 - a2, df)
                                               for df in range(1, K + 1)])
                    for a2 in alpha2_list}
        out = np.empty((len(alpha1_list), len(alpha2_list), 2))
        for i, a1 in enumerate(alpha1_list):
            thr1 = normal_quantile(1.0 - a1 / 2.0)
            in_l = np.abs(t_mat) <= thr1
            kappa = in_l.sum(axis=1)
            l_stat = np.where(in_l, t_mat * t_mat, 0.0).sum(axis=1)
            for j, a2 in enumerate(alpha2_list):
                kept_mask = (kappa == 0) | (l_stat > chi2_thr[a2][kappa])
                kept = np.nonzero(kept_mask)[0]
                m = evaluate(kept, truth, setting.p)
                out[i, j, 0] = m.sensitivity
                out[i, j, 1] = m.specificity
        return ("ok", out)
    except MultiscreenError as exc:
        return ("err", f"rep {rep}: {exc}")


def sensitivity_grid(setting: SimSetting, alpha1_list, alpha2_list,
                     threads: int = 1) -> SensitivityGrid:
    """Full factorial sweep of the two significance levels.

    The statistic matrix of each replication is computed once and shared
    by every cell, which is exactly equivalent to screening each cell
    from scratch.
    """
    alpha1_list = tuple(float(a) for a in alpha1_list)
    alpha2_list = tuple(float(a) for a in alpha2_list)
    if not alpha1_list or not alpha2_list:
        raise InputError("alpha lists must not be empty")
    for a in alpha1_list + alpha2_list:
        if not 0.0 < a < 1.0:
            raise InputError(f"significance levels must lie inside (0, 1), got {a}")
    args = [(setting, rep, alpha1_list, alpha2_list)
            for rep in range(setting.B)]
    results = _collect(_grid_worker, args, threads)
    oks = [payload for tag, payload in results if tag == "ok"]
    n_failed = len(results) - len(oks)
    shape = (len(alpha1_list), len(alpha2_list))
    mean_sens = np.full(shape, math.nan)
    mean_spec = np.full(shape, math.nan)
    se_sens = np.full(shape, math.nan)
    se_spec = np.full(shape, math.nan)
    for i in range(shape[0]):
        for j in range(shape[1]):
            if oks:
                s_vals = [o[i, j, 0] for o in oks]
                p_vals = [o[i, j, 1] for o in oks]
                mean_sens[i, j], se_sens[i, j] = _mean_se(s_vals)
                mean_spec[i, j], se_spec[i, j] = _mean_se(p_vals)
    return SensitivityGrid(alpha1_list=alpha1_list, alpha2_list=alpha2_list,
                           mean_sensitivity=mean_sens,
                           mean_specificity=mean_spec,
                           se_sensitivity=se_sens, se_specificity=se_spec,
                           b=setting.B, n_failed=n_failed)
