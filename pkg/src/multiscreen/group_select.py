"""Second-stage selection on a screened feature set.

One coefficient vector per study is fit jointly under a squared loss summed
over studies plus a group penalty: each feature's coefficients across
studies form one group penalized by its Euclidean norm, so a feature is
selected in all studies or in none. Solved by cyclic block proximal
gradient steps (group soft-thresholding) with a safeguarded line search.
Columns are centered and scaled to unit 1/n-variance per study internally;
reported coefficients and intercepts are on the original scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (DegenerateColumnError, InputError, SelectionError,
                     SingularDesignError)
from .screening import MultiStudy, ScreeningConfig, ScreeningResult, tsa_sis

__all__ = [
    "GroupLassoFit",
    "SelectionModel",
    "OlsStudyFit",
    "lambda_max",
    "group_lasso_fit",
    "select_lambda",
    "tsa_sis_group_lasso",
    "ols_refit",
]


@dataclass(frozen=True)
class GroupLassoFit:
    """Converged (or best-effort) group-penalized fit.

    ``beta`` is (len(features), K) on the original data scale; ``beta_std``
    holds the coefficients of the internally standardized problem on which
    the KKT residual is defined. ``selected`` are the features whose group
    norm is exactly nonzero.
    """

    features: tuple[int, ...]
    beta: np.ndarray
    intercepts: np.ndarray
    lambda_: float
    objective_trace: tuple[float, ...]
    converged: bool
    iterations: int
    kkt_residual: float
    beta_std: np.ndarray
    selected: tuple[int, ...]
    warning: str | None = None


@dataclass(frozen=True)
class SelectionModel:
    """End-to-end result: screen, tune the penalty, fit, select."""

    screening: ScreeningResult
    screened: tuple[int, ...]
    selected: tuple[int, ...]
    lambda_: float | None
    fit: GroupLassoFit | None
    diagnostics: tuple[dict, ...] | None
    tune_method: str | None
    empty_screen: bool = False


@dataclass(frozen=True)
class OlsStudyFit:
    """Per-study least-squares refit on the selected features."""

    study_id: str
    intercept: float
    intercept_se: float
    coef: np.ndarray
    coef_se: np.ndarray
    r2: float
    adj_r2: float
    sigma2: float


def _check_active(data: MultiStudy, active) -> tuple[int, ...]:
    active = tuple(sorted(int(j) for j in active))
    if not active:
        raise InputError("active feature set must not be empty")
    if len(set(active)) != len(active):
        raise InputError("active feature set has repeated indices")
    if active[0] < 0 or active[-1] >= data.p:
        raise InputError(f"active feature index out of range [0, {data.p})")
    return active


def _standardize(data: MultiStudy, active: tuple[int, ...]):
    """Center y and center/scale the active columns per study."""
    m, K = len(active), data.k
    xs, cys = [], []
    xbar = np.empty((m, K))
    scale = np.empty((m, K))
    ybar = np.empty(K)
    for k, study in enumerate(data.studies):
        n = study.n
        sub = study.x[:, active]
        mu = sub.mean(axis=0)
        cx = sub - mu
        sd = np.sqrt((cx * cx).mean(axis=0))
        bad = np.nonzero(sd <= 0.0)[0]
        if bad.size:
            raise DegenerateColumnError(
                f"feature {data.feature_names[active[bad[0]]]!r} has zero "
                f"variance in study {study.id!r}")
        xs.append(cx / sd)
        ybar[k] = study.y.mean()
        cys.append(study.y - ybar[k])
        xbar[:, k] = mu
        scale[:, k] = sd
    return xs, cys, xbar, scale, ybar


def lambda_max(data: MultiStudy, active) -> float:
    """Smallest penalty at which the all-zero solution is optimal:
    max_j of the group norm of 2 * Xs_j' (y - ybar) across studies."""
    active = _check_active(data, active)
    xs, cys, _, _, _ = _standardize(data, active)
    worst = 0.0
    for j in range(len(active)):
        z = [2.0 * float(xs[k][:, j] @ cys[k]) for k in range(data.k)]
        worst = max(worst, math.sqrt(math.fsum(v * v for v in z)))
    return worst


def _objective(resid, beta_std, lam) -> float:
    loss = math.fsum(float(r @ r) for r in resid)
    penalty = lam * math.fsum(
        math.sqrt(float(beta_std[j] @ beta_std[j]))
        for j in range(beta_std.shape[0]))
    return loss + penalty


def _kkt_residual(xs, resid, beta_std, lam) -> float:
    worst = 0.0
    for j in range(beta_std.shape[0]):
        g = np.array([-2.0 * float(xs[k][:, j] @ resid[k])
                      for k in range(len(xs))])
        bj = beta_std[j]
        norm_b = math.sqrt(float(bj @ bj))
        if norm_b == 0.0:
            worst = max(worst, max(0.0, math.sqrt(float(g @ g)) - lam))
        else:
            worst = max(worst, float(np.max(np.abs(g + lam * bj / norm_b))))
    return worst


def group_lasso_fit(data: MultiStudy, active, lambda_: float, *,
                    max_iter: int = 10000, tol: float = 1e-10,
                    kkt_tol: float = 1e-6,
                    beta0: np.ndarray | None = None) -> GroupLassoFit:
    """Fit the group-penalized multi-study regression at one penalty value.

    Iterates until the relative objective change drops below ``tol`` and
    the group-wise KKT residual is within ``kkt_tol``; if ``max_iter``
    sweeps do not get there the best-effort fit is returned with
    ``converged=False`` and a warning code.
    """
    active = _check_active(data, active)
    if not (np.ndim(lambda_) == 0 and float(lambda_) >= 0.0
            and math.isfinite(float(lambda_))):
        raise InputError(f"lambda must be a finite nonnegative real, got {lambda_!r}")
    lam = float(lambda_)
    m, K = len(active), data.k
    xs, cys, xbar, scale, ybar = _standardize(data, active)
    n_k = np.array([s.n for s in data.studies], dtype=float)
    lips = 2.0 * float(n_k.max())

    if beta0 is None:
        beta = np.zeros((m, K))
    else:
        beta = np.array(beta0, dtype=float, copy=True)
        if beta.shape != (m, K):
            raise InputError(f"beta0 must have shape {(m, K)}")
    resid = [cys[k] - xs[k] @ beta[:, k] for k in range(K)]

    trace = []
    converged = False
    it = 0
    prev_obj = math.inf
    for it in range(1, max_iter + 1):
        for j in range(m):
            z = np.array([2.0 * float(xs[k][:, j] @ resid[k]) for k in range(K)])
            old = beta[j].copy()
            # Zero is the exact block minimizer iff the gradient at the
            # block origin fits in the penalty ball; computed with the same
            # arithmetic as lambda_max so the boundary case lands on zero.
            z0 = z + 2.0 * n_k * old
            if math.sqrt(math.fsum(float(v) ** 2 for v in z0)) <= lam:
                if old.any():
                    beta[j] = 0.0
                    for k in range(K):
                        if old[k] != 0.0:
                            resid[k] += xs[k][:, j] * old[k]
                continue
            lj = lips
            for _ in range(60):
                v = old + z / lj
                norm_v = math.sqrt(float(v @ v))
                shrink = max(0.0, 1.0 - lam / (lj * norm_v)) if norm_v > 0.0 else 0.0
                new = shrink * v
                d = new - old
                if not d.any():
                    break
                # z carries the factor 2, so the loss change is -d.z + d^2 n.
                delta = (float(-(d @ z)) + float((d * d) @ n_k)
                         + lam * (math.sqrt(float(new @ new))
                                  - math.sqrt(float(old @ old))))
                if delta <= 0.0:
                    beta[j] = new
                    for k in range(K):
                        if d[k] != 0.0:
                            resid[k] -= xs[k][:, j] * d[k]
                    break
                lj *= 2.0
        if it % 100 == 0:
            # Guard against drift in the incrementally maintained residuals.
            resid = [cys[k] - xs[k] @ beta[:, k] for k in range(K)]
        obj = _objective(resid, beta, lam)
        trace.append(obj)
        if abs(prev_obj - obj) <= tol * max(1.0, abs(prev_obj)):
            if _kkt_residual(xs, resid, beta, lam) <= kkt_tol:
                converged = True
                break
        prev_obj = obj

    resid = [cys[k] - xs[k] @ beta[:, k] for k in range(K)]
    kkt = _kkt_residual(xs, resid, beta, lam)
    if not converged and kkt <= kkt_tol:
        converged = True
    warning = None if converged else "max_iter"

    beta_orig = beta / scale
    intercepts = ybar - np.array([float(xbar[:, k] @ beta_orig[:, k])
                                  for k in range(K)])
    group_norms = np.sqrt((beta * beta).sum(axis=1))
    selected = tuple(active[j] for j in range(m) if group_norms[j] > 0.0)
    return GroupLassoFit(features=active, beta=beta_orig,
                         intercepts=intercepts, lambda_=lam,
                         objective_trace=tuple(trace), converged=converged,
                         iterations=it, kkt_residual=kkt, beta_std=beta,
                         selected=selected, warning=warning)


def _fit_rss(data: MultiStudy, fit: GroupLassoFit) -> float:
    total = 0.0
    for k, study in enumerate(data.studies):
        pred = fit.intercepts[k] + study.x[:, fit.features] @ fit.beta[:, k]
        r = study.y - pred
        total += float(r @ r)
    return total


def _fold_of_rows(n: int, folds: int) -> np.ndarray:
    return np.arange(n) % folds


def _subset_rows(data: MultiStudy, keep_masks) -> MultiStudy:
    from .screening import Study
    studies = tuple(Study(id=s.id, x=s.x[mask], y=s.y[mask])
                    for s, mask in zip(data.studies, keep_masks))
    return MultiStudy(studies=studies, feature_names=data.feature_names)


def select_lambda(data: MultiStudy, active, method: str = "bic",
                  grid_size: int = 50, folds: int = 5):
    """Tune the penalty on a log-spaced grid from lambda_max down three
    decades. Returns (best_lambda, per-lambda diagnostics); ties resolve
    to the smallest lambda.

    ``bic`` scores N*log(RSS/N) + df*log(N) with df = K * n_selected and
    N the pooled sample count; ``cv`` scores the pooled squared prediction
    error over folds assigned by row position within each study.
    """
    if method not in ("bic", "cv"):
        raise InputError(f"unknown tuning method {method!r}; expected 'bic' or 'cv'")
    if grid_size < 2:
        raise InputError(f"grid_size must be >= 2, got {grid_size}")
    active = _check_active(data, active)
    lam_max = lambda_max(data, active)
    if not (math.isfinite(lam_max) and lam_max > 0.0):
        raise SelectionError(
            "response is orthogonal to every active column; no usable "
            "penalty grid exists")
    grid = np.geomspace(lam_max, lam_max * 1e-3, grid_size)

    diagnostics: list[dict] = []
    if method == "bic":
        n_total = sum(s.n for s in data.studies)
        warm = None
        best_lam, best_score = None, math.inf
        for lam in grid:
            fit = group_lasso_fit(data, active, float(lam), beta0=warm)
            warm = fit.beta_std
            rss = _fit_rss(data, fit)
            df = data.k * len(fit.selected)
            bic = n_total * math.log(max(rss, 1e-300) / n_total) \
                + df * math.log(n_total)
            diagnostics.append({"lambda": float(lam), "bic": bic,
                                "rss": rss, "n_selected": len(fit.selected),
                                "converged": fit.converged})
            if bic <= best_score:
                best_score, best_lam = bic, float(lam)
        return best_lam, diagnostics

    folds_count = folds
    sse = np.zeros(len(grid))
    count = 0
    fold_ids = [_fold_of_rows(s.n, folds_count) for s in data.studies]
    for f in range(folds_count):
        train_masks = [ids != f for ids in fold_ids]
        test_masks = [ids == f for ids in fold_ids]
        if any(mask.sum() < 3 for mask in train_masks):
            raise InputError(
                f"fold {f} leaves a study with fewer than 3 training rows")
        train = _subset_rows(data, train_masks)
        warm = None
        for gi, lam in enumerate(grid):
            fit = group_lasso_fit(train, active, float(lam), beta0=warm)
            warm = fit.beta_std
            for k, study in enumerate(data.studies):
                mask = test_masks[k]
                if not mask.any():
                    continue
                pred = fit.intercepts[k] + study.x[mask][:, fit.features] @ fit.beta[:, k]
                err = study.y[mask] - pred
                sse[gi] += float(err @ err)
        count += sum(int(mask.sum()) for mask in test_masks)
    mse = sse / count
    if not np.all(np.isfinite(mse)):
        raise SelectionError("cross-validation produced non-finite errors")
    best_lam, best_score = None, math.inf
    for gi, lam in enumerate(grid):
        diagnostics.append({"lambda": float(lam), "cv_mse": float(mse[gi])})
        if mse[gi] <= best_score:
            best_score, best_lam = float(mse[gi]), float(lam)
    return best_lam, diagnostics


def tsa_sis_group_lasso(data: MultiStudy, config: ScreeningConfig,
                        method: str = "bic",
                        grid_size: int = 50) -> SelectionModel:
    """Screen with the two-step rule, tune the group penalty, fit, and
    report the nonzero groups. An empty screened set yields an explicitly
    marked empty model rather than an error."""
    screening = tsa_sis(data, config)
    if not screening.kept:
        return SelectionModel(screening=screening, screened=(), selected=(),
                              lambda_=None, fit=None, diagnostics=None,
                              tune_method=method, empty_screen=True)
    lam, diagnostics = select_lambda(data, screening.kept, method=method,
                                     grid_size=grid_size)
    fit = group_lasso_fit(data, screening.kept, lam)
    return SelectionModel(screening=screening, screened=screening.kept,
                          selected=fit.selected, lambda_=lam, fit=fit,
                          diagnostics=tuple(diagnostics), tune_method=method,
                          empty_screen=False)


def ols_refit(data: MultiStudy, selected) -> list[OlsStudyFit]:
    """Per-study least squares with intercept on the selected features,
    with standard errors from the unbiased residual variance and the
    degrees-of-freedom adjusted R-squared."""
    selected = tuple(sorted(int(j) for j in selected))
    if len(set(selected)) != len(selected):
        raise InputError("selected feature set has repeated indices")
    if selected and (selected[0] < 0 or selected[-1] >= data.p):
        raise InputError(f"selected feature index out of range [0, {data.p})")
    m = len(selected)
    out = []
    for study in data.studies:
        n = study.n
        if m + 1 >= n:
            raise InputError(
                f"study {study.id!r}: {m} features plus intercept needs "
                f"more than {m + 1} observations, have {n}")
        cy = study.y - study.y.mean()
        tss = float(cy @ cy)
        if tss <= 0.0:
            raise DegenerateColumnError(
                f"study {study.id!r}: response has zero variance")
        if m == 0:
            # Intercept-only model: both R^2 values are exactly zero.
            sigma2 = tss / (n - 1)
            out.append(OlsStudyFit(study_id=study.id,
                                   intercept=float(study.y.mean()),
                                   intercept_se=math.sqrt(sigma2 / n),
                                   coef=np.empty(0), coef_se=np.empty(0),
                                   r2=0.0, adj_r2=0.0, sigma2=sigma2))
            continue
        design = np.column_stack([np.ones(n), study.x[:, selected]])
        coef, _, rank, _ = np.linalg.lstsq(design, study.y, rcond=None)
        if rank < design.shape[1]:
            raise SingularDesignError(
                f"study {study.id!r}: selected design is rank deficient")
        resid = study.y - design @ coef
        rss = float(resid @ resid)
        dof = n - m - 1
        sigma2 = rss / dof
        cov = sigma2 * np.linalg.inv(design.T @ design)
        ses = np.sqrt(np.diag(cov))
        r2 = 1.0 - rss / tss
        adj = 1.0 - (1.0 - r2) * (n - 1) / dof
        out.append(OlsStudyFit(study_id=study.id, intercept=float(coef[0]),
                               intercept_se=float(ses[0]),
                               coef=coef[1:].copy(), coef_se=ses[1:].copy(),
                               r2=r2, adj_r2=adj, sigma2=sigma2))
    return out
