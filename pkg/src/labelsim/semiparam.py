"""Two-stage semiparametric pipeline and the crowdsourcing plug-in.

Stage 1 fits an initial direction by multi-label logistic ERM on a held-out
split and estimates each labeler's link by constrained least squares
(nondecreasing, Lipschitz, sigma(0) = 1/2, optionally symmetric). Stage 2
refits the parameter on the remaining data with the per-labeler link loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .estimators import LossMode, LossSpec, SolverOptions, fit
from .links import FitResult, LinkSpec, MultiLabelDataset, link_eval, tabulated_link

__all__ = [
    "ALPHA_FLOOR",
    "IsotonicFitOptions",
    "LinkFitDiagnostics",
    "SemiparametricResult",
    "AlphaEstimate",
    "fit_links",
    "fit_links_with_diagnostics",
    "semiparametric_fit",
    "crowdsourced_fit",
    "estimate_alpha",
]

ALPHA_FLOOR = 1e-3


@dataclass(frozen=True)
class IsotonicFitOptions:
    lipschitz: float = 1.0
    enforce_symmetry: bool = True
    grid_size: int = 512

    def __post_init__(self):
        if self.lipschitz <= 0:
            raise ValueError("Lipschitz constant must be positive")
        if self.grid_size < 16:
            raise ValueError("grid_size must be at least 16")


@dataclass(frozen=True)
class LinkFitDiagnostics:
    degenerate: tuple[bool, ...]  # per labeler: constant label column
    iterations: tuple[int, ...]


@dataclass(frozen=True)
class SemiparametricResult:
    fit: FitResult
    links: tuple[LinkSpec, ...]
    u_init: np.ndarray
    stage1_index: np.ndarray
    stage2_index: np.ndarray
    diagnostics: LinkFitDiagnostics


@dataclass(frozen=True)
class AlphaEstimate:
    """Per-labeler reliability estimates with separability/floor flags."""

    alpha: np.ndarray
    raw: np.ndarray
    separable: np.ndarray
    below_floor: np.ndarray


def _weighted_pava(y: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted least-squares projection onto nondecreasing sequences.

    Empty-bin entries get a vanishing positive weight so they follow the
    pooled neighbors without influencing them.
    """
    from scipy.optimize import isotonic_regression

    return isotonic_regression(y, weights=np.maximum(w, 1e-12)).x


def _project_lipschitz_upper(v: np.ndarray, w: np.ndarray, step: float) -> np.ndarray:
    # {v_{k+1} - v_k <= step} == {v_k - k*step nonincreasing}; project by
    # antitonic regression, i.e. isotonic regression of the reversed sequence
    shift = step * np.arange(v.size)
    u = v - shift
    proj = _weighted_pava(u[::-1], w[::-1])[::-1]
    return proj + shift


def _project_symmetry(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    # weighted projection onto {v_k + v_{K-1-k} = 1} on a mirrored grid
    rv, rw = v[::-1], w[::-1]
    tw = w + rw
    safe = np.where(tw > 0, tw, 1.0)
    out = (w * v + rw * (1.0 - rv)) / safe
    out[tw == 0] = 0.5 * (v[tw == 0] + 1.0 - rv[tw == 0])
    return out


def _project_constraints(target: np.ndarray, w: np.ndarray, step: float,
                         center: int, symmetric: bool,
                         tol: float = 1e-8, max_iters: int = 500):
    """Dykstra alternating projections onto the intersection of the monotone
    cone, the Lipschitz band, the half-at-zero pin, the symmetry subspace,
    and the [0, 1] box, all in the weighted inner product."""

    def pin_center(v):
        out = v.copy()
        out[center] = 0.5
        return out

    projections = [
        lambda v: _weighted_pava(v, w),
        lambda v: _project_lipschitz_upper(v, w, step),
        pin_center,
        lambda v: np.clip(v, 0.0, 1.0),
    ]
    if symmetric:
        projections.insert(2, lambda v: _project_symmetry(v, w))

    x = target.copy()
    increments = [np.zeros_like(x) for _ in projections]
    iters = 0
    for iters in range(1, max_iters + 1):
        x_prev = x.copy()
        for idx, proj in enumerate(projections):
            y = x + increments[idx]
            x = proj(y)
            increments[idx] = y - x
        if np.max(np.abs(x - x_prev)) < tol:
            break
    return x, iters


def _finalize_feasible(v: np.ndarray, center: int, step: float,
                       symmetric: bool) -> np.ndarray:
    """Snap a numerically converged iterate to exact feasibility."""
    v = v.copy()
    if symmetric:
        v = 0.5 * (v + 1.0 - v[::-1])
    v[center] = 0.5
    inc = np.clip(np.diff(v[center:]), 0.0, step)
    right = 0.5 + np.concatenate([[0.0], np.cumsum(inc)])
    right = np.minimum(right, 1.0)
    if symmetric:
        left = 1.0 - right[::-1]
    else:
        inc_l = np.clip(np.diff(v[:center + 1]), 0.0, step)
        left = 0.5 - np.concatenate([[0.0], np.cumsum(inc_l[::-1])])[::-1]
        left = np.maximum(left, 0.0)
    return np.concatenate([left[:-1], right])


def _fit_single_link(margins: np.ndarray, y01: np.ndarray,
                     opts: IsotonicFitOptions) -> tuple[LinkSpec, int]:
    half = float(np.max(np.abs(margins)))
    if half == 0:
        half = 1.0
    size = opts.grid_size + (opts.grid_size % 2 == 0)  # odd so 0 is a knot
    grid = np.linspace(-half, half, size)
    delta = grid[1] - grid[0]
    center = size // 2

    idx = np.clip(np.rint((margins + half) / delta).astype(int), 0, size - 1)
    counts = np.bincount(idx, minlength=size).astype(float)
    sums = np.bincount(idx, weights=y01, minlength=size)
    target = np.where(counts > 0, sums / np.maximum(counts, 1.0), 0.5)

    projected, iters = _project_constraints(
        target, counts, opts.lipschitz * delta, center, opts.enforce_symmetry)
    values = _finalize_feasible(projected, center, opts.lipschitz * delta,
                                opts.enforce_symmetry)
    link = tabulated_link(grid, values, lipschitz=opts.lipschitz,
                          symmetric=opts.enforce_symmetry)
    return link, iters


def fit_links_with_diagnostics(u_init, dataset: MultiLabelDataset,
                               opts: IsotonicFitOptions = IsotonicFitOptions()):
    u_init = np.asarray(u_init, dtype=float)
    if abs(np.linalg.norm(u_init) - 1.0) > 1e-8:
        raise ValueError("u_init must be a unit vector")
    if dataset.n == 0:
        raise ValueError("dataset is empty")
    margins = dataset.X @ u_init
    links, degenerate, iterations = [], [], []
    for j in range(dataset.m):
        col = dataset.Y[:, j]
        if col.size == 0:
            raise ValueError(f"labeler column {j} is empty")
        y01 = (col.astype(float) + 1.0) / 2.0
        link, iters = _fit_single_link(margins, y01, opts)
        links.append(link)
        degenerate.append(bool(np.all(col == col[0])))
        iterations.append(iters)
    diag = LinkFitDiagnostics(degenerate=tuple(degenerate),
                              iterations=tuple(iterations))
    return links, diag


def fit_links(u_init, dataset: MultiLabelDataset,
              opts: IsotonicFitOptions = IsotonicFitOptions()) -> list[LinkSpec]:
    """Per-labeler monotone-Lipschitz link estimates by constrained least
    squares on the margins <u_init, X_i>, labels encoded as {0, 1} targets."""
    links, _ = fit_links_with_diagnostics(u_init, dataset, opts)
    return links


def semiparametric_fit(dataset: MultiLabelDataset, split_fraction: float = 0.1,
                       opts: IsotonicFitOptions = IsotonicFitOptions(),
                       solver: SolverOptions = SolverOptions()) -> SemiparametricResult:
    """Two-stage fit: direction + links on the first split_fraction of rows,
    per-labeler-link ERM refit on the remainder."""
    if not 0.0 < split_fraction < 1.0:
        raise ValueError("split_fraction must lie in (0, 1)")
    n, d = dataset.n, dataset.d
    n1 = int(np.ceil(split_fraction * n))
    stage1 = np.arange(n1)
    stage2 = np.arange(n1, n)
    if stage1.size < d + 1 or stage2.size < d + 1:
        raise ValueError("split leaves fewer than d + 1 rows in a stage")
    assert np.intersect1d(stage1, stage2).size == 0
    assert stage1.size + stage2.size == n

    ds1 = MultiLabelDataset(X=dataset.X[stage1], Y=dataset.Y[stage1])
    ds2 = MultiLabelDataset(X=dataset.X[stage2], Y=dataset.Y[stage2])

    init = fit(LossSpec(mode=LossMode.MULTI_LABEL), ds1, solver)
    u_init = init.u_hat
    links, diag = fit_links_with_diagnostics(u_init, ds1, opts)

    refit_spec = LossSpec(mode=LossMode.PER_LABELER, links=tuple(links))
    result = fit(refit_spec, ds2, solver, theta0=u_init)
    return SemiparametricResult(fit=result, links=tuple(links), u_init=u_init,
                                stage1_index=stage1, stage2_index=stage2,
                                diagnostics=diag)


def crowdsourced_fit(dataset: MultiLabelDataset, alpha_estimate,
                     solver: SolverOptions = SolverOptions()) -> FitResult:
    """ERM with per-labeler scaled-logistic links at the estimated
    reliabilities; the returned estimate is normalized via FitResult.u_hat."""
    alpha = np.asarray(alpha_estimate, dtype=float)
    spec = LossSpec(mode=LossMode.CROWD_SCALED, alpha=alpha)
    return fit(spec, dataset, solver)


def _alpha_score(a: float, margins: np.ndarray, y: np.ndarray) -> float:
    # derivative of the per-labeler logistic log-likelihood in the scalar a
    from .links import logistic_link

    lr = logistic_link()
    return float(np.sum(y * margins * link_eval(lr, -y * a * margins)))


def estimate_alpha(dataset: MultiLabelDataset, u_ref) -> AlphaEstimate:
    """Per-labeler reliability by one-dimensional logistic MLE on the margins
    <u_ref, X_i>; a labeler whose 1-D problem is separable (or whose estimate
    falls below the 1e-3 floor) is flagged."""
    u_ref = np.asarray(u_ref, dtype=float)
    if abs(np.linalg.norm(u_ref) - 1.0) > 1e-8:
        raise ValueError("u_ref must be a unit vector")
    margins = dataset.X @ u_ref
    m = dataset.m
    raw = np.empty(m)
    separable = np.zeros(m, dtype=bool)
    bound = 1e4
    for j in range(m):
        y = dataset.Y[:, j].astype(float)
        # the score is strictly decreasing in a, so bracket its unique zero
        lo, hi = 0.0, 1.0
        s0 = _alpha_score(0.0, margins, y)
        if s0 <= 0:
            lo, hi = -1.0, 0.0
            while _alpha_score(lo, margins, y) <= 0:
                lo *= 2.0
                if lo < -bound:
                    separable[j] = True
                    break
        else:
            while _alpha_score(hi, margins, y) >= 0:
                hi *= 2.0
                if hi > bound:
                    separable[j] = True
                    break
        if separable[j]:
            raw[j] = np.sign(s0) * bound
            continue
        from scipy import optimize

        raw[j] = optimize.brentq(
            lambda a: _alpha_score(a, margins, y), lo, hi, xtol=1e-10)
    below = raw < ALPHA_FLOOR
    alpha = np.maximum(raw, ALPHA_FLOOR)
    return AlphaEstimate(alpha=alpha, raw=raw, separable=separable,
                         below_floor=below)
