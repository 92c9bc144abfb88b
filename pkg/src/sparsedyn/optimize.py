"""Sparse regression solvers sharing one interface.

All solvers minimize ||targets - theta @ xi||^2 plus a sparsity-promoting
term, differing in how sparsity is reached:

* STLSQ  - ridge regression alternated with hard thresholding;
* SR3    - relaxed coefficients coupled to a sparse auxiliary variable via a
           proximal step, with optional linear equality constraints;
* SSR    - backward elimination of the smallest (normalized) coefficient;
* FROLS  - forward selection by error reduction ratio on an orthogonalized
           residual.

Solvers are deterministic given their inputs.  Zero feature columns are
dropped before solving and reported in diagnostics; coefficients keep the
original indexing with zeros in dropped positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, NamedTuple, Union

import numpy as np

from .errors import FitError, SpecError

HOLDOUT_FRACTION = 0.25
HOLDOUT_SEED = 7919
# Relative slack when scanning a path for its minimum-residual entry: among
# near-ties the sparsest model wins (matters on noiseless data where every
# superset of the true support fits to machine precision).
HOLDOUT_TIE_RTOL = 1e-9


@dataclass(frozen=True)
class Problem:
    """Feature matrix, targets, and row/column conditioning options.

    ``normalize_columns`` solves in column-2-norm-scaled feature space
    (thresholds then act on normalized coefficients, making support selection
    invariant to column rescaling) and rescales the coefficients back
    afterwards.  Note that ridge penalties then also act on normalized-scale
    coefficients, which are larger by the column norms; prefer a small or
    zero ridge when normalizing.
    """

    theta: np.ndarray
    targets: np.ndarray
    sample_weights: np.ndarray | None = None
    normalize_columns: bool = False
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        targets = np.asarray(self.targets, dtype=float)
        if targets.ndim == 1:
            targets = targets[:, None]
        if theta.shape[0] != targets.shape[0]:
            raise SpecError(
                f"theta has {theta.shape[0]} rows, targets {targets.shape[0]}"
            )
        if theta.shape[0] < 1 or theta.shape[1] < 1:
            raise SpecError("problem needs at least one row and one feature")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "targets", targets)
        if self.feature_names is not None:
            names = tuple(self.feature_names)
            if len(names) != theta.shape[1]:
                raise SpecError(
                    f"{len(names)} feature names for {theta.shape[1]} columns"
                )
            object.__setattr__(self, "feature_names", names)
        if self.sample_weights is not None:
            w = np.asarray(self.sample_weights, dtype=float)
            if w.shape != (theta.shape[0],) or np.any(w < 0):
                raise SpecError("sample_weights must be non-negative, one per row")
            object.__setattr__(self, "sample_weights", w)

    @property
    def n_features(self) -> int:
        return self.theta.shape[1]

    @property
    def n_targets(self) -> int:
        return self.targets.shape[1]

    def names(self) -> tuple[str, ...]:
        if self.feature_names is not None:
            return self.feature_names
        return tuple(f"f{i}" for i in range(self.n_features))


@dataclass(frozen=True)
class Coefficients:
    """Sparse coefficient matrix (features x targets) with bookkeeping."""

    xi: np.ndarray
    support: np.ndarray
    names: tuple[str, ...]
    residuals: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        support = np.asarray(self.support, dtype=bool)
        if xi.shape != support.shape:
            raise SpecError("xi and support shapes differ")
        if np.any(xi[~support] != 0.0):
            raise SpecError("xi must be exactly zero off-support")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "residuals", np.asarray(self.residuals, dtype=float))

    @property
    def n_terms(self) -> int:
        return int(self.support.sum())


@dataclass(frozen=True)
class STLSQ:
    threshold: float = 0.1
    ridge: float = 0.05
    max_iter: int = 20

    def validate(self) -> None:
        if self.threshold < 0 or self.ridge < 0 or self.max_iter < 1:
            raise SpecError(f"invalid STLSQ spec {self}")


@dataclass(frozen=True)
class SR3:
    threshold: float = 0.1
    relaxation: float = 1.0
    regularizer: Literal["l0", "l1"] = "l0"
    max_iter: int = 30
    tol: float = 1e-5
    constraints: tuple[np.ndarray, np.ndarray] | None = None

    def validate(self) -> None:
        if self.threshold < 0 or self.relaxation <= 0 or self.max_iter < 1:
            raise SpecError(f"invalid SR3 spec {self}")
        if self.regularizer not in ("l0", "l1"):
            raise SpecError(f"SR3 regularizer must be l0 or l1, got {self.regularizer}")
        if self.constraints is not None:
            C, d = self.constraints
            C = np.atleast_2d(np.asarray(C, dtype=float))
            d = np.atleast_1d(np.asarray(d, dtype=float))
            if C.shape[0] != d.shape[0]:
                raise SpecError("constraint matrix and rhs row counts differ")


@dataclass(frozen=True)
class SSR:
    """Backward elimination; path runs from the full support down to
    ``min_terms``.  ``solve`` picks the holdout-selected path entry."""

    min_terms: int = 1
    selection: Literal["holdout", "path"] = "holdout"

    def validate(self) -> None:
        if self.min_terms < 1:
            raise SpecError(f"min_terms must be >= 1, got {self.min_terms}")
        if self.selection not in ("holdout", "path"):
            raise SpecError(f"unknown SSR selection {self.selection!r}")


@dataclass(frozen=True)
class FROLS:
    max_terms: int | None = None
    err_tol: float = 1e-6

    def validate(self) -> None:
        if self.max_terms is not None and self.max_terms < 1:
            raise SpecError(f"max_terms must be >= 1, got {self.max_terms}")
        if self.err_tol < 0:
            raise SpecError(f"err_tol must be >= 0, got {self.err_tol}")


OptimizerSpec = Union[STLSQ, SR3, SSR, FROLS]


class PathEntry(NamedTuple):
    coefficients: Coefficients
    support_size: int
    residual: float


def soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    """Closed-form prox of t*||.||_1: shrink toward zero by t."""
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def hard_threshold(x: np.ndarray, t: float) -> np.ndarray:
    """Prox of the l0 penalty: zero entries smaller than t in magnitude."""
    return np.where(np.abs(x) >= t, x, 0.0)


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------


class _Work:
    """Weighted, zero-column-dropped, optionally normalized view of a problem."""

    def __init__(self, problem: Problem):
        theta = problem.theta
        targets = problem.targets
        if problem.sample_weights is not None:
            sw = np.sqrt(problem.sample_weights)[:, None]
            theta = theta * sw
            targets = targets * sw
        norms = np.linalg.norm(theta, axis=0)
        self.keep = norms > 0.0
        self.dropped = np.flatnonzero(~self.keep)
        theta = theta[:, self.keep]
        if problem.normalize_columns:
            self.scale = norms[self.keep]
            theta = theta / self.scale
        else:
            self.scale = np.ones(int(self.keep.sum()))
        self.theta = theta
        self.targets = targets
        self.problem = problem
        self.diagnostics: dict = {}
        if self.dropped.size:
            self.diagnostics["dropped_columns"] = [
                problem.names()[i] for i in self.dropped
            ]

    def finish(self, xi_n: np.ndarray, extra: dict | None = None) -> Coefficients:
        """Re-embed normalized reduced coefficients into original indexing."""
        p = self.problem.n_features
        n = self.problem.n_targets
        xi = np.zeros((p, n))
        xi[self.keep] = xi_n / self.scale[:, None]
        support = xi != 0.0
        residuals = np.linalg.norm(
            self.targets - self.theta @ xi_n, axis=0
        )
        diagnostics = dict(self.diagnostics)
        if extra:
            diagnostics.update(extra)
        return Coefficients(
            xi=xi,
            support=support,
            names=self.problem.names(),
            residuals=residuals,
            diagnostics=diagnostics,
        )


def _lstsq(theta: np.ndarray, targets: np.ndarray, diagnostics: dict) -> np.ndarray:
    xi, _, rank, _ = np.linalg.lstsq(theta, targets, rcond=None)
    if rank < theta.shape[1]:
        diagnostics["rank_deficient"] = True
    return xi


def _ridge(
    theta: np.ndarray, targets: np.ndarray, alpha: float, diagnostics: dict
) -> np.ndarray:
    if alpha == 0.0:
        return _lstsq(theta, targets, diagnostics)
    p = theta.shape[1]
    gram = theta.T @ theta + alpha * np.eye(p)
    rhs = theta.T @ targets
    try:
        return np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        diagnostics["rank_deficient"] = True
        return np.linalg.lstsq(gram, rhs, rcond=None)[0]


# ---------------------------------------------------------------------------
# STLSQ
# ---------------------------------------------------------------------------


def _solve_stlsq(work: _Work, spec: STLSQ) -> Coefficients:
    theta, Y = work.theta, work.targets
    p, n = theta.shape[1], Y.shape[1]
    diags: dict = {}
    xi = _ridge(theta, Y, spec.ridge, diags)
    support = np.ones((p, n), dtype=bool)
    history: list[dict] = []
    converged = False
    empty: set[int] = set()
    for _ in range(spec.max_iter):
        new_support = support & (np.abs(xi) >= spec.threshold)
        xi_thresholded = np.where(new_support, xi, 0.0)
        r_thresh = float(np.linalg.norm(Y - theta @ xi_thresholded))
        for j in range(n):
            if not new_support[:, j].any() and j not in empty:
                empty.add(j)
        changed = bool((new_support != support).any())
        support = new_support
        xi = np.zeros((p, n))
        for j in range(n):
            act = support[:, j]
            if act.any():
                xi[act, j] = _ridge(theta[:, act], Y[:, j : j + 1], spec.ridge, diags).ravel()
        history.append(
            {
                "residual_thresholded": r_thresh,
                "residual_refit": float(np.linalg.norm(Y - theta @ xi)),
            }
        )
        if not changed:
            converged = True
            break
    diags["converged"] = converged
    diags["iterations"] = len(history)
    diags["residual_history"] = history
    if empty:
        diags["empty_support_targets"] = sorted(empty)
    xi = np.where(support, xi, 0.0)
    return work.finish(xi, diags)


# ---------------------------------------------------------------------------
# SR3
# ---------------------------------------------------------------------------


def _sr3_prox(xi: np.ndarray, spec: SR3) -> np.ndarray:
    lam, nu = spec.threshold, spec.relaxation
    if spec.regularizer == "l0":
        return hard_threshold(xi, np.sqrt(2.0 * lam * nu))
    return soft_threshold(xi, lam * nu)


def _check_constraints(spec: SR3, p: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    C, d = spec.constraints
    C = np.atleast_2d(np.asarray(C, dtype=float))
    d = np.atleast_1d(np.asarray(d, dtype=float))
    k = C.shape[0]
    if C.shape[1] != p * n:
        raise SpecError(
            f"constraint matrix has {C.shape[1]} columns, expected p*n = {p * n} "
            "(vec(xi) in column-major / target-major order)"
        )
    if k > p * n:
        raise SpecError(f"{k} constraints exceed {p * n} coefficients")
    s = np.linalg.svd(C, compute_uv=False)
    if s.size == 0 or s[-1] <= 1e-10 * s[0]:
        raise SpecError("constraint matrix is not full row rank (tol 1e-10)")
    return C, d


def _constrained_quadratic(
    H: np.ndarray, rhs_vec: np.ndarray, C: np.ndarray, d: np.ndarray, diags: dict
) -> np.ndarray:
    """Minimize x'Hx/2 - rhs'x subject to Cx = d via the KKT system."""
    k = C.shape[0]
    kkt = np.block([[H, C.T], [C, np.zeros((k, k))]])
    rhs = np.concatenate([rhs_vec, d])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        diags["rank_deficient"] = True
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[: rhs_vec.size]


def _solve_sr3(work: _Work, spec: SR3) -> Coefficients:
    theta, Y = work.theta, work.targets
    p, n = theta.shape[1], Y.shape[1]
    diags: dict = {}
    gram = theta.T @ theta + np.eye(p) / spec.relaxation
    thY = theta.T @ Y

    constrained = spec.constraints is not None
    if constrained:
        if work.dropped.size or work.problem.normalize_columns:
            raise SpecError(
                "equality constraints require the original column indexing; "
                "disable normalization and remove zero columns first"
            )
        C, d = _check_constraints(spec, p, n)
        H_big = np.kron(np.eye(n), gram)

    W = np.zeros((p, n))
    Xi = W
    converged = False
    for it in range(spec.max_iter):
        rhs = thY + W / spec.relaxation
        if constrained:
            vec = _constrained_quadratic(H_big, rhs.T.ravel(), C, d, diags)
            Xi = vec.reshape(n, p).T
        else:
            try:
                Xi = np.linalg.solve(gram, rhs)
            except np.linalg.LinAlgError:
                diags["rank_deficient"] = True
                Xi = np.linalg.lstsq(gram, rhs, rcond=None)[0]
        W_new = _sr3_prox(Xi, spec)
        gap = float(np.linalg.norm(Xi - W_new) / np.sqrt(p * n))
        W = W_new
        if gap < spec.tol:
            converged = True
            break
    diags["converged"] = converged
    diags["iterations"] = it + 1
    diags["xi_relaxed"] = Xi

    if not constrained:
        return work.finish(W, diags)

    # Debias on the sparse support while honoring the constraints (off-support
    # entries are pinned to zero, so the constraint rhs is unchanged); if the
    # support cannot satisfy them, fall back to the dense constrained solve.
    mask = (W != 0.0).T.ravel()
    C_s = C[:, mask]
    aug_rank = np.linalg.matrix_rank(np.column_stack([C_s, d]), tol=1e-10)
    if C_s.size and aug_rank == np.linalg.matrix_rank(C_s, tol=1e-10):
        H_s = np.kron(np.eye(n), theta.T @ theta)[np.ix_(mask, mask)]
        rhs_s = thY.T.ravel()[mask]
        vec = np.zeros(p * n)
        vec[mask] = _constrained_quadratic(H_s, rhs_s, C_s, d, diags)
        xi = vec.reshape(n, p).T
    else:
        diags["constrained_support_infeasible"] = True
        xi = Xi
    return work.finish(xi, diags)


# ---------------------------------------------------------------------------
# SSR
# ---------------------------------------------------------------------------


def _ssr_path(work: _Work, spec: SSR) -> list[PathEntry]:
    theta, Y = work.theta, work.targets
    p, n = theta.shape[1], Y.shape[1]
    diags: dict = {}
    supports = [np.ones(p, dtype=bool) for _ in range(n)]
    entries: list[PathEntry] = []
    size = p
    floor = min(spec.min_terms, p)
    while size >= floor:
        xi = np.zeros((p, n))
        for j in range(n):
            act = supports[j]
            xi[act, j] = _lstsq(theta[:, act], Y[:, j], diags)
        entry_xi = np.where(np.column_stack(supports), xi, 0.0)
        residual = float(np.linalg.norm(Y - theta @ entry_xi))
        entries.append(
            PathEntry(work.finish(entry_xi, dict(diags)), size, residual)
        )
        if size == floor:
            break
        for j in range(n):
            act = supports[j]
            mags = np.abs(xi[act, j])
            drop = np.flatnonzero(act)[np.argmin(mags)]
            supports[j] = act.copy()
            supports[j][drop] = False
        size -= 1
    return entries


# ---------------------------------------------------------------------------
# FROLS
# ---------------------------------------------------------------------------


def _frols_order(theta: np.ndarray, y: np.ndarray, max_terms: int, err_tol: float):
    """Greedy selection order and ERR values for one target."""
    m, p = theta.shape
    sigma = float(y @ y)
    if sigma == 0.0:
        return [], []
    A = theta.copy()
    r = y.copy()
    selected: list[int] = []
    errs: list[float] = []
    active = np.ones(p, dtype=bool)
    energy = np.einsum("ij,ij->j", A, A)  # pre-deflation column energy
    for _ in range(max_terms):
        denom = np.einsum("ij,ij->j", A, A)
        # columns nearly exhausted by the selected span are collinear
        usable = active & (denom > 1e-13 * energy)
        if not usable.any():
            break
        err = np.zeros(p)
        proj = A.T @ r
        err[usable] = proj[usable] ** 2 / (denom[usable] * sigma)
        j = int(np.argmax(err))
        if err[j] < err_tol:
            break
        selected.append(j)
        errs.append(float(err[j]))
        q = A[:, j].copy()
        qq = float(q @ q)
        r = r - q * float(q @ r) / qq
        A = A - np.outer(q, (q @ A) / qq)
        active[j] = False
    return selected, errs


def _frols_path(work: _Work, spec: FROLS) -> list[PathEntry]:
    theta, Y = work.theta, work.targets
    p, n = theta.shape[1], Y.shape[1]
    max_terms = p if spec.max_terms is None else min(spec.max_terms, p)
    diags: dict = {}
    orders = [
        _frols_order(theta, Y[:, j], max_terms, spec.err_tol) for j in range(n)
    ]
    diags["err_values"] = [errs for _, errs in orders]
    depth = max((len(sel) for sel, _ in orders), default=0)
    if depth == 0:
        raise FitError("FROLS selected no features (err_tol too large?)")
    entries: list[PathEntry] = []
    for size in range(1, depth + 1):
        xi = np.zeros((p, n))
        for j in range(n):
            sel = orders[j][0][: min(size, len(orders[j][0]))]
            if sel:
                xi[sel, j] = _lstsq(theta[:, sel], Y[:, j], diags)
        residual = float(np.linalg.norm(Y - theta @ xi))
        entries.append(PathEntry(work.finish(xi, dict(diags)), size, residual))
    return entries


# ---------------------------------------------------------------------------
# Public interface
# ---------------------------------------------------------------------------


def solve(problem: Problem, spec: OptimizerSpec) -> Coefficients:
    """Solve the sparse regression problem with the chosen algorithm.

    SSR with holdout selection fits its elimination path on a seeded 75% row
    split, picks the sparsest path entry within a whisker of the minimum
    holdout residual, and refits that support on all rows.
    """
    spec.validate()
    if isinstance(spec, STLSQ):
        return _solve_stlsq(_Work(problem), spec)
    if isinstance(spec, SR3):
        return _solve_sr3(_Work(problem), spec)
    if isinstance(spec, FROLS):
        return _frols_path(_Work(problem), spec)[-1].coefficients
    if isinstance(spec, SSR):
        if spec.selection == "path":
            raise SpecError(
                "SSR selection='path' leaves model choice to the caller; "
                "use solve_path"
            )
        return _ssr_holdout(problem, spec)
    raise SpecError(f"unknown optimizer spec {spec!r}")


def solve_path(problem: Problem, spec: OptimizerSpec) -> list[PathEntry]:
    """Model path for the greedy algorithms (SSR descending, FROLS ascending)."""
    spec.validate()
    work = _Work(problem)
    if isinstance(spec, SSR):
        return _ssr_path(work, spec)
    if isinstance(spec, FROLS):
        return _frols_path(work, spec)
    raise SpecError(f"solve_path requires SSR or FROLS, got {type(spec).__name__}")


def _ssr_holdout(problem: Problem, spec: SSR) -> Coefficients:
    m = problem.theta.shape[0]
    rng = np.random.default_rng(HOLDOUT_SEED)
    perm = rng.permutation(m)
    n_hold = max(1, int(round(HOLDOUT_FRACTION * m)))
    hold, train = np.sort(perm[:n_hold]), np.sort(perm[n_hold:])
    if train.size < 1:
        raise SpecError(f"{m} rows are too few for a holdout split")

    sub = Problem(
        theta=problem.theta[train],
        targets=problem.targets[train],
        sample_weights=(
            None if problem.sample_weights is None else problem.sample_weights[train]
        ),
        normalize_columns=problem.normalize_columns,
        feature_names=problem.feature_names,
    )
    path = _ssr_path(_Work(sub), spec)
    th_h, y_h = problem.theta[hold], problem.targets[hold]

    n = problem.n_targets
    supports = []
    for j in range(n):
        best, best_res = None, np.inf
        for entry in path:
            res = float(
                np.linalg.norm(y_h[:, j] - th_h @ entry.coefficients.xi[:, j])
            )
            if res < best_res * (1.0 - HOLDOUT_TIE_RTOL):
                best, best_res = entry.coefficients.support[:, j], res
        supports.append(best)

    # Refit the selected per-target supports on all rows.
    work = _Work(problem)
    p = work.theta.shape[1]
    keep_idx = np.flatnonzero(work.keep)
    diags: dict = {"holdout_rows": int(n_hold)}
    xi = np.zeros((p, n))
    for j in range(n):
        act_full = supports[j]
        act = np.isin(keep_idx, np.flatnonzero(act_full))
        if act.any():
            xi[act, j] = _lstsq(work.theta[:, act], work.targets[:, j], diags)
    return work.finish(xi, diags)
