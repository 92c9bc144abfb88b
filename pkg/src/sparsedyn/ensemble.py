"""Bagging-style ensembles of sparse regression fits.

Each member re-solves the problem on resampled rows, optionally with a few
feature columns dropped (their coefficients pinned to zero, so indices stay
stable).  Aggregation is a per-entry median or mean; inclusion probability is
the exact fraction of members retaining a term.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import FitError, SpecError
from .optimize import Coefficients, OptimizerSpec, Problem, solve

_MASK64 = (1 << 64) - 1


def derive_seed(seed: int, index: int) -> int:
    """Decorrelated per-member seed (splitmix64 of seed + index * golden)."""
    z = (seed + index * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class EnsembleSpec:
    """Sub-sampling ensemble configuration.

    ``row_fraction`` of the rows is drawn per member (with replacement for
    bagging, without for plain sub-sampling); ``n_library_drop`` feature
    columns are removed uniformly at random per member.  Aggregate support
    keeps entries whose inclusion probability reaches ``support_threshold``.
    """

    n_models: int = 20
    row_fraction: float = 0.6
    replace: bool = True
    n_library_drop: int = 0
    aggregator: str = "median"
    support_threshold: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if self.n_models < 2:
            raise SpecError(f"n_models must be >= 2, got {self.n_models}")
        if not 0.0 < self.row_fraction <= 1.0:
            raise SpecError(f"row_fraction must be in (0, 1], got {self.row_fraction}")
        if self.n_library_drop < 0:
            raise SpecError("n_library_drop must be >= 0")
        if self.aggregator not in ("median", "mean"):
            raise SpecError(f"aggregator must be median or mean, got {self.aggregator}")
        if not 0.0 < self.support_threshold <= 1.0:
            raise SpecError("support_threshold must be in (0, 1]")


@dataclass(frozen=True)
class EnsembleReport:
    """Member coefficients plus aggregated statistics."""

    member_xi: np.ndarray  # (n_ok, p, n)
    coefficients: Coefficients
    inclusion_probability: np.ndarray  # (p, n)
    iqr: np.ndarray  # (p, n)
    n_failed: int = 0
    failures: tuple[str, ...] = field(default_factory=tuple)


def fit_ensemble(
    problem: Problem, opt: OptimizerSpec, spec: EnsembleSpec
) -> EnsembleReport:
    """Fit ``spec.n_models`` members and aggregate.

    Fully deterministic given the spec seed: member seeds come from
    ``derive_seed``, row indices are sorted after drawing (so full-fraction
    sampling without replacement reproduces the plain solve exactly), and
    aggregation does not depend on completion order.  Members whose solve
    raises are excluded; more than half failing is an error.
    """
    spec.validate()
    m, p = problem.theta.shape
    if spec.n_library_drop >= p:
        raise SpecError(
            f"cannot drop {spec.n_library_drop} of {p} library columns"
        )
    n_rows = max(1, int(round(spec.row_fraction * m)))
    if n_rows < p:
        warnings.warn(
            f"ensemble members see {n_rows} rows for {p} features; "
            "row_fraction may be too small",
            stacklevel=2,
        )

    n = problem.n_targets
    members: list[np.ndarray] = []
    failures: list[str] = []
    for i in range(spec.n_models):
        rng = np.random.default_rng(derive_seed(spec.seed, i))
        if spec.replace:
            rows = np.sort(rng.integers(0, m, size=n_rows))
        else:
            rows = np.sort(rng.permutation(m)[:n_rows])
        if spec.n_library_drop:
            dropped = rng.choice(p, size=spec.n_library_drop, replace=False)
            keep = np.setdiff1d(np.arange(p), dropped)
        else:
            keep = np.arange(p)

        sub = Problem(
            theta=problem.theta[np.ix_(rows, keep)],
            targets=problem.targets[rows],
            sample_weights=(
                None
                if problem.sample_weights is None
                else problem.sample_weights[rows]
            ),
            normalize_columns=problem.normalize_columns,
            feature_names=tuple(problem.names()[j] for j in keep),
        )
        try:
            coeffs = solve(sub, opt)
        except (FitError, SpecError, np.linalg.LinAlgError) as exc:
            failures.append(f"member {i}: {exc}")
            continue
        xi = np.zeros((p, n))
        xi[keep] = coeffs.xi
        members.append(xi)

    if len(members) <= spec.n_models / 2:
        raise FitError(
            f"{len(failures)} of {spec.n_models} ensemble members failed: "
            + "; ".join(failures[:3])
        )

    stack = np.stack(members)
    xi, inclusion, iqr = aggregate_members(stack, spec)
    residuals = np.linalg.norm(problem.targets - problem.theta @ xi, axis=0)
    coefficients = Coefficients(
        xi=xi,
        support=xi != 0.0,
        names=problem.names(),
        residuals=residuals,
        diagnostics={
            "ensemble_members": len(members),
            "ensemble_failed": len(failures),
        },
    )
    return EnsembleReport(
        member_xi=stack,
        coefficients=coefficients,
        inclusion_probability=inclusion,
        iqr=iqr,
        n_failed=len(failures),
        failures=tuple(failures),
    )


def aggregate_members(
    stack: np.ndarray, spec: EnsembleSpec
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Aggregate an (n_members, p, n) coefficient stack.

    Returns (aggregated xi, inclusion probability, interquartile range); the
    aggregate is zeroed wherever inclusion falls below the support threshold.
    """
    inclusion = (stack != 0.0).sum(axis=0) / stack.shape[0]
    if spec.aggregator == "median":
        agg = np.median(stack, axis=0)
    else:
        agg = stack.mean(axis=0)
    xi = np.where(inclusion >= spec.support_threshold, agg, 0.0)
    q75, q25 = np.percentile(stack, [75, 25], axis=0)
    return xi, inclusion, q75 - q25
