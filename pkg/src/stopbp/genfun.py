"""Generating-function evaluation, survival functionals, and Yaglom limits.

The probability generating map h sends s in [0,1]^k to the vector of
per-type offspring pgf values; its t-fold composition gives the law of the
population at time t.  Survival quantities 1 - h(t, s) are iterated in
"survival form" via expm1/log1p so they remain accurate in relative terms
even when many orders of magnitude below machine epsilon.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from stopbp import exact_engine
from stopbp.model import BranchingModel, PopulationState

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29)


def _law_arrays(model: BranchingModel):
    """Per type: (atom count matrix, probability vector)."""
    out = []
    for law in model.laws:
        counts = np.array([state.counts for state, _ in law.atoms], dtype=float)
        probs = np.array([p for _, p in law.atoms])
        out.append((counts, probs))
    return out


def _check_unit_box(s: np.ndarray, k: int):
    if s.shape[-1] != k:
        raise ValueError(f"argument has dimension {s.shape[-1]}, model has {k} types")
    if np.any(s < 0.0) or np.any(s > 1.0):
        raise ValueError("argument must lie in [0, 1]^k")


def eval_h(model: BranchingModel, s) -> np.ndarray:
    """One-step generating map h(s); accepts a vector or a batch (m, k)."""
    s = np.asarray(s, dtype=float)
    _check_unit_box(s, model.k)
    batch = np.atleast_2d(s)
    out = np.empty_like(batch)
    for i, (counts, probs) in enumerate(_law_arrays(model)):
        # batch (m, k) against atoms (a, k): product over types per atom
        powers = batch[:, None, :] ** counts[None, :, :]
        out[:, i] = powers.prod(axis=2) @ probs
    return out.reshape(s.shape)


def survival_map(model: BranchingModel, r) -> np.ndarray:
    """Stable evaluation of 1 - h(1 - r) for survival vectors r in [0, 1]^k.

    Uses 1 - prod_j (1 - r_j)^c_j = -expm1(sum_j c_j log1p(-r_j)); exact in
    relative terms for r arbitrarily close to 0, where the plain form would
    cancel to zero.
    """
    r = np.asarray(r, dtype=float)
    _check_unit_box(r, model.k)
    batch = np.atleast_2d(r)
    with np.errstate(divide="ignore"):
        logs = np.log1p(-batch)  # -inf where r = 1
    out = np.empty_like(batch)
    for i, (counts, probs) in enumerate(_law_arrays(model)):
        with np.errstate(invalid="ignore"):
            raw = counts[None, :, :] * logs[:, None, :]
        # c = 0 contributes nothing even where log1p(-r) = -inf
        raw = np.where(counts[None, :, :] > 0, raw, 0.0)
        exponents = raw.sum(axis=2)
        out[:, i] = -(np.expm1(exponents) @ probs)
    return out.reshape(r.shape)


def iterate_survival(model: BranchingModel, t: int, s=None, r0=None) -> np.ndarray:
    """Survival vector 1 - h(t, s), iterated in survival form.

    Start either from an argument ``s`` (r0 = 1 - s) or directly from a
    survival vector ``r0``.
    """
    if (s is None) == (r0 is None):
        raise ValueError("give exactly one of s or r0")
    if r0 is None:
        s = np.asarray(s, dtype=float)
        _check_unit_box(s, model.k)
        r = 1.0 - s
    else:
        r = np.asarray(r0, dtype=float).copy()
    for _ in range(t):
        r = survival_map(model, r)
    return r


@dataclass(eq=False)
class GenFunEvaluation:
    """Value of the t-step generating map with its survival companions.

    ``h`` comes from plain t-fold composition; ``R`` = 1 - h(t, s) and
    ``Q`` = 1 - h(t, 0) are iterated in survival form, so R and 1 - h agree
    only up to accumulated rounding once survival drops near epsilon.
    """

    t: int
    s: np.ndarray
    h: np.ndarray
    R: np.ndarray
    Q: np.ndarray


def iterate_h(model: BranchingModel, t: int, s) -> GenFunEvaluation:
    """t-fold composition of the generating map, plus survival vectors."""
    if t < 0:
        raise ValueError("t must be >= 0")
    s = np.asarray(s, dtype=float)
    _check_unit_box(s, model.k)
    h = s.copy()
    for _ in range(t):
        h = eval_h(model, h)
    R = iterate_survival(model, t, s=s)
    Q = iterate_survival(model, t, r0=np.ones(model.k))
    return GenFunEvaluation(t=t, s=s, h=h, R=R, Q=Q)


def make_s_grid(k: int, n_points: int, include_corners: bool = True) -> np.ndarray:
    """Deterministic argument grid in [0, 1)^k.

    A Kronecker additive-recurrence lattice (irrational steps sqrt(prime)),
    optionally prefixed with the product grid {0, 0.5, 0.9}^k.  Stable
    across runs by construction; no RNG involved.
    """
    if k > len(_PRIMES):
        raise ValueError(f"grids support up to {len(_PRIMES)} types")
    rows = []
    if include_corners and k <= 5:
        mesh = np.meshgrid(*([np.array([0.0, 0.5, 0.9])] * k), indexing="ij")
        rows.append(np.stack([m.ravel() for m in mesh], axis=1))
    alpha = np.sqrt(np.array(_PRIMES[:k], dtype=float))
    m = np.arange(1, n_points + 1)[:, None]
    rows.append((m * alpha[None, :]) % 1.0)
    return np.concatenate(rows, axis=0)


# ---------------------------------------------------------------------------
# ratio convergence table


@dataclass(eq=False)
class RatioRecord:
    t: int
    s: np.ndarray
    ratios: np.ndarray
    deviation_nu: float
    deviation_fixed_point: float


@dataclass(eq=False)
class RatioLimitTable:
    """Convergence table for the survival-ratio vector R^i / (f_k R^k).

    ``target_nu`` is the invariant-measure target; ``target_fixed_point``
    is f_i / f_k^2, the value the ratio actually converges to when survival
    vectors align with the eigenfunction direction f.  Both deviations are
    tracked so the table documents which law the data follows.
    """

    k_ref: int  # 1-based
    target_nu: np.ndarray
    target_fixed_point: np.ndarray
    records: list[RatioRecord]

    def worst_deviation_nu(self, t: int) -> float:
        return max(r.deviation_nu for r in self.records if r.t == t)

    def worst_deviation_fixed_point(self, t: int) -> float:
        return max(r.deviation_fixed_point for r in self.records if r.t == t)

    def write_csv(self, fh):
        fh.write("t,s,value,target,abs_error\n")
        for rec in self.records:
            s_txt = "[" + " ".join(f"{x:.6g}" for x in np.atleast_1d(rec.s)) + "]"
            for value, target in zip(rec.ratios, self.target_nu):
                fh.write(
                    f'{rec.t},"{s_txt}",{value:.17g},{target:.17g},'
                    f"{abs(value - target):.17g}\n"
                )


def ratio_limit(
    model: BranchingModel,
    summary,
    k_ref: int,
    s_grid: np.ndarray,
    t_max: int,
    t_record: Optional[Sequence[int]] = None,
) -> RatioLimitTable:
    """Track R^i(t, s) / (f_k R^k(t, s)) across the grid and horizons.

    Errors out if the reference component's survival vanishes at some grid
    point (which happens exactly at s = 1, excluded by assumption).
    """
    if not 1 <= k_ref <= model.k:
        raise ValueError(f"reference type {k_ref} out of range 1..{model.k}")
    s_grid = np.atleast_2d(np.asarray(s_grid, dtype=float))
    _check_unit_box(s_grid, model.k)
    if np.any(np.all(s_grid == 1.0, axis=1)):
        raise ValueError("the all-ones argument is excluded (survival is zero there)")
    f = np.asarray(summary.f, dtype=float)
    nu = np.asarray(summary.nu, dtype=float)
    fk = f[k_ref - 1]
    fixed_point = f / (fk * fk)
    if t_record is None:
        t_record = range(1, t_max + 1)
    record_set = set(int(t) for t in t_record)
    records = []
    r = 1.0 - s_grid
    for t in range(1, t_max + 1):
        r = survival_map(model, r)
        if t not in record_set:
            continue
        ref = r[:, k_ref - 1]
        if np.any(ref <= 0.0):
            raise ValueError(f"reference survival component vanished at t={t}")
        ratios = r / (fk * ref[:, None])
        for row in range(s_grid.shape[0]):
            records.append(
                RatioRecord(
                    t=t,
                    s=s_grid[row],
                    ratios=ratios[row],
                    deviation_nu=float(np.max(np.abs(ratios[row] - nu))),
                    deviation_fixed_point=float(
                        np.max(np.abs(ratios[row] - fixed_point))
                    ),
                )
            )
    return RatioLimitTable(
        k_ref=k_ref,
        target_nu=nu,
        target_fixed_point=fixed_point,
        records=records,
    )


def mean_dominance(model: BranchingModel, s_grid: np.ndarray, A=None) -> float:
    """Worst violation of A(1-s) >= 1 - h(s) over the grid (0 when none).

    The one-step survival vector is dominated componentwise by the mean
    matrix applied to 1 - s; concavity of the generating map makes the
    difference nonnegative for every s in the unit box.
    """
    from stopbp.spectral import first_moments

    if A is None:
        A = first_moments(model)
    s_grid = np.atleast_2d(np.asarray(s_grid, dtype=float))
    _check_unit_box(s_grid, model.k)
    ones_minus = 1.0 - s_grid
    lhs = ones_minus @ np.asarray(A, dtype=float).T
    rhs = survival_map(model, ones_minus)
    gap = lhs - rhs
    return float(max(0.0, -gap.min()))


# ---------------------------------------------------------------------------
# Yaglom conditional limit


@dataclass(eq=False)
class YaglomData:
    """Conditional law of the population at a horizon, given non-extinction.

    ``p`` is indexed by state-space ordinal (entry 0, the zero state, is
    zero by construction); ``deficit`` is the conditional mass that left
    the capped space, reported and never renormalized away.
    """

    source_type: int  # 1-based
    t: int
    space: exact_engine.StateSpace
    p: np.ndarray
    deficit: float
    snapshot_distance: float  # TV distance between horizons t and t - lag
    snapshot_lag: int

    def probability(self, state: PopulationState) -> float:
        return float(self.p[self.space.ordinal(state)])

    def support(self) -> list[PopulationState]:
        return [self.space.state(i) for i in np.nonzero(self.p)[0]]

    def mean_vector(self) -> np.ndarray:
        return self.p @ self.space.states_array()

    def tv_distance(self, other: "YaglomData") -> float:
        if other.space is not self.space:
            raise ValueError("distributions live on different spaces")
        return 0.5 * float(np.abs(self.p - other.p).sum()) + 0.5 * abs(
            self.deficit - other.deficit
        )


def _conditional_split(v: np.ndarray) -> tuple[np.ndarray, float]:
    """Conditional law given non-extinction, from a distribution vector.

    The non-extinction mass is summed over the nonzero entries directly
    (never as 1 minus the extinction mass, which cancels catastrophically
    once extinction is nearly certain).
    """
    alive = float(v[1:].sum())
    if alive <= 0.0:
        raise ArithmeticError("no surviving mass to condition on")
    # p covers real states only; the overflow share becomes the deficit
    p = np.zeros(v.shape[0] - 1)
    p[1:] = v[1:-1] / alive
    return p, float(v[-1] / alive)


def yaglom(
    model: BranchingModel,
    space: exact_engine.StateSpace,
    j: int,
    t: int,
    snapshot_lag: int = 5,
) -> YaglomData:
    """Conditional population law at horizon t from one type-j particle.

    Requires enough cap that the conditional overflow deficit stays below
    1 percent; raises otherwise.
    """
    if not 1 <= j <= model.k:
        raise ValueError(f"type index {j} out of range 1..{model.k}")
    if t < 1:
        raise ValueError("t must be >= 1")
    kernel = exact_engine.one_step_kernel(model, space)
    start = np.zeros(space.size)
    from stopbp.model import unit_state

    start[space.ordinal(unit_state(j, space.k))] = 1.0
    v = start
    earlier = None
    lag = min(snapshot_lag, t - 1) if t > 1 else 0
    for step in range(1, t + 1):
        v = v @ kernel.matrix
        if lag and step == t - lag:
            earlier = v.copy()
    p, deficit = _conditional_split(v)
    if deficit >= 0.01:
        raise exact_engine.CapacityError(
            f"conditional overflow deficit {deficit:.3g} >= 0.01; raise the cap"
        )
    if earlier is not None:
        p_prev, d_prev = _conditional_split(earlier)
        snapshot = 0.5 * float(np.abs(p - p_prev).sum()) + 0.5 * abs(deficit - d_prev)
    else:
        snapshot = float("nan")
    return YaglomData(
        source_type=j,
        t=t,
        space=space,
        p=p,
        deficit=deficit,
        snapshot_distance=snapshot,
        snapshot_lag=lag,
    )


def h_star(data: YaglomData, s) -> np.ndarray:
    """Generating function of the conditional law at the tabulated horizon."""
    s = np.asarray(s, dtype=float)
    _check_unit_box(s, data.space.k)
    batch = np.atleast_2d(s)
    counts = data.space.states_array()  # (n, k)
    powers = batch[:, None, :] ** counts[None, :, :].astype(float)
    values = powers.prod(axis=2) @ data.p[: data.space.n_states]
    return values.reshape(s.shape[:-1]) if s.ndim > 1 else float(values[0])


@dataclass(eq=False)
class YaglomResidualReport:
    """Fixed-point-relation residuals of the conditional-limit pgf."""

    max_residual: float
    boundary_at_zero: float  # h*(0), should be 0
    boundary_at_one: float  # h*(1), equals 1 - deficit
    delta: float
    rows: list[tuple[np.ndarray, float, float]]  # (s, lhs, rhs)

    def write_csv(self, fh, t: int):
        fh.write("t,s,value,target,abs_error\n")
        for s, lhs, rhs in self.rows:
            s_txt = "[" + " ".join(f"{x:.6g}" for x in np.atleast_1d(s)) + "]"
            fh.write(f'{t},"{s_txt}",{lhs:.17g},{rhs:.17g},{abs(lhs - rhs):.17g}\n')


def yaglom_residual(
    model: BranchingModel, data: YaglomData, summary, s_grid: np.ndarray
) -> YaglomResidualReport:
    """Check 1 - h*(h(s)) = delta (1 - h*(s)) over a grid.

    Uses the truncated conditional law as-is; the residual honestly carries
    the truncation deficit.
    """
    s_grid = np.atleast_2d(np.asarray(s_grid, dtype=float))
    _check_unit_box(s_grid, model.k)
    delta = float(summary.delta)
    hs = np.atleast_2d(eval_h(model, s_grid))
    lhs = 1.0 - np.atleast_1d(h_star(data, hs))
    rhs = delta * (1.0 - np.atleast_1d(h_star(data, s_grid)))
    rows = [(s_grid[i], float(lhs[i]), float(rhs[i])) for i in range(s_grid.shape[0])]
    zero = np.zeros(model.k)
    one = np.ones(model.k)
    return YaglomResidualReport(
        max_residual=float(np.max(np.abs(lhs - rhs))),
        boundary_at_zero=float(h_star(data, zero)),
        boundary_at_one=float(h_star(data, one)),
        delta=delta,
        rows=rows,
    )


def single_offspring_matrix(model: BranchingModel) -> np.ndarray:
    """M[i, j] = probability that a type-i parent leaves exactly one type-j child.

    Positivity of some column entry for every j is the precondition for the
    conditional-limit law to charge every single-particle state.
    """
    k = model.k
    M = np.zeros((k, k))
    for i, law in enumerate(model.laws):
        for state, p in law.atoms:
            if state.total == 1:
                M[i, state.counts.index(1)] += p
    return M


def single_offspring_reachable(model: BranchingModel) -> bool:
    """True when every type appears as some parent's single-child outcome."""
    return bool(np.all(single_offspring_matrix(model).max(axis=0) > 0.0))
