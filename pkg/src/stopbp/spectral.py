"""Factorial moments and Perron spectral analysis of branching models.

The first-moment matrix A has entry (i, j) equal to the expected number of
type-j offspring of a single type-i particle.  For an indecomposable
aperiodic model, power iteration yields the Perron root delta with positive
right eigenvector f and positive left eigenvector nu, normalized so that
nu sums to 1 and sum_i f_i nu_i = 1.  Subcritical means delta < 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd
from typing import Optional

import numpy as np

from stopbp.model import BranchingModel

EDGE_TOL = 1e-12
CRITICAL_BAND = 1e-9


class ConvergenceError(RuntimeError):
    """Power iteration failed to reach the requested tolerance."""


@dataclass(eq=False)
class MomentData:
    """First (A) and second (B) factorial moments of the offspring laws."""

    A: np.ndarray  # (k, k)
    B: np.ndarray  # (k, k, k), symmetric in the last two indices


def first_moments(model: BranchingModel) -> np.ndarray:
    """A[i, j] = expected count of type-j offspring from one type-i parent."""
    k = model.k
    A = np.zeros((k, k))
    for i, law in enumerate(model.laws):
        for state, p in law.atoms:
            A[i] += p * np.asarray(state.counts, dtype=float)
    return A


def second_moments(model: BranchingModel) -> np.ndarray:
    """B[i, j, l] = E[c_j c_l - delta_jl c_j] over type i's offspring law."""
    k = model.k
    B = np.zeros((k, k, k))
    eye = np.eye(k)
    for i, law in enumerate(model.laws):
        for state, p in law.atoms:
            c = np.asarray(state.counts, dtype=float)
            B[i] += p * (np.outer(c, c) - eye * c)
    return B


def moments(model: BranchingModel) -> MomentData:
    return MomentData(A=first_moments(model), B=second_moments(model))


# ---------------------------------------------------------------------------
# graph structure of the mean matrix


def _adjacency(A: np.ndarray, tol: float) -> np.ndarray:
    return A > tol


def _reachable(adj: np.ndarray, start: int) -> np.ndarray:
    k = adj.shape[0]
    seen = np.zeros(k, dtype=bool)
    seen[start] = True
    frontier = [start]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.nonzero(adj[u])[0]:
                if not seen[v]:
                    seen[v] = True
                    nxt.append(int(v))
        frontier = nxt
    return seen


def is_strongly_connected(A: np.ndarray, tol: float = EDGE_TOL) -> bool:
    adj = _adjacency(A, tol)
    return bool(_reachable(adj, 0).all() and _reachable(adj.T, 0).all())


def graph_period(A: np.ndarray, tol: float = EDGE_TOL) -> int:
    """Period of a strongly connected type graph.

    Breadth-first labeling from node 0; the period is the gcd of
    level(u) + 1 - level(v) over all edges u -> v.
    """
    adj = _adjacency(A, tol)
    k = adj.shape[0]
    level = np.full(k, -1, dtype=np.int64)
    level[0] = 0
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.nonzero(adj[u])[0]:
                if level[v] < 0:
                    level[v] = level[u] + 1
                    nxt.append(int(v))
        frontier = nxt
    d = 0
    for u in range(k):
        for v in np.nonzero(adj[u])[0]:
            d = gcd(d, int(level[u] + 1 - level[v]))
    return abs(d) if d else 0


# ---------------------------------------------------------------------------
# power iteration


def _power_iteration(M: np.ndarray, tol: float, max_iter: int):
    """Dominant eigenvalue and positive eigenvector of a nonnegative matrix.

    Stops when successive eigenvalue estimates agree within ``tol``; keeps
    iterating a few extra rounds afterwards to polish the vector.
    """
    k = M.shape[0]
    x = np.ones(k) / k
    lam = 0.0
    for it in range(1, max_iter + 1):
        y = M @ x
        norm = float(y.sum())
        if norm <= 0.0:
            # dominant eigenvalue 0 (nilpotent mean matrix)
            return 0.0, x, it
        lam_new = norm / float(x.sum())
        x = y / norm
        if abs(lam_new - lam) < tol and it > 4:
            return lam_new, x, it
        lam = lam_new
    raise ConvergenceError(f"power iteration did not converge in {max_iter} steps")


def spectral_radius(A: np.ndarray, tol: float = 1e-14, max_iter: int = 200_000) -> float:
    """Perron root of a nonnegative matrix.

    Iterates on A + I so the estimate converges for periodic and reducible
    matrices as well; the shift moves every eigenvalue by one without
    touching the eigenvectors.
    """
    shifted, _, _ = _power_iteration(A + np.eye(A.shape[0]), tol, max_iter)
    return max(shifted - 1.0, 0.0)


@dataclass(eq=False)
class Classification:
    indecomposable: bool
    period: Optional[int]  # None when decomposable
    delta: float
    criticality: str  # subcritical | critical | supercritical | boundary


def classify(
    moment_data: MomentData,
    edge_tol: float = EDGE_TOL,
    critical_band: float = CRITICAL_BAND,
) -> Classification:
    """Structure flags of the mean matrix: connectivity, period, criticality.

    ``boundary`` labels the degenerate case where the Perron root sits in
    the critical band but the second-moment form is not strictly positive
    (for example a deterministic one-child law).
    """
    A = np.asarray(moment_data.A, dtype=float)
    indecomposable = is_strongly_connected(A, edge_tol)
    period = graph_period(A, edge_tol) if indecomposable else None
    delta = spectral_radius(A)
    if delta < 1.0 - critical_band:
        criticality = "subcritical"
    elif delta > 1.0 + critical_band:
        criticality = "supercritical"
    else:
        shift = np.eye(A.shape[0])
        _, f, _ = _power_iteration(A + shift, 1e-14, 200_000)
        _, nu, _ = _power_iteration(A.T + shift, 1e-14, 200_000)
        form = float(np.einsum("i,ijk,j,k->", f, moment_data.B, nu, nu))
        criticality = "critical" if form > 0.0 else "boundary"
    return Classification(
        indecomposable=indecomposable, period=period, delta=delta, criticality=criticality
    )


@dataclass(eq=False)
class SpectralSummary:
    """Perron triple with classification flags and optional survival constants."""

    delta: float
    f: np.ndarray
    nu: np.ndarray
    indecomposable: bool
    period: int
    criticality: str
    residual_f: float
    residual_nu: float
    iterations: int
    K: Optional[np.ndarray] = None  # per-type survival constants, 0-based

    def report(self) -> dict:
        """JSON-ready summary."""
        return {
            "delta": self.delta,
            "f": [float(x) for x in self.f],
            "nu": [float(x) for x in self.nu],
            "period": self.period,
            "flags": {
                "indecomposable": self.indecomposable,
                "criticality": self.criticality,
            },
            "residuals": {"f": self.residual_f, "nu": self.residual_nu},
            "K": None if self.K is None else [float(x) for x in self.K],
        }


def perron_triple(
    moment_data: MomentData | np.ndarray,
    tol: float = 1e-15,
    max_iter: int = 200_000,
) -> SpectralSummary:
    """Perron root and its positive left/right eigenvectors.

    Requires an indecomposable aperiodic mean matrix, for which plain power
    iteration on A and its transpose converges.  The left vector nu is
    scaled to sum to 1, then the right vector f so that sum_i f_i nu_i = 1.
    """
    if isinstance(moment_data, MomentData):
        classification = classify(moment_data)
        A = np.asarray(moment_data.A, dtype=float)
    else:
        A = np.asarray(moment_data, dtype=float)
        classification = classify(MomentData(A=A, B=np.zeros((A.shape[0],) * 3)))
    if not classification.indecomposable:
        raise ValueError("mean matrix is decomposable; Perron triple not computed")
    if classification.period != 1:
        raise ValueError(
            f"type graph has period {classification.period}; power iteration "
            "needs an aperiodic model"
        )
    _, f, it_f = _power_iteration(A, tol, max_iter)
    _, nu, it_nu = _power_iteration(A.T, tol, max_iter)
    nu = nu / nu.sum()
    f = f / float(np.dot(f, nu))
    # generalized Rayleigh quotient: eigenvalue error is second order in
    # the (already converged) vector errors
    delta = float(nu @ A @ f) / float(np.dot(nu, f))
    residual_f = float(np.max(np.abs(A @ f - delta * f)))
    residual_nu = float(np.max(np.abs(nu @ A - delta * nu)))
    return SpectralSummary(
        delta=float(delta),
        f=f,
        nu=nu,
        indecomposable=True,
        period=1,
        criticality=classification.criticality,
        residual_f=residual_f,
        residual_nu=residual_nu,
        iterations=max(it_f, it_nu),
    )


def moment_asymptotics(
    moment_data: MomentData | np.ndarray, summary: SpectralSummary, t_max: int
) -> np.ndarray:
    """Error curve e(t) = max_ij |A^t delta^-t - f nu|, for t = 1..t_max.

    Decays geometrically at the ratio of the second eigenvalue to the
    Perron root; the scaled power is accumulated incrementally so neither
    factor overflows.
    """
    A = moment_data.A if isinstance(moment_data, MomentData) else np.asarray(moment_data)
    target = np.outer(summary.f, summary.nu)
    scaled = A / summary.delta
    power = np.eye(A.shape[0])
    out = np.empty(t_max)
    for t in range(1, t_max + 1):
        power = power @ scaled
        out[t - 1] = float(np.max(np.abs(power - target)))
    return out


@dataclass(eq=False)
class SurvivalConstant:
    """Estimates of the geometric survival constant for one starting type."""

    type_index: int  # 1-based
    estimates: np.ndarray  # K_l = survival(l) * delta^-l, l = 1..l_max
    ratios: np.ndarray  # survival(l+1) / survival(l), l = 1..l_max-1
    delta: float

    @property
    def value(self) -> float:
        return float(self.estimates[-1])


def survival_constant(
    model: BranchingModel,
    j: int,
    l_max: int,
    summary: Optional[SpectralSummary] = None,
) -> SurvivalConstant:
    """Limit constant K_j in survival(l) ~ K_j delta^l from one type-j particle.

    Survival probabilities are iterated in survival form (never forming
    1 - h directly), so the estimates stay accurate even when the survival
    probability underflows far below machine epsilon relative to 1.
    """
    from stopbp import genfun

    if summary is None:
        summary = perron_triple(moments(model))
    if not summary.delta < 1.0:
        raise ValueError(
            f"survival constant needs a subcritical model (delta={summary.delta:.6g})"
        )
    if not 1 <= j <= model.k:
        raise ValueError(f"type index {j} out of range 1..{model.k}")
    delta = summary.delta
    r = np.ones(model.k)
    estimates = np.empty(l_max)
    survivals = np.empty(l_max)
    scale = 1.0
    for l in range(1, l_max + 1):
        r = genfun.survival_map(model, r)
        scale /= delta
        survivals[l - 1] = r[j - 1]
        estimates[l - 1] = r[j - 1] * scale
    ratios = survivals[1:] / survivals[:-1]
    result = SurvivalConstant(
        type_index=j, estimates=estimates, ratios=ratios, delta=delta
    )
    if not result.value > 0.0:
        raise ArithmeticError(
            f"survival constant for type {j} is not positive: {result.value!r}"
        )
    return result


def survival_constants(
    model: BranchingModel, l_max: int, summary: Optional[SpectralSummary] = None
) -> np.ndarray:
    """K_j for every type, as a 0-based array; also stored on the summary."""
    if summary is None:
        summary = perron_triple(moments(model))
    K = np.array(
        [survival_constant(model, j, l_max, summary).value for j in range(1, model.k + 1)]
    )
    summary.K = K
    return K
