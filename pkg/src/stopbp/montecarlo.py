"""Trajectory simulation and unbiased estimators for stopped branching processes.

Estimators draw every particle's offspring through a counter-based stream:
the uniform for draw number c of trajectory i under master seed s is a pure
function mix(key(s, i) + gamma * c).  Trajectories therefore produce
identical outcomes no matter how they are batched or spread over workers,
and estimates are bit-exact reproducible from (seed, reps) alone.

``step`` and ``run_stopped`` are scalar single-trajectory entry points that
accept any numpy Generator; the estimators use the batched engine.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from math import sqrt

import numpy as np

from stopbp.model import BranchingModel, PopulationState, StoppingSet, unit_state

STATUS_DIED = "died_out"
STATUS_STOPPED = "stopped"
STATUS_ALIVE = "alive"
STATUS_EXPLODED = "exploded"

EXPLOSION_LIMIT = 10**7

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64


def _mix(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer; bijective scrambling of 64-bit words."""
    x = (x ^ (x >> _U64(30))) * _M1
    x = (x ^ (x >> _U64(27))) * _M2
    return x ^ (x >> _U64(31))


def trajectory_keys(seed: int, indices: np.ndarray) -> np.ndarray:
    """Per-trajectory stream keys derived from the master seed."""
    base = _mix(np.array([_U64(seed & 0xFFFFFFFFFFFFFFFF)]))[0]
    return _mix(base + _GAMMA * indices.astype(np.uint64))


def _uniforms(keys: np.ndarray, counters: np.ndarray) -> np.ndarray:
    """Uniform(0,1) draws for (stream key, draw counter) pairs."""
    bits = _mix(keys + _GAMMA * counters)
    return (bits >> _U64(11)).astype(np.float64) * (2.0**-53)


# ---------------------------------------------------------------------------
# offspring samplers


@dataclass(eq=False)
class AliasSampler:
    """Walker alias table; one uniform per draw."""

    accept: np.ndarray
    alias: np.ndarray
    atoms: np.ndarray  # (n_atoms, k) offspring count vectors

    @classmethod
    def from_law(cls, law) -> "AliasSampler":
        probs = np.array([p for _, p in law.atoms])
        atoms = np.array([s.counts for s, _ in law.atoms], dtype=np.int64)
        n = len(probs)
        scaled = probs * n
        accept = np.ones(n)
        alias = np.arange(n)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        scaled = scaled.copy()
        while small and large:
            s, l = small.pop(), large.pop()
            accept[s] = scaled[s]
            alias[s] = l
            scaled[l] -= 1.0 - scaled[s]
            (small if scaled[l] < 1.0 else large).append(l)
        return cls(accept=accept, alias=alias, atoms=atoms)

    def pick(self, u: np.ndarray) -> np.ndarray:
        """Atom indices for uniforms in [0, 1)."""
        x = u * len(self.accept)
        idx = x.astype(np.int64)
        frac = x - idx
        return np.where(frac < self.accept[idx], idx, self.alias[idx])


@lru_cache(maxsize=32)
def _samplers(model: BranchingModel) -> tuple[AliasSampler, ...]:
    return tuple(AliasSampler.from_law(law) for law in model.laws)


# ---------------------------------------------------------------------------
# scalar single-trajectory API


@dataclass(eq=False)
class TrajectoryOutcome:
    status: str
    state: PopulationState
    steps: int


def step(state: PopulationState, model: BranchingModel, rng: np.random.Generator) -> PopulationState:
    """One generation: every particle draws offspring independently."""
    samplers = _samplers(model)
    total = np.zeros(model.k, dtype=np.int64)
    for i, c in enumerate(state.counts):
        if c == 0:
            continue
        picks = samplers[i].pick(rng.random(c))
        total += samplers[i].atoms[picks].sum(axis=0)
    return PopulationState(tuple(int(x) for x in total))


def run_stopped(
    n: PopulationState,
    stopping: StoppingSet,
    model: BranchingModel,
    t_max: int,
    rng: np.random.Generator,
) -> TrajectoryOutcome:
    """Simulate until first entry into the stopping set, extinction, or horizon."""
    if n.is_zero:
        raise ValueError("cannot start from the zero state")
    if n in stopping:
        raise ValueError(f"start {n.label()} lies inside the stopping set")
    state = n
    for t in range(1, t_max + 1):
        state = step(state, model, rng)
        if state.is_zero:
            return TrajectoryOutcome(STATUS_DIED, state, t)
        if state in stopping:
            return TrajectoryOutcome(STATUS_STOPPED, state, t)
        if state.total > EXPLOSION_LIMIT:
            return TrajectoryOutcome(STATUS_EXPLODED, state, t)
    return TrajectoryOutcome(STATUS_ALIVE, state, t_max)


# ---------------------------------------------------------------------------
# batched engine


def _batch_step(
    states: np.ndarray,
    keys: np.ndarray,
    counters: np.ndarray,
    samplers: tuple[AliasSampler, ...],
) -> np.ndarray:
    """Advance every trajectory one generation, consuming counter draws."""
    m, k = states.shape
    out = np.zeros_like(states)
    for i, sampler in enumerate(samplers):
        c = states[:, i]
        tot = int(c.sum())
        if tot == 0:
            continue
        pos = np.repeat(np.arange(m), c)
        starts = np.repeat(np.cumsum(c) - c, c)
        local = (np.arange(tot) - starts).astype(np.uint64)
        u = _uniforms(keys[pos], counters[pos] + local)
        drawn = sampler.atoms[sampler.pick(u)]  # (tot, k)
        for j in range(k):
            out[:, j] += np.bincount(pos, weights=drawn[:, j], minlength=m).astype(
                np.int64
            )
        counters += c.astype(np.uint64)
    return out


def _stop_mask(states: np.ndarray, stopping: StoppingSet) -> np.ndarray:
    mask = np.zeros(states.shape[0], dtype=bool)
    for member in stopping:
        mask |= np.all(states == np.asarray(member.counts), axis=1)
    return mask


def _simulate_stopped_batch(
    model: BranchingModel,
    start: PopulationState,
    stopping: StoppingSet,
    t_max: int,
    seed: int,
    indices: np.ndarray,
):
    """Outcome arrays (status code, final state rows, steps) for given trajectories.

    Status codes: 0 alive, 1 died, 2 stopped, 3 exploded.
    """
    samplers = _samplers(model)
    m = len(indices)
    status = np.zeros(m, dtype=np.int8)
    steps = np.full(m, t_max, dtype=np.int64)
    final = np.tile(np.asarray(start.counts, dtype=np.int64), (m, 1))
    # live arrays carry only still-running trajectories
    active = np.arange(m)
    states = final.copy()
    keys = trajectory_keys(seed, indices)
    counters = np.zeros(m, dtype=np.uint64)
    for t in range(1, t_max + 1):
        if active.size == 0:
            break
        states = _batch_step(states, keys, counters, samplers)
        totals = states.sum(axis=1)
        died = totals == 0
        stopped = _stop_mask(states, stopping)
        exploded = totals > EXPLOSION_LIMIT
        done = died | stopped | exploded
        if np.any(done):
            rows = active[done]
            status[rows] = np.where(
                died[done], 1, np.where(stopped[done], 2, 3)
            ).astype(np.int8)
            steps[rows] = t
            final[rows] = states[done]
        keep = ~done
        active = active[keep]
        states = states[keep]
        keys = keys[keep]
        counters = counters[keep]
    if active.size:
        final[active] = states
    return status, final, steps


@dataclass(eq=False)
class Estimate:
    value: float
    stderr: float
    reps: int
    seed: int
    hits: int = 0

    def within(self, exact: float, sigmas: float = 4.0) -> bool:
        return abs(self.value - exact) <= sigmas * self.stderr


def _worker_ranges(reps: int, workers: int) -> list[np.ndarray]:
    bounds = np.linspace(0, reps, workers + 1, dtype=np.int64)
    return [np.arange(a, b) for a, b in zip(bounds, bounds[1:]) if b > a]


def estimate_absorption(
    n: PopulationState,
    r: PopulationState,
    stopping: StoppingSet,
    model: BranchingModel,
    t: int,
    reps: int,
    seed: int,
    workers: int = 1,
) -> Estimate:
    """Fraction of trajectories absorbed at r within t steps.

    Bit-exact reproducible from (seed, reps); the worker count only changes
    how trajectory indices are partitioned, never their outcomes.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if r not in stopping:
        raise ValueError(f"target {r.label()} is not a stopping state")
    if n.is_zero or n in stopping:
        raise ValueError("start must be outside the stopping set and nonzero")
    target = np.asarray(r.counts, dtype=np.int64)

    def count_hits(indices: np.ndarray) -> int:
        status, final, steps = _simulate_stopped_batch(
            model, n, stopping, t, seed, indices
        )
        hit = (status == 2) & np.all(final == target, axis=1) & (steps <= t)
        return int(hit.sum())

    ranges = _worker_ranges(reps, max(1, workers))
    if len(ranges) == 1:
        hits = count_hits(ranges[0])
    else:
        with ThreadPoolExecutor(max_workers=len(ranges)) as pool:
            hits = sum(pool.map(count_hits, ranges))
    p = hits / reps
    return Estimate(
        value=p, stderr=sqrt(p * (1.0 - p) / reps), reps=reps, seed=seed, hits=hits
    )


@dataclass(eq=False)
class YaglomEstimate:
    """Empirical law of the population at a horizon, conditioned on survival."""

    source_type: int
    t: int
    reps: int
    seed: int
    survivors: int
    counts: dict[tuple[int, ...], int] = field(default_factory=dict)

    @property
    def conditioning_frequency(self) -> float:
        return self.survivors / self.reps

    @property
    def conditioning_stderr(self) -> float:
        p = self.conditioning_frequency
        return sqrt(p * (1.0 - p) / self.reps)

    def distribution(self) -> dict[tuple[int, ...], float]:
        if self.survivors == 0:
            return {}
        return {k: v / self.survivors for k, v in self.counts.items()}

    def tv_distance(self, exact) -> float:
        """Total-variation distance to an exact conditional law.

        ``exact`` is either a mapping from count tuples to probabilities or
        an object with ``space``/``p``/``deficit`` attributes (a DP-based
        conditional law); unseen exact mass counts fully.
        """
        if hasattr(exact, "space"):
            mapping = {
                exact.space.state(i).counts: float(exact.p[i])
                for i in np.nonzero(exact.p)[0]
            }
            extra = float(getattr(exact, "deficit", 0.0))
        else:
            mapping = dict(exact)
            extra = 0.0
        mine = self.distribution()
        keys = set(mapping) | set(mine)
        tv = sum(abs(mine.get(k, 0.0) - mapping.get(k, 0.0)) for k in keys) + extra
        return 0.5 * tv


def estimate_yaglom(
    j: int,
    model: BranchingModel,
    t: int,
    reps: int,
    seed: int,
    workers: int = 1,
) -> YaglomEstimate:
    """Empirical conditional law at horizon t from one type-j particle."""
    if not 1 <= j <= model.k:
        raise ValueError(f"type index {j} out of range 1..{model.k}")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    start = unit_state(j, model.k)
    samplers = _samplers(model)

    def run(indices: np.ndarray):
        # extinct rows are all-zero: they draw nothing and stay put, so the
        # free process needs no filtering
        m = len(indices)
        states = np.tile(np.asarray(start.counts, dtype=np.int64), (m, 1))
        keys = trajectory_keys(seed, indices)
        counters = np.zeros(m, dtype=np.uint64)
        for _ in range(t):
            if not states.any():
                break
            states = _batch_step(states, keys, counters, samplers)
        alive = states.sum(axis=1) > 0
        uniq, cnt = np.unique(states[alive], axis=0, return_counts=True)
        return {tuple(int(x) for x in row): int(c) for row, c in zip(uniq, cnt)}

    ranges = _worker_ranges(reps, max(1, workers))
    if len(ranges) == 1:
        merged = run(ranges[0])
    else:
        merged = {}
        with ThreadPoolExecutor(max_workers=len(ranges)) as pool:
            for part in pool.map(run, ranges):
                for key, c in part.items():
                    merged[key] = merged.get(key, 0) + c
    survivors = sum(merged.values())
    return YaglomEstimate(
        source_type=j, t=t, reps=reps, seed=seed, survivors=survivors, counts=merged
    )
