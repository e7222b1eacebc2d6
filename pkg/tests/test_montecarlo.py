import numpy as np
import pytest

from stopbp.exact_engine import absorb_direct, enumerate_states, one_step_kernel
from stopbp.genfun import iterate_survival, yaglom
from stopbp.model import PopulationState, StoppingSet
from stopbp.montecarlo import (
    STATUS_ALIVE,
    STATUS_DIED,
    STATUS_STOPPED,
    AliasSampler,
    estimate_absorption,
    estimate_yaglom,
    run_stopped,
    step,
    trajectory_keys,
    _uniforms,
)

S = PopulationState


def rng(seed=0):
    return np.random.default_rng(seed)


class TestCounterStream:
    def test_deterministic(self):
        idx = np.arange(10)
        a = trajectory_keys(42, idx)
        b = trajectory_keys(42, idx)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, trajectory_keys(43, idx))

    def test_uniform_range_and_spread(self):
        keys = trajectory_keys(7, np.arange(200_000))
        u = _uniforms(keys, np.zeros(200_000, dtype=np.uint64))
        assert np.all((u >= 0.0) & (u < 1.0))
        assert abs(u.mean() - 0.5) < 0.003
        assert abs(np.var(u) - 1 / 12) < 0.001


class TestAliasSampler:
    def test_frequencies_match_law(self, m2):
        model, _ = m2
        sampler = AliasSampler.from_law(model.laws[0])
        picks = sampler.pick(rng(1).random(200_000))
        freq = np.bincount(picks, minlength=3) / 200_000
        probs = [p for _, p in model.laws[0].atoms]
        np.testing.assert_allclose(freq, probs, atol=0.005)

    def test_single_atom(self):
        from stopbp.model import OffspringLaw

        law = OffspringLaw(((S((1, 0)), 1.0),))
        sampler = AliasSampler.from_law(law)
        assert np.all(sampler.pick(rng(2).random(100)) == 0)


class TestStep:
    def test_zero_absorbing(self, m1):
        model, _ = m1
        assert step(S((0,)), model, rng()) == S((0,))

    def test_m1_frequencies(self, m1):
        model, _ = m1
        g = rng(5)
        outcomes = [step(S((1,)), model, g).counts[0] for _ in range(100_000)]
        p0 = outcomes.count(0) / len(outcomes)
        exact, sigma = 0.7, np.sqrt(0.7 * 0.3 / 100_000)
        assert abs(p0 - exact) <= 4 * sigma

    def test_m2_mean_total(self, m2):
        # row sums of the mean matrix: from (1,1) the expected next total
        # is (0.4 + 0.3) + (0.4 + 0.0) = 1.1
        model, _ = m2
        g = rng(9)
        totals = np.array([step(S((1, 1)), model, g).total for _ in range(100_000)])
        sigma = totals.std() / np.sqrt(len(totals))
        assert abs(totals.mean() - 1.1) <= 4 * sigma


class TestRunStopped:
    def test_m1_one_step_resolution(self, m1):
        # from one particle the trajectory always resolves at step 1:
        # either dead at 0 or stopped at (2)
        model, stopping = m1
        g = rng(3)
        stops = 0
        for _ in range(20_000):
            out = run_stopped(S((1,)), stopping, model, 50, g)
            assert out.steps == 1
            assert out.status in (STATUS_DIED, STATUS_STOPPED)
            if out.status == STATUS_STOPPED:
                assert out.state == S((2,))
                stops += 1
        sigma = np.sqrt(0.3 * 0.7 / 20_000)
        assert abs(stops / 20_000 - 0.3) <= 4 * sigma

    def test_zero_horizon(self, m1):
        model, stopping = m1
        out = run_stopped(S((1,)), stopping, model, 0, rng())
        assert out.status == STATUS_ALIVE
        assert out.state == S((1,))
        assert out.steps == 0

    def test_start_in_stopping_set_rejected(self, m1):
        model, stopping = m1
        with pytest.raises(ValueError, match="stopping set"):
            run_stopped(S((2,)), stopping, model, 5, rng())
        with pytest.raises(ValueError, match="zero"):
            run_stopped(S((0,)), stopping, model, 5, rng())

    def test_stopping_checked_before_branching(self, m2):
        # a trajectory that reports "stopped" must sit exactly on a
        # stopping state, and its step count is the first entry time
        model, stopping = m2
        g = rng(13)
        for _ in range(2000):
            out = run_stopped(S((0, 2)), stopping, model, 30, g)
            if out.status == STATUS_STOPPED:
                assert out.state in stopping


class TestEstimateAbsorption:
    def test_m1_matches_exact(self, m1):
        model, stopping = m1
        est = estimate_absorption(S((1,)), S((2,)), stopping, model, 5, 100_000, 42)
        assert est.within(0.3)

    def test_m2_matches_exact_engine(self, m2):
        model, stopping = m2
        kernel = one_step_kernel(model, enumerate_states(2, 40))
        exact = absorb_direct(kernel, stopping, S((0, 2)), S((1, 0)), 10)
        est = estimate_absorption(S((0, 2)), S((1, 0)), stopping, model, 10, 100_000, 7)
        assert est.within(exact)

    def test_single_rep(self, m1):
        model, stopping = m1
        est = estimate_absorption(S((1,)), S((2,)), stopping, model, 5, 1, 0)
        assert est.value in (0.0, 1.0)
        assert est.stderr == 0.0

    def test_seed_determinism(self, m1):
        model, stopping = m1
        a = estimate_absorption(S((1,)), S((2,)), stopping, model, 5, 50_000, 11)
        b = estimate_absorption(S((1,)), S((2,)), stopping, model, 5, 50_000, 11)
        assert a.value == b.value and a.hits == b.hits

    def test_worker_count_invariance(self, m2):
        model, stopping = m2
        results = [
            estimate_absorption(
                S((0, 2)), S((1, 0)), stopping, model, 10, 20_000, 99, workers=w
            )
            for w in (1, 2, 3, 7)
        ]
        assert len({r.value for r in results}) == 1
        assert len({r.hits for r in results}) == 1

    def test_invalid_inputs(self, m1):
        model, stopping = m1
        with pytest.raises(ValueError):
            estimate_absorption(S((2,)), S((2,)), stopping, model, 5, 10, 0)
        with pytest.raises(ValueError):
            estimate_absorption(S((1,)), S((3,)), stopping, model, 5, 10, 0)
        with pytest.raises(ValueError):
            estimate_absorption(S((1,)), S((2,)), stopping, model, 5, 0, 0)


class TestEstimateYaglom:
    def test_conditioning_frequency_matches_survival(self, m1):
        # survival from one particle at t = 6 via the generating map
        model, _ = m1
        t = 6
        exact = float(iterate_survival(model, t, s=np.zeros(1))[0])
        est = estimate_yaglom(1, model, t, 200_000, 21)
        assert abs(est.conditioning_frequency - exact) <= 4 * est.conditioning_stderr

    def test_tv_against_exact_conditional(self, m1):
        model, _ = m1
        space = enumerate_states(1, 80)
        exact = yaglom(model, space, 1, 6)
        est = estimate_yaglom(1, model, 6, 500_000, 33)
        assert est.survivors > 1000
        assert est.tv_distance(exact) < 0.05

    def test_zero_horizon_point_mass(self, m1):
        model, _ = m1
        est = estimate_yaglom(1, model, 0, 100, 0)
        assert est.distribution() == {(1,): 1.0}
        assert est.conditioning_frequency == 1.0

    def test_worker_invariance(self, m1):
        model, _ = m1
        a = estimate_yaglom(1, model, 5, 30_000, 3, workers=1)
        b = estimate_yaglom(1, model, 5, 30_000, 3, workers=4)
        assert a.counts == b.counts

    def test_bad_type(self, m1):
        model, _ = m1
        with pytest.raises(ValueError, match="out of range"):
            estimate_yaglom(2, model, 5, 10, 0)


class TestExplosionGuard:
    def test_scalar_trajectory_aborts(self, supercritical, monkeypatch):
        import stopbp.montecarlo as mc

        model, _ = supercritical
        monkeypatch.setattr(mc, "EXPLOSION_LIMIT", 5000)
        stopping = StoppingSet(frozenset({S((3,))}))  # unreachable (even totals)
        exploded = 0
        g = rng(8)
        for _ in range(50):
            out = mc.run_stopped(S((4,)), stopping, model, 60, g)
            if out.status == "exploded":
                exploded += 1
                assert out.state.total > 5000
        assert exploded > 0

    def test_batch_estimator_counts_explosions_as_misses(
        self, supercritical, monkeypatch
    ):
        import stopbp.montecarlo as mc

        model, _ = supercritical
        monkeypatch.setattr(mc, "EXPLOSION_LIMIT", 5000)
        stopping = StoppingSet(frozenset({S((3,))}))
        est = mc.estimate_absorption(S((4,)), S((3,)), stopping, model, 60, 200, 1)
        assert est.value == 0.0  # odd target unreachable; explosions are not hits


class TestStatisticalAcceptanceSample:
    def test_m1_absorption_seed_sweep(self, m1):
        # small preview of the acceptance battery: 20 seeds at 20k reps
        model, stopping = m1
        misses = sum(
            not estimate_absorption(
                S((1,)), S((2,)), stopping, model, 5, 20_000, seed
            ).within(0.3)
            for seed in range(20)
        )
        assert misses <= 1
