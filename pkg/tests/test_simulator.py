import io
import math

import numpy as np
import pytest

import oracles
from helpers import THETA, problem, reference_table
from qdisc.core import HALF_PI, Outcome, outcome_probability
from qdisc.evaluator import exact_cost
from qdisc.optimizer import build_table
from qdisc.schemes import SchemeKind, SchemeSpec
from qdisc.simulator import (
    BATCH_HEADER,
    BIT_FLIP,
    BIT_PHASE_FLIP,
    IDENTITY,
    PHASE_FLIP,
    BatchStats,
    apply_noise_flip,
    batch_row,
    draws_per_trial,
    flip_branch,
    flip_channel_frequency,
    run_batch,
    run_trial,
    simulate_trials,
    trial_draws,
    write_batch_csv,
)


def spec_for(kind, nu, n):
    if kind is SchemeKind.GLOBALLY_OPTIMAL:
        return SchemeSpec.globally_optimal(reference_table(nu).truncated(n))
    return SchemeSpec(kind, n)


class TestNoiseFlip:
    @pytest.mark.parametrize("draw", [0.0, 0.3, 0.999])
    def test_noiseless_is_identity(self, draw):
        assert flip_branch(0.0, draw) == IDENTITY
        assert apply_noise_flip(0.4, 0.0, draw) == (0.4, False)

    @pytest.mark.parametrize("draw, branch", [(0.1, IDENTITY), (0.3, BIT_FLIP), (0.6, PHASE_FLIP), (0.9, BIT_PHASE_FLIP)])
    def test_full_noise_thresholds(self, draw, branch):
        assert flip_branch(1.0, draw) == branch

    def test_bit_flip_angle(self):
        phi, swap = apply_noise_flip(0.4, 1.0, 0.30)
        assert phi == pytest.approx(HALF_PI - 0.4, abs=1e-15) and not swap

    def test_phase_flip_example(self):
        phi, swap = apply_noise_flip(math.pi / 6, 1.0, 0.6)
        assert phi == pytest.approx(math.pi / 3, abs=1e-15) and swap
        # {-pi/6, -pi/6 - pi/2} is {pi/3, -pi/6} with the labels exchanged
        assert np.allclose(oracles.projector(-math.pi / 6), oracles.projector(phi - HALF_PI))
        assert np.allclose(oracles.projector(-math.pi / 6 - HALF_PI), oracles.projector(phi))

    @pytest.mark.parametrize("nu", [0.1, 0.6])
    @pytest.mark.parametrize("phi", [0.0, THETA, math.pi / 4])
    @pytest.mark.parametrize("sign", [+1, -1])
    def test_channel_equivalence(self, nu, phi, sign):
        prob = problem(nu=nu)
        copies = 100_000
        freq = flip_channel_frequency(prob, sign, phi, copies, seed=11)
        target = outcome_probability(prob, sign, phi, Outcome.PLUS)
        assert target == pytest.approx(oracles.click_plus(THETA, nu, sign, phi), abs=1e-12)
        assert abs(freq - target) <= 4.0 * math.sqrt(target * (1.0 - target) / copies)

    def test_noisy_diagonal_frequency(self):
        freq = flip_channel_frequency(problem(nu=0.1), +1, math.pi / 4, 100_000, seed=3)
        assert abs(freq - 0.725) <= 4.0 * math.sqrt(0.725 * 0.275 / 100_000)


class TestDraws:
    def test_block_padding(self):
        assert draws_per_trial(1) == 4
        assert draws_per_trial(10) == 24
        assert draws_per_trial(3) == 8

    def test_substreams_are_offsets(self):
        whole = trial_draws(42, 0, 10, 5)
        tail = trial_draws(42, 6, 4, 5)
        np.testing.assert_array_equal(whole[6:], tail)

    def test_seeds_differ(self):
        assert not np.array_equal(trial_draws(1, 0, 2, 3), trial_draws(2, 0, 2, 3))


class TestRunTrial:
    def test_fully_biased_pure_is_unanimous(self):
        prob = problem()
        spec = SchemeSpec(SchemeKind.FULLY_BIASED, 6)
        rng = np.random.Generator(np.random.Philox(5))
        seen = 0
        for _ in range(200):
            rec = run_trial(prob, spec, 6, rng)
            assert len(rec.outcomes) == 6
            assert rec.correct == (rec.decision.guess == rec.true_state)
            if rec.true_state == +1:
                seen += 1
                assert rec.outcomes == (Outcome.PLUS,) * 6
                # a PLUS click is also possible under psi_-, so the belief stays below 1
                assert rec.final_belief == pytest.approx(1.0 / (1.0 + 0.75**6), abs=1e-14)
                assert rec.decision.guess == 1 and rec.correct
            elif Outcome.MINUS in rec.outcomes:
                assert rec.final_belief == 0.0 and rec.correct
        assert seen > 0

    def test_horizon_mismatch(self):
        with pytest.raises(ValueError):
            run_trial(problem(), SchemeSpec(SchemeKind.UNBIASED, 3), 4, np.random.default_rng())

    def test_tie_flag(self):
        # two unbiased copies with opposite clicks land back on the prior
        prob = problem()
        spec = SchemeSpec(SchemeKind.UNBIASED, 2)
        draws = trial_draws(9, 0, 4000, 2)
        sign, outcomes, belief, guess, tie = simulate_trials(prob, spec, draws)
        split = outcomes[:, 0] != outcomes[:, 1]
        assert np.array_equal(tie, split)
        np.testing.assert_allclose(belief[split], 0.5, atol=1e-15)

    def test_short_draw_rows_rejected(self):
        with pytest.raises(ValueError):
            simulate_trials(problem(), SchemeSpec(SchemeKind.UNBIASED, 3), np.zeros((2, 5)))


class TestRunBatch:
    def test_reproducible(self):
        prob = problem(nu=0.1)
        spec = SchemeSpec(SchemeKind.LOCALLY_OPTIMAL, 5)
        assert run_batch(prob, spec, 5, 2000, 77) == run_batch(prob, spec, 5, 2000, 77)

    def test_chunking_invariant(self):
        prob = problem(nu=0.1)
        spec = SchemeSpec(SchemeKind.UNBIASED, 7)
        assert run_batch(prob, spec, 7, 5000, 1, chunk=5000) == run_batch(prob, spec, 7, 5000, 1, chunk=333)

    @pytest.mark.parametrize("kind", list(SchemeKind))
    def test_backends_identical(self, kind):
        pytest.importorskip("numba")
        prob = problem(nu=0.3, q_plus=0.6)
        spec = spec_for(kind, 0.3, 10)
        draws = trial_draws(123, 0, 3000, 10)
        fast = simulate_trials(prob, spec, draws, "numba")
        slow = simulate_trials(prob, spec, draws, "numpy")
        for i in (0, 1, 3, 4):  # true state, outcomes, guess, tie flag
            np.testing.assert_array_equal(fast[i], slow[i])
        # libm and numpy may differ in the last ulp of arctan
        np.testing.assert_allclose(fast[2], slow[2], atol=1e-13)

    @pytest.mark.parametrize("trials", [0, -3, 2.5])
    def test_bad_trials(self, trials):
        with pytest.raises(ValueError):
            run_batch(problem(), SchemeSpec(SchemeKind.UNBIASED, 1), 1, trials, 0)

    @pytest.mark.parametrize("kind", list(SchemeKind))
    def test_indistinguishable_states(self, kind):
        prob = problem(nu=1.0)
        if kind is SchemeKind.GLOBALLY_OPTIMAL:
            spec = SchemeSpec.globally_optimal(build_table(prob, 4, 51))
        else:
            spec = SchemeSpec(kind, 4)
        stats = run_batch(prob, spec, 4, 40_000, 8)
        assert abs(stats.error_rate - 0.5) <= 4.0 * stats.std_err

    @pytest.mark.parametrize("kind", list(SchemeKind))
    @pytest.mark.parametrize("nu", [0.0, 0.1])
    @pytest.mark.parametrize("n", [1, 5])
    def test_estimator_consistency(self, kind, nu, n):
        prob = problem(nu=nu)
        spec = spec_for(kind, nu, n)
        stats = run_batch(prob, spec, n, 100_000, 2024)
        exact = exact_cost(prob, spec).cost
        assert abs(stats.error_rate - exact) <= 4.0 * math.sqrt(exact * (1.0 - exact) / stats.trials)


class TestBatchStats:
    def test_rates(self):
        stats = BatchStats(400, 100)
        assert stats.error_rate == 0.25
        assert stats.std_err == pytest.approx(math.sqrt(0.25 * 0.75 / 400))

    def test_csv(self):
        prob = problem(nu=0.1)
        row = batch_row("unbiased", 3, prob, BatchStats(1000, 120), 99)
        buf = io.StringIO()
        write_batch_csv([row], buf)
        header, line = buf.getvalue().splitlines()
        assert tuple(header.split(",")) == BATCH_HEADER
        assert line.split(",")[:7] == ["unbiased", "3", "15", "0.5", "0.10000000000000001", "1000", "120"]
