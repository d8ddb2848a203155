import math

import numpy as np
import pytest

from restless_oddarm import PolicyParams, PolicyTable, run_trial, uniform_policy
from restless_oddarm.env import tremble
from restless_oddarm.errors import DomainError
from restless_oddarm.llr import LLRState
from restless_oddarm.policy import PolicyState, Pull, Stop, choose_intended
from restless_oddarm.tracker import DelayState


def three_sigma(p, n):
    return 3 * math.sqrt(p * (1 - p) / n)


@pytest.fixture
def skewed_table():
    t = PolicyTable(3, 8)
    t[((3, 2, 1), (0, 0, 0))] = [0.6, 0.3, 0.1]
    return t


class TestTable:
    def test_uniform_rows(self):
        t = uniform_policy(3)
        np.testing.assert_allclose(t.lookup((3, 2, 1), (0, 1, 0)), [1 / 3] * 3)
        np.testing.assert_allclose(t.lookup((40, 2, 1), (1, 1, 1)), [1 / 3] * 3)

    def test_unseen_key_default(self, skewed_table):
        np.testing.assert_allclose(skewed_table.lookup((5, 1, 2), (0, 0, 0)), [1 / 3] * 3)

    def test_lookup_caps_delays(self, skewed_table):
        skewed_table[((8, 2, 1), (0, 0, 0))] = [0.0, 0.0, 1.0]
        assert skewed_table.sample((30, 2, 1), (0, 0, 0), 0.1) == 2

    def test_rejects_bad_rows(self):
        t = PolicyTable(3, 8)
        with pytest.raises(DomainError):
            t[((3, 2, 1), (0, 0, 0))] = [0.5, 0.6, -0.1]
        with pytest.raises(DomainError):
            t[((3, 2, 1), (0, 0, 0))] = [0.5, 0.5]

    def test_sampler_frequencies(self, skewed_table):
        rng = np.random.default_rng(0)
        n = 10_000
        draws = [skewed_table.sample((3, 2, 1), (0, 0, 0), u) for u in rng.random(n)]
        freq = np.bincount(draws, minlength=3) / n
        for p, f in zip([0.6, 0.3, 0.1], freq):
            assert abs(f - p) <= three_sigma(p, n)

    def test_json_round_trip(self, skewed_table, tmp_path):
        skewed_table.meta["note"] = "x"
        skewed_table.save(tmp_path / "t.json")
        back = PolicyTable.load(tmp_path / "t.json")
        assert back.to_dict() == skewed_table.to_dict()
        np.testing.assert_array_equal(back.lookup((3, 2, 1), (0, 0, 0)), [0.6, 0.3, 0.1])

    def test_uniform_composes_with_tremble(self):
        t = uniform_policy(3)
        rng = np.random.default_rng(4)
        n = 30_000
        for eta in (0.0, 0.4, 1.0):
            pulls = [tremble(t.sample((3, 2, 1), (0, 0, 0), rng.random()), eta, 3, rng) for _ in range(n)]
            freq = np.bincount(pulls, minlength=3) / n
            assert np.all(np.abs(freq - 1 / 3) <= three_sigma(1 / 3, n))


class TestParams:
    def test_threshold(self):
        assert PolicyParams(100, 0.2, 3).threshold == pytest.approx(math.log(200))

    def test_doubling_L_adds_log2(self):
        for L in (1.5, 10, 1e4):
            gap = PolicyParams(2 * L, 0.2, 4).threshold - PolicyParams(L, 0.2, 4).threshold
            assert gap == pytest.approx(math.log(2), abs=1e-12)

    @pytest.mark.parametrize("L, delta", [(1.0, 0.2), (0.5, 0.2), (10, 0.0)])
    def test_domain(self, L, delta):
        with pytest.raises(DomainError):
            PolicyParams(L, delta, 3)


class TestChoose:
    def test_ties_uniform(self):
        rng = np.random.default_rng(1)
        params = PolicyParams(100, 0.2, 3)
        ps = PolicyState([uniform_policy(3)] * 3)
        state = DelayState([3, 2, 1], [0, 0, 0])
        n = 10_000
        guesses = []
        for _ in range(n):
            choose_intended(ps, LLRState(3), state, params, rng)
            guesses.append(ps.current_guess)
        freq = np.bincount(guesses, minlength=3) / n
        assert np.all(np.abs(freq - 1 / 3) <= three_sigma(1 / 3, n))

    def test_stop_at_threshold_exactly(self):
        params = PolicyParams(100, 0.2, 3)
        llr = LLRState(3)
        thr = params.threshold
        llr.z[1, 0] = llr.z[1, 2] = thr
        llr.z[0, 1] = llr.z[2, 1] = -thr
        ps = PolicyState([uniform_policy(3)] * 3)
        out = choose_intended(ps, llr, DelayState([3, 2, 1], [0, 0, 0]), params, np.random.default_rng(0))
        assert out == Stop(1) and ps.stopped and ps.declared == 1

    def test_below_threshold_follows_guess_table(self, skewed_table):
        params = PolicyParams(100, 0.2, 3)
        llr = LLRState(3)
        llr.z[0, 1] = llr.z[0, 2] = 1.0
        llr.z[1, 0] = llr.z[2, 0] = -1.0
        tables = [skewed_table, uniform_policy(3), uniform_policy(3)]
        rng = np.random.default_rng(2)
        n = 10_000
        arms = []
        for _ in range(n):
            out = choose_intended(PolicyState(tables), llr, DelayState([3, 2, 1], [0, 0, 0]), params, rng)
            assert isinstance(out, Pull)
            arms.append(out.intended)
        freq = np.bincount(arms, minlength=3) / n
        for p, f in zip([0.6, 0.3, 0.1], freq):
            assert abs(f - p) <= three_sigma(p, n)


class TestTrial:
    def test_deterministic(self, canonical, solved):
        tables = [r.policy for r in solved]
        params = PolicyParams(100, 0.2, 3)
        a = run_trial(canonical, 1, params, tables, seed=5, key=(0, 1, 3))
        b = run_trial(canonical, 1, params, tables, seed=5, key=(0, 1, 3))
        assert a.to_dict() == b.to_dict()
        assert sum(a.pulls) == a.tau

    def test_always_stops(self, canonical, solved):
        tables = [r.policy for r in solved]
        params = PolicyParams(100, 0.2, 3)
        recs = [run_trial(canonical, k % 3, params, tables, seed=k, max_steps=10**6) for k in range(1000)]
        assert not any(r.censored for r in recs)
        assert all(r.declared is not None for r in recs)

    def test_small_L_stops_sooner(self, canonical, solved):
        tables = [r.policy for r in solved]
        taus = {}
        for L in (1.0001, 100):
            params = PolicyParams(L, 0.2, 3)
            taus[L] = np.median([run_trial(canonical, 0, params, tables, seed=k).tau for k in range(300)])
        assert taus[1.0001] < taus[100]

    def test_censoring(self, canonical, solved):
        tables = [r.policy for r in solved]
        rec = run_trial(canonical, 0, PolicyParams(1e12, 0.2, 3), tables, seed=0, max_steps=10)
        assert rec.censored and rec.declared is None and not rec.correct and rec.tau == 10

    def test_table_count_checked(self, canonical):
        with pytest.raises(ValueError):
            run_trial(canonical, 0, PolicyParams(10, 0.2, 3), [uniform_policy(3)], seed=0)
