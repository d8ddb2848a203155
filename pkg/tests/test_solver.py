import math

import numpy as np
import pytest

from restless_oddarm import BanditInstance, build_truncated_mdp, markov, solve_r1star, solve_rstar
from restless_oddarm.errors import CapTooSmall, Infeasible
from restless_oddarm.solver import (
    SolverResult,
    constraint_residuals,
    extract_policy,
    iid_rstar_grid,
    lower_bound_expected_tau,
    occupancy_of_policy,
    rstar_eta_curve,
)


def random_lambda(n, K, rng):
    return rng.dirichlet(np.ones(K), size=n)


@pytest.fixture(scope="module")
def mdp4(canonical):
    return build_truncated_mdp(canonical, 0, 4)


class TestTruncatedMDP:
    def test_state_bound_and_stochastic_rows(self, canonical):
        mdp = build_truncated_mdp(canonical, 0, 3)
        assert mdp.n_states <= 3 * 8 * 9
        np.testing.assert_allclose(np.asarray(mdp.kernel.sum(axis=1)).ravel(), 1.0, atol=1e-12)

    def test_states_valid(self, mdp4):
        for d, i in mdp4.states:
            below = [x for x in d if x < 4]
            assert d.count(1) == 1 and len(set(below)) == len(below) and max(d) <= 4

    def test_rewards_only_on_pair(self, mdp4):
        for hp in mdp4.alternatives():
            other = [a for a in range(3) if a not in (0, hp)]
            assert np.all(mdp4.rewards[hp][:, other] == 0)
            assert np.all(mdp4.rewards[hp][:, [0, hp]] > 0)
        assert np.all(mdp4.rewards[0] == 0)

    def test_reward_values(self, canonical, mdp4):
        s = mdp4.index[((3, 2, 1), (0, 1, 0))]
        P1, P2 = canonical.P1, canonical.P2
        assert mdp4.rewards[1, s, 0] == pytest.approx(markov.kl_reward(P1, P2, 3, 0))
        assert mdp4.rewards[1, s, 1] == pytest.approx(markov.kl_reward(P1, P2, 2, 1, "normal_vs_odd"))

    def test_identical_laws_zero_rewards(self):
        same = BanditInstance(3, [[0.9, 0.1], [0.2, 0.8]], [[0.9, 0.1], [0.2, 0.8]], 0.1, allow_identical=True)
        assert np.all(build_truncated_mdp(same, 0, 3).rewards == 0)

    def test_cap_too_small(self, canonical):
        with pytest.raises(CapTooSmall):
            build_truncated_mdp(canonical, 0, 2)


class TestSolve:
    def test_certificate_and_residuals(self, solved):
        for r in solved:
            assert r.r_star > 0
            assert r.r_star == pytest.approx(min(r.certificate.values()), abs=1e-12)
            assert abs(r.r_star - r.lp_value) <= 1e-7
            assert all(v <= 1e-9 for k, v in r.residuals.items() if k != "lp_policy_gap")
            assert r.certified(0.2)
            assert abs(r.nu.total - 1) <= 1e-12

    def test_symmetric_in_h(self, solved):
        values = [r.r_star for r in solved]
        assert max(values) - min(values) <= 1e-8

    def test_full_tremble_is_uniform(self, canonical, mdp4):
        res = solve_rstar(mdp4, eta=1.0)
        uniform = occupancy_of_policy(mdp4, np.full((mdp4.n_states, 3), 1 / 3), 1.0)
        expected = min(np.sum(uniform * mdp4.rewards[hp]) for hp in (1, 2))
        assert res.r_star == pytest.approx(expected, abs=1e-9)
        frac = res.nu.mass / res.nu.state_mass()[:, None]
        np.testing.assert_allclose(frac, 1 / 3, atol=1e-9)

    def test_iid_matches_grid(self, iid_instance):
        nu1, nu2 = iid_instance.P1[0], iid_instance.P2[0]
        d12, d21 = markov.kl_divergence(nu1, nu2), markov.kl_divergence(nu2, nu1)
        oracle = iid_rstar_grid(d12, d21, 3, iid_instance.eta)
        res = solve_rstar(build_truncated_mdp(iid_instance, 0, 3))
        assert abs(res.r_star - oracle) <= 1e-6

    def test_iid_four_arms(self):
        inst = BanditInstance(4, [[0.6, 0.4]] * 2, [[0.25, 0.75]] * 2, 0.2)
        d12 = markov.kl_divergence([0.6, 0.4], [0.25, 0.75])
        d21 = markov.kl_divergence([0.25, 0.75], [0.6, 0.4])
        res = solve_rstar(build_truncated_mdp(inst, 0, 4))
        assert abs(res.r_star - iid_rstar_grid(d12, d21, 4, 0.2)) <= 1e-6

    def test_cap_stability(self, canonical, solved):
        r10 = solve_rstar(build_truncated_mdp(canonical, 0, 10)).r_star
        assert abs(solved[0].r_star - r10) / r10 < 0.01

    def test_subgradient_agrees(self, mdp4):
        exact = solve_rstar(mdp4).r_star
        approx = solve_rstar(mdp4, method="subgradient", max_iter=500)
        assert approx.r_star == pytest.approx(exact, rel=1e-3)
        assert approx.method == "subgradient"

    def test_subgradient_asymmetric(self):
        inst = BanditInstance(4, [[0.7, 0.3], [0.1, 0.9]], [[0.4, 0.6], [0.5, 0.5]], 0.2)
        mdp = build_truncated_mdp(inst, 1, 4)
        exact = solve_rstar(mdp).r_star
        approx = solve_rstar(mdp, method="subgradient", max_iter=3000)
        assert approx.r_star <= exact + 1e-9
        assert approx.r_star == pytest.approx(exact, rel=1e-2)

    def test_json(self, solved, tmp_path):
        solved[0].save(tmp_path / "s.json", policy_file="p.json")
        import json

        data = json.load(open(tmp_path / "s.json"))
        assert data["r_star"] == solved[0].r_star and data["policy_file"] == "p.json"
        assert set(data["certificate"]) == {"1", "2"}


class TestOccupancy:
    def test_random_policies_feasible(self, mdp4):
        rng = np.random.default_rng(0)
        for _ in range(10):
            lam = random_lambda(mdp4.n_states, 3, rng)
            nu = occupancy_of_policy(mdp4, lam, 0.1)
            assert all(v <= 1e-8 for v in constraint_residuals(mdp4, nu, 0.1).values())

    def test_round_trip(self, mdp4):
        rng = np.random.default_rng(1)
        for _ in range(5):
            lam = random_lambda(mdp4.n_states, 3, rng)
            nu = occupancy_of_policy(mdp4, lam, 0.1)
            back = extract_policy(nu, 0.1)
            live = nu.sum(axis=1) > 1e-13
            assert np.max(np.abs(back[live] - lam[live])) <= 1e-8

    def test_ergodic_under_random_policy(self, mdp4):
        # a strictly positive stationary law from a uniform start: one recurrent class
        rng = np.random.default_rng(2)
        lam = random_lambda(mdp4.n_states, 3, rng)
        Q, _ = mdp4.closed_loop(lam, 0.1)
        mu = markov.stationary(Q.toarray())
        assert np.all(mu > 0)
        np.testing.assert_allclose(mu, markov.stationary_sparse(Q), atol=1e-10)


class TestRelaxation:
    @pytest.mark.parametrize("D", [4, 6, 8])
    def test_open_tail_dominates(self, canonical, solved, D):
        assert solve_r1star(canonical, 0, D) >= solve_rstar(build_truncated_mdp(canonical, 0, D)).r_star - 1e-9

    @pytest.mark.parametrize("D", [1, 2])
    def test_closed_tail_infeasible_below_K(self, canonical, D):
        with pytest.raises(Infeasible):
            solve_r1star(canonical, 0, D, tail="closed")

    def test_closed_tail_feasible_at_K(self, canonical):
        assert solve_r1star(canonical, 0, 3, tail="closed") > 0

    def test_iid_relaxation_against_grid(self, iid_instance):
        nu1, nu2 = iid_instance.P1[0], iid_instance.P2[0]
        d12, d21 = markov.kl_divergence(nu1, nu2), markov.kl_divergence(nu2, nu1)
        # rewards do not depend on d, so the open budget is slack and the
        # relaxation is the eta = 0 grid value
        assert solve_r1star(iid_instance, 0, 4) == pytest.approx(iid_rstar_grid(d12, d21, 3, 0.0), abs=1e-6)


class TestEtaCurve:
    def test_monotone(self, canonical):
        curve = rstar_eta_curve(canonical, 0, 4, [0.1, 0.5, 1.0])
        vals = [r for _, r in curve]
        assert vals[0] >= vals[1] >= vals[2] - 1e-6

    def test_bounded_by_floorless(self, canonical, mdp4):
        r0 = solve_rstar(mdp4, eta=0.0).lp_value
        small = rstar_eta_curve(canonical, 0, 4, [1e-4, 1e-3])
        assert all(r <= r0 + 1e-9 for _, r in small)
        assert r0 - small[0][1] < 1e-2

    def test_rejects_unsorted(self, canonical):
        with pytest.raises(ValueError):
            rstar_eta_curve(canonical, 0, 4, [0.5, 0.1])


class TestLowerBound:
    def test_half(self):
        assert lower_bound_expected_tau(0.5, 0.5) == 0.0

    def test_value(self):
        assert lower_bound_expected_tau(0.5, 0.01) == pytest.approx(2 * 0.98 * math.log(99), rel=1e-14)

    def test_log_ratio(self):
        eps = 1e-8
        assert lower_bound_expected_tau(0.25, eps) / math.log(1 / eps) == pytest.approx(4.0, rel=0.05)

    def test_domain(self):
        with pytest.raises(ValueError):
            lower_bound_expected_tau(0.0, 0.1)
