import numpy as np
import pytest

from rbmpt import rbm, tempering
from rbmpt.tempering import Ensemble, Label

from oracles import (
    brute_joint_distribution,
    brute_visible_marginal,
    enumerate_bits,
    random_params,
    state_index,
    total_variation,
)


def zero_params(nv=3, nh=2):
    return rbm.RbmParams(np.zeros((nh, nv)), np.zeros(nh), np.zeros(nv))


def make_ensemble(betas, nv=3, nh=2, seed=0):
    return Ensemble.create(np.array(betas, dtype=float), nv, nh, np.random.default_rng(seed))


class TestSwapRatio:
    def test_equal_energies(self):
        assert tempering.swap_ratio(2.5, 2.5, 1.0, 0.3) == 1.0

    def test_equal_betas(self):
        assert tempering.swap_ratio(2.0, 5.0, 0.7, 0.7) == 1.0

    def test_hand_case(self):
        got = tempering.swap_ratio(2.0, 5.0, 1.0, 0.5)
        assert got == pytest.approx(0.22313016014842982, rel=1e-12)

    def test_no_overflow(self):
        # cold chain stuck at high energy: swap always helps; and vice versa
        assert tempering.swap_ratio(1e6, -1e6, 1.0, 0.0) == 1.0
        assert tempering.swap_ratio(-1e6, 1e6, 1.0, 0.0) == 0.0

    def test_beta_order_enforced(self):
        with pytest.raises(ValueError):
            tempering.swap_ratio(0.0, 0.0, 0.3, 0.9)

    def test_matches_normalized_metropolis_ratio(self):
        # the energy form equals the ratio of explicitly normalized tempered
        # joints, since the partition functions cancel
        rng = np.random.default_rng(20)
        p = random_params(rng, 2, 1, scale=1.5)
        beta_i, beta_j = 1.0, 0.4
        pi = brute_joint_distribution(p, beta_i)
        pj = brute_joint_distribution(p, beta_j)
        h_all = enumerate_bits(1)
        v_all = enumerate_bits(2)
        for _ in range(20):
            vi, hi = v_all[rng.integers(4)], h_all[rng.integers(2)]
            vj, hj = v_all[rng.integers(4)], h_all[rng.integers(2)]
            e_i = rbm.energy(p, rbm.JointState(vi, hi))
            e_j = rbm.energy(p, rbm.JointState(vj, hj))
            ii, jj = (state_index(hi), state_index(vi)), (state_index(hj), state_index(vj))
            ratio = (pi[jj] * pj[ii]) / (pi[ii] * pj[jj])
            want = min(1.0, ratio)
            assert tempering.swap_ratio(e_i, e_j, beta_i, beta_j) == pytest.approx(
                want, abs=1e-12
            )


class TestLadders:
    def test_linear(self):
        betas = tempering.linear_ladder(5)
        assert betas[0] == 1.0 and betas[-1] == 0.0
        assert np.diff(betas) == pytest.approx(-0.25)

    def test_geometric(self):
        betas = tempering.geometric_ladder(6)
        assert betas[0] == 1.0 and betas[-1] == 0.0
        assert (np.diff(betas) < 0).all()
        ratios = betas[1:-1] / betas[:-2]
        assert ratios == pytest.approx(ratios[0])

    def test_single_chain(self):
        assert tempering.linear_ladder(1) == pytest.approx([1.0])


class TestEnsembleInvariants:
    def test_rejects_bad_ladders(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            Ensemble.create(np.array([0.9, 0.0]), 3, 2, rng)
        with pytest.raises(ValueError):
            Ensemble.create(np.array([1.0, 0.5]), 3, 2, rng)
        with pytest.raises(ValueError):
            Ensemble.create(np.array([1.0, 0.4, 0.4, 0.0]), 3, 2, rng)

    def test_fresh_state(self):
        ens = make_ensemble([1.0, 0.5, 0.0])
        assert (ens.labels == Label.UNSET).all()
        assert not ens.counters.any()
        assert ens.tau_hat == 1.0
        assert ens.swap_rate_ema == pytest.approx([1.0, 1.0])

    def test_particle_view_is_a_copy(self):
        ens = make_ensemble([1.0, 0.0])
        particle = ens.particle(0)
        particle.state.visible[:] = 9  # must not leak back
        assert np.isin(ens.visible, (0.0, 1.0)).all()

    def test_insert_chain(self):
        ens = make_ensemble([1.0, 0.5, 0.0])
        ens.n_up[:] = [1.0, 0.4, 0.0]
        ens.n_down[:] = [0.0, 0.6, 1.0]
        ens.swap_rate_ema[:] = [0.8, 0.2]
        old_cold_state = ens.visible[2].copy()
        ens.insert_chain(2, 0.25, source_slot=2)
        assert ens.betas == pytest.approx([1.0, 0.5, 0.25, 0.0])
        assert ens.visible[2] == pytest.approx(old_cold_state)
        assert ens.labels[2] == Label.UNSET and ens.counters[2] == 0
        assert ens.n_up[2] == pytest.approx(0.2)
        assert ens.n_down[2] == pytest.approx(0.8)
        assert ens.swap_rate_ema == pytest.approx([0.8, 0.2, 0.2])


class TestDeoSweep:
    def test_single_chain_degenerates_to_gibbs(self):
        ens = make_ensemble([1.0])
        report = tempering.deo_sweep(ens, zero_params(), 1, np.random.default_rng(1))
        assert report.pair_indices.size == 0
        assert report.round_trips == []
        assert ens.tau_hat == 1.0

    def test_equal_energies_accept_everything(self):
        ens = make_ensemble([1.0, 0.6, 0.3, 0.0])
        for _ in range(10):
            report = tempering.deo_sweep(ens, zero_params(), 1, np.random.default_rng(2))
            assert report.accepts.all()

    def test_pair_schedule_alternates(self):
        ens = make_ensemble([1.0, 0.75, 0.5, 0.25, 0.0])
        rng = np.random.default_rng(3)
        seen = []
        for _ in range(4):
            seen.append(tuple(tempering.deo_sweep(ens, zero_params(), 1, rng).pair_indices))
        assert seen == [(0, 2), (1, 3), (0, 2), (1, 3)]

    def test_betas_never_move(self):
        ens = make_ensemble([1.0, 0.6, 0.3, 0.0])
        params = random_params(np.random.default_rng(4), 3, 2)
        before = ens.betas.copy()
        rng = np.random.default_rng(5)
        for _ in range(50):
            tempering.deo_sweep(ens, params, 1, rng)
        assert ens.betas == pytest.approx(before, abs=0)

    def test_swap_phase_permutes_states(self):
        # with no Gibbs steps the sweep can only permute particles
        ens = make_ensemble([1.0, 0.6, 0.3, 0.0], seed=6)
        params = random_params(np.random.default_rng(7), 3, 2, scale=2.0)
        rng = np.random.default_rng(8)
        for _ in range(20):
            joint = np.hstack([ens.visible, ens.hidden])
            before = sorted(map(tuple, joint))
            tempering.deo_sweep(ens, params, 0, rng)
            joint = np.hstack([ens.visible, ens.hidden])
            assert sorted(map(tuple, joint)) == before

    def test_one_uniform_draw_per_pair(self):
        # replay the sweep's exact rng stream: per Gibbs step one block per
        # layer, then a single uniform per proposed pair
        seed = 99
        ens = make_ensemble([1.0, 0.6, 0.3, 0.0], seed=9)
        params = random_params(np.random.default_rng(10), 3, 2, scale=1.5)
        visible0, hidden0 = ens.visible.copy(), ens.hidden.copy()

        replay = np.random.default_rng(seed)
        ph = 1 / (1 + np.exp(-ens.betas[:, None] * (visible0 @ params.weights.T + params.hidden_bias)))
        hidden1 = (replay.random((4, 2)) < ph).astype(float)
        pv = 1 / (1 + np.exp(-ens.betas[:, None] * (hidden1 @ params.weights + params.visible_bias)))
        visible1 = (replay.random((4, 3)) < pv).astype(float)
        e = rbm.energies(params, visible1, hidden1)
        expect_prob = np.exp(
            np.minimum((ens.betas[[0, 2]] - ens.betas[[1, 3]]) * (e[[0, 2]] - e[[1, 3]]), 0.0)
        )
        expect_accepts = replay.random(2) < expect_prob

        report = tempering.deo_sweep(ens, params, 1, np.random.default_rng(seed))
        assert (report.accepts == expect_accepts).all()

    def test_two_chain_acceptance_matches_product_expectation(self):
        # long-run accept frequency vs E[min(1, r)] under p_1 x p_0
        rng = np.random.default_rng(11)
        params = random_params(rng, 2, 2, scale=1.0)
        p_cold = brute_joint_distribution(params, 1.0).ravel()
        p_hot = brute_joint_distribution(params, 0.0).ravel()
        h_all = enumerate_bits(2)
        v_all = enumerate_bits(2)
        energies = np.array(
            [
                rbm.energy(params, rbm.JointState(v, h))
                for h in h_all
                for v in v_all
            ]
        )
        ratio = np.minimum(1.0, np.exp(np.subtract.outer(energies, energies)))
        expected = p_cold @ ratio @ p_hot

        ens = make_ensemble([1.0, 0.0], nv=2, nh=2, seed=12)
        accepted = 0
        proposed = 0
        for _ in range(1_000_000):
            report = tempering.deo_sweep(ens, params, 1, rng)
            proposed += report.pair_indices.size
            accepted += int(report.accepts.sum())
        assert proposed == 500_000
        assert abs(accepted / proposed - expected) < 0.01

    def test_cold_slot_stationary_distribution(self):
        # slot 0 must sample the beta = 1 joint; checked against enumeration
        rng = np.random.default_rng(13)
        params = random_params(rng, 3, 2, scale=1.0)
        exact = brute_joint_distribution(params, 1.0).T.ravel()  # [v, h] order
        ens = make_ensemble([1.0, 0.5, 0.0], nv=3, nh=2, seed=14)
        counts = np.zeros(32)
        wv = 1 << np.arange(3)
        wh = 1 << np.arange(2)
        n = 1_000_000
        for _ in range(n):
            tempering.deo_sweep(ens, params, 1, rng)
            idx = int(ens.visible[0] @ wv) * 4 + int(ens.hidden[0] @ wh)
            counts[idx] += 1
        assert total_variation(counts / n, exact) < 0.02


class TestLabelsAndReturnTime:
    def test_two_chain_uniform_round_trips(self):
        # always-accepted swaps shuttle deterministically: first trips take 5
        # and 7 sweeps, steady state is the 4-sweep down-and-back
        ens = make_ensemble([1.0, 0.0])
        rng = np.random.default_rng(15)
        trips = []
        for _ in range(60):
            trips.extend(tempering.deo_sweep(ens, zero_params(), 1, rng).round_trips)
        assert trips[:2] == [5, 7]
        assert set(trips[2:]) == {4}

    def test_first_sweep_labels(self):
        ens = make_ensemble([1.0, 0.5, 0.0])
        tempering.deo_sweep(ens, zero_params(), 1, np.random.default_rng(16))
        assert ens.labels[0] == Label.UP
        assert Label.DOWN not in ens.labels  # nothing has been up and back yet

    def test_counter_reset_only_on_completion(self):
        ens = make_ensemble([1.0, 0.0])
        rng = np.random.default_rng(17)
        for _ in range(4):
            tempering.deo_sweep(ens, zero_params(), 1, rng)
        # sweep 5 completes the first trip and resets the arriving counter
        report = tempering.deo_sweep(ens, zero_params(), 1, rng)
        assert report.round_trips == [5]
        assert ens.counters[0] == 0
        assert ens.counters[1] > 0

    def test_estimate_before_any_trip_is_counter_sum(self):
        ens = make_ensemble([1.0, 0.5, 0.0])
        ens.counters[:] = [3, 5, 2]
        assert tempering.estimate_return_time(ens) == 10.0

    def test_estimate_floor(self):
        ens = make_ensemble([1.0, 0.5, 0.0])
        assert tempering.estimate_return_time(ens) == 1.0

    def test_estimate_tracks_completed_trips(self):
        ens = make_ensemble([1.0, 0.0])
        ens.round_trip_ema = 12.5
        assert tempering.estimate_return_time(ens) == 12.5
        assert ens.tau_hat == 12.5


class TestFlowHistograms:
    def test_up_slot_moves_toward_one(self):
        ens = make_ensemble([1.0, 0.0])
        ens.tau_hat = 10.0
        ens.labels[0] = Label.UP
        tempering.update_flow_histograms(ens)
        assert ens.n_up[0] == pytest.approx(0.1)
        assert ens.n_down[0] == 0.0

    def test_saturated_slot_is_fixed_point(self):
        ens = make_ensemble([1.0, 0.0])
        ens.tau_hat = 7.0
        ens.labels[0] = Label.UP
        ens.n_up[0] = 1.0
        tempering.update_flow_histograms(ens)
        assert ens.n_up[0] == pytest.approx(1.0)

    def test_unset_slots_decay(self):
        ens = make_ensemble([1.0, 0.0])
        ens.tau_hat = 2.0
        ens.n_up[:] = 0.8
        ens.n_down[:] = 0.4
        tempering.update_flow_histograms(ens)
        assert ens.n_up == pytest.approx([0.4, 0.4])
        assert ens.n_down == pytest.approx([0.2, 0.2])

    def test_alternating_labels_average_half(self):
        # tau = 2: the limit cycle is {2/3 after up, 1/3 after down}, mean 1/2
        ens = make_ensemble([1.0, 0.0])
        ens.tau_hat = 2.0
        for _ in range(100):
            ens.labels[0] = Label.UP
            tempering.update_flow_histograms(ens)
            after_up = ens.n_up[0]
            ens.labels[0] = Label.DOWN
            tempering.update_flow_histograms(ens)
            after_down = ens.n_up[0]
        assert after_up == pytest.approx(2 / 3, abs=1e-9)
        assert after_down == pytest.approx(1 / 3, abs=1e-9)
        assert 0.5 * (after_up + after_down) == pytest.approx(0.5, abs=1e-9)


class TestFUp:
    def test_boundaries_pinned_after_first_sweep(self):
        ens = make_ensemble([1.0, 0.5, 0.0])
        tempering.deo_sweep(ens, zero_params(), 1, np.random.default_rng(18))
        tempering.update_flow_histograms(ens)
        frac = tempering.f_up(ens)
        assert frac[0] == 1.0 and frac[-1] == 0.0

    def test_equal_histograms_give_half(self):
        ens = make_ensemble([1.0, 0.5, 0.0])
        ens.n_up[1] = ens.n_down[1] = 0.3
        assert tempering.f_up(ens)[1] == 0.5

    def test_direct_ratio(self):
        ens = make_ensemble([1.0, 0.5, 0.0])
        ens.n_up[:] = [1.0, 0.3, 0.0]
        ens.n_down[:] = [0.0, 0.1, 1.0]
        assert tempering.f_up(ens)[1] == pytest.approx(0.75)

    def test_empty_interior_is_neutral(self):
        ens = make_ensemble([1.0, 0.5, 0.0])
        assert tempering.f_up(ens)[1] == 0.5

    def test_single_chain(self):
        ens = make_ensemble([1.0])
        assert tempering.f_up(ens) == pytest.approx([1.0])

    def test_boundary_histograms_positive_after_warmup(self):
        ens = make_ensemble([1.0, 0.6, 0.3, 0.0])
        params = random_params(np.random.default_rng(19), 3, 2)
        rng = np.random.default_rng(20)
        for _ in range(200):
            tempering.deo_sweep(ens, params, 1, rng)
            tempering.update_flow_histograms(ens)
        assert ens.n_up[0] > 0
        assert ens.n_down[-1] > 0
        assert (ens.n_up >= 0).all() and (ens.n_down >= 0).all()
