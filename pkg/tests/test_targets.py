import numpy as np
import pytest

from relaybeam import admm, targets as tg
from relaybeam import network as net


def small_cfg(**kw):
    base = dict(K=2, d=2, M=4, N=3, R=2, snr_t_db=9.0, snr_r_db=9.0)
    base.update(kw)
    return net.NetworkConfig(**base)


def make_instance(cfg, seed):
    ch = net.generate_channels(cfg, seed)
    bf = net.init_beamformers(cfg, ch, 1000 + seed)
    return ch, bf


class TestDownlink:
    def test_single_user_noise_collapse(self):
        # K = d = 1: Q = R_n / d, so v is proportional to R_n^-1 H u
        cfg = small_cfg(K=1, d=1)
        ch, bf = make_instance(cfg, 1)
        v = tg.downlink_filter(ch, bf.F, bf, cfg, 0, 0)
        Rn = net.noise_covariance(ch, bf.F, cfg, 0)
        want = np.linalg.solve(Rn, net.aggregate_channel(ch, bf.F, 0, 0) @ bf.u[0, 0])
        cos = abs(v.conj() @ want) / (np.linalg.norm(v) * np.linalg.norm(want))
        assert cos == pytest.approx(1.0, abs=1e-10)

    def test_covariance_noise_floor(self):
        cfg = small_cfg()
        ch, bf = make_instance(cfg, 2)
        Q = tg.downlink_covariance(ch, bf.F, bf, cfg, 0, 1)
        assert np.linalg.eigvalsh(Q).min() >= cfg.sigma_sq / cfg.d - 1e-10

    def test_linear_solve_oracle(self):
        cfg = small_cfg()
        ch, bf = make_instance(cfg, 2)
        for (k, l) in [(0, 0), (1, 1)]:
            Q = tg.downlink_covariance(ch, bf.F, bf, cfg, k, l)
            v = tg.downlink_filter(ch, bf.F, bf, cfg, k, l)
            rhs = net.aggregate_channel(ch, bf.F, k, k) @ bf.u[k, l]
            res = np.linalg.norm(Q @ (np.linalg.norm(Q, 2) * v) - rhs)
            assert res <= 1e-10 * np.linalg.norm(rhs)


class TestReverseChannels:
    def test_double_reversal_identity(self):
        cfg = small_cfg()
        ch, _ = make_instance(cfg, 3)
        rev = tg.reverse_channels(ch)
        for k in range(cfg.K):
            for j in range(cfg.K):
                assert np.array_equal(rev.Jrev[k, j].conj().T, ch.J[j, k])
        for r in range(cfg.R):
            for i in range(cfg.K):
                assert np.array_equal(rev.Grev[r, i].conj().T, ch.G[i, r])

    def test_dimensions(self):
        cfg = small_cfg(M=4, N=3)
        ch, _ = make_instance(cfg, 3)
        rev = tg.reverse_channels(ch)
        assert rev.Grev.shape[2:] == (cfg.N, cfg.M)
        assert rev.H2rev.shape[2:] == (cfg.M, cfg.N)

    def test_reverse_effective_sum_oracle(self, rng):
        cfg = small_cfg()
        ch, bf = make_instance(cfg, 3)
        rev = tg.reverse_channels(ch)
        F_rev = np.stack([bf.F[r].conj().T for r in range(cfg.R)])
        got = tg.reverse_effective_channel(rev, F_rev, 0, 1)
        want = sum(rev.H2rev[0, r] @ F_rev[r] @ rev.Grev[r, 1] for r in range(cfg.R))
        assert np.linalg.norm(got - want) <= 1e-13 * np.linalg.norm(want)


class TestUplink:
    def _reverse_setup(self, cfg, seed):
        ch, bf = make_instance(cfg, seed)
        rev = tg.reverse_channels(ch)
        F_rev = np.stack([bf.F[r].conj().T for r in range(cfg.R)])
        v = np.stack([[tg.downlink_filter(ch, bf.F, bf, cfg, k, l)
                       for l in range(cfg.d)] for k in range(cfg.K)])
        u1, u2 = v[:, :, :cfg.M], v[:, :, cfg.M:]
        return ch, bf, rev, F_rev, u1, u2

    def test_power_scaling_exact(self):
        cfg = small_cfg()
        ch, bf, rev, F_rev, u1, u2 = self._reverse_setup(cfg, 4)
        v = tg.uplink_filter(rev, F_rev, u1, u2, cfg, 0, 1, cfg.p_tx_max)
        assert np.linalg.norm(v) ** 2 == pytest.approx(cfg.p_tx_max / cfg.d, rel=1e-12)

    def test_direction_oracle(self):
        cfg = small_cfg()
        ch, bf, rev, F_rev, u1, u2 = self._reverse_setup(cfg, 4)
        k, l = 1, 0
        Q = tg.uplink_covariance(rev, F_rev, u1, u2, cfg, k, l)
        v = tg.uplink_filter(rev, F_rev, u1, u2, cfg, k, l, cfg.p_tx_max)
        rhs = rev.Jrev[k, k] @ u1[k, l] + tg.reverse_effective_channel(rev, F_rev, k, k) @ u2[k, l]
        want = np.linalg.solve(Q, rhs)
        cos = abs(v.conj() @ want) / (np.linalg.norm(v) * np.linalg.norm(want))
        assert cos == pytest.approx(1.0, abs=1e-10)

    def test_single_user_collapse(self):
        cfg = small_cfg(K=1, d=1)
        ch, bf, rev, F_rev, u1, u2 = self._reverse_setup(cfg, 5)
        Q = tg.uplink_covariance(rev, F_rev, u1, u2, cfg, 0, 0)
        want = tg.reverse_noise_covariance(rev, F_rev, cfg, 0) / cfg.d
        assert np.allclose(Q, want)


class TestMaxSinrTargets:
    def test_improves_over_random_init(self):
        cfg = small_cfg()
        gains = 0
        for seed in range(20):
            ch = net.generate_channels(cfg, 100 + seed)
            bf = net.init_beamformers(cfg, ch, 200 + seed)
            lo = net.assign_targets(net.all_stream_sinrs(bf, ch, cfg))
            hi, _ = tg.max_sinr_targets(cfg, ch, bf.F, 200 + seed, max_alt=30)
            gains += (hi.total >= lo.total)
        assert gains >= 18  # >= 90% of 20 instances

    def test_single_user_monotone(self):
        cfg = small_cfg(K=1, d=1)
        ch, bf = make_instance(cfg, 6)
        _, state = tg.max_sinr_targets(cfg, ch, bf.F, 1206, max_alt=25)
        trace = np.array(state.sum_sinr_trace)
        assert np.all(np.diff(trace) >= -1e-8 * np.abs(trace[:-1]))

    def test_zero_alternations_identity(self):
        cfg = small_cfg()
        ch, bf = make_instance(cfg, 7)
        got, state = tg.max_sinr_targets(cfg, ch, bf.F, 1207, max_alt=0)
        assert state.alternations == 0
        # with the same seed the internal random start reproduces
        # init_beamformers-style draws, so targets match the assign_targets
        # of that start
        rng = np.random.default_rng(1207)
        u = (rng.standard_normal((cfg.K, cfg.d, cfg.M))
             + 1j * rng.standard_normal((cfg.K, cfg.d, cfg.M))) / np.sqrt(2)
        u *= np.sqrt(cfg.p_tx_max / cfg.d) / np.linalg.norm(u, axis=2, keepdims=True)
        vbar = (rng.standard_normal((cfg.K, cfg.d, 2 * cfg.M))
                + 1j * rng.standard_normal((cfg.K, cfg.d, 2 * cfg.M))) / np.sqrt(2)
        for sl in (slice(0, cfg.M), slice(cfg.M, 2 * cfg.M)):
            vbar[:, :, sl] *= np.sqrt(0.5) / np.linalg.norm(vbar[:, :, sl], axis=2,
                                                            keepdims=True)
        bf0 = net.BeamformerSet(u=u, F=bf.F.copy(), vbar=vbar)
        want = net.assign_targets(net.all_stream_sinrs(bf0, ch, cfg))
        assert np.allclose(got.gamma, want.gamma)


class TestLinearTargetSearch:
    def _instance(self, seed):
        cfg = net.NetworkConfig(K=2, d=1, M=4, N=3, R=2, snr_t_db=9.0, snr_r_db=9.0)
        ch, bf = make_instance(cfg, seed)
        lo = net.assign_targets(net.all_stream_sinrs(bf, ch, cfg))
        hi, _ = tg.max_sinr_targets(cfg, ch, bf.F, 1000 + seed, max_alt=15)
        if np.any(hi.gamma < lo.gamma):
            hi = net.SinrTargets(gamma=np.maximum(hi.gamma, 2.0 * lo.gamma))
        return cfg, ch, bf, lo, hi

    def test_budget_one_probes_half(self):
        cfg, ch, bf, lo, hi = self._instance(1)
        res = tg.linear_target_search(cfg, ch, bf, lo, hi, budget=1,
                                      ctrl=admm.AlgorithmControl(init_seed=1))
        assert [w for w, _ in res.probes] == [0.5]

    def test_budget_two_bisection_order(self):
        cfg, ch, bf, lo, hi = self._instance(1)
        res = tg.linear_target_search(cfg, ch, bf, lo, hi, budget=2,
                                      ctrl=admm.AlgorithmControl(init_seed=1))
        ws = [w for w, _ in res.probes]
        assert ws[0] == 0.5
        assert ws[1] == (0.75 if res.probes[0][1] else 0.25)

    def test_result_between_bounds_with_higher_power(self):
        # modest upper bound (2x the random-init targets) so interior probes
        # are reachable at this size; the max-SINR bound case runs in the
        # acceptance suite
        hit = 0
        for seed in (1, 2, 3, 4, 5):
            cfg, ch, bf, lo, _ = self._instance(seed)
            hi = net.SinrTargets(gamma=2.0 * lo.gamma)
            ctrl = admm.AlgorithmControl(init_seed=seed)
            base = admm.run(cfg, ch, bf, lo, ctrl)
            if not (base.converged and not base.iflag):
                continue
            res = tg.linear_target_search(cfg, ch, bf, lo, hi, budget=2, ctrl=ctrl)
            assert res.feasible
            assert lo.total <= res.targets.total <= hi.total
            if res.weight > 0:
                assert res.total_power >= base.total_power * (1 - 1e-9)
                hit += 1
        assert hit >= 2

    def test_weight_monotone_in_budget(self):
        cfg, ch, bf, lo, hi = self._instance(2)
        ctrl = admm.AlgorithmControl(init_seed=2)
        w1 = tg.linear_target_search(cfg, ch, bf, lo, hi, budget=1, ctrl=ctrl).weight
        w2 = tg.linear_target_search(cfg, ch, bf, lo, hi, budget=2, ctrl=ctrl).weight
        assert w2 >= w1

    def test_infeasible_lower_bound_rejected(self):
        cfg, ch, bf, lo, hi = self._instance(3)
        crazy_lo = net.SinrTargets(gamma=1e4 * lo.gamma)
        crazy_hi = net.SinrTargets(gamma=2e4 * lo.gamma)
        with pytest.raises(ValueError):
            tg.linear_target_search(cfg, ch, bf, crazy_lo, crazy_hi, budget=1,
                                    ctrl=admm.AlgorithmControl(init_seed=3))
