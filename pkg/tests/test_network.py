import numpy as np
import pytest

from relaybeam import network as net
from conftest import rand_complex


def small_cfg(**kw):
    base = dict(K=2, d=2, M=4, N=3, R=2, snr_t_db=9.0, snr_r_db=9.0)
    base.update(kw)
    return net.NetworkConfig(**base)


def identity_channels(cfg):
    """Hand-built channels: J = G = H2 = I (square dims required)."""
    assert cfg.M == cfg.N
    J = np.zeros((cfg.K, cfg.K, cfg.M, cfg.M), dtype=complex)
    G = np.zeros((cfg.K, cfg.R, cfg.M, cfg.N), dtype=complex)
    H2 = np.zeros((cfg.R, cfg.K, cfg.N, cfg.M), dtype=complex)
    for k in range(cfg.K):
        for i in range(cfg.K):
            J[k, i] = np.eye(cfg.M)
        for r in range(cfg.R):
            G[k, r] = np.eye(cfg.M)
    for r in range(cfg.R):
        for i in range(cfg.K):
            H2[r, i] = np.eye(cfg.M)
    return net.ChannelSet(J=J, G=G, H2=H2)


class TestConfig:
    def test_power_budgets_from_snr(self):
        cfg = small_cfg(snr_t_db=20.0, snr_r_db=10.0)
        assert cfg.p_tx_max == pytest.approx(100.0)
        assert cfg.p_relay_max == pytest.approx(10.0)
        assert cfg.B == 4

    def test_rejects_too_many_streams(self):
        with pytest.raises(ValueError):
            small_cfg(d=5, M=4)

    def test_rejects_nonpositive_noise(self):
        with pytest.raises(ValueError):
            small_cfg(sigma_sq=0.0)


class TestGenerateChannels:
    def test_deterministic_per_seed(self):
        cfg = net.NetworkConfig(K=3, d=2, M=10, N=8, R=3)
        a = net.generate_channels(cfg, 7)
        b = net.generate_channels(cfg, 7)
        assert np.array_equal(a.J, b.J)
        assert np.array_equal(a.G, b.G)
        assert np.array_equal(a.H2, b.H2)
        c = net.generate_channels(cfg, 8)
        assert not np.array_equal(a.J, c.J)

    def test_h2_dims(self):
        cfg = small_cfg(M=4, N=3)
        ch = net.generate_channels(cfg, 1)
        assert ch.H2.shape == (cfg.R, cfg.K, cfg.N, cfg.M)
        assert ch.G.shape == (cfg.K, cfg.R, cfg.M, cfg.N)
        assert ch.J.shape == (cfg.K, cfg.K, cfg.M, cfg.M)

    def test_variance_matches_pathloss(self):
        # Monte Carlo moment oracle with shadowing disabled; > 1e4 samples
        cfg = net.NetworkConfig(K=3, d=2, M=10, N=8, R=3, shadow_std_db=0.0,
                                tx_relay_dist_km=1.0, relay_rx_dist_km=1.0,
                                pathloss_exponent=3.0)
        samples = np.concatenate(
            [net.generate_channels(cfg, s).J.ravel() for s in range(12)])
        assert samples.size >= 10_000
        pathloss = cfg.direct_dist_km ** (-3.0)
        var = float(np.mean(np.abs(samples) ** 2))
        assert abs(var - pathloss) <= 0.03 * pathloss

    def test_immutable(self):
        ch = net.generate_channels(small_cfg(), 0)
        with pytest.raises(ValueError):
            ch.J[0, 0, 0, 0] = 1.0


class TestInitBeamformers:
    def test_stream_power_split(self):
        cfg = small_cfg()
        ch = net.generate_channels(cfg, 3)
        bf = net.init_beamformers(cfg, ch, 4)
        for k in range(cfg.K):
            for l in range(cfg.d):
                assert np.sum(np.abs(bf.u[k, l]) ** 2) == pytest.approx(
                    cfg.p_tx_max / cfg.d, abs=1e-12 * cfg.p_tx_max)

    def test_relay_power_at_budget(self):
        cfg = small_cfg()
        ch = net.generate_channels(cfg, 3)
        bf = net.init_beamformers(cfg, ch, 4)
        for r in range(cfg.R):
            assert net.relay_power(bf, ch, cfg, r) == pytest.approx(
                cfg.p_relay_max, rel=1e-9)

    def test_receive_filter_norms(self):
        cfg = small_cfg()
        bf = net.init_beamformers(cfg, net.generate_channels(cfg, 3), 4)
        for k in range(cfg.K):
            for l in range(cfg.d):
                assert np.linalg.norm(bf.vbar[k, l]) == pytest.approx(1.0, abs=1e-12)
                assert np.linalg.norm(bf.vbar[k, l][:cfg.M]) == pytest.approx(
                    np.sqrt(0.5), abs=1e-12)


class TestChannelAlgebra:
    def test_effective_channel_identity_chain(self):
        cfg = small_cfg(K=1, d=1, M=3, N=3, R=1)
        ch = identity_channels(cfg)
        F = np.eye(3, dtype=complex)[None]
        assert np.allclose(net.effective_channel(ch, F, 0, 0), np.eye(3))

    def test_effective_channel_zero_relays(self):
        cfg = small_cfg()
        ch = net.generate_channels(cfg, 5)
        F = np.zeros((cfg.R, cfg.N, cfg.N), dtype=complex)
        assert np.allclose(net.effective_channel(ch, F, 0, 1), 0.0)

    def test_effective_channel_sum_oracle(self, rng):
        cfg = small_cfg(R=2)
        ch = net.generate_channels(cfg, 5)
        F = rand_complex(rng, cfg.R, cfg.N, cfg.N)
        got = net.effective_channel(ch, F, 1, 0)
        want = sum(ch.G[1, r] @ F[r] @ ch.H2[r, 0] for r in range(cfg.R))
        assert np.linalg.norm(got - want) <= 1e-13 * np.linalg.norm(want)

    def test_aggregate_channel_blocks(self, rng):
        cfg = small_cfg()
        ch = net.generate_channels(cfg, 6)
        F = rand_complex(rng, cfg.R, cfg.N, cfg.N)
        H = net.aggregate_channel(ch, F, 0, 1)
        assert np.array_equal(H[:cfg.M], ch.J[0, 1])
        assert np.allclose(H[cfg.M:], net.effective_channel(ch, F, 0, 1))

    def test_aggregate_channel_zero_relay_path(self):
        cfg = small_cfg()
        ch = net.generate_channels(cfg, 6)
        F = np.zeros((cfg.R, cfg.N, cfg.N), dtype=complex)
        H = net.aggregate_channel(ch, F, 1, 1)
        assert np.allclose(H[cfg.M:], 0.0)
        assert np.array_equal(H[:cfg.M], ch.J[1, 1])


class TestNoiseCovariance:
    def test_zero_relay_filters(self):
        cfg = small_cfg(sigma_sq=2.0)
        ch = net.generate_channels(cfg, 2)
        F = np.zeros((cfg.R, cfg.N, cfg.N), dtype=complex)
        assert np.allclose(net.noise_covariance(ch, F, cfg, 0),
                           2.0 * np.eye(2 * cfg.M))

    def test_identity_single_relay(self):
        cfg = small_cfg(K=1, d=1, M=3, N=3, R=1, sigma_sq=1.5)
        ch = identity_channels(cfg)
        F = np.eye(3, dtype=complex)[None]
        Rn = net.noise_covariance(ch, F, cfg, 0)
        assert np.allclose(Rn[:3, :3], 1.5 * np.eye(3))
        assert np.allclose(Rn[3:, 3:], (1.5 + 1.5) * np.eye(3))

    def test_psd_floor(self, rng):
        cfg = small_cfg()
        ch = net.generate_channels(cfg, 9)
        F = rand_complex(rng, cfg.R, cfg.N, cfg.N)
        w = np.linalg.eigvalsh(net.noise_covariance(ch, F, cfg, 1))
        assert w.min() >= cfg.sigma_sq - 1e-10


class TestPrecomputedForms:
    def test_zero_relays_gives_identity(self):
        cfg = small_cfg()
        ch = net.generate_channels(cfg, 2)
        bf = net.init_beamformers(cfg, ch, 3)
        F = np.zeros((cfg.R, cfg.N, cfg.N), dtype=complex)
        forms = net.precompute_forms(ch, F, bf, cfg)
        for k in range(cfg.K):
            assert np.allclose(forms.Rdot[k], np.eye(cfg.M))

    def test_stream_forms_rank_one(self):
        cfg = small_cfg()
        ch = net.generate_channels(cfg, 2)
        bf = net.init_beamformers(cfg, ch, 3)
        forms = net.precompute_forms(ch, bf.F, bf, cfg)
        w = np.linalg.eigvalsh(forms.Rkl[0, 1, 1])
        assert w[-1] > 0
        assert np.all(np.abs(w[:-1]) <= 1e-10 * w[-1])

    def test_rdot_minus_identity_psd(self):
        cfg = small_cfg()
        ch = net.generate_channels(cfg, 2)
        bf = net.init_beamformers(cfg, ch, 3)
        forms = net.precompute_forms(ch, bf.F, bf, cfg)
        for k in range(cfg.K):
            assert np.linalg.eigvalsh(forms.Rdot[k] - np.eye(cfg.M)).min() >= -1e-10

    def test_all_forms_psd(self):
        cfg = small_cfg()
        ch = net.generate_channels(cfg, 12)
        bf = net.init_beamformers(cfg, ch, 13)
        forms = net.precompute_forms(ch, bf.F, bf, cfg)
        mats = [forms.Rdot[k] for k in range(cfg.K)]
        mats += [forms.Rrk[r, k] for r in range(cfg.R) for k in range(cfg.K)]
        mats += [forms.Rkl[k, l, i] for k in range(cfg.K) for l in range(cfg.d)
                 for i in range(cfg.K)]
        mats += [forms.Rn[k] for k in range(cfg.K)]
        for m in mats:
            assert np.linalg.eigvalsh(m).min() >= -1e-10


class TestSinr:
    def test_single_term_ratio(self):
        # |vbar^H H u|^2 = 4 over sigma_n^2 = 2 -> SINR = 2
        cfg = net.NetworkConfig(K=1, d=1, M=1, N=1, R=1, sigma_sq=2.0)
        J = np.full((1, 1, 1, 1), 2.0, dtype=complex)
        G = np.zeros((1, 1, 1, 1), dtype=complex)
        H2 = np.zeros((1, 1, 1, 1), dtype=complex)
        ch = net.ChannelSet(J=J, G=G, H2=H2)
        bf = net.BeamformerSet(u=np.ones((1, 1, 1), dtype=complex),
                               F=np.zeros((1, 1, 1), dtype=complex),
                               vbar=np.array([[[1.0, 0.0]]], dtype=complex))
        assert net.stream_sinr(bf, ch, bf.F, cfg, 0, 0) == pytest.approx(2.0)

    def test_homogeneity_single_user(self, rng):
        cfg = small_cfg(K=1, d=1)
        ch = net.generate_channels(cfg, 4)
        bf = net.init_beamformers(cfg, ch, 5)
        base = net.stream_sinr(bf, ch, bf.F, cfg, 0, 0)
        bf2 = net.BeamformerSet(u=np.sqrt(3.0) * bf.u, F=bf.F.copy(), vbar=bf.vbar.copy())
        assert net.stream_sinr(bf2, ch, bf2.F, cfg, 0, 0) == pytest.approx(3 * base, rel=1e-10)

    def test_quadratic_form_agreement(self):
        cfg = small_cfg()
        ch = net.generate_channels(cfg, 11)
        bf = net.init_beamformers(cfg, ch, 12)
        forms = net.precompute_forms(ch, bf.F, bf, cfg)
        for k in range(cfg.K):
            for l in range(cfg.d):
                direct = net.stream_sinr(bf, ch, bf.F, cfg, k, l)
                quad = net.stream_sinr_quadratic(forms, bf.u, k, l)
                assert quad == pytest.approx(direct, rel=1e-10)

    def test_covariance_path_exact(self):
        cfg = small_cfg()
        ch = net.generate_channels(cfg, 11)
        bf = net.init_beamformers(cfg, ch, 12)
        forms = net.precompute_forms(ch, bf.F, bf, cfg)
        X = np.einsum("kli,klj->klij", bf.u, bf.u.conj())
        for k in range(cfg.K):
            for l in range(cfg.d):
                assert net.stream_sinr_quadratic(forms, X, k, l) == pytest.approx(
                    net.stream_sinr_quadratic(forms, bf.u, k, l), rel=1e-12)

    def test_interference_free_degenerate(self):
        cfg = small_cfg(K=1, d=1)
        ch = net.generate_channels(cfg, 4)
        bf = net.init_beamformers(cfg, ch, 5)
        forms = net.precompute_forms(ch, bf.F, bf, cfg)
        X = np.einsum("kli,klj->klij", bf.u, bf.u.conj())
        expect = float(np.real(np.sum(X[0, 0] * forms.Rkl[0, 0, 0].T))) / forms.sigma_n[0, 0]
        assert net.stream_sinr_quadratic(forms, X, 0, 0) == pytest.approx(expect, rel=1e-12)

    def test_agreement_over_random_instances(self):
        # spec invariant: 100 random instances across the allowed dim ranges
        master = np.random.default_rng(991)
        for _ in range(100):
            cfg = net.NetworkConfig(
                K=int(master.integers(1, 4)), d=int(master.integers(1, 3)),
                M=int(master.integers(2, 11)), N=int(master.integers(1, 9)),
                R=int(master.integers(1, 4)))
            ch = net.generate_channels(cfg, int(master.integers(1 << 31)))
            bf = net.init_beamformers(cfg, ch, int(master.integers(1 << 31)))
            forms = net.precompute_forms(ch, bf.F, bf, cfg)
            k = int(master.integers(cfg.K))
            l = int(master.integers(cfg.d))
            direct = net.stream_sinr(bf, ch, bf.F, cfg, k, l)
            assert net.stream_sinr_quadratic(forms, bf.u, k, l) == pytest.approx(
                direct, rel=1e-10)


class TestPowers:
    def test_unit_vector_streams(self):
        cfg = small_cfg(d=2)
        u = np.zeros((cfg.K, cfg.d, cfg.M), dtype=complex)
        u[:, :, 0] = 1.0
        bf = net.BeamformerSet(u=u, F=np.zeros((cfg.R, cfg.N, cfg.N), dtype=complex),
                               vbar=np.zeros((cfg.K, cfg.d, 2 * cfg.M), dtype=complex))
        assert net.transmit_power(bf, 0) == pytest.approx(2.0)

    def test_zero_relay_filters_collapse(self):
        cfg = small_cfg()
        ch = net.generate_channels(cfg, 8)
        bf0 = net.init_beamformers(cfg, ch, 9)
        bf = net.BeamformerSet(u=bf0.u.copy(),
                               F=np.zeros((cfg.R, cfg.N, cfg.N), dtype=complex),
                               vbar=bf0.vbar.copy())
        assert net.relay_power(bf, ch, cfg, 0) == pytest.approx(0.0, abs=1e-15)
        total = net.total_power(bf, ch, cfg)
        assert total == pytest.approx(sum(net.transmit_power(bf, k) for k in range(cfg.K)),
                                      rel=1e-12)

    def test_total_power_identity(self):
        cfg = small_cfg()
        ch = net.generate_channels(cfg, 8)
        bf = net.init_beamformers(cfg, ch, 9)
        total = net.total_power(bf, ch, cfg)
        parts = sum(net.transmit_power(bf, k) for k in range(cfg.K)) \
            + sum(net.relay_power(bf, ch, cfg, r) for r in range(cfg.R))
        assert total == pytest.approx(parts, rel=1e-10)


class TestAssignTargets:
    def test_user_mean(self):
        t = net.assign_targets(np.array([[2.0, 4.0]]))
        assert np.allclose(t.gamma, [[3.0, 3.0]])

    def test_single_stream_identity(self):
        t = net.assign_targets(np.array([[5.0], [7.0]]))
        assert np.allclose(t.gamma, [[5.0], [7.0]])

    def test_loop_oracle(self, rng):
        sinrs = rng.uniform(0.1, 5.0, size=(3, 2))
        t = net.assign_targets(sinrs)
        for k in range(3):
            want = (sinrs[k, 0] + sinrs[k, 1]) / 2
            assert t.gamma[k, 0] == pytest.approx(want)
            assert t.gamma[k, 1] == pytest.approx(want)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            net.assign_targets(np.array([[0.0, 1.0]]))
