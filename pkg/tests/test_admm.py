import numpy as np
import pytest

from relaybeam import admm, baselines, conic
from relaybeam import network as net


def paper_cfg():
    return net.NetworkConfig(K=3, d=2, M=10, N=8, R=3, snr_t_db=12.0, snr_r_db=12.0)


def small_cfg():
    return net.NetworkConfig(K=2, d=2, M=4, N=3, R=2, snr_t_db=9.0, snr_r_db=9.0)


def make_instance(cfg, seed):
    ch = net.generate_channels(cfg, seed)
    bf = net.init_beamformers(cfg, ch, 1000 + seed)
    forms = net.precompute_forms(ch, bf.F, bf, cfg)
    targets = net.assign_targets(net.all_stream_sinrs(bf, ch, cfg))
    return ch, bf, forms, targets


class TestSubproblem:
    def test_constraint_count_default(self):
        cfg = small_cfg()
        ch, bf, forms, targets = make_instance(cfg, 0)
        ctrl = admm.AlgorithmControl(init_seed=0)
        state = admm.init_state(cfg, ctrl)
        prob = admm.build_x_subproblem(forms, targets, state, 0, 0, ctrl, cfg)
        assert len(prob.constraints) == 1
        assert prob.constraints[0].sense == "eq"
        assert prob.psd_blocks == [("X", cfg.M)]

    def test_constraint_count_with_power(self):
        cfg = net.NetworkConfig(K=2, d=2, M=4, N=3, R=3, snr_t_db=9.0, snr_r_db=9.0)
        ch, bf, forms, targets = make_instance(cfg, 0)
        ctrl = admm.AlgorithmControl(init_seed=0, incorporate_power_constraints=True)
        state = admm.init_state(cfg, ctrl)
        prob = admm.build_x_subproblem(forms, targets, state, 0, 0, ctrl, cfg)
        # 1 equality + 1 transmit budget + R relay budgets
        assert len(prob.constraints) == 1 + 1 + cfg.R
        assert [c.sense for c in prob.constraints] == ["eq", "le", "le", "le", "le"]

    def test_scalar_closed_form(self):
        # M = 1: the equality pins X = gamma (zeta + sigma^2) / R^k
        cfg = net.NetworkConfig(K=1, d=1, M=1, N=1, R=1, snr_t_db=9.0, snr_r_db=9.0)
        ch, bf, forms, targets = make_instance(cfg, 1)
        ctrl = admm.AlgorithmControl(init_seed=1)
        state = admm.init_state(cfg, ctrl)
        prob = admm.build_x_subproblem(forms, targets, state, 0, 0, ctrl, cfg)
        sol = conic.solve(prob)
        want = targets.gamma[0, 0] * (state.zeta[0, 0] + forms.sigma_n[0, 0]) \
            / forms.Rkl[0, 0, 0][0, 0].real
        assert sol.blocks["X"][0, 0].real == pytest.approx(want, rel=1e-7)

    def test_negative_rhs_rejected(self):
        cfg = small_cfg()
        ch, bf, forms, targets = make_instance(cfg, 0)
        ctrl = admm.AlgorithmControl(init_seed=0)
        state = admm.init_state(cfg, ctrl)
        state.zeta[0, 0] = -forms.sigma_n[0, 0] - 1.0
        with pytest.raises(admm.SubproblemInfeasibleError):
            admm.build_x_subproblem(forms, targets, state, 0, 0, ctrl, cfg)


class TestAuxUpdate:
    def _state(self, **kw):
        base = dict(X=np.zeros((1, 1, 1, 1), dtype=complex),
                    zeta=np.zeros((1, 1)), zeta_b=np.zeros((1, 1)),
                    lam=np.zeros((1, 1)), mu=np.zeros((1, 1)), mu_b=np.zeros((1, 1)),
                    rho=1.2, rho_c=0.5, price=np.zeros((1, 1)))
        base.update(kw)
        return admm.AdmmState(**base)

    def test_direct_substitution(self):
        st = self._state(lam=np.array([[1.2]]))
        zeta, _ = admm.update_aux(st, 0, 0)
        assert zeta == pytest.approx(-1.0)

    def test_zero_dual_fixed_point_algebra(self):
        st = self._state(zeta_b=np.array([[0.7]]))
        zeta, zeta_b = admm.update_aux(st, 0, 0)
        assert zeta == pytest.approx(-0.7)
        assert zeta_b == pytest.approx(0.7)

    def test_stationarity_residuals(self, rng):
        for _ in range(20):
            st = self._state(lam=rng.normal(size=(1, 1)), mu=rng.normal(size=(1, 1)),
                             mu_b=rng.normal(size=(1, 1)), zeta_b=rng.normal(size=(1, 1)))
            zb_old = st.zeta_b[0, 0]
            zeta, zeta_b = admm.update_aux(st, 0, 0)
            assert abs(st.lam[0, 0] + st.mu[0, 0] + st.rho * (zeta + zb_old)) <= 1e-12
            assert abs(st.lam[0, 0] + st.mu_b[0, 0] + st.rho * (zeta + zeta_b)) <= 1e-12


class TestDualUpdate:
    def test_zero_consensus_residual_keeps_lambda(self):
        cfg = small_cfg()
        ch, bf, forms, targets = make_instance(cfg, 2)
        ctrl = admm.AlgorithmControl(init_seed=2)
        state = admm.init_state(cfg, ctrl)
        state.zeta[0, 0] = 0.4
        state.zeta_b[0, 0] = -0.4
        state.lam[0, 0] = 1.7
        X = np.einsum("kli,klj->klij", bf.u, bf.u.conj())
        lam, _, _ = admm.update_duals(state, forms, targets, X, 0, 0)
        assert lam == pytest.approx(1.7)

    def test_exact_own_signal_keeps_mu(self):
        cfg = small_cfg()
        ch, bf, forms, targets = make_instance(cfg, 2)
        ctrl = admm.AlgorithmControl(init_seed=2)
        state = admm.init_state(cfg, ctrl)
        X = np.einsum("kli,klj->klij", bf.u, bf.u.conj())
        own = float(np.real(np.sum(X[0, 0] * forms.Rkl[0, 0, 0].T)))
        state.zeta[0, 0] = own / targets.gamma[0, 0] - forms.sigma_n[0, 0]
        state.mu[0, 0] = 0.9
        _, mu, _ = admm.update_duals(state, forms, targets, X, 0, 0)
        assert mu == pytest.approx(0.9, abs=1e-12)

    def test_formula_oracle(self, rng):
        cfg = small_cfg()
        ch, bf, forms, targets = make_instance(cfg, 2)
        ctrl = admm.AlgorithmControl(init_seed=5)
        state = admm.init_state(cfg, ctrl)
        state.zeta = rng.normal(size=(cfg.K, cfg.d))
        state.zeta_b = rng.normal(size=(cfg.K, cfg.d))
        state.lam = rng.normal(size=(cfg.K, cfg.d))
        state.mu = rng.normal(size=(cfg.K, cfg.d))
        state.mu_b = rng.normal(size=(cfg.K, cfg.d))
        X = np.einsum("kli,klj->klij", bf.u, bf.u.conj())
        k, l = 1, 0
        lam, mu, mu_b = admm.update_duals(state, forms, targets, X, k, l)
        own = float(np.real(np.sum(X[k, l] * forms.Rkl[k, l, k].T)))
        interf = sum(float(np.real(np.sum(X[j, m] * forms.Rkl[k, l, j].T)))
                     for j in range(cfg.K) for m in range(cfg.d) if (j, m) != (k, l))
        assert lam == pytest.approx(
            state.lam[k, l] + state.rho * (state.zeta[k, l] + state.zeta_b[k, l]), abs=1e-14)
        assert mu == pytest.approx(
            state.mu[k, l] + state.rho_c * (state.zeta[k, l]
                                            - own / targets.gamma[k, l]
                                            + forms.sigma_n[k, l]), abs=1e-14)
        assert mu_b == pytest.approx(
            state.mu_b[k, l] + state.rho_c * (state.zeta_b[k, l] + interf), abs=1e-14)


class TestRun:
    def test_feasible_instance_converges_to_centralized(self):
        cfg = paper_cfg()
        ch, bf, forms, targets = make_instance(cfg, 1)
        out = admm.run(cfg, ch, bf, targets, admm.AlgorithmControl(init_seed=1))
        assert out.converged
        assert not out.iflag
        assert np.all(np.abs(out.sinrs - targets.gamma) <= 1e-4)
        cen = baselines.centralized_solve(forms, targets, cfg)
        assert out.total_power == pytest.approx(cen.total_power, rel=1e-3)
        assert out.message_count == out.iterations * cfg.B ** 2

    def test_run_invariants(self):
        cfg = small_cfg()
        ch, bf, forms, targets = make_instance(cfg, 3)
        out = admm.run(cfg, ch, bf, targets, admm.AlgorithmControl(init_seed=3))
        assert out.converged
        # aux stationarity every iteration
        assert max(out.aux_residual_history) <= 1e-12
        # X iterates PSD every iteration
        assert min(out.min_eig_history) >= -1e-8
        # primal residual small at convergence
        assert out.primal_residual <= 1e-4
        # monotone tail: last five powers non-increasing within 1e-3 relative
        tail = out.total_power_history[-5:]
        for a, b in zip(tail, tail[1:]):
            assert b <= a * (1 + 1e-3)

    def test_scaled_targets_set_iflag(self):
        cfg = small_cfg()
        ch, bf, forms, targets = make_instance(cfg, 3)
        big = net.SinrTargets(gamma=100.0 * targets.gamma)
        out = admm.run(cfg, ch, bf, big, admm.AlgorithmControl(init_seed=3))
        assert out.iflag


class TestRankOneExtract:
    def test_exact_rank_one(self):
        w = np.array([1.0, 1.0j])
        u, ratio = admm.rank_one_extract(np.outer(w, w.conj()), ratio_tol=1e-8)
        assert ratio == pytest.approx(0.0, abs=1e-12)
        # recovered up to a unit phase
        phase = u[0] / w[0]
        assert abs(abs(phase) - 1.0) < 1e-10
        assert np.allclose(u, phase * w, atol=1e-10)

    def test_identity_degenerate(self):
        with pytest.raises(admm.NonRankOneError):
            admm.rank_one_extract(np.eye(2), ratio_tol=1e-4)

    def test_perturbation_ratio(self):
        w = np.array([1.0, 1.0j])
        X = np.outer(w, w.conj()) + 1e-9 * np.eye(2)
        _, ratio = admm.rank_one_extract(X, ratio_tol=1.0)
        want = 1e-9 / (np.linalg.norm(w) ** 2 + 1e-9)
        assert ratio == pytest.approx(want, rel=1e-3)
