"""Centralized SDR solve, ADMM-BG and ADAL benchmarks, and the complexity /
message-exchange accounting used to compare the distributed algorithms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import conic
from .admm import (AlgorithmControl, AdmmState, ConicFailureError, RunOutcome,
                   SubproblemInfeasibleError, init_state, power_check,
                   priced_objective, update_aux, update_duals)
from .network import (NetworkConfig, PrecomputedForms, SinrTargets, precompute_forms,
                      stream_sinr_quadratic, total_power_from_x)


@dataclass
class CentralizedResult:
    status: str
    X: np.ndarray | None
    total_power: float | None
    solution: conic.ConicSolution


def _stream_name(k: int, l: int) -> str:
    return f"X_{k}_{l}"


def centralized_solve(forms: PrecomputedForms, targets: SinrTargets, cfg: NetworkConfig,
                      incorporate_power_constraints: bool = False,
                      tol: float = 1e-7) -> CentralizedResult:
    """One joint SDR over all stream covariances with per-stream SINR
    inequality constraints (and optionally the power budgets)."""
    K, d, M = cfg.K, cfg.d, cfg.M
    blocks = [(_stream_name(k, l), M) for k in range(K) for l in range(d)]
    objective = conic.AffineExpr(
        blocks={_stream_name(k, l): forms.Rdot[k] for k in range(K) for l in range(d)})
    cons = []
    for k in range(K):
        for l in range(d):
            coeffs = {_stream_name(k, l): -forms.Rkl[k, l, k] / targets.gamma[k, l]}
            for j in range(K):
                for m in range(d):
                    if (j, m) != (k, l):
                        coeffs[_stream_name(j, m)] = forms.Rkl[k, l, j]
            cons.append(conic.Constraint(conic.AffineExpr(blocks=coeffs), "le",
                                         -forms.sigma_n[k, l]))
    if incorporate_power_constraints:
        for k in range(K):
            coeffs = {_stream_name(k, l): np.eye(M) for l in range(d)}
            cons.append(conic.Constraint(conic.AffineExpr(blocks=coeffs), "le", cfg.p_tx_max))
        for r in range(cfg.R):
            coeffs = {_stream_name(k, l): forms.Rrk[r, k] for k in range(K) for l in range(d)}
            cons.append(conic.Constraint(conic.AffineExpr(blocks=coeffs), "le",
                                         cfg.p_relay_max - forms.relay_noise[r]))
    sol = conic.solve(conic.ConicProblem(psd_blocks=blocks, objective=objective,
                                         constraints=cons), tol=tol)
    if sol.status != conic.OPTIMAL:
        return CentralizedResult(status=sol.status, X=None, total_power=None, solution=sol)
    X = np.empty((K, d, M, M), dtype=np.complex128)
    for k in range(K):
        for l in range(d):
            X[k, l] = sol.blocks[_stream_name(k, l)]
    total = float(sol.objective) + float(forms.relay_noise.sum())
    return CentralizedResult(status=sol.status, X=X, total_power=total, solution=sol)


@dataclass
class AdmmBgState(AdmmState):
    """Proposed-algorithm state plus the bounded-guarantee extras: the power
    proxy p = tr(X Rdot), its nonnegative slack t, and the dual eta''."""

    p: np.ndarray = None
    t: np.ndarray = None
    eta2: np.ndarray = None


def build_bg_subproblem(forms: PrecomputedForms, targets: SinrTargets, state: AdmmBgState,
                        k: int, l: int, ctrl: AlgorithmControl,
                        cfg: NetworkConfig) -> conic.ConicProblem:
    """ADMM-BG per-stream subproblem:
    min p - eta'' p + (rho/2)(t - p)^2 + caused-interference price charge,
    with the SINR equality, the power-proxy equality p = tr(X Rdot), and the
    PSD cone."""
    gamma = targets.gamma[k, l]
    rhs = gamma * (state.zeta[k, l] + forms.sigma_n[k, l])
    if rhs < 0:
        raise SubproblemInfeasibleError(
            f"stream ({k},{l}): negative SINR equality rhs {rhs:.3e}")
    M = forms.Rdot.shape[1]
    cons = [
        conic.Constraint(conic.AffineExpr(blocks={"X": forms.Rkl[k, l, k]}), "eq", rhs),
        conic.Constraint(conic.AffineExpr(blocks={"X": forms.Rdot[k]}, scalars={"p": -1.0}),
                         "eq", 0.0),
    ]
    if ctrl.incorporate_power_constraints:
        used_tx = sum(float(np.real(np.trace(state.X[k, m]))) for m in range(state.X.shape[1])
                      if m != l)
        cons.append(conic.Constraint(conic.AffineExpr(blocks={"X": np.eye(M)}), "le",
                                     cfg.p_tx_max - used_tx))
        K, d = forms.sigma_n.shape
        for r in range(forms.Rrk.shape[0]):
            used = sum(float(np.real(np.sum(state.X[j, m] * forms.Rrk[r, j].T)))
                       for j in range(K) for m in range(d) if (j, m) != (k, l))
            cons.append(conic.Constraint(conic.AffineExpr(blocks={"X": forms.Rrk[r, k]}), "le",
                                         cfg.p_relay_max - forms.relay_noise[r] - used))
    charge = priced_objective(forms, state, k, l) - forms.Rdot[k]
    return conic.ConicProblem(
        psd_blocks=[("X", M)],
        scalars=[("p", "free")],
        objective=conic.AffineExpr(blocks={"X": charge},
                                   scalars={"p": 1.0 - state.eta2[k, l]}),
        quad_terms=[(0.5 * state.rho,
                     conic.AffineExpr(scalars={"p": -1.0}, constant=float(state.t[k, l])))],
        constraints=cons)


def admm_bg_run(cfg: NetworkConfig, channels, beamformers, targets: SinrTargets,
                ctrl: AlgorithmControl | None = None) -> RunOutcome:
    """ADMM with the bounded-guarantee auxiliary power variable and slack."""
    ctrl = ctrl or AlgorithmControl()
    forms = precompute_forms(channels, beamformers.F, beamformers, cfg)
    base = init_state(cfg, ctrl)
    rng = np.random.default_rng(ctrl.init_seed + 1)
    state = AdmmBgState(X=base.X, zeta=base.zeta, zeta_b=base.zeta_b, lam=base.lam,
                        mu=base.mu, mu_b=base.mu_b, rho=base.rho, rho_c=base.rho_c,
                        price=base.price,
                        p=np.zeros((cfg.K, cfg.d)), t=np.zeros((cfg.K, cfg.d)),
                        eta2=rng.uniform(size=(cfg.K, cfg.d)))
    K, d, B = cfg.K, cfg.d, cfg.B
    overhead = float(forms.relay_noise.sum())

    converged = False
    note = ""
    power_hist, dev_hist = [], []
    sinrs = np.zeros((K, d))
    for _ in range(ctrl.s_max):
        X_new = np.empty_like(state.X)
        p_new = state.p.copy()
        nu = np.zeros((K, d))
        try:
            for k in range(K):
                for l in range(d):
                    prob = build_bg_subproblem(forms, targets, state, k, l, ctrl, cfg)
                    sol = conic.solve(prob, tol=ctrl.conic_tol)
                    if sol.status == conic.INFEASIBLE:
                        raise SubproblemInfeasibleError("ADMM-BG subproblem infeasible")
                    if sol.status != conic.OPTIMAL:
                        raise ConicFailureError(f"conic solve failed: {sol.message}", sol)
                    X_new[k, l] = sol.blocks["X"]
                    p_new[k, l] = sol.scalars["p"]
                    nu[k, l] = -sol.duals[0]
        except SubproblemInfeasibleError as exc:
            note = f"aborted: {exc}"
            break
        for k in range(K):
            for l in range(d):
                state.zeta[k, l], state.zeta_b[k, l] = update_aux(state, k, l)
        for k in range(K):
            for l in range(d):
                (state.lam[k, l], state.mu[k, l], state.mu_b[k, l]) = update_duals(
                    state, forms, targets, X_new, k, l)
        # slack block and its dual on the p = t coupling
        state.t = np.maximum(0.0, p_new - state.eta2 / state.rho)
        state.eta2 = state.eta2 + state.rho_c * (state.t - p_new)
        state.price = np.maximum(
            0.0, (1.0 - ctrl.rho_c) * state.price + ctrl.rho_c * targets.gamma * nu)
        state.X, state.p = X_new, p_new
        state.iteration += 1

        for k in range(K):
            for l in range(d):
                sinrs[k, l] = stream_sinr_quadratic(forms, state.X, k, l)
        dev = np.abs(sinrs - targets.gamma)
        power_hist.append(total_power_from_x(forms, state.X) + overhead)
        dev_hist.append(float(dev.sum()))
        if np.all(dev <= ctrl.delta_max):
            converged = True
            break

    return RunOutcome(
        converged=converged, iflag=power_check(forms, state.X, cfg),
        iterations=state.iteration, total_power_history=power_hist,
        sinr_deviation_history=dev_hist, X=state.X,
        message_count=state.iteration * B * B,
        total_power=power_hist[-1] if power_hist else float("nan"),
        sinrs=sinrs.copy(), note=note)


@dataclass
class AdalState:
    """Per-stream stacked auxiliaries, their relaxed broadcast copies, and the
    shared multiplier vector."""

    zeta_vec: np.ndarray    # (K, d, B)
    zeta_arrow: np.ndarray  # (K, d, B)
    lambda_vec: np.ndarray  # (B,)
    rho: float
    tau: float
    iteration: int = 0


def build_adal_subproblem(forms: PrecomputedForms, targets: SinrTargets, state: AdalState,
                          k: int, l: int, cfg: NetworkConfig) -> conic.ConicProblem:
    """Joint (zeta_vec, X) subproblem of stream (k, l): one auxiliary per
    stream of the network (own signal plus every caused-interference term)."""
    K, d, B = cfg.K, cfg.d, cfg.B
    own_q = k * d + l
    spill = np.zeros(B)
    for j in range(K):
        for m in range(d):
            if (j, m) != (k, l):
                spill += state.zeta_arrow[j, m]
    scalars = [(f"z{q}", "free") for q in range(B)]
    objective = conic.AffineExpr(blocks={"X": forms.Rdot[k]},
                                 scalars={f"z{q}": float(state.lambda_vec[q])
                                          for q in range(B)})
    quads = [(0.5 * state.rho,
              conic.AffineExpr(scalars={f"z{q}": 1.0}, constant=float(spill[q])))
             for q in range(B)]
    cons = [conic.Constraint(
        conic.AffineExpr(blocks={"X": forms.Rkl[k, l, k] / targets.gamma[k, l]},
                         scalars={f"z{own_q}": -1.0}),
        "eq", float(forms.sigma_n[k, l]))]
    for j in range(K):
        for m in range(d):
            if (j, m) != (k, l):
                cons.append(conic.Constraint(
                    conic.AffineExpr(blocks={"X": forms.Rkl[j, m, k]},
                                     scalars={f"z{j * d + m}": 1.0}),
                    "eq", 0.0))
    return conic.ConicProblem(psd_blocks=[("X", cfg.M)], scalars=scalars,
                              objective=objective, quad_terms=quads, constraints=cons)


def adal_run(cfg: NetworkConfig, channels, beamformers, targets: SinrTargets,
             ctrl: AlgorithmControl | None = None) -> RunOutcome:
    """Accelerated distributed augmented Lagrangians benchmark: per-stream
    joint (zeta, X) conic solves, relaxed auxiliary broadcast, collector-side
    multiplier update."""
    ctrl = ctrl or AlgorithmControl()
    forms = precompute_forms(channels, beamformers.F, beamformers, cfg)
    K, d, B = cfg.K, cfg.d, cfg.B
    state = AdalState(zeta_vec=np.zeros((K, d, B)),
                      zeta_arrow=np.zeros((K, d, B)),
                      lambda_vec=np.zeros(B), rho=ctrl.adal_rho, tau=ctrl.tau)
    X = np.zeros((cfg.K, cfg.d, cfg.M, cfg.M), dtype=np.complex128)
    overhead = float(forms.relay_noise.sum())

    converged = False
    power_hist, dev_hist = [], []
    sinrs = np.zeros((K, d))
    for _ in range(ctrl.s_max):
        X_new = np.empty_like(X)
        z_new = np.empty_like(state.zeta_vec)
        for k in range(K):
            for l in range(d):
                prob = build_adal_subproblem(forms, targets, state, k, l, cfg)
                sol = conic.solve(prob, tol=ctrl.conic_tol)
                if sol.status != conic.OPTIMAL:
                    raise ConicFailureError(f"ADAL conic solve failed: {sol.message}", sol)
                X_new[k, l] = sol.blocks["X"]
                z_new[k, l] = [sol.scalars[f"z{q}"] for q in range(B)]
        state.zeta_vec = z_new
        state.zeta_arrow = state.zeta_arrow + state.tau * (z_new - state.zeta_arrow)
        state.lambda_vec = state.lambda_vec + state.tau * state.rho * (
            state.zeta_arrow.sum(axis=(0, 1)))
        X = X_new
        state.iteration += 1

        for k in range(K):
            for l in range(d):
                sinrs[k, l] = stream_sinr_quadratic(forms, X, k, l)
        dev = np.abs(sinrs - targets.gamma)
        power_hist.append(total_power_from_x(forms, X) + overhead)
        dev_hist.append(float(dev.sum()))
        if np.all(dev <= ctrl.delta_max):
            converged = True
            break

    return RunOutcome(
        converged=converged, iflag=power_check(forms, X, cfg),
        iterations=state.iteration, total_power_history=power_hist,
        sinr_deviation_history=dev_hist, X=X,
        message_count=state.iteration * 2 * B * B,
        total_power=power_hist[-1] if power_hist else float("nan"),
        sinrs=sinrs.copy())


_ALGOS = ("proposed", "admm_bg", "adal", "joint")


def complexity_units_per_processor(algo: str, M: int = 0, N: int = 0, B: int = 0,
                                   R: int = 0) -> int:
    """Per-iteration complexity units of one processor (one stream; for the
    joint algorithm, the per-relay add-on)."""
    if algo == "proposed":
        return M + 5
    if algo == "admm_bg":
        return 2 * (M + 1) + 6
    if algo == "adal":
        return B * (M + B) + 2 * B
    if algo == "joint":
        return B * (2 * N + 5)
    raise ValueError(f"unknown algorithm {algo!r}; expected one of {_ALGOS}")


def complexity_units(algo: str, M: int = 0, N: int = 0, B: int = 0, R: int = 0) -> int:
    """Per-iteration complexity units over all processors."""
    if algo == "joint":
        return B * (M + 5) + R * complexity_units_per_processor("joint", M=M, N=N, B=B)
    return B * complexity_units_per_processor(algo, M=M, N=N, B=B, R=R)


def message_load(algo: str, B: int) -> int:
    """Scalars exchanged through the collector per iteration."""
    if B < 1:
        raise ValueError("B must be >= 1")
    if algo in ("proposed", "admm_bg", "joint"):
        return B * B
    if algo == "adal":
        return 2 * B * B
    raise ValueError(f"unknown algorithm {algo!r}; expected one of {_ALGOS}")
