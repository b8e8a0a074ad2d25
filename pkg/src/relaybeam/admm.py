"""Distributed per-stream transmit beamforming via ADMM.

Each stream (k, l) owns one covariance X_{k,l}; per iteration every stream
solves a small conic subproblem in parallel against a shared state snapshot,
then closed-form auxiliary and dual updates run after a barrier. The sum of
cross-stream interference scalars needed by the mu' update is produced by a
collector step over the fresh covariances, so the result is deterministic
regardless of scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import conic
from .linalg import hermitian_eig
from .network import (NetworkConfig, PrecomputedForms, SinrTargets, precompute_forms,
                      stream_sinr_quadratic, total_power_from_x)


class AdmmError(RuntimeError):
    pass


class SubproblemInfeasibleError(AdmmError):
    """A per-stream subproblem has no feasible point (e.g. negative equality RHS)."""


class ConicFailureError(AdmmError):
    """The conic backend failed; carries the offending ConicSolution."""

    def __init__(self, message: str, solution=None):
        super().__init__(message)
        self.solution = solution


class NonRankOneError(AdmmError):
    """Covariance is not rank one within the requested eigenvalue ratio."""

    def __init__(self, ratio: float):
        super().__init__(f"eigenvalue ratio {ratio:.3e} above tolerance")
        self.ratio = ratio


@dataclass
class AlgorithmControl:
    """Loop controls and step sizes shared by all distributed algorithms."""

    s_max: int = 200
    delta_max: float = 1e-4
    incorporate_power_constraints: bool = False
    rho: float = 1.2
    rho_c: float = 0.5
    adal_rho: float = 9.0
    tau: float = 0.3
    relay_rho: float = 1.2
    rho2: float = 0.0
    init_seed: int = 0
    conic_tol: float = 1e-7

    def __post_init__(self):
        if self.delta_max <= 0:
            raise ValueError("delta_max must be positive")
        if min(self.rho, self.rho_c, self.adal_rho, self.relay_rho) <= 0:
            raise ValueError("step sizes must be positive")


@dataclass
class AdmmState:
    X: np.ndarray        # (K, d, M, M)
    zeta: np.ndarray     # (K, d)
    zeta_b: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    mu_b: np.ndarray
    rho: float
    rho_c: float
    iteration: int = 0
    # interference price each stream charges for the interference caused to
    # it; relaxes toward the stream's own SINR-equality multiplier so the
    # per-stream solves reproduce the joint KKT point at the fixed point
    price: np.ndarray = None


@dataclass
class RunOutcome:
    converged: bool
    iflag: bool
    iterations: int
    total_power_history: list
    sinr_deviation_history: list
    X: np.ndarray
    message_count: int
    total_power: float
    sinrs: np.ndarray
    # per-iteration diagnostics
    min_eig_history: list = field(default_factory=list)
    aux_residual_history: list = field(default_factory=list)
    primal_residual: float = float("nan")
    note: str = ""


def init_state(cfg: NetworkConfig, ctrl: AlgorithmControl) -> AdmmState:
    """Zero covariances and multipliers plus uniform-[0,1] auxiliaries.

    Multipliers start at zero: O(1) random multipliers push the first
    auxiliary update below the -sigma_n^2 feasibility floor of the
    X-subproblem equality on most paper-scale instances, killing the run.
    The auxiliaries keep the seeded random draw, which is harmless because
    sigma_n^2 >= sigma^2 * ||vbar||^2 bounds the first update safely.
    """
    rng = np.random.default_rng(ctrl.init_seed)
    shape = (cfg.K, cfg.d)
    zeros = np.zeros(shape)
    return AdmmState(
        X=np.zeros((cfg.K, cfg.d, cfg.M, cfg.M), dtype=np.complex128),
        zeta=rng.uniform(size=shape), zeta_b=rng.uniform(size=shape),
        lam=zeros.copy(), mu=zeros.copy(), mu_b=zeros.copy(),
        rho=ctrl.rho, rho_c=ctrl.rho_c, price=zeros.copy())


def priced_objective(forms: PrecomputedForms, state: AdmmState, k: int, l: int) -> np.ndarray:
    """Power cost of stream (k, l) plus the interference it causes to every
    other stream, charged at the current prices."""
    K, d = forms.sigma_n.shape
    obj = forms.Rdot[k].copy()
    for j in range(K):
        for m in range(d):
            if (j, m) != (k, l):
                obj += state.price[j, m] * forms.Rkl[j, m, k]
    return obj


def build_x_subproblem(forms: PrecomputedForms, targets: SinrTargets, state: AdmmState,
                       k: int, l: int, ctrl: AlgorithmControl,
                       cfg: NetworkConfig) -> conic.ConicProblem:
    """Per-stream subproblem: minimize the interference-priced power cost
    subject to the stream's own SINR-auxiliary equality, the PSD cone, and
    (optionally) the residual transmit/relay power budgets left over by the
    other streams' snapshot."""
    gamma = targets.gamma[k, l]
    rhs = gamma * (state.zeta[k, l] + forms.sigma_n[k, l])
    if rhs < 0:
        raise SubproblemInfeasibleError(
            f"stream ({k},{l}): negative SINR equality rhs {rhs:.3e}")
    cons = [conic.Constraint(conic.AffineExpr(blocks={"X": forms.Rkl[k, l, k]}), "eq", rhs)]
    if ctrl.incorporate_power_constraints:
        M = forms.Rdot.shape[1]
        used_tx = sum(float(np.real(np.trace(state.X[k, m]))) for m in range(state.X.shape[1])
                      if m != l)
        cons.append(conic.Constraint(conic.AffineExpr(blocks={"X": np.eye(M)}), "le",
                                     cfg.p_tx_max - used_tx))
        K, d = forms.sigma_n.shape
        for r in range(forms.Rrk.shape[0]):
            used = sum(float(np.real(np.sum(state.X[j, m] * forms.Rrk[r, j].T)))
                       for j in range(K) for m in range(d) if (j, m) != (k, l))
            budget = cfg.p_relay_max - forms.relay_noise[r]
            cons.append(conic.Constraint(conic.AffineExpr(blocks={"X": forms.Rrk[r, k]}), "le",
                                         budget - used))
    return conic.ConicProblem(
        psd_blocks=[("X", forms.Rdot.shape[1])],
        objective=conic.AffineExpr(blocks={"X": priced_objective(forms, state, k, l)}),
        constraints=cons)


def update_aux(state: AdmmState, k: int, l: int):
    """Closed-form auxiliary updates; the second uses the first sequentially."""
    zeta = -(state.lam[k, l] + state.mu[k, l]) / state.rho - state.zeta_b[k, l]
    zeta_b = -(state.lam[k, l] + state.mu_b[k, l]) / state.rho - zeta
    return zeta, zeta_b


def interference_total(forms: PrecomputedForms, X: np.ndarray, k: int, l: int) -> float:
    """Collector sum: interference into stream (k, l) from all other streams."""
    K, d = forms.sigma_n.shape
    return float(sum(np.real(np.sum(X[j, m] * forms.Rkl[k, l, j].T))
                     for j in range(K) for m in range(d) if (j, m) != (k, l)))


def update_duals(state: AdmmState, forms: PrecomputedForms, targets: SinrTargets,
                 X_new: np.ndarray, k: int, l: int):
    """Dual ascent for lambda, mu, mu'; ``state.zeta/zeta_b`` must already
    hold the iteration's fresh auxiliary values."""
    lam = state.lam[k, l] + state.rho * (state.zeta[k, l] + state.zeta_b[k, l])
    own = float(np.real(np.sum(X_new[k, l] * forms.Rkl[k, l, k].T)))
    mu = state.mu[k, l] + state.rho_c * (
        state.zeta[k, l] - own / targets.gamma[k, l] + forms.sigma_n[k, l])
    mu_b = state.mu_b[k, l] + state.rho_c * (
        state.zeta_b[k, l] + interference_total(forms, X_new, k, l))
    return lam, mu, mu_b


def solve_stream(problem: conic.ConicProblem, tol: float) -> conic.ConicSolution:
    """Run one per-stream conic solve, mapping failures to exceptions."""
    sol = conic.solve(problem, tol=tol)
    if sol.status == conic.INFEASIBLE:
        raise SubproblemInfeasibleError("per-stream subproblem infeasible")
    if sol.status != conic.OPTIMAL:
        raise ConicFailureError(f"conic solve failed: {sol.message}", sol)
    return sol


def power_check(forms: PrecomputedForms, X: np.ndarray, cfg: NetworkConfig) -> bool:
    """True iff any transmit or relay power budget is violated (sets iflag)."""
    K, d = forms.sigma_n.shape
    slack = 1e-9
    for k in range(K):
        p_k = sum(float(np.real(np.trace(X[k, l]))) for l in range(d))
        if p_k > cfg.p_tx_max * (1.0 + slack) + 1e-12:
            return True
    for r in range(forms.Rrk.shape[0]):
        p_r = sum(float(np.real(np.sum(X[k, l] * forms.Rrk[r, k].T)))
                  for k in range(K) for l in range(d))
        budget = cfg.p_relay_max - forms.relay_noise[r]
        if p_r > budget + slack * cfg.p_relay_max + 1e-12:
            return True
    return False


def run(cfg: NetworkConfig, channels, beamformers, targets: SinrTargets,
        ctrl: AlgorithmControl | None = None) -> RunOutcome:
    """Main loop: per-stream conic solves, closed-form aux/dual updates, and
    the SINR-deviation exit followed by the post-hoc power check."""
    ctrl = ctrl or AlgorithmControl()
    forms = precompute_forms(channels, beamformers.F, beamformers, cfg)
    state = init_state(cfg, ctrl)
    K, d, B = cfg.K, cfg.d, cfg.B
    overhead = float(forms.relay_noise.sum())

    converged = False
    note = ""
    power_hist, dev_hist, eig_hist, aux_hist = [], [], [], []
    sinrs = np.zeros((K, d))
    for _ in range(ctrl.s_max):
        X_new = np.empty_like(state.X)
        nu = np.zeros((K, d))
        try:
            for k in range(K):
                for l in range(d):
                    sol = solve_stream(
                        build_x_subproblem(forms, targets, state, k, l, ctrl, cfg),
                        ctrl.conic_tol)
                    X_new[k, l] = sol.blocks["X"]
                    nu[k, l] = -sol.duals[0]  # SINR-equality multiplier
        except SubproblemInfeasibleError as exc:
            # the infeasible-targets / fluctuant bucket: stop iterating and
            # let the post-loop power check decide the flag on the last iterate
            note = f"aborted: {exc}"
            break

        aux_res = 0.0
        for k in range(K):
            for l in range(d):
                zeta, zeta_b = update_aux(state, k, l)
                aux_res = max(aux_res,
                              abs(state.lam[k, l] + state.mu[k, l]
                                  + state.rho * (zeta + state.zeta_b[k, l])),
                              abs(state.lam[k, l] + state.mu_b[k, l]
                                  + state.rho * (zeta + zeta_b)))
                state.zeta[k, l], state.zeta_b[k, l] = zeta, zeta_b
        for k in range(K):
            for l in range(d):
                (state.lam[k, l], state.mu[k, l], state.mu_b[k, l]) = update_duals(
                    state, forms, targets, X_new, k, l)
        # relax prices toward the per-stream constraint multipliers scaled
        # back to the original SINR inequality
        state.price = np.maximum(
            0.0, (1.0 - ctrl.rho_c) * state.price + ctrl.rho_c * targets.gamma * nu)
        state.X = X_new
        state.iteration += 1

        for k in range(K):
            for l in range(d):
                sinrs[k, l] = stream_sinr_quadratic(forms, state.X, k, l)
        dev = np.abs(sinrs - targets.gamma)
        power_hist.append(total_power_from_x(forms, state.X) + overhead)
        dev_hist.append(float(dev.sum()))
        eig_hist.append(min(float(np.linalg.eigvalsh(state.X[k, l]).min())
                            for k in range(K) for l in range(d)))
        aux_hist.append(aux_res)
        if np.all(dev <= ctrl.delta_max):
            converged = True
            break

    iflag = power_check(forms, state.X, cfg)
    return RunOutcome(
        converged=converged, iflag=iflag, iterations=state.iteration,
        total_power_history=power_hist, sinr_deviation_history=dev_hist,
        X=state.X, message_count=state.iteration * B * B,
        total_power=power_hist[-1] if power_hist else float("nan"),
        sinrs=sinrs.copy(), min_eig_history=eig_hist, aux_residual_history=aux_hist,
        primal_residual=float(np.abs(state.zeta + state.zeta_b).max()), note=note)


def rank_one_extract(X: np.ndarray, ratio_tol: float = 1e-4):
    """Principal-component beamformer from a PSD covariance.

    Returns (u, ratio) with u = sqrt(lambda_1) v_1 and ratio = lambda_2 /
    lambda_1; raises NonRankOneError when the ratio exceeds ``ratio_tol``
    (Gaussian randomization is out of scope; failures are reported only).
    """
    w, v = hermitian_eig(X, rtol=1e-8)
    lead = max(w[0], 0.0)
    ratio = 0.0 if w.size == 1 else (w[1] / lead if lead > 0 else 1.0)
    ratio = max(ratio, 0.0)
    if ratio > ratio_tol:
        raise NonRankOneError(ratio)
    return np.sqrt(lead) * v[:, 0], ratio


def extract_all(X: np.ndarray, ratio_tol: float = 1e-4):
    """rank_one_extract over a (K, d, M, M) covariance set -> (u, ratios)."""
    K, d, M = X.shape[0], X.shape[1], X.shape[2]
    u = np.empty((K, d, M), dtype=np.complex128)
    ratios = np.empty((K, d))
    for k in range(K):
        for l in range(d):
            u[k, l], ratios[k, l] = rank_one_extract(X[k, l], ratio_tol)
    return u, ratios
