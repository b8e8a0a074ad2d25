"""Joint transmit and relay beamforming.

The exact per-stream SINR is not an explicit function of the relay filters
when direct links exist (a sign-indefinite cross term couples the two
paths). Dropping that cross term gives an approximate SINR that IS an
explicit homogeneous quadratic in the lifted relay filter fbar = [vec(F); t]
with |t| = 1, which makes the relay side amenable to the same per-processor
conic + closed-form-update machinery as the transmit side. The approximation
also drops the cross-relay mixing inside the amplified-noise quadratic, so
with a single relay (and no direct links) it collapses to the exact SINR.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import conic
from .admm import (AlgorithmControl, RunOutcome, SubproblemInfeasibleError,
                   build_x_subproblem, extract_all, init_state, power_check,
                   solve_stream, update_aux, update_duals)
from .linalg import herm, unvec, vec
from .network import (BeamformerSet, ChannelSet, NetworkConfig, SinrTargets,
                      effective_channel, noise_covariance, precompute_forms,
                      stream_sinr_quadratic, total_power_from_x)


@dataclass
class RelayEntry:
    """Quadratic-form pieces of one (stream, relay, source-stream) triple."""

    a: np.ndarray        # G[k,r]^H v_{k,l}(2), length N
    b: np.ndarray        # H2[r,i] u_{i,n}, length N
    c: np.ndarray        # b kron conj(a), length N^2
    resid: complex       # other-relay residual sum_{s != r} a_s^H F_s b_s
    C: np.ndarray        # conj(c) c^T, N^2 x N^2 PSD
    d: np.ndarray        # resid * conj(c), length N^2


@dataclass
class StreamRelayForms:
    """All relay-r quadratic forms of stream (k, l): per-source entries plus
    the aggregated homogenized numerator/denominator blocks."""

    k: int
    l: int
    r: int
    entries: dict                 # (i, n) -> RelayEntry
    zeta1: np.ndarray             # (K, d) first-slot signal powers
    O: np.ndarray                 # amplified-noise quadratic, N^2 x N^2
    sigma_klr: float              # constant noise part (slot-2 residual + rx)
    r1: float                     # numerator constant
    Cbar: np.ndarray              # denominator quadratic
    dbar: np.ndarray              # denominator linear
    r2: float                     # denominator constant
    Ct_num: np.ndarray            # homogenized numerator, (N^2+1)^2
    Ct_den: np.ndarray            # homogenized denominator, (N^2+1)^2


def build_relay_entry(channels: ChannelSet, beamformers: BeamformerSet, cfg: NetworkConfig,
                      k: int, l: int, r: int, i: int, n: int) -> RelayEntry:
    """Pieces of v(2)^H H'_{ki} u_{i,n} = f_r^T c + resid for one source."""
    v2 = beamformers.vbar[k, l][cfg.M:]
    a = herm(channels.G[k, r]) @ v2
    b = channels.H2[r, i] @ beamformers.u[i, n]
    c = np.kron(b, a.conj())
    resid = 0.0 + 0.0j
    for s in range(cfg.R):
        if s != r:
            a_s = herm(channels.G[k, s]) @ v2
            resid += a_s.conj() @ beamformers.F[s] @ (channels.H2[s, i] @ beamformers.u[i, n])
    C = np.outer(c.conj(), c)
    return RelayEntry(a=a, b=b, c=c, resid=complex(resid), C=C, d=resid * c.conj())


def build_relay_forms(channels: ChannelSet, beamformers: BeamformerSet, cfg: NetworkConfig,
                      k: int, l: int, r: int) -> StreamRelayForms:
    """Aggregate the per-source entries of stream (k, l) at relay r into the
    homogenized numerator/denominator block matrices."""
    K, d, N, M = cfg.K, cfg.d, cfg.N, cfg.M
    v1 = beamformers.vbar[k, l][:M]
    v2 = beamformers.vbar[k, l][M:]
    entries = {}
    zeta1 = np.empty((K, d))
    for i in range(K):
        for n in range(d):
            entries[(i, n)] = build_relay_entry(channels, beamformers, cfg, k, l, r, i, n)
            zeta1[i, n] = abs(v1.conj() @ channels.J[k, i] @ beamformers.u[i, n]) ** 2

    a = entries[(k, l)].a
    O = np.zeros((N * N, N * N), dtype=np.complex128)
    for n in range(N):
        o = np.zeros(N * N, dtype=np.complex128)
        o[n * N:(n + 1) * N] = a.conj()   # e_n kron conj(a)
        O += np.outer(o.conj(), o)
    O *= cfg.sigma_sq
    t_vec = np.zeros(N, dtype=np.complex128)
    for s in range(cfg.R):
        if s != r:
            a_s = herm(channels.G[k, s]) @ v2
            t_vec += herm(beamformers.F[s]) @ a_s
    sigma_klr = cfg.sigma_sq * float(np.real(t_vec.conj() @ t_vec)) \
        + cfg.sigma_sq * float(np.real(v2.conj() @ v2))

    own = entries[(k, l)]
    r1 = float(zeta1[k, l] + abs(own.resid) ** 2)
    Cbar = O.copy()
    dbar = np.zeros(N * N, dtype=np.complex128)
    r2 = cfg.sigma_sq * float(np.real(v1.conj() @ v1)) + sigma_klr
    for i in range(K):
        for n in range(d):
            if (i, n) != (k, l):
                e = entries[(i, n)]
                Cbar = Cbar + e.C
                dbar = dbar + e.d
                r2 += float(zeta1[i, n] + abs(e.resid) ** 2)

    def bordered(Cm, dv, const):
        n2 = Cm.shape[0]
        out = np.zeros((n2 + 1, n2 + 1), dtype=np.complex128)
        out[:n2, :n2] = Cm
        out[:n2, n2] = dv
        out[n2, :n2] = dv.conj()
        out[n2, n2] = const
        return out

    return StreamRelayForms(
        k=k, l=l, r=r, entries=entries, zeta1=zeta1, O=O, sigma_klr=sigma_klr,
        r1=r1, Cbar=Cbar, dbar=dbar, r2=r2,
        Ct_num=bordered(own.C, own.d, r1),
        Ct_den=bordered(Cbar, dbar, r2))


def approx_sinr_u(channels: ChannelSet, beamformers: BeamformerSet, cfg: NetworkConfig,
                  k: int, l: int) -> float:
    """Approximate SINR: per-slot signal powers without the direct/relay-path
    cross term, over exact aggregate noise."""
    M = cfg.M
    v1 = beamformers.vbar[k, l][:M]
    v2 = beamformers.vbar[k, l][M:]
    vbar = beamformers.vbar[k, l]
    sigma_n = float(np.real(vbar.conj() @ noise_covariance(channels, beamformers.F, cfg, k)
                            @ vbar))
    num = 0.0
    den = sigma_n
    for i in range(cfg.K):
        Hp = effective_channel(channels, beamformers.F, k, i)
        for n in range(cfg.d):
            u = beamformers.u[i, n]
            z = abs(v1.conj() @ channels.J[k, i] @ u) ** 2 + abs(v2.conj() @ Hp @ u) ** 2
            if (i, n) == (k, l):
                num = z
            else:
                den += z
    return num / den


def approx_sinr_f(forms: StreamRelayForms, filt) -> float:
    """Approximate SINR as a function of this relay's lifted filter: accepts
    fbar (length N^2+1, |t|=1) or the lifted covariance Y."""
    f = np.asarray(filt)
    if f.ndim == 1:
        num = float(np.real(f.conj() @ forms.Ct_num @ f))
        den = float(np.real(f.conj() @ forms.Ct_den @ f))
    else:
        num = float(np.real(np.sum(f * forms.Ct_num.T)))
        den = float(np.real(np.sum(f * forms.Ct_den.T)))
    if den <= 0:
        raise ValueError("nonpositive SINR denominator")
    return num / den


@dataclass
class RelayPowerForms:
    """Relay-power quadratics: D[r,k,l] (N x N), their lifted per-stream
    shares Dp[r,k,l] (N^2), and the bordered blocks Dbar[r,k,l] (N^2+1)."""

    D: np.ndarray
    Dp: np.ndarray
    Dbar: np.ndarray
    rho2: float


def build_power_forms(channels: ChannelSet, beamformers: BeamformerSet, cfg: NetworkConfig,
                      rho2: float = 0.0) -> RelayPowerForms:
    K, d, N, R = cfg.K, cfg.d, cfg.N, cfg.R
    D = np.empty((R, K, d, N, N), dtype=np.complex128)
    Dp = np.empty((R, K, d, N * N, N * N), dtype=np.complex128)
    Dbar = np.zeros((R, K, d, N * N + 1, N * N + 1), dtype=np.complex128)
    eye = np.eye(N)
    B = cfg.B
    for r in range(R):
        for k in range(K):
            for l in range(d):
                Hu = channels.H2[r, k] @ beamformers.u[k, l]
                D[r, k, l] = np.outer(Hu, Hu.conj())
                Dp[r, k, l] = np.kron((D[r, k, l] + cfg.sigma_sq * eye / B).T, eye)
                Dbar[r, k, l][:N * N, :N * N] = Dp[r, k, l] + 0.5 * rho2 * np.eye(N * N)
    return RelayPowerForms(D=D, Dp=Dp, Dbar=Dbar, rho2=rho2)


@dataclass
class JointState:
    """Relay-side ADMM state: lifted covariances Y_r plus per-(relay, stream)
    auxiliaries, duals, and interference prices."""

    Y: np.ndarray          # (R, N^2+1, N^2+1)
    zeta: np.ndarray       # (R, K, d)
    zeta_b: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    mu_b: np.ndarray
    price: np.ndarray
    rho: float
    rho_c: float


def init_joint_state(cfg: NetworkConfig, ctrl: AlgorithmControl, channels: ChannelSet,
                     beamformers: BeamformerSet, targets: SinrTargets) -> JointState:
    """Auxiliaries start consistent with the initial filters (the numerator
    form is PSD, so zeta >= 0 must hold throughout; a sign-agnostic random
    start puts the first closed-form update below that floor)."""
    shape = (cfg.R, cfg.K, cfg.d)
    zeros = np.zeros(shape)
    n2 = cfg.N * cfg.N + 1
    state = JointState(Y=np.zeros((cfg.R, n2, n2), dtype=np.complex128),
                       zeta=zeros.copy(), zeta_b=zeros.copy(),
                       lam=zeros.copy(), mu=zeros.copy(), mu_b=zeros.copy(),
                       price=zeros.copy(), rho=ctrl.relay_rho, rho_c=ctrl.rho_c)
    for r in range(cfg.R):
        # consistent with a filter backed off to 95% relay power: the exact
        # operating point pins the power budget with equality, leaving the
        # first subproblem without an interior point
        fbar = np.append(np.sqrt(0.95) * vec(beamformers.F[r]), 1.0)
        for k in range(cfg.K):
            for l in range(cfg.d):
                forms = build_relay_forms(channels, beamformers, cfg, k, l, r)
                num = float(np.real(fbar.conj() @ forms.Ct_num @ fbar))
                den = float(np.real(fbar.conj() @ forms.Ct_den @ fbar))
                state.zeta[r, k, l] = num / targets.gamma[k, l]
                state.zeta_b[r, k, l] = -den
    return state


def build_y_subproblem(forms_r: list, power_forms: RelayPowerForms, targets: SinrTargets,
                       state: JointState, r: int, cfg: NetworkConfig) -> conic.ConicProblem:
    """Per-relay subproblem: minimize this relay's lifted power share (plus
    the priced interference it contributes) subject to every stream's
    SINR-auxiliary equality, the relay power budget, the homogenization
    slot tr(Y Theta) = 1, and the PSD cone."""
    K, d = cfg.K, cfg.d
    n2 = cfg.N * cfg.N + 1
    obj = np.zeros((n2, n2), dtype=np.complex128)
    cons = []
    for forms in forms_r:
        k, l = forms.k, forms.l
        obj += power_forms.Dbar[r, k, l] + state.price[r, k, l] * forms.Ct_den
        rhs = targets.gamma[k, l] * state.zeta[r, k, l]
        if rhs < 0:
            raise SubproblemInfeasibleError(
                f"relay {r} stream ({k},{l}): negative SINR equality rhs {rhs:.3e}")
        cons.append(conic.Constraint(conic.AffineExpr(blocks={"Y": forms.Ct_num}), "eq", rhs))
    cons.append(conic.Constraint(
        conic.AffineExpr(blocks={"Y": power_forms.Dbar[r].sum(axis=(0, 1))}), "le",
        cfg.p_relay_max))
    theta = np.zeros((n2, n2))
    theta[-1, -1] = 1.0
    cons.append(conic.Constraint(conic.AffineExpr(blocks={"Y": theta}), "eq", 1.0))
    return conic.ConicProblem(psd_blocks=[("Y", n2)],
                              objective=conic.AffineExpr(blocks={"Y": obj}),
                              constraints=cons)


def extract_relay_filter(Y: np.ndarray, ratio_tol: float = 1e-4):
    """Relay filter from the lifted covariance: principal component, global
    phase removed so the homogenization slot is 1, first N^2 entries unvec'd.

    Returns (F, ratio); raises when the second-to-first eigenvalue ratio
    exceeds ``ratio_tol`` (rank-one observation violated)."""
    w, v = np.linalg.eigh(Y)
    lead = float(w[-1])
    ratio = 0.0 if w.size == 1 else max(float(w[-2]) / lead, 0.0) if lead > 0 else 1.0
    if ratio > ratio_tol:
        from .admm import NonRankOneError
        raise NonRankOneError(ratio)
    fbar = np.sqrt(max(lead, 0.0)) * v[:, -1]
    t = fbar[-1]
    if abs(t) < 1e-12:
        from .admm import NonRankOneError
        raise NonRankOneError(1.0)
    fbar = fbar * (t.conjugate() / abs(t)) / abs(t)
    n = int(round(np.sqrt(fbar.size - 1)))
    return unvec(fbar[:-1], n, n), ratio


@dataclass
class JointOutcome(RunOutcome):
    F: np.ndarray = None
    u: np.ndarray = None
    relay_ratios: np.ndarray = None


def run_joint(cfg: NetworkConfig, channels: ChannelSet, beamformers: BeamformerSet,
              targets: SinrTargets, ctrl: AlgorithmControl | None = None) -> JointOutcome:
    """Transmit loop extended with a relay phase: after every transmit
    X-update + closed-form updates, all relays solve their lifted-filter
    subproblems, run mirrored closed-form updates, and the relay filters are
    re-extracted; every form depending on u or F is then rebuilt. Transmit
    subproblems run with power constraints incorporated."""
    ctrl = replace(ctrl or AlgorithmControl(), incorporate_power_constraints=True)
    state = init_state(cfg, ctrl)
    jstate = init_joint_state(cfg, ctrl, channels, beamformers, targets)
    K, d, R, B = cfg.K, cfg.d, cfg.R, cfg.B
    F = beamformers.F.copy()
    u = beamformers.u.copy()
    work = BeamformerSet(u=u.copy(), F=F.copy(), vbar=beamformers.vbar)
    forms = precompute_forms(channels, F, work, cfg)

    converged = False
    power_hist, dev_hist = [], []
    sinrs = np.zeros((K, d))
    relay_ratios = np.zeros(R)
    solved_relay = np.zeros(R, dtype=bool)
    needs_anchor = np.ones(R, dtype=bool)
    for _ in range(ctrl.s_max):
        # transmit phase against the current relay filters; a transiently
        # infeasible capped subproblem keeps its previous covariance
        X_new = state.X.copy()
        nu = np.zeros((K, d))
        for k in range(K):
            for l in range(d):
                try:
                    sol = solve_stream(
                        build_x_subproblem(forms, targets, state, k, l, ctrl, cfg),
                        ctrl.conic_tol)
                except SubproblemInfeasibleError:
                    nu[k, l] = state.price[k, l] / max(targets.gamma[k, l], 1e-300)
                    continue
                X_new[k, l] = sol.blocks["X"]
                nu[k, l] = -sol.duals[0]
        for k in range(K):
            for l in range(d):
                state.zeta[k, l], state.zeta_b[k, l] = update_aux(state, k, l)
        for k in range(K):
            for l in range(d):
                (state.lam[k, l], state.mu[k, l], state.mu_b[k, l]) = update_duals(
                    state, forms, targets, X_new, k, l)
        state.price = np.maximum(
            0.0, (1.0 - ctrl.rho_c) * state.price + ctrl.rho_c * targets.gamma * nu)
        state.X = X_new
        state.iteration += 1
        u, _ = extract_all(state.X, ratio_tol=np.inf)
        work = BeamformerSet(u=u, F=F.copy(), vbar=beamformers.vbar)

        # relay phase: forms depend on the fresh u and on the other relays' F
        relay_forms = [[build_relay_forms(channels, work, cfg, k, l, r)
                        for k in range(K) for l in range(d)] for r in range(R)]
        power_forms = build_power_forms(channels, work, cfg, ctrl.rho2)
        nu_r = np.zeros((R, K, d))
        for r in range(R):
            if not solved_relay[r]:
                # anchor this relay's auxiliaries to the fresh forms at a
                # 95%-power backoff of its current filter; the transmit phase
                # rescales u, so the anchor is computed lazily here and a
                # capped-out relay waits at it until its first solve lands
                fbar = np.append(np.sqrt(0.95) * vec(F[r]), 1.0)
                for forms_kl in relay_forms[r]:
                    num = float(np.real(fbar.conj() @ forms_kl.Ct_num @ fbar))
                    den = float(np.real(fbar.conj() @ forms_kl.Ct_den @ fbar))
                    jstate.zeta[r, forms_kl.k, forms_kl.l] = \
                        num / targets.gamma[forms_kl.k, forms_kl.l]
                    jstate.zeta_b[r, forms_kl.k, forms_kl.l] = -den
            try:
                prob = build_y_subproblem(relay_forms[r], power_forms, targets, jstate, r, cfg)
                sol = solve_stream(prob, ctrl.conic_tol)
            except SubproblemInfeasibleError:
                continue
            solved_relay[r] = True
            jstate.Y[r] = sol.blocks["Y"]
            for q, forms_kl in enumerate(relay_forms[r]):
                nu_r[r, forms_kl.k, forms_kl.l] = -sol.duals[q]
        for r in range(R):
            if not solved_relay[r]:
                continue  # state frozen until this relay's first solve lands
            for q, forms_kl in enumerate(relay_forms[r]):
                k, l = forms_kl.k, forms_kl.l
                zeta = -(jstate.lam[r, k, l] + jstate.mu[r, k, l]) / jstate.rho \
                    - jstate.zeta_b[r, k, l]
                zeta_b = -(jstate.lam[r, k, l] + jstate.mu_b[r, k, l]) / jstate.rho - zeta
                jstate.zeta[r, k, l], jstate.zeta_b[r, k, l] = zeta, zeta_b
                own = float(np.real(np.sum(jstate.Y[r] * forms_kl.Ct_num.T)))
                caused = float(np.real(np.sum(jstate.Y[r] * forms_kl.Ct_den.T)))
                jstate.lam[r, k, l] += jstate.rho * (zeta + zeta_b)
                jstate.mu[r, k, l] += jstate.rho_c * (zeta - own / targets.gamma[k, l])
                jstate.mu_b[r, k, l] += jstate.rho_c * (zeta_b + caused)
        jstate.price = np.maximum(
            0.0, (1.0 - ctrl.rho_c) * jstate.price + ctrl.rho_c
            * targets.gamma[None, :, :] * nu_r)
        for r in range(R):
            if solved_relay[r]:
                F[r], relay_ratios[r] = extract_relay_filter(jstate.Y[r], ratio_tol=np.inf)
        work = BeamformerSet(u=u, F=F.copy(), vbar=beamformers.vbar)
        forms = precompute_forms(channels, F, work, cfg)

        # exact SINRs with the fresh relay filters decide convergence
        for k in range(K):
            for l in range(d):
                sinrs[k, l] = stream_sinr_quadratic(forms, state.X, k, l)
        dev = np.abs(sinrs - targets.gamma)
        power_hist.append(total_power_from_x(forms, state.X) + float(forms.relay_noise.sum()))
        dev_hist.append(float(dev.sum()))
        if np.all(dev <= ctrl.delta_max):
            converged = True
            break

    return JointOutcome(
        converged=converged, iflag=power_check(forms, state.X, cfg),
        iterations=state.iteration, total_power_history=power_hist,
        sinr_deviation_history=dev_hist, X=state.X,
        message_count=state.iteration * B * B,
        total_power=power_hist[-1] if power_hist else float("nan"),
        sinrs=sinrs.copy(), F=F, u=u, relay_ratios=relay_ratios)
