"""Max-SINR filter alternation (upper-bound targets) and the scalar linear
search between the random-init targets and the max-SINR targets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import admm
from .linalg import herm, randn_c
from .network import (BeamformerSet, ChannelSet, NetworkConfig, SinrTargets,
                      aggregate_channel, all_stream_sinrs, assign_targets,
                      noise_covariance)


def downlink_covariance(channels: ChannelSet, F: np.ndarray, beamformers: BeamformerSet,
                        cfg: NetworkConfig, k: int, l: int) -> np.ndarray:
    """Interference-plus-noise covariance of stream (k, l) over both slots."""
    M = cfg.M
    Q = noise_covariance(channels, F, cfg, k) / cfg.d
    Hkk = aggregate_channel(channels, F, k, k)
    for j in range(cfg.K):
        if j == k:
            continue
        Hkj = aggregate_channel(channels, F, k, j)
        for m in range(cfg.d):
            x = Hkj @ beamformers.u[j, m]
            Q += np.outer(x, x.conj())
    for m in range(cfg.d):
        if m != l:
            x = Hkk @ beamformers.u[k, m]
            Q += np.outer(x, x.conj())
    return Q


def downlink_filter(channels: ChannelSet, F: np.ndarray, beamformers: BeamformerSet,
                    cfg: NetworkConfig, k: int, l: int) -> np.ndarray:
    """Max-SINR receive vector v = Q^-1 H_kk u / ||Q||."""
    Q = downlink_covariance(channels, F, beamformers, cfg, k, l)
    rhs = aggregate_channel(channels, F, k, k) @ beamformers.u[k, l]
    return np.linalg.solve(Q, rhs) / np.linalg.norm(Q, 2)


@dataclass(frozen=True)
class ReverseChannels:
    """Channels of the reciprocal link: Jrev[k, j] = J[j, k]^H (M x M),
    Grev[r, i] = G[i, r]^H (N x M), H2rev[k, r] = H2[r, k]^H (M x N)."""

    Jrev: np.ndarray
    Grev: np.ndarray
    H2rev: np.ndarray


def reverse_channels(channels: ChannelSet) -> ReverseChannels:
    K = channels.J.shape[0]
    R = channels.G.shape[1]
    Jrev = np.empty_like(channels.J)
    for k in range(K):
        for j in range(K):
            Jrev[k, j] = herm(channels.J[j, k])
    Grev = np.empty((R, K) + channels.G.shape[3:1:-1], dtype=np.complex128)
    for r in range(R):
        for i in range(K):
            Grev[r, i] = herm(channels.G[i, r])
    H2rev = np.empty((K, R) + channels.H2.shape[3:1:-1], dtype=np.complex128)
    for k in range(K):
        for r in range(R):
            H2rev[k, r] = herm(channels.H2[r, k])
    return ReverseChannels(Jrev=Jrev, Grev=Grev, H2rev=H2rev)


def reverse_effective_channel(rev: ReverseChannels, F_rev: np.ndarray, k: int,
                              i: int) -> np.ndarray:
    """Uplink two-hop channel sum_r H2rev[k, r] F_rev[r] Grev[r, i]."""
    out = np.zeros((rev.H2rev.shape[2], rev.Grev.shape[3]), dtype=np.complex128)
    for r in range(F_rev.shape[0]):
        out += rev.H2rev[k, r] @ F_rev[r] @ rev.Grev[r, i]
    return out


def reverse_noise_covariance(rev: ReverseChannels, F_rev: np.ndarray,
                             cfg: NetworkConfig, k: int) -> np.ndarray:
    Rn = 2.0 * cfg.sigma_sq * np.eye(cfg.M, dtype=np.complex128)
    for r in range(cfg.R):
        HF = rev.H2rev[k, r] @ F_rev[r]
        Rn += cfg.sigma_sq * (HF @ herm(HF))
    return Rn


def uplink_covariance(rev: ReverseChannels, F_rev: np.ndarray, u1: np.ndarray,
                      u2: np.ndarray, cfg: NetworkConfig, k: int, l: int) -> np.ndarray:
    """Reciprocal-link covariance: the two forward time slots act as separate
    spatial branches of the reverse transmitter, so each contributes its own
    outer product."""
    Q = reverse_noise_covariance(rev, F_rev, cfg, k) / cfg.d
    Hk = {j: reverse_effective_channel(rev, F_rev, k, j) for j in range(cfg.K)}
    for j in range(cfg.K):
        for m in range(cfg.d):
            if (j, m) == (k, l):
                continue
            x1 = rev.Jrev[k, j] @ u1[j, m]
            x2 = Hk[j] @ u2[j, m]
            Q += np.outer(x1, x1.conj()) + np.outer(x2, x2.conj())
    return Q


def uplink_filter(rev: ReverseChannels, F_rev: np.ndarray, u1: np.ndarray, u2: np.ndarray,
                  cfg: NetworkConfig, k: int, l: int, p_k: float) -> np.ndarray:
    """Reverse receive vector scaled to carry power p_k / d."""
    Q = uplink_covariance(rev, F_rev, u1, u2, cfg, k, l)
    rhs = rev.Jrev[k, k] @ u1[k, l] + reverse_effective_channel(rev, F_rev, k, k) @ u2[k, l]
    v = np.linalg.solve(Q, rhs) / np.linalg.norm(Q, 2)
    return np.sqrt(p_k / cfg.d) * v / np.linalg.norm(v)


@dataclass
class MaxSinrState:
    """Alternation diagnostics plus the final filters.

    The targets only make sense for runs that use these filters (the
    receive side is adapted during the alternation), so the final transmit
    and receive vectors ride along for probe runs.
    """

    sum_sinr_trace: list = field(default_factory=list)
    alternations: int = 0
    converged: bool = True
    u: np.ndarray = None
    vbar: np.ndarray = None

    def beamformers(self, F: np.ndarray) -> BeamformerSet:
        """Probe-ready beamformers: final filters with the receive vectors
        renormalized to the per-slot sqrt(0.5) convention (SINR-invariant)."""
        M = self.vbar.shape[2] // 2
        vbar = self.vbar.copy()
        for sl in (slice(0, M), slice(M, 2 * M)):
            vbar[:, :, sl] *= np.sqrt(0.5) / np.linalg.norm(vbar[:, :, sl], axis=2,
                                                            keepdims=True)
        return BeamformerSet(u=self.u.copy(), F=F.copy(), vbar=vbar)


def max_sinr_targets(cfg: NetworkConfig, channels: ChannelSet, F: np.ndarray, seed: int,
                     max_alt: int = 50, rel_tol: float = 1e-4):
    """Alternate downlink receive-filter and uplink transmit-filter updates
    from a random full-power start until the sum-SINR settles; returns the
    per-user averaged targets and the alternation diagnostics."""
    rng = np.random.default_rng(seed)
    u = randn_c(rng, cfg.K, cfg.d, cfg.M)
    u *= np.sqrt(cfg.p_tx_max / cfg.d) / np.linalg.norm(u, axis=2, keepdims=True)
    vbar = randn_c(rng, cfg.K, cfg.d, 2 * cfg.M)
    for sl in (slice(0, cfg.M), slice(cfg.M, 2 * cfg.M)):
        vbar[:, :, sl] *= np.sqrt(0.5) / np.linalg.norm(vbar[:, :, sl], axis=2, keepdims=True)
    bf = BeamformerSet(u=u.copy(), F=F.copy(), vbar=vbar.copy())

    rev = reverse_channels(channels)
    F_rev = np.stack([herm(F[r]) for r in range(cfg.R)])
    state = MaxSinrState()
    last = float(all_stream_sinrs(bf, channels, cfg).sum())
    state.sum_sinr_trace.append(last)
    u_cur, v_cur = u.copy(), vbar.copy()
    for _ in range(max_alt):
        # downlink half: max-SINR receive vectors for the current u
        for k in range(cfg.K):
            for l in range(cfg.d):
                v_cur[k, l] = downlink_filter(channels, F, bf, cfg, k, l)
        bf = BeamformerSet(u=u_cur.copy(), F=F.copy(), vbar=v_cur.copy())
        # uplink half: reverse receive vectors become the new transmit vectors
        u1 = v_cur[:, :, :cfg.M]
        u2 = v_cur[:, :, cfg.M:]
        for k in range(cfg.K):
            for l in range(cfg.d):
                u_cur[k, l] = uplink_filter(rev, F_rev, u1, u2, cfg, k, l, cfg.p_tx_max)
        bf = BeamformerSet(u=u_cur.copy(), F=F.copy(), vbar=v_cur.copy())
        state.alternations += 1
        total = float(all_stream_sinrs(bf, channels, cfg).sum())
        state.sum_sinr_trace.append(total)
        if abs(total - last) <= rel_tol * max(abs(last), 1e-30):
            break
        last = total
    else:
        if max_alt > 0:
            state.converged = False
    state.u = u_cur.copy()
    state.vbar = v_cur.copy()
    sinrs = all_stream_sinrs(bf, channels, cfg)
    return assign_targets(sinrs), state


@dataclass
class TargetSearchResult:
    targets: SinrTargets
    total_power: float
    feasible: bool
    weight: float
    probes: list = field(default_factory=list)  # (w, feasible) in probe order
    outcome: admm.RunOutcome | None = None


def _probe_feasible(outcome: admm.RunOutcome) -> bool:
    return outcome.converged and not outcome.iflag


def linear_target_search(cfg: NetworkConfig, channels: ChannelSet,
                         beamformers: BeamformerSet, gamma_lo: SinrTargets,
                         gamma_hi: SinrTargets, budget: int,
                         ctrl: admm.AlgorithmControl | None = None) -> TargetSearchResult:
    """Bisection on one scalar weight w over targets gamma_lo + w (gamma_hi -
    gamma_lo); every probe is a full distributed run judged by its
    convergence and infeasibility flags. Returns the highest feasible w."""
    if budget < 1:
        raise ValueError("search budget must be >= 1")
    if np.any(gamma_lo.gamma > gamma_hi.gamma):
        raise ValueError("gamma_lo must not exceed gamma_hi")
    ctrl = ctrl or admm.AlgorithmControl()

    base = admm.run(cfg, channels, beamformers, gamma_lo, ctrl)
    if not _probe_feasible(base):
        raise ValueError("gamma_lo targets are not feasible (precondition violated)")

    lo_w, hi_w = 0.0, 1.0
    best = TargetSearchResult(targets=gamma_lo, total_power=base.total_power,
                              feasible=True, weight=0.0, outcome=base)
    probes = []
    for _ in range(budget):
        w = 0.5 * (lo_w + hi_w)
        gam = SinrTargets(gamma=gamma_lo.gamma + w * (gamma_hi.gamma - gamma_lo.gamma))
        try:
            out = admm.run(cfg, channels, beamformers, gam, ctrl)
            ok = _probe_feasible(out)
        except admm.AdmmError:
            out, ok = None, False
        probes.append((w, ok))
        if ok:
            lo_w = w
            best = TargetSearchResult(targets=gam, total_power=out.total_power,
                                      feasible=True, weight=w, outcome=out)
        else:
            hi_w = w
    best.probes = probes
    return best
