"""Network configuration, channel generation, and SINR/power algebra.

A K-user two-hop MIMO interference network aided by R half-duplex
amplify-and-forward relays, with direct transmitter-receiver links observed
in the first time slot. Every channel/beamformer container is an immutable
bundle of numpy arrays and can be shared freely across concurrent solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import herm, randn_c


@dataclass(frozen=True)
class NetworkConfig:
    """Static network dimensions, noise powers, budgets, and geometry.

    Antenna counts, stream counts, and noise powers are uniform across nodes
    (matching the simulated configurations); ``sigma_sq`` is shared by the
    relay and both receiver time slots. Power budgets derive from the SNR
    definitions p_max = sigma^2 * 10^(SNR_dB/10).
    """

    K: int = 3
    d: int = 2
    M: int = 10
    N: int = 8
    R: int = 3
    sigma_sq: float = 1.0
    snr_t_db: float = 12.0
    snr_r_db: float = 12.0
    tx_relay_dist_km: float = 1.0
    relay_rx_dist_km: float = 1.0
    pathloss_exponent: float = 3.0
    shadow_std_db: float = 8.0

    def __post_init__(self):
        if min(self.K, self.d, self.M, self.N, self.R) < 1:
            raise ValueError("all counts must be >= 1")
        if self.d > self.M:
            raise ValueError("streams per user d must not exceed antennas M")
        if not self.sigma_sq > 0:
            raise ValueError("noise power must be positive")

    @property
    def B(self) -> int:
        """Total number of streams in the network."""
        return self.K * self.d

    @property
    def p_tx_max(self) -> float:
        return self.sigma_sq * 10.0 ** (self.snr_t_db / 10.0)

    @property
    def p_relay_max(self) -> float:
        return self.sigma_sq * 10.0 ** (self.snr_r_db / 10.0)

    @property
    def direct_dist_km(self) -> float:
        return self.tx_relay_dist_km + self.relay_rx_dist_km


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ChannelSet:
    """All channel matrices: J[k, i] direct (M x M), G[k, r] relay-to-receiver
    (M x N), H2[r, i] transmitter-to-relay (N x M)."""

    J: np.ndarray
    G: np.ndarray
    H2: np.ndarray

    def __post_init__(self):
        for a in (self.J, self.G, self.H2):
            if not np.all(np.isfinite(a)):
                raise ValueError("channel entries must be finite")
            _freeze(a)


@dataclass(frozen=True)
class BeamformerSet:
    """Transmit vectors u[k, l] (M), relay filters F[r] (N x N), and stacked
    two-slot receive vectors vbar[k, l] (2M)."""

    u: np.ndarray
    F: np.ndarray
    vbar: np.ndarray

    def __post_init__(self):
        for a in (self.u, self.F, self.vbar):
            _freeze(a)


@dataclass(frozen=True)
class PrecomputedForms:
    """Quadratic forms shared by all subproblems.

    Rdot[k] = I + sum_r Rrk[r, k]; Rrk[r, k] = H2''^H F^H F H2''; Rkl[k, l, i]
    is the rank-one aggregate form of stream (k, l) against transmitter i;
    sigma_n[k, l] is the post-filter aggregate noise power; Rn[k] the 2M x 2M
    aggregate noise covariance; relay_noise[r] = sigma_r^2 tr(F_r F_r^H),
    the fixed relay power overhead entering the Eq.-29-style budget.
    """

    Rdot: np.ndarray
    Rrk: np.ndarray
    Rkl: np.ndarray
    sigma_n: np.ndarray
    Rn: np.ndarray
    relay_noise: np.ndarray

    def __post_init__(self):
        for a in (self.Rdot, self.Rrk, self.Rkl, self.sigma_n, self.Rn, self.relay_noise):
            _freeze(a)


@dataclass(frozen=True)
class SinrTargets:
    """Per-stream linear SINR targets gamma[k, l] > 0."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        if not np.all(np.isfinite(g)) or np.any(g <= 0):
            raise ValueError("SINR targets must be finite and positive")
        object.__setattr__(self, "gamma", _freeze(g))

    @property
    def total(self) -> float:
        return float(self.gamma.sum())


def generate_channels(cfg: NetworkConfig, seed: int) -> ChannelSet:
    """Draw one channel realization: i.i.d. CN(0,1) small-scale fading scaled
    by sqrt(pathloss * shadowing), with per-link log-normal shadowing in dB.

    Deterministic for a fixed seed; draw order is J (k-major), G, then H2.
    """
    rng = np.random.default_rng(seed)
    loss_direct = cfg.direct_dist_km ** (-cfg.pathloss_exponent)
    loss_hop1 = cfg.tx_relay_dist_km ** (-cfg.pathloss_exponent)
    loss_hop2 = cfg.relay_rx_dist_km ** (-cfg.pathloss_exponent)

    def link_gain(loss):
        shadow = 10.0 ** (rng.normal(0.0, cfg.shadow_std_db) / 10.0)
        return np.sqrt(loss * shadow)

    J = np.empty((cfg.K, cfg.K, cfg.M, cfg.M), dtype=np.complex128)
    for k in range(cfg.K):
        for i in range(cfg.K):
            J[k, i] = link_gain(loss_direct) * randn_c(rng, cfg.M, cfg.M)
    G = np.empty((cfg.K, cfg.R, cfg.M, cfg.N), dtype=np.complex128)
    for k in range(cfg.K):
        for r in range(cfg.R):
            G[k, r] = link_gain(loss_hop2) * randn_c(rng, cfg.M, cfg.N)
    H2 = np.empty((cfg.R, cfg.K, cfg.N, cfg.M), dtype=np.complex128)
    for r in range(cfg.R):
        for i in range(cfg.K):
            H2[r, i] = link_gain(loss_hop1) * randn_c(rng, cfg.N, cfg.M)
    return ChannelSet(J=J, G=G, H2=H2)


def init_beamformers(cfg: NetworkConfig, channels: ChannelSet, seed: int) -> BeamformerSet:
    """Random full-power initialization.

    Stream powers are split equally, ||u_{k,l}||^2 = p_tx_max / d; relay
    filters are random directions scaled so each relay transmits exactly
    p_relay_max; receive vectors are random with per-slot norm sqrt(0.5).
    """
    rng = np.random.default_rng(seed)
    u = randn_c(rng, cfg.K, cfg.d, cfg.M)
    u *= np.sqrt(cfg.p_tx_max / cfg.d) / np.linalg.norm(u, axis=2, keepdims=True)

    vbar = randn_c(rng, cfg.K, cfg.d, 2 * cfg.M)
    for slot in (slice(0, cfg.M), slice(cfg.M, 2 * cfg.M)):
        vbar[:, :, slot] *= np.sqrt(0.5) / np.linalg.norm(vbar[:, :, slot], axis=2, keepdims=True)

    F = randn_c(rng, cfg.R, cfg.N, cfg.N)
    bf = BeamformerSet(u=u.copy(), F=F.copy(), vbar=vbar)
    Fs = np.empty_like(F)
    for r in range(cfg.R):
        p = relay_power(bf, channels, cfg, r)
        Fs[r] = F[r] * np.sqrt(cfg.p_relay_max / p)
    return BeamformerSet(u=u, F=Fs, vbar=vbar)


def effective_channel(channels: ChannelSet, F: np.ndarray, k: int, i: int) -> np.ndarray:
    """Two-hop effective channel sum_r G[k,r] F[r] H2[r,i] (M x M)."""
    R = F.shape[0]
    out = np.zeros((channels.J.shape[2], channels.J.shape[3]), dtype=np.complex128)
    for r in range(R):
        out += channels.G[k, r] @ F[r] @ channels.H2[r, i]
    return out


def aggregate_channel(channels: ChannelSet, F: np.ndarray, k: int, i: int) -> np.ndarray:
    """Both-slot channel stack [J[k,i]; effective_channel(k,i)] (2M x M)."""
    return np.vstack([channels.J[k, i], effective_channel(channels, F, k, i)])


def noise_covariance(channels: ChannelSet, F: np.ndarray, cfg: NetworkConfig, k: int) -> np.ndarray:
    """Aggregate noise covariance: blockdiag(sigma^2 I, sum_r sigma_r^2 G F F^H G^H + sigma^2 I)."""
    M = cfg.M
    Rn = np.zeros((2 * M, 2 * M), dtype=np.complex128)
    Rn[:M, :M] = cfg.sigma_sq * np.eye(M)
    lower = cfg.sigma_sq * np.eye(M, dtype=np.complex128)
    for r in range(cfg.R):
        GF = channels.G[k, r] @ F[r]
        lower += cfg.sigma_sq * (GF @ herm(GF))
    Rn[M:, M:] = lower
    return Rn


def precompute_forms(channels: ChannelSet, F: np.ndarray, beamformers: BeamformerSet,
                     cfg: NetworkConfig) -> PrecomputedForms:
    """All quadratic forms used by the power objective and SINR constraints."""
    K, d, M, R = cfg.K, cfg.d, cfg.M, cfg.R
    Rrk = np.empty((R, K, M, M), dtype=np.complex128)
    for r in range(R):
        for k in range(K):
            FH = F[r] @ channels.H2[r, k]
            Rrk[r, k] = herm(FH) @ FH
    Rdot = np.empty((K, M, M), dtype=np.complex128)
    for k in range(K):
        Rdot[k] = np.eye(M) + Rrk[:, k].sum(axis=0)

    Rn = np.empty((K, 2 * M, 2 * M), dtype=np.complex128)
    for k in range(K):
        Rn[k] = noise_covariance(channels, F, cfg, k)

    H = np.empty((K, K, 2 * M, M), dtype=np.complex128)
    for k in range(K):
        for i in range(K):
            H[k, i] = aggregate_channel(channels, F, k, i)

    Rkl = np.empty((K, d, K, M, M), dtype=np.complex128)
    sigma_n = np.empty((K, d))
    for k in range(K):
        for l in range(d):
            v = beamformers.vbar[k, l]
            sigma_n[k, l] = np.real(v.conj() @ Rn[k] @ v)
            for i in range(K):
                hv = herm(H[k, i]) @ v
                Rkl[k, l, i] = np.outer(hv, hv.conj())

    relay_noise = np.array([cfg.sigma_sq * np.real(np.vdot(F[r], F[r])) for r in range(R)])
    return PrecomputedForms(Rdot=Rdot, Rrk=Rrk, Rkl=Rkl, sigma_n=sigma_n, Rn=Rn,
                            relay_noise=relay_noise)


def stream_sinr(beamformers: BeamformerSet, channels: ChannelSet, F: np.ndarray,
                cfg: NetworkConfig, k: int, l: int) -> float:
    """Exact per-stream SINR from the aggregate two-slot signal model."""
    v = beamformers.vbar[k, l]
    num = 0.0
    den = np.real(v.conj() @ noise_covariance(channels, F, cfg, k) @ v)
    for i in range(cfg.K):
        Hki = aggregate_channel(channels, F, k, i)
        for n in range(cfg.d):
            zeta = abs(v.conj() @ Hki @ beamformers.u[i, n]) ** 2
            if (i, n) == (k, l):
                num = zeta
            else:
                den += zeta
    return num / den


def stream_sinr_quadratic(forms: PrecomputedForms, filters: np.ndarray, k: int, l: int) -> float:
    """SINR via the precomputed quadratic forms.

    ``filters`` is either the (K, d, M) array of transmit vectors u or the
    (K, d, M, M) array of covariances X (the two agree exactly for X = uu^H).
    """
    K, d = forms.sigma_n.shape

    def quad(i, n, C):
        if filters.ndim == 3:
            u = filters[i, n]
            return float(np.real(u.conj() @ C @ u))
        return float(np.real(np.sum(filters[i, n] * C.T)))

    num = quad(k, l, forms.Rkl[k, l, k])
    den = forms.sigma_n[k, l]
    for i in range(K):
        for n in range(d):
            if (i, n) != (k, l):
                den += quad(i, n, forms.Rkl[k, l, i])
    return num / den


def all_stream_sinrs(beamformers: BeamformerSet, channels: ChannelSet,
                     cfg: NetworkConfig) -> np.ndarray:
    """Exact SINR of every stream, shape (K, d)."""
    out = np.empty((cfg.K, cfg.d))
    for k in range(cfg.K):
        for l in range(cfg.d):
            out[k, l] = stream_sinr(beamformers, channels, beamformers.F, cfg, k, l)
    return out


def transmit_power(beamformers: BeamformerSet, k: int) -> float:
    """p_k = sum_l ||u_{k,l}||^2."""
    return float(np.sum(np.abs(beamformers.u[k]) ** 2))


def relay_power(beamformers: BeamformerSet, channels: ChannelSet, cfg: NetworkConfig,
                r: int) -> float:
    """Relay transmit power: forwarded signal power plus amplified noise."""
    F = beamformers.F[r]
    p = cfg.sigma_sq * float(np.real(np.vdot(F, F)))
    for i in range(cfg.K):
        FH = F @ channels.H2[r, i]
        for n in range(cfg.d):
            p += float(np.linalg.norm(FH @ beamformers.u[i, n]) ** 2)
    return p


def total_power(beamformers: BeamformerSet, channels: ChannelSet, cfg: NetworkConfig) -> float:
    """Total network power: sum_{k,l} u^H Rdot_k u plus the relays'
    amplified-noise overhead sum_r sigma_r^2 tr(F_r F_r^H).

    The quadratic form alone carries every u-dependent term; adding the
    (u-independent) noise overhead makes this equal to the sum of all
    transmit powers and relay powers exactly.
    """
    K, d = cfg.K, cfg.d
    tot = 0.0
    for k in range(K):
        Rdot = np.eye(cfg.M, dtype=np.complex128)
        for r in range(cfg.R):
            FH = beamformers.F[r] @ channels.H2[r, k]
            Rdot += herm(FH) @ FH
        for l in range(d):
            u = beamformers.u[k, l]
            tot += float(np.real(u.conj() @ Rdot @ u))
    for r in range(cfg.R):
        tot += cfg.sigma_sq * float(np.real(np.vdot(beamformers.F[r], beamformers.F[r])))
    return tot


def total_power_from_x(forms: PrecomputedForms, X: np.ndarray) -> float:
    """sum_{k,l} tr(X_{k,l} Rdot_k) for a (K, d, M, M) covariance set."""
    K, d = forms.sigma_n.shape
    return float(sum(np.real(np.sum(X[k, l] * forms.Rdot[k].T))
                     for k in range(K) for l in range(d)))


def assign_targets(sinrs: np.ndarray) -> SinrTargets:
    """Per-user targets: every stream of user k gets the user's average SINR."""
    s = np.asarray(sinrs, dtype=float)
    if np.any(s <= 0):
        raise ValueError("stream SINRs must be positive")
    gamma = np.repeat(s.mean(axis=1, keepdims=True), s.shape[1], axis=1)
    return SinrTargets(gamma=gamma)
