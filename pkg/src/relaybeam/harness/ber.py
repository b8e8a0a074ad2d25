"""Uncoded QPSK link-level simulation through the two-slot relay model."""

from __future__ import annotations

import numpy as np

from ..linalg import herm
from ..network import BeamformerSet, ChannelSet, NetworkConfig, aggregate_channel


def qpsk_symbols(rng: np.random.Generator, *shape: int):
    """Gray-mapped unit-power QPSK: bits (b0, b1) -> ((1-2b0) + j(1-2b1))/sqrt2."""
    bits = rng.integers(0, 2, size=(2,) + shape)
    sym = ((1 - 2 * bits[0]) + 1j * (1 - 2 * bits[1])) / np.sqrt(2.0)
    return sym, bits


def ber_simulate(cfg: NetworkConfig, channels: ChannelSet, u: np.ndarray, F: np.ndarray,
                 vbar: np.ndarray, symbols: int, seed: int,
                 chunk: int = 20000) -> np.ndarray:
    """Per-stream bit error rate over ``symbols`` QPSK symbols per stream.

    Transmits through both time slots (direct + amplify-and-forward paths),
    applies each stream's stacked receive vector, matched-rotates by the
    stream's effective complex gain, and hard-decides both bits.
    """
    K, d, M, N, R = cfg.K, cfg.d, cfg.M, cfg.N, cfg.R
    rng = np.random.default_rng(seed)
    sig = np.sqrt(cfg.sigma_sq / 2.0)
    gains = np.empty((K, d), dtype=np.complex128)
    for k in range(K):
        Hkk = aggregate_channel(channels, F, k, k)
        for l in range(d):
            gains[k, l] = vbar[k, l].conj() @ Hkk @ u[k, l]

    errors = np.zeros((K, d), dtype=np.int64)
    done = 0
    while done < symbols:
        n = min(chunk, symbols - done)
        s, bits = qpsk_symbols(rng, K, d, n)
        x = np.einsum("klm,kln->kmn", u, s)                  # (K, M, n)
        noise_r = sig * (rng.standard_normal((R, N, n)) + 1j * rng.standard_normal((R, N, n)))
        y_relay = np.einsum("rkam,kmn->ran", channels.H2, x) + noise_r
        x_relay = np.einsum("rab,rbn->ran", F, y_relay)
        y1 = np.einsum("kiam,imn->kan", channels.J, x) \
            + sig * (rng.standard_normal((K, M, n)) + 1j * rng.standard_normal((K, M, n)))
        y2 = np.einsum("kram,rmn->kan", channels.G, x_relay) \
            + sig * (rng.standard_normal((K, M, n)) + 1j * rng.standard_normal((K, M, n)))
        y = np.concatenate([y1, y2], axis=1)                 # (K, 2M, n)
        for k in range(K):
            for l in range(d):
                z = vbar[k, l].conj() @ y[k]                 # (n,)
                dec = np.conj(gains[k, l]) * z
                errors[k, l] += int(np.count_nonzero((dec.real < 0) != (bits[0, k, l] == 1)))
                errors[k, l] += int(np.count_nonzero((dec.imag < 0) != (bits[1, k, l] == 1)))
        done += n
    return errors / (2.0 * symbols)
