"""Binary persistence for pre-saved channel/beamformer realizations.

Layout (all little-endian): magic ``RNAC``, format version u16, dimension
header K, d, M, N, R as u32, master seed u64, then the matrices in fixed
order -- J by (k, i), G by (k, r), H2 by (r, i), u by (k, l), F by r, vbar
by (k, l) -- each entry stored row-major as two float64 (re, im).
"""

from __future__ import annotations

import struct

import numpy as np

from ..network import BeamformerSet, ChannelSet

MAGIC = b"RNAC"
VERSION = 1


class ChannelFileError(Exception):
    """Base class for channel-file problems."""


class ChannelFileFormatError(ChannelFileError):
    """Bad magic bytes: not a channel file."""


class ChannelFileVersionError(ChannelFileError):
    """Format version not supported by this reader."""


class ChannelFileTruncatedError(ChannelFileError):
    """File ends before the declared payload."""


class ChannelFileDimensionError(ChannelFileError):
    """Dimension header inconsistent (nonsensical or mismatching caller dims)."""


def _write_matrix(buf: bytearray, m: np.ndarray):
    flat = np.ascontiguousarray(m).reshape(-1)
    inter = np.empty(2 * flat.size)
    inter[0::2] = flat.real
    inter[1::2] = flat.imag
    buf += inter.astype("<f8").tobytes()


def save_channels(path, channels: ChannelSet, beamformers: BeamformerSet, seed: int):
    K, _, M, _ = channels.J.shape
    R = channels.G.shape[1]
    N = channels.G.shape[3]
    d = beamformers.u.shape[1]
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<H", VERSION)
    buf += struct.pack("<5I", K, d, M, N, R)
    buf += struct.pack("<Q", seed)
    for k in range(K):
        for i in range(K):
            _write_matrix(buf, channels.J[k, i])
    for k in range(K):
        for r in range(R):
            _write_matrix(buf, channels.G[k, r])
    for r in range(R):
        for i in range(K):
            _write_matrix(buf, channels.H2[r, i])
    for k in range(K):
        for l in range(d):
            _write_matrix(buf, beamformers.u[k, l])
    for r in range(R):
        _write_matrix(buf, beamformers.F[r])
    for k in range(K):
        for l in range(d):
            _write_matrix(buf, beamformers.vbar[k, l])
    with open(path, "wb") as fh:
        fh.write(bytes(buf))


def load_channels(path, expect_dims: tuple | None = None):
    """Read one realization; returns (ChannelSet, BeamformerSet, seed, dims)
    with dims = (K, d, M, N, R). ``expect_dims`` cross-checks the header."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise ChannelFileFormatError("bad magic bytes")
    if len(raw) < 4 + 2 + 20 + 8:
        raise ChannelFileTruncatedError("header truncated")
    (version,) = struct.unpack_from("<H", raw, 4)
    if version != VERSION:
        raise ChannelFileVersionError(f"unsupported version {version}")
    K, d, M, N, R = struct.unpack_from("<5I", raw, 6)
    if min(K, d, M, N, R) < 1 or d > M or max(K, d, M, N, R) > 10_000:
        raise ChannelFileDimensionError(f"nonsensical dimension header {(K, d, M, N, R)}")
    if expect_dims is not None and tuple(expect_dims) != (K, d, M, N, R):
        raise ChannelFileDimensionError(
            f"file dims {(K, d, M, N, R)} do not match expected {tuple(expect_dims)}")
    (seed,) = struct.unpack_from("<Q", raw, 26)

    count = (K * K * M * M + K * R * M * N + R * K * N * M
             + K * d * M + R * N * N + K * d * 2 * M)
    expected = 34 + 16 * count
    if len(raw) < expected:
        raise ChannelFileTruncatedError(
            f"payload truncated: {len(raw)} bytes, expected {expected}")

    vals = np.frombuffer(raw, dtype="<f8", count=2 * count, offset=34)
    data = vals[0::2] + 1j * vals[1::2]
    pos = 0

    def take(*shape):
        nonlocal pos
        n = int(np.prod(shape))
        out = data[pos:pos + n].reshape(shape)
        pos += n
        return out.copy()

    J = take(K, K, M, M)
    G = take(K, R, M, N)
    H2 = take(R, K, N, M)
    u = take(K, d, M)
    F = take(R, N, N)
    vbar = take(K, d, 2 * M)
    return (ChannelSet(J=J, G=G, H2=H2), BeamformerSet(u=u, F=F, vbar=vbar),
            int(seed), (K, d, M, N, R))
