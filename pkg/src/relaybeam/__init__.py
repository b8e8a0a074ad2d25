"""Distributed multi-stream beamforming for MIMO multi-relay interference
networks with direct links.

Modules:

- ``linalg``: dense complex linear-algebra kernels.
- ``network``: configuration, channel generation, beamformer initialization,
  SINR and power algebra.
- ``conic``: small dense PSD-block + scalar conic solver with certificates.
- ``admm``: the distributed per-stream transmit-beamforming optimizer.
- ``baselines``: centralized SDR solve, ADMM-BG, ADAL, and the complexity /
  message-load accounting.
- ``joint_relay``: relay-side SINR approximation and the joint
  transmit+relay optimizer.
- ``targets``: max-SINR filter alternation and the linear SINR-target search.
- ``harness``: Monte Carlo experiment runner, channel persistence, QPSK BER
  simulation, CSV reporting, and the command-line interface.
"""

from . import admm, baselines, conic, joint_relay, linalg, network, targets

__all__ = ["admm", "baselines", "conic", "joint_relay", "linalg", "network",
           "targets"]

__version__ = "0.1.0"
