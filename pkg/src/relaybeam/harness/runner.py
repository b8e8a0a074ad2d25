"""Monte Carlo experiment orchestration.

Every trial derives its own seeds from the master seed, generates (or loads)
one channel/beamformer realization, assigns the auto targets, and feeds the
SAME inputs to every requested algorithm. Per-trial failures are recorded
and never abort the sweep.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np

from .. import admm, baselines, joint_relay
from ..network import (NetworkConfig, all_stream_sinrs, assign_targets, generate_channels,
                       init_beamformers, precompute_forms, stream_sinr_quadratic)
from . import channel_io, report

ALGORITHMS = ("proposed", "centralized", "admm-bg", "adal", "joint")

_COMPLEXITY_KEY = {"proposed": "proposed", "admm-bg": "admm_bg", "adal": "adal",
                   "joint": "joint"}


@dataclass
class ExperimentSpec:
    network_grid: list = field(default_factory=lambda: [(10, 8, 3)])  # (M, N, R)
    snr_grid: list = field(default_factory=lambda: [(12.0, 12.0)])    # (SNR_T, SNR_R) dB
    algorithms: list = field(default_factory=lambda: ["proposed", "centralized"])
    trials: int = 1
    master_seed: int = 0
    K: int = 3
    d: int = 2
    channel_file: str | None = None
    save_channels_dir: str | None = None
    out_dir: str = "out"
    s_max: int = 200
    delta_max: float = 1e-4
    rho: float = 1.2
    rho_c: float = 0.5
    adal_rho: float = 9.0
    tau: float = 0.3
    rho2: float = 0.0
    incorporate_power_constraints: bool = False
    record_wall_time: bool = False

    def validate(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.network_grid or not self.snr_grid:
            raise ValueError("network and SNR grids must be non-empty")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise ValueError(f"unknown algorithms {bad}; choose from {ALGORITHMS}")
        if self.channel_file and (self.trials != 1 or len(self.network_grid) != 1
                                  or len(self.snr_grid) != 1):
            raise ValueError("a pre-saved channel file drives exactly one trial of one cell")


@dataclass
class TrialRecord:
    config_id: str
    M: int
    N: int
    R: int
    snr_t_db: float
    snr_r_db: float
    trial: int
    algorithm: str
    converged: bool
    iflag: bool
    iterations: int
    total_power_dbm: float
    sum_sinr_dbm: float
    message_count: int
    complexity_units: int
    wall_time_s: float
    # extras beyond the fixed CSV schema
    total_power_w: float = float("nan")
    sum_sinr: float = float("nan")
    status: str = "ok"
    seed: int = 0


def trial_seeds(master_seed: int, config_idx: int, snr_idx: int, trial: int):
    """Deterministic per-trial seed triple (channels, beamformers, duals)."""
    ss = np.random.SeedSequence(entropy=master_seed,
                                spawn_key=(config_idx, snr_idx, trial))
    a, b, c = ss.generate_state(3)
    return int(a), int(b), int(c)


def _control(spec: ExperimentSpec, dual_seed: int) -> admm.AlgorithmControl:
    return admm.AlgorithmControl(
        s_max=spec.s_max, delta_max=spec.delta_max,
        incorporate_power_constraints=spec.incorporate_power_constraints,
        rho=spec.rho, rho_c=spec.rho_c, adal_rho=spec.adal_rho, tau=spec.tau,
        rho2=spec.rho2, init_seed=dual_seed)


def _run_algorithm(algo: str, cfg, channels, beamformers, targets, ctrl):
    """Returns (converged, iflag, iterations, total_power, sum_sinr, messages)."""
    if algo == "centralized":
        forms = precompute_forms(channels, beamformers.F, beamformers, cfg)
        res = baselines.centralized_solve(forms, targets, cfg)
        if res.status != "optimal":
            raise admm.ConicFailureError(f"centralized solve: {res.status}", res.solution)
        sinrs = np.array([[stream_sinr_quadratic(forms, res.X, k, l)
                           for l in range(cfg.d)] for k in range(cfg.K)])
        iflag = admm.power_check(forms, res.X, cfg)
        return True, iflag, 1, res.total_power, float(sinrs.sum()), 0, 0
    if algo == "proposed":
        out = admm.run(cfg, channels, beamformers, targets, ctrl)
    elif algo == "admm-bg":
        out = baselines.admm_bg_run(cfg, channels, beamformers, targets, ctrl)
    elif algo == "adal":
        out = baselines.adal_run(cfg, channels, beamformers, targets, ctrl)
    elif algo == "joint":
        out = joint_relay.run_joint(cfg, channels, beamformers, targets, ctrl)
    else:
        raise ValueError(f"unknown algorithm {algo!r}")
    units = out.iterations * baselines.complexity_units(
        _COMPLEXITY_KEY[algo], M=cfg.M, N=cfg.N, B=cfg.B, R=cfg.R)
    return (out.converged, out.iflag, out.iterations, out.total_power,
            float(out.sinrs.sum()), out.message_count, units)


def run_experiment(spec: ExperimentSpec):
    """Run the sweep; returns (records, csv_paths)."""
    spec.validate()
    records = []
    for ci, (M, N, R) in enumerate(spec.network_grid):
        for si, (snr_t, snr_r) in enumerate(spec.snr_grid):
            cfg = NetworkConfig(K=spec.K, d=spec.d, M=M, N=N, R=R,
                                snr_t_db=snr_t, snr_r_db=snr_r)
            config_id = f"{M}-{N}-{R}"
            for trial in range(spec.trials):
                ch_seed, bf_seed, dual_seed = trial_seeds(spec.master_seed, ci, si, trial)
                if spec.channel_file:
                    channels, beamformers, ch_seed, _ = channel_io.load_channels(
                        spec.channel_file, expect_dims=(cfg.K, cfg.d, M, N, R))
                else:
                    channels = generate_channels(cfg, ch_seed)
                    beamformers = init_beamformers(cfg, channels, bf_seed)
                if spec.save_channels_dir:
                    os.makedirs(spec.save_channels_dir, exist_ok=True)
                    channel_io.save_channels(
                        os.path.join(spec.save_channels_dir,
                                     f"ch_{config_id}_{snr_t:g}-{snr_r:g}_{trial}.rnac"),
                        channels, beamformers, ch_seed)
                targets = assign_targets(all_stream_sinrs(beamformers, channels, cfg))
                ctrl = _control(spec, dual_seed)
                for algo in spec.algorithms:
                    t0 = time.perf_counter()
                    try:
                        (conv, iflag, iters, power, sum_sinr,
                         messages, units) = _run_algorithm(
                            algo, cfg, channels, beamformers, targets, ctrl)
                        status = "ok"
                    except (admm.AdmmError, ValueError) as exc:
                        conv, iflag, iters = False, True, 0
                        power = sum_sinr = float("nan")
                        messages = units = 0
                        status = f"failed: {type(exc).__name__}"
                    wall = time.perf_counter() - t0 if spec.record_wall_time else 0.0
                    records.append(TrialRecord(
                        config_id=config_id, M=M, N=N, R=R, snr_t_db=snr_t,
                        snr_r_db=snr_r, trial=trial, algorithm=algo, converged=conv,
                        iflag=iflag, iterations=iters,
                        total_power_dbm=report.to_dbm(power),
                        sum_sinr_dbm=report.to_dbm(sum_sinr),
                        message_count=messages, complexity_units=units,
                        wall_time_s=wall, total_power_w=power, sum_sinr=sum_sinr,
                        status=status, seed=ch_seed))
    paths = report.emit_report(records, spec.out_dir)
    return records, paths
