"""Command-line experiment runner.

Subcommands: ``run`` (Monte Carlo sweep), ``save-channels`` (persist
realizations), ``ber`` (QPSK link-level simulation on one realization), and
``targets-search`` (linear SINR-target search between random-init and
max-SINR targets). Exits 0 on sweep completion, nonzero on spec errors.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from .. import admm, targets as targets_mod
from ..network import (NetworkConfig, all_stream_sinrs, assign_targets, generate_channels,
                       init_beamformers)
from . import ber as ber_mod
from . import channel_io
from .runner import ExperimentSpec, run_experiment, trial_seeds


def _int_list(text: str):
    return [int(x) for x in text.split(",") if x != ""]


def _float_list(text: str):
    return [float(x) for x in text.split(",") if x != ""]


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--users", type=int, default=3, help="number of users K")
    p.add_argument("--streams", type=int, default=2, help="streams per user d")
    p.add_argument("--tx-antennas", type=_int_list, default=[10],
                   help="comma list of M values (zipped into the network grid)")
    p.add_argument("--relay-antennas", type=_int_list, default=[8],
                   help="comma list of N values")
    p.add_argument("--relays", type=_int_list, default=[3], help="comma list of R values")
    p.add_argument("--snr-t-db", type=_float_list, default=[12.0],
                   help="comma list of transmit-side SNRs (dB)")
    p.add_argument("--snr-r-db", type=_float_list, default=[12.0],
                   help="comma list of relay-side SNRs (dB)")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--delta-max", type=float, default=1e-4)
    p.add_argument("--rho", type=float, default=1.2)
    p.add_argument("--rho-c", type=float, default=0.5)
    p.add_argument("--tau", type=float, default=0.3)
    p.add_argument("--rho2", type=float, default=0.0)
    p.add_argument("--incorporate-power-constraints", action="store_true")
    p.add_argument("--out", default="out", help="output directory")


def _grids(args):
    ms, ns, rs = args.tx_antennas, args.relay_antennas, args.relays
    if not (len(ms) == len(ns) == len(rs)):
        raise ValueError("--tx-antennas/--relay-antennas/--relays lists must align")
    if len(args.snr_t_db) != len(args.snr_r_db):
        raise ValueError("--snr-t-db/--snr-r-db lists must align")
    return list(zip(ms, ns, rs)), list(zip(args.snr_t_db, args.snr_r_db))


def _spec_from(args, algorithms, trials) -> ExperimentSpec:
    net_grid, snr_grid = _grids(args)
    return ExperimentSpec(
        network_grid=net_grid, snr_grid=snr_grid, algorithms=algorithms, trials=trials,
        master_seed=args.seed, K=args.users, d=args.streams,
        channel_file=getattr(args, "channels_file", None),
        save_channels_dir=getattr(args, "save_channels", None),
        out_dir=args.out, s_max=args.max_iters, delta_max=args.delta_max,
        rho=args.rho, rho_c=args.rho_c, tau=args.tau, rho2=args.rho2,
        incorporate_power_constraints=args.incorporate_power_constraints,
        record_wall_time=getattr(args, "wall_time", False))


def _single_cfg(args) -> NetworkConfig:
    net_grid, snr_grid = _grids(args)
    if len(net_grid) != 1 or len(snr_grid) != 1:
        raise ValueError("this subcommand runs one network/SNR cell")
    (M, N, R), (st, sr) = net_grid[0], snr_grid[0]
    return NetworkConfig(K=args.users, d=args.streams, M=M, N=N, R=R,
                         snr_t_db=st, snr_r_db=sr)


def cmd_run(args) -> int:
    algos = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    trials = args.trials
    if trials is None:
        # default trial counts: 100 for proposed/centralized sweeps, 20 when
        # the slower benchmarks, joint runs, or searches are involved
        trials = 100 if set(algos) <= {"proposed", "centralized"} else 20
    spec = _spec_from(args, algos, trials)
    records, paths = run_experiment(spec)
    ok = sum(1 for r in records if r.status == "ok" and r.converged and not r.iflag)
    print(f"{len(records)} records ({ok} converged feasible) -> {paths['trials']}")
    return 0


def cmd_save_channels(args) -> int:
    cfg = _single_cfg(args)
    ch_seed, bf_seed, _ = trial_seeds(args.seed, 0, 0, args.trial)
    channels = generate_channels(cfg, ch_seed)
    beamformers = init_beamformers(cfg, channels, bf_seed)
    os.makedirs(os.path.dirname(os.path.abspath(args.channels_file)), exist_ok=True)
    channel_io.save_channels(args.channels_file, channels, beamformers, ch_seed)
    print(f"saved realization (seed {ch_seed}) -> {args.channels_file}")
    return 0


def cmd_ber(args) -> int:
    cfg = _single_cfg(args)
    ch_seed, bf_seed, dual_seed = trial_seeds(args.seed, 0, 0, 0)
    if args.channels_file:
        channels, beamformers, ch_seed, _ = channel_io.load_channels(
            args.channels_file, expect_dims=(cfg.K, cfg.d, cfg.M, cfg.N, cfg.R))
    else:
        channels = generate_channels(cfg, ch_seed)
        beamformers = init_beamformers(cfg, channels, bf_seed)
    targets = assign_targets(all_stream_sinrs(beamformers, channels, cfg))
    ctrl = admm.AlgorithmControl(s_max=args.max_iters, delta_max=args.delta_max,
                                 rho=args.rho, rho_c=args.rho_c, init_seed=dual_seed)
    out = admm.run(cfg, channels, beamformers, targets, ctrl)
    if not out.converged or out.iflag:
        print("run did not converge feasibly; BER skipped", file=sys.stderr)
        return 1
    u, ratios = admm.extract_all(out.X, ratio_tol=args.rank_tol)
    ber = ber_mod.ber_simulate(cfg, channels, u, beamformers.F, beamformers.vbar,
                               args.symbols, ch_seed + 1)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "ber.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user", "stream", "sinr", "target", "eig_ratio", "ber"])
        for k in range(cfg.K):
            for l in range(cfg.d):
                w.writerow([k, l, f"{out.sinrs[k, l]:.10g}", f"{targets.gamma[k, l]:.10g}",
                            f"{ratios[k, l]:.3e}", f"{ber[k, l]:.6e}"])
    print(f"mean BER {ber.mean():.3e} -> {path}")
    return 0


def cmd_targets_search(args) -> int:
    cfg = _single_cfg(args)
    ch_seed, bf_seed, dual_seed = trial_seeds(args.seed, 0, 0, 0)
    channels = generate_channels(cfg, ch_seed)
    beamformers = init_beamformers(cfg, channels, bf_seed)
    gamma_lo = assign_targets(all_stream_sinrs(beamformers, channels, cfg))
    gamma_hi, ms_state = targets_mod.max_sinr_targets(cfg, channels, beamformers.F,
                                                      bf_seed, max_alt=args.max_alternations)
    ctrl = admm.AlgorithmControl(s_max=args.max_iters, delta_max=args.delta_max,
                                 rho=args.rho, rho_c=args.rho_c, init_seed=dual_seed)
    res = targets_mod.linear_target_search(cfg, channels,
                                           ms_state.beamformers(beamformers.F),
                                           gamma_lo, gamma_hi, args.search_budget, ctrl)
    print(f"lower sum-SINR {gamma_lo.total:.4f}, upper {gamma_hi.total:.4f} "
          f"(max-SINR alternations {ms_state.alternations})")
    print(f"search weight {res.weight:g} -> sum-SINR {res.targets.total:.4f}, "
          f"power {res.total_power:.4f} W, probes {res.probes}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relaybeam",
        description="Distributed multi-stream beamforming simulator for MIMO "
                    "multi-relay interference networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="Monte Carlo sweep")
    _add_common(p_run)
    p_run.add_argument("--algorithms", default="proposed,centralized",
                       help="comma list: proposed,admm-bg,adal,centralized,joint")
    p_run.add_argument("--trials", type=int, default=None,
                       help="Monte Carlo trials per cell (default 100, or 20 "
                            "when benchmarks/joint are included)")
    p_run.add_argument("--channels-file", default=None,
                       help="pre-saved realization to drive a single trial")
    p_run.add_argument("--save-channels", default=None, metavar="DIR",
                       help="save every trial's realization into DIR")
    p_run.add_argument("--wall-time", action="store_true",
                       help="record wall-clock times (breaks byte-identical output)")
    p_run.set_defaults(func=cmd_run)

    p_save = sub.add_parser("save-channels", help="persist one realization")
    _add_common(p_save)
    p_save.add_argument("--channels-file", required=True)
    p_save.add_argument("--trial", type=int, default=0)
    p_save.set_defaults(func=cmd_save_channels)

    p_ber = sub.add_parser("ber", help="QPSK BER on one converged realization")
    _add_common(p_ber)
    p_ber.add_argument("--channels-file", default=None)
    p_ber.add_argument("--symbols", type=int, default=100000)
    p_ber.add_argument("--rank-tol", type=float, default=1e-4)
    p_ber.set_defaults(func=cmd_ber)

    p_ts = sub.add_parser("targets-search", help="linear SINR-target search")
    _add_common(p_ts)
    p_ts.add_argument("--search-budget", type=int, default=2)
    p_ts.add_argument("--max-alternations", type=int, default=50)
    p_ts.set_defaults(func=cmd_targets_search)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, channel_io.ChannelFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
