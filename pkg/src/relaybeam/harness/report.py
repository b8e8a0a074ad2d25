"""CSV emission: per-trial rows with the fixed schema, aggregate summary, and
a long-format linear-value file for plotting."""

from __future__ import annotations

import csv
import math
import os

TRIAL_COLUMNS = ["config_id", "M", "N", "R", "snr_t_db", "snr_r_db", "trial", "algorithm",
                 "converged", "iflag", "iterations", "total_power_dbm", "sum_sinr_dbm",
                 "message_count", "complexity_units", "wall_time_s"]

SUMMARY_COLUMNS = ["config_id", "M", "N", "R", "snr_t_db", "snr_r_db", "algorithm",
                   "trials", "converged_feasible", "failed_rate",
                   "mean_total_power_dbm", "mean_sum_sinr_dbm", "mean_iterations",
                   "mean_message_count", "mean_wall_time_s"]


def to_dbm(x: float) -> float:
    """Linear watts to dBm (1 W = 30 dBm)."""
    if x <= 0 or math.isnan(x):
        return float("nan")
    return 10.0 * math.log10(x) + 30.0


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def emit_report(records: list, out_dir) -> dict:
    """Write trials.csv (fixed schema), summary.csv, and plot_data.csv
    (long-format, linear values); returns the file paths."""
    os.makedirs(out_dir, exist_ok=True)
    trial_rows = [[getattr(rec, col) for col in TRIAL_COLUMNS] for rec in records]
    trials_path = os.path.join(out_dir, "trials.csv")
    _write_csv(trials_path, TRIAL_COLUMNS, trial_rows)

    groups = {}
    for rec in records:
        key = (rec.config_id, rec.M, rec.N, rec.R, rec.snr_t_db, rec.snr_r_db, rec.algorithm)
        groups.setdefault(key, []).append(rec)
    summary_rows = []
    for key in sorted(groups, key=str):
        recs = groups[key]
        good = [r for r in recs if r.converged and not r.iflag and r.status == "ok"]
        n = len(recs)

        def mean(vals):
            vals = list(vals)
            return sum(vals) / len(vals) if vals else float("nan")

        summary_rows.append(list(key[:1]) + list(key[1:6]) + [key[6], n, len(good),
                            (n - len(good)) / n if n else float("nan"),
                            to_dbm(mean(r.total_power_w for r in good)),
                            to_dbm(mean(r.sum_sinr for r in good)),
                            mean(r.iterations for r in good),
                            mean(r.message_count for r in good),
                            mean(r.wall_time_s for r in good)])
    summary_path = os.path.join(out_dir, "summary.csv")
    _write_csv(summary_path, SUMMARY_COLUMNS, summary_rows)

    plot_rows = []
    for rec in records:
        for metric, value in (("total_power_w", rec.total_power_w),
                              ("sum_sinr", rec.sum_sinr),
                              ("iterations", rec.iterations),
                              ("message_count", rec.message_count)):
            plot_rows.append([rec.config_id, rec.snr_t_db, rec.snr_r_db, rec.trial,
                              rec.algorithm, metric, value])
    plot_path = os.path.join(out_dir, "plot_data.csv")
    _write_csv(plot_path, ["config_id", "snr_t_db", "snr_r_db", "trial", "algorithm",
                           "metric", "value"], plot_rows)
    return {"trials": trials_path, "summary": summary_path, "plot_data": plot_path}
