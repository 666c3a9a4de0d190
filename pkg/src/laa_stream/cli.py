"""Command line runner: scenario sweeps over seeds and policies, CSV export.

Output layout under ``--out``::

    point_000.csv         one row per (policy, seed) at sweep point 0
    point_000.config.txt  the full scenario config of that point
    summary.csv           one row per (sweep point, policy), mean and stderr over seeds

``--emit-figs`` derives the fig*_*.csv datasets from ``summary.csv``.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import logging
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import SCHEMA, emit_config, parse_config, with_overrides
from .engine import POLICIES, ScenarioConfig, aggregate_metrics, run_scenario
from .errors import ConfigError, LaaStreamError

log = logging.getLogger("laa_stream")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2

METRICS = ("mean_quality_bps", "mean_rate_bps", "freeze_prob", "mean_freeze_dur_s", "on_time_frac", "mean_admm_iters")
DETAIL_COLUMNS = (
    ("point", "policy", "seed", "num_ues", "occupancy_mu", "occupancy_sigma2", "status")
    + METRICS
    + ("quality_levels_bps", "quality_counts", "error")
)
SUMMARY_COLUMNS = (
    ("point", "policy", "num_ues", "occupancy_mu", "occupancy_sigma2", "n_runs", "n_failed")
    + tuple(itertools.chain.from_iterable((m, m + "_stderr") for m in METRICS))
    + ("quality_levels_bps", "quality_counts")
)
FIG_FILES = ("fig6_admm_iters.csv", "fig7_rate.csv", "fig8_quality_cdf.csv", "fig9_quality_cdf.csv", "fig10_freeze.csv")


def fmt(value) -> str:
    """CSV cell text: floats with 9 significant digits, everything else via str."""
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".9g")
    if value is None:
        return ""
    return str(value)


def write_csv_atomic(path: Path, columns, rows) -> None:
    """Write to a temp file in the target directory, then rename over ``path``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(row.get(c)) for c in columns])
    write_text_atomic(path, buf.getvalue())


def write_text_atomic(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# -- argument handling -----------------------------------------------------


def parse_seeds(text: str) -> list[int]:
    """``"20"`` means seeds 0..19; ``"3,7,11"`` is an explicit list."""
    text = text.strip()
    try:
        if "," in text:
            seeds = [int(s) for s in text.split(",") if s.strip()]
        else:
            seeds = list(range(int(text)))
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed list {text!r}") from None
    if not seeds or any(s < 0 for s in seeds):
        raise argparse.ArgumentTypeError("need at least one non-negative seed")
    return seeds


def parse_policies(text: str) -> list[str]:
    names = [p.strip().upper() for p in text.split(",") if p.strip()]
    bad = [p for p in names if p not in POLICIES]
    if not names or bad:
        raise argparse.ArgumentTypeError(f"policies must be from {', '.join(POLICIES)}")
    return names


def parse_sweep(text: str) -> tuple[str, list[str]]:
    key, sep, values = text.partition("=")
    key = key.strip()
    if not sep or key not in SCHEMA:
        raise argparse.ArgumentTypeError(f"expected KEY=v1,v2 with a config key, got {text!r}")
    if key in ("policy", "seed"):
        raise argparse.ArgumentTypeError(f"use --policy/--seeds instead of sweeping {key}")
    vals = [v.strip() for v in values.split(",") if v.strip()]
    if not vals:
        raise argparse.ArgumentTypeError(f"sweep {key} has no values")
    return key, vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="laa-stream",
        description="Simulate video streaming over LTE with licensed assisted access.",
        allow_abbrev=False,
    )
    p.add_argument("--config", type=Path, help="scenario file (key = value lines)")
    p.add_argument("--seeds", type=parse_seeds, default=None, help="N (seeds 0..N-1) or a comma list")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--policy", type=parse_policies, default=None, help="comma list of " + ",".join(POLICIES))
    p.add_argument("--sweep", type=parse_sweep, action="append", default=[], help="KEY=v1,v2,... (repeatable)")
    p.add_argument("--emit-figs", action="store_true", help="write figure datasets from the results in --out")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


# -- running ---------------------------------------------------------------


@dataclass(frozen=True)
class Job:
    point: int
    config: ScenarioConfig


def _run_job(job: Job) -> dict:
    cfg = job.config
    row = {
        "point": job.point,
        "policy": cfg.policy,
        "seed": cfg.seed,
        "num_ues": cfg.num_ues,
        "occupancy_mu": cfg.occupancy.mu,
        "occupancy_sigma2": cfg.occupancy.sigma2,
    }
    try:
        rec = run_scenario(cfg)
    except LaaStreamError as exc:
        row.update(status="error", error=str(exc))
        return row
    row.update(rec.summary())
    row["status"] = "ok"
    row["quality_levels_bps"] = ";".join(fmt(float(v)) for v in rec.levels)
    row["quality_counts"] = ";".join(str(int(c)) for c in rec.quality_counts())
    return row


def expand_points(base: ScenarioConfig, sweeps) -> list[ScenarioConfig]:
    if not sweeps:
        return [base]
    keys = [k for k, _ in sweeps]
    points = []
    for combo in itertools.product(*(vals for _, vals in sweeps)):
        points.append(with_overrides(base, dict(zip(keys, combo))))
    return points


def summarize(point: int, rows: list[dict]) -> list[dict]:
    out = []
    for policy in dict.fromkeys(r["policy"] for r in rows):
        mine = [r for r in rows if r["policy"] == policy]
        ok = [r for r in mine if r["status"] == "ok"]
        first = mine[0]
        summary = {
            "point": point,
            "policy": policy,
            "num_ues": first["num_ues"],
            "occupancy_mu": first["occupancy_mu"],
            "occupancy_sigma2": first["occupancy_sigma2"],
            "n_runs": len(ok),
            "n_failed": len(mine) - len(ok),
        }
        if ok:
            summary.update(aggregate_metrics([{m: r[m] for m in METRICS} for r in ok]))
            counts = np.sum([[int(c) for c in r["quality_counts"].split(";")] for r in ok], axis=0)
            summary["quality_levels_bps"] = ok[0]["quality_levels_bps"]
            summary["quality_counts"] = ";".join(str(int(c)) for c in counts)
        out.append(summary)
    return out


def _worker_count(n_jobs: int) -> int:
    env = os.environ.get("SIM_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            log.warning("SIM_THREADS=%r is not an integer; ignoring", env)
    return max(1, min(cap, n_jobs))


def run(base: ScenarioConfig, seeds, policies, sweeps, out_dir: Path) -> int:
    """Run every (sweep point, policy, seed); returns an exit code."""
    out_dir.mkdir(parents=True, exist_ok=True)
    points = expand_points(base, sweeps)
    summary_rows: list[dict] = []
    failed = 0
    workers = _worker_count(len(points) * len(policies) * len(seeds))
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for i, point_cfg in enumerate(points):
            jobs = [
                Job(i, replace(point_cfg, policy=pol, seed=s))
                for pol in policies
                for s in seeds
            ]
            rows = list(pool.map(_run_job, jobs)) if pool else [_run_job(j) for j in jobs]
            for r in rows:
                if r["status"] != "ok":
                    failed += 1
                    log.error("point %d %s seed %d failed: %s", i, r["policy"], r["seed"], r["error"])
            stem = f"point_{i:03d}"
            write_text_atomic(out_dir / f"{stem}.config.txt", emit_config(point_cfg))
            write_csv_atomic(out_dir / f"{stem}.csv", DETAIL_COLUMNS, rows)
            summary_rows.extend(summarize(i, rows))
            write_csv_atomic(out_dir / "summary.csv", SUMMARY_COLUMNS, summary_rows)
            log.info("point %d/%d done (%d runs)", i + 1, len(points), len(rows))
    finally:
        if pool:
            pool.shutdown()
    return EXIT_PARTIAL if failed else EXIT_OK


# -- figure datasets -------------------------------------------------------


def _f(row, key) -> float:
    text = row.get(key, "")
    return float(text) if text not in ("", None) else math.nan


def _cdf_rows(levels, counts, **keys):
    total = counts.sum()
    if total == 0:
        return []
    cdf = np.cumsum(counts) / total
    cdf[-1] = 1.0
    return [{**keys, "quality_kbps": lv / 1e3, "cdf": c} for lv, c in zip(levels, cdf)]


def _counts(row):
    levels = np.array([float(v) for v in row["quality_levels_bps"].split(";")])
    counts = np.array([int(c) for c in row["quality_counts"].split(";")])
    return levels, counts


def emit_fig_datasets(results_dir: Path) -> list[Path]:
    """Derive figure CSVs from ``summary.csv``. Missing inputs are logged and skipped."""
    results_dir = Path(results_dir)
    summary_path = results_dir / "summary.csv"
    if not summary_path.is_file():
        log.error("missing input: %s", summary_path)
        return []
    rows = [r for r in read_csv(summary_path) if r.get("n_runs") not in ("", "0", None)]
    if not rows:
        log.error("missing input: no successful runs in %s", summary_path)
        return []
    written = []
    bcasp = [r for r in rows if r["policy"] == "BCASP"]

    def group_mean(items, key_fn, val_key):
        groups: dict = {}
        for r in items:
            groups.setdefault(key_fn(r), []).append(_f(r, val_key))
        return {k: float(np.nanmean(v)) for k, v in sorted(groups.items())}

    if bcasp:
        iters = group_mean(bcasp, lambda r: int(r["num_ues"]), "mean_admm_iters")
        path = results_dir / FIG_FILES[0]
        write_csv_atomic(path, ("K", "mean_iters"), [{"K": k, "mean_iters": v} for k, v in iters.items()])
        written.append(path)
    else:
        log.warning("skipping %s: no BCASP results", FIG_FILES[0])

    rate = group_mean(rows, lambda r: (r["policy"], int(r["num_ues"]), _f(r, "occupancy_mu")), "mean_rate_bps")
    path = results_dir / FIG_FILES[1]
    write_csv_atomic(
        path,
        ("policy", "K", "mu", "mean_rate_mbps"),
        [{"policy": p, "K": k, "mu": mu, "mean_rate_mbps": v / 1e6} for (p, k, mu), v in rate.items()],
    )
    written.append(path)

    if bcasp:
        by_k: dict = {}
        for r in bcasp:
            levels, counts = _counts(r)
            prev = by_k.get(int(r["num_ues"]))
            by_k[int(r["num_ues"])] = (levels, counts if prev is None else prev[1] + counts)
        out = []
        for k, (levels, counts) in sorted(by_k.items()):
            out.extend(_cdf_rows(levels, counts, K=k))
        path = results_dir / FIG_FILES[2]
        write_csv_atomic(path, ("K", "quality_kbps", "cdf"), out)
        written.append(path)
    else:
        log.warning("skipping %s: no BCASP results", FIG_FILES[2])

    by_policy: dict = {}
    for r in rows:
        levels, counts = _counts(r)
        prev = by_policy.get(r["policy"])
        by_policy[r["policy"]] = (levels, counts if prev is None else prev[1] + counts)
    out = []
    for policy, (levels, counts) in by_policy.items():
        out.extend(_cdf_rows(levels, counts, policy=policy))
    path = results_dir / FIG_FILES[3]
    write_csv_atomic(path, ("policy", "quality_kbps", "cdf"), out)
    written.append(path)

    key = lambda r: (r["policy"], _f(r, "occupancy_sigma2"))
    prob = group_mean(rows, key, "freeze_prob")
    dur = group_mean(rows, key, "mean_freeze_dur_s")
    path = results_dir / FIG_FILES[4]
    write_csv_atomic(
        path,
        ("policy", "sigma2", "freeze_prob", "freeze_dur_s"),
        [{"policy": p, "sigma2": s2, "freeze_prob": prob[(p, s2)], "freeze_dur_s": dur[(p, s2)]} for p, s2 in prob],
    )
    written.append(path)
    return written


# -- entry point -----------------------------------------------------------


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    if args.config is None:
        if not args.emit_figs:
            parser.print_usage(sys.stderr)
            print("laa-stream: error: --config is required unless only --emit-figs is given", file=sys.stderr)
            return EXIT_USAGE
        if args.seeds is not None or args.policy is not None or args.sweep:
            print("laa-stream: error: --seeds/--policy/--sweep need --config", file=sys.stderr)
            return EXIT_USAGE
        return EXIT_OK if emit_fig_datasets(args.out) else EXIT_PARTIAL

    try:
        base = parse_config(args.config)
        expand_points(base, args.sweep)  # fail fast on bad sweep values
    except ConfigError as exc:
        print(f"laa-stream: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    seeds = args.seeds if args.seeds is not None else [base.seed]
    policies = args.policy if args.policy is not None else [base.policy]
    try:
        code = run(base, seeds, policies, args.sweep, args.out)
    except OSError as exc:
        print(f"laa-stream: I/O error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    if args.emit_figs and not emit_fig_datasets(args.out):
        code = EXIT_PARTIAL
    return code


if __name__ == "__main__":
    sys.exit(main())
