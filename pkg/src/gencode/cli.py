"""Command-line experiment runner.

Subcommands ``analyze``, ``simulate``, ``sweep-annex`` and ``compare`` write
CSV files with a fixed header (see ``COLUMNS``).  Options can also come from a
JSON config file given by ``--config``; command-line flags take precedence.

Exit codes: 0 success, 2 invalid configuration, 3 numerical non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .codec import SafetyCapExceeded, fast_disjoint_latencies, run_trial
from .collector import asymptotic_T
from .latency import (
    annex_expected_latency,
    bec_scale,
    failure_prob_lower,
    latency_estimate,
    packets_for_failure,
)
from .layout import LayoutError, build_layout, omega
from .quad import ConvergenceError

OUT_DIR_ENV = "GENCODE_OUT_DIR"
SCHEMES = ("disjoint", "annex", "head_to_toe")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

COLUMNS = {
    "analyze": [
        "N", "g", "n", "q", "eps", "lower_T", "mean_W", "upper_W", "std_W",
        "mean_W_eps", "std_W_eps", "asym_T", "asym_T_large_m", "t_delta_1e-3",
    ],
    "simulate": [
        "scheme", "N", "h", "l", "g", "n", "q", "eps", "trials", "seed", "engine", "capped",
        "mean", "std", "min", "q05", "q25", "q50", "q75", "q95", "max", "analytic_mean",
    ],
    "failure": ["t", "empirical_failure", "limit_law_lower"],
    "sweep-annex": ["l", "scheme", "h", "g", "n", "q", "analytic_mean", "sim_mean", "sim_std", "trials"],
    "omega": ["l", "s", "g_minus_omega"],
    "compare": ["g", "l_star", "h_star", "annex_latency", "disjoint_latency"],
}

DEFAULTS = {
    "n_packets": 1000,
    "gen_size": None,
    "base_size": None,
    "annex": 0,
    "annex_range": None,
    "field": 256,
    "eps": 0.0,
    "trials": 1000,
    "seed": 0,
    "scheme": "disjoint",
    "out": None,
    "jobs": 1,
    "engine": "codec",
    "failure_curve": None,
    "omega_out": None,
    "schemes": ",".join(SCHEMES),
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config handling


def _int_list(text) -> list[int]:
    """'10,20,30' or 'start:stop[:step]' (stop inclusive) -> list of ints."""
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    if isinstance(text, int):
        return [text]
    text = str(text).strip()
    if ":" in text:
        parts = [int(p) for p in text.split(":")]
        if len(parts) not in (2, 3):
            raise ConfigError(f"bad range {text!r}; use start:stop[:step]")
        start, stop = parts[0], parts[1]
        step = parts[2] if len(parts) == 3 else 1
        if step <= 0 or stop < start:
            raise ConfigError(f"bad range {text!r}")
        return list(range(start, stop + 1, step))
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad integer list {text!r}") from exc


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(k.replace("-", "_") for k in data) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg.update({k.replace("-", "_"): v for k, v in data.items()})
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg["mode"] = args.command
    _validate(cfg)
    return cfg


def _validate(cfg):
    if int(cfg["n_packets"]) < 1:
        raise ConfigError("--n-packets must be >= 1")
    if int(cfg["field"]) not in (2, 4, 16, 256):
        raise ConfigError("--field must be one of 2, 4, 16, 256")
    if not 0.0 <= float(cfg["eps"]) < 1.0:
        raise ConfigError("--eps must lie in [0, 1)")
    if int(cfg["trials"]) < 1:
        raise ConfigError("--trials must be >= 1")
    if int(cfg["jobs"]) < 1:
        raise ConfigError("--jobs must be >= 1")
    if cfg["scheme"] not in SCHEMES:
        raise ConfigError(f"--scheme must be one of {', '.join(SCHEMES)}")
    if cfg["engine"] not in ("codec", "rank-process"):
        raise ConfigError("--engine must be codec or rank-process")


def _out_stream(cfg, stem):
    out = cfg["out"]
    if out is None and os.environ.get(OUT_DIR_ENV):
        out = str(Path(os.environ[OUT_DIR_ENV]) / f"{stem}.csv")
    return out


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in header])
    text = buf.getvalue()
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def _pmap(fn, items, jobs):
    """Ordered map; results come back in input order whatever finishes first."""
    if jobs <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# analytics


def _disjoint_sizes(N, g):
    if not 1 <= g <= N:
        raise ConfigError(f"generation size {g} must lie in [1, N={N}]")
    n = -(-N // g)
    return [g] * (n - 1) + [N - (n - 1) * g]


def _analyze_row(N, g, q, eps):
    sizes = _disjoint_sizes(N, g)
    n = len(sizes)
    rho = [1.0 / n] * n
    est = latency_estimate(rho, sizes, q)
    lossy = bec_scale(est, eps)
    row = {
        "N": N, "g": g, "n": n, "q": q, "eps": float(eps),
        "lower_T": est.lower_bound, "mean_W": est.mean, "upper_W": est.upper_bound, "std_W": est.std,
        "mean_W_eps": lossy.mean, "std_W_eps": lossy.std,
        # asymptotic and limit-law quantities, undefined for n < 3
        "asym_T": asymptotic_T(n, g) if n >= 3 else None,
        "asym_T_large_m": asymptotic_T(n, g, large_m=True),
        "t_delta_1e-3": packets_for_failure(n, g, 1e-3) if len(set(sizes)) == 1 else None,
    }
    return row


def cmd_analyze(cfg) -> list[dict]:
    N, q, eps = int(cfg["n_packets"]), int(cfg["field"]), float(cfg["eps"])
    gs = _int_list(cfg["gen_size"] or "10:200:10")
    return _pmap(_AnalyzeJob(N, q, eps), gs, int(cfg["jobs"]))


class _AnalyzeJob:
    def __init__(self, N, q, eps):
        self.N, self.q, self.eps = N, q, eps

    def __call__(self, g):
        return _analyze_row(self.N, g, self.q, self.eps)


# ---------------------------------------------------------------------------
# simulation


def _layout_for(scheme, N, h, l, seed, trial):
    return build_layout(scheme, N, h, l, seed=[seed, trial, 1])


class _TrialJob:
    def __init__(self, scheme, N, h, l, q, eps, seed):
        self.args = (scheme, N, h, l, q, eps, seed)

    def __call__(self, i):
        scheme, N, h, l, q, eps, seed = self.args
        # fixed layouts are rebuilt per trial only for the random annex
        layout = _layout_for(scheme, N, h, l, seed, i if scheme == "annex" else 0)
        try:
            rec = run_trial(layout, q, eps, "rank_only", seed, i)
        except SafetyCapExceeded:
            return -1, -1
        return rec.latency, rec.received


def simulate_point(scheme, N, h, l, q, eps, trials, seed, jobs=1, engine="codec"):
    """(latencies, received, capped) for one configuration."""
    if engine == "rank-process":
        if scheme != "disjoint" and l != 0:
            raise ConfigError("the rank-process engine only models disjoint generations")
        sizes = _disjoint_sizes(N, h + l)
        lat = fast_disjoint_latencies(sizes, q, eps, trials, seed)
        # received counts are not tracked by the sampler; at eps=0 they equal latency
        return lat, (lat if eps == 0 else None), 0
    out = _pmap(_TrialJob(scheme, N, h, l, q, eps, seed), range(trials), jobs)
    lat = np.array([o[0] for o in out], dtype=np.int64)
    rec = np.array([o[1] for o in out], dtype=np.int64)
    ok = lat >= 0
    return lat[ok], rec[ok], int((~ok).sum())


def _sizes_of(cfg):
    """(h, l) from --gen-size / --base-size / --annex."""
    l = int(cfg["annex"])
    if cfg["base_size"] is not None:
        h = int(cfg["base_size"])
    elif cfg["gen_size"] is not None:
        h = _int_list(cfg["gen_size"])[0] - l
    else:
        raise ConfigError("give --gen-size or --base-size")
    if h < 1 or l < 0:
        raise ConfigError("need base size >= 1 and annex >= 0")
    return h, l


def cmd_simulate(cfg):
    N, q, eps = int(cfg["n_packets"]), int(cfg["field"]), float(cfg["eps"])
    trials, seed, scheme = int(cfg["trials"]), int(cfg["seed"]), cfg["scheme"]
    h, l = _sizes_of(cfg)
    if scheme == "disjoint":
        h, l = h + l, 0
    if h > N:
        raise ConfigError("generation larger than N")
    lat, rec, capped = simulate_point(scheme, N, h, l, q, eps, trials, seed, int(cfg["jobs"]), cfg["engine"])
    if lat.size == 0:
        raise ConfigError("every trial hit the safety cap")
    n = -(-N // h)
    analytic = None
    if scheme == "disjoint":
        sizes = _disjoint_sizes(N, h)
        analytic = bec_scale(latency_estimate([1.0 / n] * n, sizes, q), eps).mean
    elif scheme == "annex":
        analytic = annex_expected_latency(N, h, l, q).estimate / (1.0 - eps)
    qs = np.quantile(lat, [0.05, 0.25, 0.5, 0.75, 0.95])
    row = {
        "scheme": scheme, "N": N, "h": h, "l": l, "g": h + l, "n": n, "q": q, "eps": eps,
        "trials": trials, "seed": seed, "engine": cfg["engine"], "capped": capped,
        "mean": float(lat.mean()), "std": float(lat.std(ddof=1)) if lat.size > 1 else 0.0,
        "min": int(lat.min()), "q05": qs[0], "q25": qs[1], "q50": qs[2], "q75": qs[3], "q95": qs[4],
        "max": int(lat.max()), "analytic_mean": analytic,
    }
    curve = None
    if cfg["failure_curve"] and rec is not None:
        curve = failure_curve(rec, n, h + l)
    return [row], curve


def failure_curve(received, n, g, points=None):
    """Empirical P[not decoded after t received packets] with the limit-law lower bound."""
    received = np.sort(np.asarray(received))
    if points is None:
        points = np.unique(np.linspace(received.min(), received.max(), 50).astype(int))
    rows = []
    for t in points:
        emp = 1.0 - np.searchsorted(received, t, side="right") / received.size
        rows.append({
            "t": int(t), "empirical_failure": float(emp),
            "limit_law_lower": failure_prob_lower(n, g, float(t)) if n >= 3 else None,
        })
    return rows


# ---------------------------------------------------------------------------
# annex sweeps


def cmd_sweep_annex(cfg):
    N, q = int(cfg["n_packets"]), int(cfg["field"])
    trials, seed, jobs = int(cfg["trials"]), int(cfg["seed"]), int(cfg["jobs"])
    ls = _int_list(cfg["annex_range"] or "0:16:2")
    fixed_g = cfg["base_size"] is None
    if fixed_g and cfg["gen_size"] is None:
        raise ConfigError("give --base-size (fixed h) or --gen-size (fixed g = h + l)")
    schemes = [s.strip() for s in str(cfg["schemes"]).split(",") if s.strip()]
    if any(s not in SCHEMES for s in schemes):
        raise ConfigError(f"--schemes entries must be among {', '.join(SCHEMES)}")
    rows, omega_rows = [], []
    for l in ls:
        h = _int_list(cfg["gen_size"])[0] - l if fixed_g else int(cfg["base_size"])
        if h < 1 or h + l > N:
            raise ConfigError(f"annex size {l} invalid for the chosen generation size")
        g = h + l
        n = -(-N // h)
        plan = annex_expected_latency(N, h, l, q)
        omega_rows += [{"l": l, "s": s, "g_minus_omega": g - omega(s, N, h, l)} for s in range(n)]
        for scheme in schemes:
            if scheme == "disjoint":
                # same coding complexity: disjoint generations of size h + l
                sizes = _disjoint_sizes(N, g)
                nd = len(sizes)
                analytic = latency_estimate([1.0 / nd] * nd, sizes, q).mean
                sim = simulate_point("disjoint", N, g, 0, q, 0.0, trials, seed, jobs)
                n_out = nd
            else:
                analytic = plan.estimate if scheme == "annex" else None
                sim = simulate_point(scheme, N, h, l, q, 0.0, trials, seed, jobs)
                n_out = n
            lat = sim[0]
            rows.append({
                "l": l, "scheme": scheme, "h": h if scheme != "disjoint" else g, "g": g, "n": n_out, "q": q,
                "analytic_mean": analytic, "sim_mean": float(lat.mean()),
                "sim_std": float(lat.std(ddof=1)) if lat.size > 1 else 0.0, "trials": trials,
            })
    return rows, omega_rows


def optimal_annex(N, g, q, ls=None):
    """argmin over l of the annex estimate at fixed g = h + l: (l*, latency*)."""
    ls = range(0, g // 2 + 1) if ls is None else ls
    best = None
    for l in ls:
        if g - l < 1:
            continue
        est = annex_expected_latency(N, g - l, l, q).estimate
        if best is None or est < best[1]:
            best = (l, est)
    return best


def cmd_compare(cfg):
    N, q = int(cfg["n_packets"]), int(cfg["field"])
    gs = _int_list(cfg["gen_size"] or "10:60:5")
    ls = _int_list(cfg["annex_range"]) if cfg["annex_range"] is not None else None
    rows = []
    for g in gs:
        l_star, lat_star = optimal_annex(N, g, q, ls)
        sizes = _disjoint_sizes(N, g)
        n = len(sizes)
        rows.append({
            "g": g, "l_star": l_star, "h_star": g - l_star, "annex_latency": lat_star,
            "disjoint_latency": latency_estimate([1.0 / n] * n, sizes, q).mean,
        })
    return rows


def compare_summary(rows, g_annex=20, g_disjoint=50) -> str | None:
    by_g = {r["g"]: r for r in rows}
    if g_annex not in by_g or g_disjoint not in by_g:
        return None
    a, d = by_g[g_annex]["annex_latency"], by_g[g_disjoint]["disjoint_latency"]
    verdict = "lower" if a < d else "not lower"
    return (
        f"annex optimum at g={g_annex} (l*={by_g[g_annex]['l_star']}): {a:.2f} packets; "
        f"disjoint at g={g_disjoint}: {d:.2f} packets; annex is {verdict}"
    )


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gencode", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file with option values (flags override)")
        sp.add_argument("--n-packets", type=int, help="file size N (default 1000)")
        sp.add_argument("--gen-size", help="generation size g; list or start:stop[:step] where allowed")
        sp.add_argument("--base-size", type=int, help="base generation size h")
        sp.add_argument("--annex", type=int, help="annex size l")
        sp.add_argument("--annex-range", help="annex sizes, list or start:stop[:step]")
        sp.add_argument("--field", type=int, help="field size q in {2, 4, 16, 256}")
        sp.add_argument("--eps", type=float, help="erasure probability")
        sp.add_argument("--trials", type=int, help="Monte-Carlo trials")
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--scheme", help="disjoint | annex | head_to_toe")
        sp.add_argument("--out", help=f"output CSV ('-' for stdout; default ${OUT_DIR_ENV}/<command>.csv)")
        sp.add_argument("--jobs", type=int, help="worker processes")
        return sp

    common(sub.add_parser("analyze", help="analytic latency curves over a g sweep"))
    sp = common(sub.add_parser("simulate", help="Monte-Carlo latency statistics"))
    sp.add_argument("--engine", help="codec (default) or rank-process (disjoint only, fast)")
    sp.add_argument("--failure-curve", help="also write the empirical failure curve here")
    sp = common(sub.add_parser("sweep-annex", help="latency versus annex size"))
    sp.add_argument("--schemes", help="comma list of schemes to include")
    sp.add_argument("--omega-out", help="also write g - Omega(s) curves here")
    common(sub.add_parser("compare", help="optimal annex size per generation size"))
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = _out_stream(cfg, args.command)
        if args.command == "analyze":
            _write_csv(out, COLUMNS["analyze"], cmd_analyze(cfg))
        elif args.command == "simulate":
            rows, curve = cmd_simulate(cfg)
            _write_csv(out, COLUMNS["simulate"], rows)
            if curve is not None:
                _write_csv(cfg["failure_curve"], COLUMNS["failure"], curve)
        elif args.command == "sweep-annex":
            rows, omega_rows = cmd_sweep_annex(cfg)
            _write_csv(out, COLUMNS["sweep-annex"], rows)
            if cfg["omega_out"]:
                _write_csv(cfg["omega_out"], COLUMNS["omega"], omega_rows)
        elif args.command == "compare":
            rows = cmd_compare(cfg)
            _write_csv(out, COLUMNS["compare"], rows)
            summary = compare_summary(rows)
            if summary:
                print(summary, file=sys.stderr)
    except (ConfigError, LayoutError, ValueError) as exc:
        print(f"gencode: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"gencode: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
