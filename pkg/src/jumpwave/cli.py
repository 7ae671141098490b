"""Command-line entry point: ``jumpwave {fit,price,table,plot-data,risk}``.

Exit codes: 0 success, 1 invalid configuration or input, 2 training divergence.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import multiprocessing
import os
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__
from .artifacts import (read_csv, write_csv, write_greeks, write_json, write_loss_history,
                        write_manifest, write_surfaces)
from .reference import carr_madan_call, merton_series_call, reference_price
from .risk import RiskReport, mean_relative_error, pnl_losses, risk_report, var_cvar
from .sampling import sample_training_sets
from .scenario import Scenario, ScenarioError, get_scenario, load_scenarios, published_probes_path
from .solution import DomainError, Solution
from .trainer import DivergenceError, fit, prepare_system
from .wavelets import build_family

ENV_OUT = "JUMPWAVE_OUT"
ENV_THREADS = "JUMPWAVE_THREADS"
EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2
RUN_FORMAT = "jumpwave-run/1"
PROBE_HEADER = ["spot", "time_years", "hw_price", "series_price", "carr_madan_price",
                "abs_error", "rel_error_pct"]


class CliError(Exception):
    def __init__(self, msg: str, code: int = EXIT_CONFIG):
        super().__init__(msg)
        self.code = code


def _eprint(*args):
    print(*args, file=sys.stderr)


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 50x50, got {text!r}") from None


def _parse_probe(text: str) -> tuple[float, float]:
    try:
        s, t = text.split(":")
        return float(s), float(t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"probe must look like S:t, got {text!r}") from None


# ---------------------------------------------------------------- pipeline


def probe_rows(solution: Solution, probes) -> list[list]:
    p = solution.params
    rows = []
    for s, t in probes:
        tau = p.maturity - t
        hw = float(solution.price(s, t))
        series = float(merton_series_call(p, s, tau))
        cm = float(carr_madan_call(p, s, tau))
        rows.append([s, t, hw, series, cm, abs(hw - series), 100.0 * abs(hw - series) / series])
    return rows


def run_fit(sc: Scenario, out_dir: Path, grid=(50, 50), figures: bool = False,
            timings: bool = False, threads: int = 1) -> dict:
    """Fit one scenario and write its full artifact directory."""
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = sc.train.seed
    family = build_family(sc.params, sc.family)
    sets = sample_training_sets(sc.params, sc.sizes, seed)
    system = prepare_system(sc.params, family, sets, sc.weights, sc.compensated, sc.ridge_scale,
                            sc.grid_n)
    solution, report = fit(sc.params, family, sets, sc.train, system=system)

    files = [solution.save(out_dir / "solution.json").name]
    summary = report.to_dict(timings=timings)
    summary.update({"n_atoms": len(family), "sizes": list(sc.sizes), "ridge": system.ridge,
                    "loss_terms": system.loss_terms(solution.c, solution.b)})
    files.append(write_json(out_dir / "train_report.json", summary).name)
    files.append(write_json(out_dir / "scenario.json", sc.to_dict()).name)
    files.append(write_loss_history(out_dir, report))

    rows = probe_rows(solution, sc.probes)
    files.append(write_csv(out_dir / "probes.csv", PROBE_HEADER, rows).name)
    files += write_surfaces(out_dir, solution, *grid)
    files.append(write_greeks(out_dir, solution))

    rk = sc.risk
    losses = pnl_losses(sc.params, solution, rk.spot, rk.horizon, rk.n_paths, seed, rk.time)
    rep = risk_report(sc.id, losses, [r[2] for r in rows], [r[3] for r in rows], seed, rk.level,
                      rk.horizon)
    files.append(write_json(out_dir / "risk.json", rep.to_dict()).name)
    files.append(write_csv(out_dir / "risk.csv", RiskReport.CSV_HEADER.split(","),
                           [rep.csv_row().split(",")]).name)
    if figures:
        from .plotting import loss_distribution_figure, render_run
        files += render_run(out_dir)
        files.append(loss_distribution_figure(losses, rep.var99, rep.cvar99,
                                              out_dir / "loss_distribution.png"))
    write_manifest(out_dir, files, {"format": RUN_FORMAT, "scenario": sc.id, "seed": seed,
                                    "threads": threads, "version": __version__})
    return {"id": sc.id, "rows": rows, "risk": rep, "solution": solution, "report": report,
            "system": system, "out": out_dir}


# ---------------------------------------------------------------- verbs


def _scenario(args) -> Scenario:
    sc = get_scenario(args.id, args.scenario_file, args.paper_scale)
    return sc.with_seed(args.seed) if args.seed is not None else sc


def cmd_fit(args) -> int:
    sc = _scenario(args)
    out = Path(args.out) / sc.id
    res = run_fit(sc, out, args.grid, args.figures, args.timings, args.threads)
    mre = mean_relative_error([r[2] for r in res["rows"]], [r[3] for r in res["rows"]])
    print(f"{sc.id}: wrote {out} (probe mean relative error {mre:.4f}%)")
    return EXIT_OK


def cmd_price(args) -> int:
    if args.solution is None and args.method is None:
        raise CliError("price needs --solution and/or --method")
    solution = None
    if args.solution is not None:
        solution = _load_solution(args.solution)
        params = solution.params
    else:
        params = _scenario(args).params
    probes = args.probe or list(_scenario(args).probes)
    seed = 0 if args.seed is None else args.seed
    header = ["spot", "time_years", "price", "method"]
    both = solution is not None and args.method is not None
    if both:
        header += ["reference_price", "reference_method", "abs_error", "rel_error_pct"]
    out_rows, failed = [], False
    for s, t in probes:
        try:
            if not (0 <= t < params.maturity) or s <= 0:
                raise DomainError(f"(S={s:g}, t={t:g}) outside pricing domain")
            ref = None
            if args.method is not None:
                ref = reference_price(params, s, params.maturity - t, args.method, args.paths, seed).price
            if solution is not None:
                price = float(solution.price(s, t))
                row = [s, t, price, "surrogate"]
                if both:
                    row += [ref, args.method, abs(price - ref), 100.0 * abs(price - ref) / ref]
            else:
                row = [s, t, ref, args.method]
        except (DomainError, ValueError) as exc:
            failed = True
            _eprint(f"probe S={s:g} t={t:g}: {exc}")
            row = [s, t, "ERROR:out_of_domain", "surrogate" if solution else args.method]
            row += [""] * (len(header) - len(row))
        out_rows.append(row)
    dest = Path(args.csv) if args.csv else None
    if dest:
        write_csv(dest, header, out_rows)
    else:
        write_csv(_Stdout(), header, out_rows)
    return EXIT_CONFIG if failed else EXIT_OK


class _Stdout:
    """Path-like shim so write_csv can target standard output."""

    def write_text(self, text):
        sys.stdout.write(text)


def _load_solution(path) -> Solution:
    path = Path(path)
    if path.is_dir():
        path = path / "solution.json"
    if not path.exists():
        raise CliError(f"solution not found: {path}")
    try:
        return Solution.load(path)
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(f"{path}: invalid solution file ({exc})") from None


def _table_job(sc: Scenario, out_dir: str, grid, figures: bool, timings: bool):
    with threadpool_limits(1):
        try:
            res = run_fit(sc, Path(out_dir) / sc.id, grid, figures, timings, 1)
            # only the light fields cross the process boundary
            return {k: res[k] for k in ("id", "rows", "risk")}, None
        except DivergenceError as exc:
            return None, ("diverged", str(exc))
        except Exception as exc:  # recorded per scenario; the table continues
            return None, ("failed", f"{type(exc).__name__}: {exc}")


def _pinn_column(path) -> dict:
    header, rows = read_csv(path)
    idx = {h: i for i, h in enumerate(header)}
    if not {"scenario", "S", "t", "pinn"} <= idx.keys():
        raise CliError(f"{path}: need columns scenario,S,t,pinn")
    return {(r[idx["scenario"]], float(r[idx["S"]]), float(r[idx["t"]])): float(r[idx["pinn"]])
            for r in rows}


def cmd_table(args) -> int:
    scenarios = load_scenarios(args.scenario_file, args.paper_scale)
    if args.only:
        wanted = [s.strip() for s in args.only.split(",") if s.strip()]
        missing = [w for w in wanted if w not in scenarios]
        if missing:
            raise CliError(f"unknown scenario ids: {', '.join(missing)}")
        scenarios = {k: scenarios[k] for k in wanted}
    if args.seed is not None:
        scenarios = {k: v.with_seed(args.seed) for k, v in scenarios.items()}
    pinn = _pinn_column(args.pinn_file) if args.pinn_file else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    jobs = list(scenarios.values())
    if args.threads > 1 and len(jobs) > 1:
        ctx = multiprocessing.get_context("spawn")
        with cf.ProcessPoolExecutor(min(args.threads, len(jobs)), mp_context=ctx) as pool:
            results = list(pool.map(_table_job, jobs, [str(out)] * len(jobs),
                                    [args.grid] * len(jobs), [args.figures] * len(jobs),
                                    [args.timings] * len(jobs)))
    else:
        results = [_table_job(sc, str(out), args.grid, args.figures, args.timings) for sc in jobs]

    header = ["scenario"] + PROBE_HEADER + ["status"]
    if pinn is not None:
        header += ["pinn_price", "pinn_rel_error_pct"]
    rows, risks, failures = [], [], {}
    for sc, (res, err) in zip(jobs, results):
        if err is not None:
            failures[sc.id] = err
            _eprint(f"{sc.id}: {err[0]}: {err[1]}")
            for s, t in sc.probes:
                row = [sc.id, s, t, "", "", "", "", "", f"{err[0]}"]
                rows.append(row + (["", ""] if pinn is not None else []))
            continue
        risks.append(res["risk"])
        for r in res["rows"]:
            row = [sc.id, *r, "ok"]
            if pinn is not None:
                v = pinn.get((sc.id, float(r[0]), float(r[1])))
                row += ["", ""] if v is None else [v, 100.0 * abs(v - r[3]) / r[3]]
            rows.append(row)
    files = [write_csv(out / "comparison.csv", header, rows).name]
    files.append(write_csv(out / "risk.csv", RiskReport.CSV_HEADER.split(","),
                           [r.csv_row().split(",") for r in risks]).name)
    files.append(write_json(out / "risk.json", [r.to_dict() for r in risks]).name)
    if failures:
        files.append(write_json(out / "failures.json",
                                {k: {"status": v[0], "message": v[1]} for k, v in failures.items()}).name)
    files += [f"{sc.id}/manifest.json" for sc, (res, _) in zip(jobs, results) if res is not None]
    seed = "per-scenario" if args.seed is None else args.seed
    write_manifest(out, files, {"format": RUN_FORMAT, "scenarios": [sc.id for sc in jobs],
                                "seed": seed, "threads": args.threads, "version": __version__})
    for r in risks:
        print(f"{r.scenario:22s} MRE {r.mean_relative_error_pct:8.4f}%  "
              f"VaR99 {r.var99:8.4f}  CVaR99 {r.cvar99:8.4f}")
    if any(v[0] == "diverged" for v in failures.values()):
        return EXIT_DIVERGED
    return EXIT_CONFIG if failures else EXIT_OK


def cmd_plotdata(args) -> int:
    solution = _load_solution(args.solution)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = write_surfaces(out, solution, *args.grid)
    files.append(write_greeks(out, solution, per_day=args.per_day))
    src_dir = Path(args.solution) if Path(args.solution).is_dir() else Path(args.solution).parent
    history = Path(args.history) if args.history else src_dir / "loss_history.csv"
    if history.exists():
        dest = out / "loss_history.csv"
        if history.resolve() != dest.resolve():
            dest.write_bytes(history.read_bytes())
        files.append(dest.name)
    elif args.history:
        raise CliError(f"loss history not found: {history}")
    if args.figures:
        from .plotting import render_run
        files += render_run(out)
    write_manifest(out, files, {"format": RUN_FORMAT, "solution": str(args.solution),
                                "grid": list(args.grid), "version": __version__})
    print(f"wrote {len(files)} files to {out}")
    return EXIT_OK


def cmd_risk(args) -> int:
    sc = _scenario(args)
    rk = sc.risk
    n_paths = args.paths or rk.n_paths
    seed = sc.train.seed
    if args.pricer == "series":
        p = sc.params

        def pricer(s, t, p=p):
            return merton_series_call(p, s, p.maturity - t)

        probes_model = [float(merton_series_call(p, s, p.maturity - t)) for s, t in sc.probes]
        probes_ref = probes_model
        params = p
    else:
        if args.solution is None:
            raise CliError("risk with --pricer surrogate needs --solution (run `fit` first)")
        solution = _load_solution(args.solution)
        pricer, params = solution, solution.params
        rows = probe_rows(solution, sc.probes)
        probes_model, probes_ref = [r[2] for r in rows], [r[3] for r in rows]
    losses = pnl_losses(params, pricer, rk.spot, rk.horizon, n_paths, seed, rk.time)
    rep = risk_report(sc.id, losses, probes_model, probes_ref, seed, rk.level, rk.horizon)
    out = Path(args.out) / sc.id
    out.mkdir(parents=True, exist_ok=True)
    files = [write_json(out / "risk.json", rep.to_dict()).name,
             write_csv(out / "risk.csv", RiskReport.CSV_HEADER.split(","), [rep.csv_row().split(",")]).name]
    if args.figures:
        from .plotting import loss_distribution_figure
        var, cvar = var_cvar(losses, rk.level)
        files.append(loss_distribution_figure(losses, var, cvar, out / "loss_distribution.png"))
    write_manifest(out, files, {"format": RUN_FORMAT, "scenario": sc.id, "seed": seed,
                                "pricer": args.pricer, "version": __version__})
    print(RiskReport.CSV_HEADER)
    print(rep.csv_row())
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _global_flags(p: argparse.ArgumentParser, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--scenario-file", default=d(None), help="scenario file (default: shipped scenarios)")
    p.add_argument("--id", default=d("low_jump_intensity"), help="scenario id")
    p.add_argument("--seed", type=int, default=d(None), help="override the scenario seed")
    p.add_argument("--out", default=d(os.environ.get(ENV_OUT, "runs")),
                   help=f"output directory (env {ENV_OUT})")
    p.add_argument("--threads", type=int, default=d(int(os.environ.get(ENV_THREADS, "1"))),
                   help=f"BLAS threads, or table workers (env {ENV_THREADS})")
    p.add_argument("--paper-scale", action="store_true", default=d(False),
                   help="apply the file's [paper_scale] overrides")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jumpwave", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="verb", required=True)

    def verb(name, help_, fn):
        p = sub.add_parser(name, help=help_)
        _global_flags(p, suppress=True)
        p.set_defaults(fn=fn)
        return p

    p = verb("fit", "fit one scenario and write its artifacts", cmd_fit)
    p.add_argument("--grid", type=_parse_grid, default=(50, 50), help="surface grid NSxNT")
    p.add_argument("--figures", action="store_true", help="also render PNG figures")
    p.add_argument("--timings", action="store_true",
                   help="record wall times in train_report.json (breaks byte-identical reruns)")

    p = verb("price", "price probe points", cmd_price)
    p.add_argument("--method", choices=["series", "carr-madan", "bs", "mc"])
    p.add_argument("--solution", help="solution.json or a fit output directory")
    p.add_argument("--probe", type=_parse_probe, action="append", help="S:t, repeatable")
    p.add_argument("--paths", type=int, default=1_000_000, help="Monte Carlo paths")
    p.add_argument("--csv", help="write the table here instead of stdout")

    p = verb("table", "fit every scenario; write comparison and risk tables", cmd_table)
    p.add_argument("--only", help="comma-separated subset of scenario ids")
    p.add_argument("--pinn-file", nargs="?", const=str(published_probes_path()),
                   help="CSV with a pinn column to ingest (no value: shipped published table)")
    p.add_argument("--grid", type=_parse_grid, default=(50, 50))
    p.add_argument("--figures", action="store_true")
    p.add_argument("--timings", action="store_true")

    p = verb("plot-data", "write surface, Greeks and loss-history CSVs for a solution", cmd_plotdata)
    p.add_argument("--solution", required=True)
    p.add_argument("--grid", type=_parse_grid, default=(50, 50))
    p.add_argument("--history", help="loss_history.csv (default: next to the solution)")
    p.add_argument("--per-day", action="store_true", help="theta per calendar day")
    p.add_argument("--figures", action="store_true", help="also render PNG figures")

    p = verb("risk", "VaR/CVaR of a long call over the scenario horizon", cmd_risk)
    p.add_argument("--solution")
    p.add_argument("--pricer", choices=["surrogate", "series"], default="surrogate")
    p.add_argument("--paths", type=int)
    p.add_argument("--figures", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        with threadpool_limits(args.threads):
            return args.fn(args)
    except CliError as exc:
        _eprint(f"error: {exc}")
        return exc.code
    except DivergenceError as exc:
        _eprint(f"error: training diverged: {exc}")
        return EXIT_DIVERGED
    except (ScenarioError, DomainError) as exc:
        _eprint(f"error: {exc}")
        return EXIT_CONFIG
    except (ValueError, OSError) as exc:
        _eprint(f"error: {type(exc).__name__}: {exc}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
