"""Command-line front end.

    modisperse [--threads N] [--config FILE] <command> [options] --out DIR
    modisperse replay DIR/manifest.ini --out OTHER

Every command writes its outputs plus ``manifest.ini`` into ``--out``. The
manifest is itself a valid ``--config`` file, and ``replay`` re-runs the
recorded command from it. ``--threads`` (or MODISPERSE_THREADS) never changes
results and is not recorded.

Exit codes: 0 success, 1 numerical failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import fileio, modpath
from .modop import ModulatedOperator, operator_norm_probe, x_apply, x_truncated
from .modpath import DegenerateFitError, EmbeddingError
from .spectral import random_field, sobolev_norm
from .young import NoContractionError, SewingDivergenceError

log = logging.getLogger("modisperse")

NUMERICAL_FAILURES = (NoContractionError, SewingDivergenceError, EmbeddingError, DegenerateFitError)


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- arg types


def float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in str(text).replace(" ", "").split(",") if x]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in str(text).replace(" ", "").split(",") if x]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def boolean(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _as_config_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return fileio.fmt(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_as_config_value(v) for v in value)
    return str(value)


# ---------------------------------------------------------------- parser


def _add_path_args(p: argparse.ArgumentParser, n: int = 4096) -> None:
    g = p.add_argument_group("modulation path")
    g.add_argument("--kind", choices=["fbm", "brownian", "linear", "constant"], default="brownian")
    g.add_argument("--hurst", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=0, help="path seed")
    g.add_argument("--n", type=int, default=n, help="number of path segments")
    g.add_argument("--horizon", type=float, default=1.0)
    g.add_argument("--slope", type=float, default=1.0)
    g.add_argument("--level", type=float, default=0.0)
    g.add_argument("--path-file", default="", help="read the path from a t,w CSV instead")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modisperse", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads for phase integrals (0 = auto)")
    parser.add_argument("--config", default=None, help="INI file with per-command defaults")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("path", help="sample a modulation path")
    _add_path_args(p, n=1024)
    p.add_argument("--out", required=True)

    p = sub.add_parser("irregularity", help="estimate the irregularity exponent of a path")
    _add_path_args(p, n=2**18)
    p.add_argument("--gamma", type=float, default=0.55)
    p.add_argument("--a-min", type=float, default=0.5)
    p.add_argument("--a-max", type=float, default=500.0)
    p.add_argument("--points-per-decade", type=int, default=6)
    p.add_argument("--depth", type=int, default=64, help="finest dyadic level of the pair grid")
    p.add_argument("--out", required=True)

    p = sub.add_parser("operator", help="oracle comparison, norm probe or truncation study")
    _add_path_args(p, n=4096)
    p.add_argument("--mode", choices=["oracle", "probe", "truncation"], default="probe")
    p.add_argument("--equation", choices=["kdv", "mkdv"], default="kdv")
    p.add_argument("--K", type=int, default=16)
    p.add_argument("--K-list", type=int_list, default="16,32,64")
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--betas", type=float_list, default="0.4,1.2")
    p.add_argument("--gamma", type=float, default=0.55)
    p.add_argument("--samples", type=int, default=4)
    p.add_argument("--cases", type=int, default=4)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--L-list", type=int_list, default="2,4,8,16")
    p.add_argument("--panels", type=int, default=2**14, help="oracle quadrature panels")
    p.add_argument("--order", type=int, default=16, help="oracle Gauss-Legendre order")
    p.add_argument("--out", required=True)

    p = sub.add_parser("solve", help="solve the Young equation")
    _add_path_args(p, n=2**14)
    p.add_argument("--equation", choices=["kdv", "mkdv"], default="kdv")
    p.add_argument("--alpha", type=float, default=0.0, help="regularity of the random initial data")
    p.add_argument("--norm", type=float, default=1.0, help="H^alpha norm of the initial data")
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--zero-data", type=boolean, default=False)
    p.add_argument("--K", type=int, default=32)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--h", type=float, default=2.0**-10)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--gamma", type=float, default=0.55)
    p.add_argument("--snapshots", type=float_list, default="")
    p.add_argument("--galerkin", type=int_list, default="",
                   help="run a Galerkin study over these L values instead")
    p.add_argument("--out", required=True)

    p = sub.add_parser("imethod", help="commutator N-scan or almost-conservation run")
    _add_path_args(p, n=2**14)
    p.add_argument("--mode", choices=["scan", "run"], default="scan")
    p.add_argument("--alpha", type=float, default=-0.25)
    p.add_argument("--N-list", type=float_list, default="4,8,16,32")
    p.add_argument("--K", type=int, default=64)
    p.add_argument("--lam", type=float, default=0.0, help="0 = choose from epsilon0")
    p.add_argument("--samples", type=int, default=4)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--zero-data", type=boolean, default=False)
    p.add_argument("--epsilon0", type=float, default=0.1)
    p.add_argument("--windows", type=int, default=8)
    p.add_argument("--h", type=float, default=2.0**-6)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--gamma", type=float, default=0.55)
    p.add_argument("--out", required=True)

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    return parser


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _config() -> configparser.ConfigParser:
    cfg = configparser.ConfigParser(interpolation=None)
    cfg.optionxform = str  # keep option case (K, N-list)
    return cfg


def _load_config(parser, config_path: str, command: str) -> None:
    cfg = _config()
    if not cfg.read(config_path):
        raise UsageError(f"cannot read config {config_path}")
    if not cfg.has_section(command):
        return
    sp = _subparser(parser, command)
    known = {a.dest for a in sp._actions}
    values = {}
    for key, value in cfg.items(command):
        dest = key.replace("-", "_")
        if dest not in known:
            raise UsageError(f"unknown key {key!r} in [{command}] of {config_path}")
        values[dest] = value
    # string defaults go through each option's type converter
    sp.set_defaults(**values)
    for action in sp._actions:
        if action.dest in values and action.required:
            action.required = False


def _params(args: argparse.Namespace) -> dict:
    skip = {"threads", "config", "command", "out", "verbose"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def write_manifest(out: Path, command: str, params: dict, outputs: list[str]) -> None:
    cfg = _config()
    cfg["run"] = {"command": command, "version": __version__, "outputs": ",".join(sorted(outputs))}
    cfg[command] = {k.replace("_", "-"): _as_config_value(v) for k, v in params.items()}
    with open(out / "manifest.ini", "w") as fh:
        cfg.write(fh)


# ---------------------------------------------------------------- helpers


def _make_path(args) -> modpath.ModulationPath:
    if args.path_file:
        return fileio.read_path(args.path_file)
    if args.kind == "linear":
        return modpath.linear(args.slope, args.n, args.horizon)
    if args.kind == "constant":
        return modpath.constant(args.level, args.n, args.horizon)
    hurst = 0.5 if args.kind == "brownian" else args.hurst
    return modpath.sample_fbm(hurst, args.n, args.horizon, args.seed)


def _dyadic_times(T: float, levels: int = 2):
    return [(T * i / 2**lvl, T * (i + 1) / 2**lvl) for lvl in range(levels + 1) for i in range(2**lvl)]


# ---------------------------------------------------------------- commands


def cmd_path(args, out: Path) -> list[str]:
    path = _make_path(args)
    fileio.write_path(path, out / "path.csv")
    return ["path.csv"]


def cmd_irregularity(args, out: Path) -> list[str]:
    path = _make_path(args)
    a_grid = modpath.geometric_a_grid(args.a_min, args.a_max, args.points_per_decade)
    pairs = modpath.dyadic_pairs(path, args.depth)
    est = modpath.estimate_rho(path, args.gamma, a_grid, pairs)
    fileio.write_rows([{"a": float(a), "profile": float(m)} for a, m in zip(est.a_grid, est.profile)],
                      out / "profile.csv", ["a", "profile"])
    fileio.write_json(out / "report.json", {
        "gamma": est.gamma, "rho_hat": est.rho_hat, "seminorm": est.seminorm,
        "argmax": list(est.argmax), "pairs": est.pair_grid, "kind": path.kind,
    })
    print(f"rho_hat = {est.rho_hat:.6g}")
    return ["profile.csv", "report.json"]


def cmd_operator(args, out: Path) -> list[str]:
    path = _make_path(args)
    if args.mode == "oracle":
        from .oracle import quadrature_x

        op = ModulatedOperator(args.equation, path, args.K, lam=args.lam, threads=args.threads)
        rng = np.random.default_rng(args.data_seed)
        rows = []
        for case in range(args.cases):
            s, t = np.sort(rng.uniform(0.0, path.horizon, 2))
            fields = [random_field(args.lam, args.K, args.alpha, seed=args.data_seed * 1000 + 10 * case + i)
                      for i in range(op.arity)]
            got = x_apply(op, s, t, fields, truncate=False)
            ref = quadrature_x(args.equation, path, s, t, fields, panels=args.panels, order=args.order)
            err = sobolev_norm(got - ref) / max(sobolev_norm(ref), 1e-300)
            rows.append({"case": case, "s": float(s), "t": float(t), "rel_err": float(err)})
        fileio.write_rows(rows, out / "oracle.csv", ["case", "s", "t", "rel_err"])
        print(f"max relative error {max(r['rel_err'] for r in rows):.3e}")
        return ["oracle.csv"]
    if args.mode == "probe":
        rows = []
        summary = {}
        pairs = _dyadic_times(path.horizon)
        for K in args.K_list:
            op = ModulatedOperator(args.equation, path, K, lam=args.lam, threads=args.threads)
            res = operator_norm_probe(op, args.alpha, args.betas, args.samples, pairs,
                                      gamma=args.gamma, seed=args.data_seed)
            rows.extend(res["rows"])
            summary[str(K)] = res["summary"]
        fileio.write_rows(rows, out / "probe.csv",
                          ["K", "alpha", "beta", "s", "t", "ratio_max", "ratio_median"])
        fileio.write_json(out / "probe.json", {"summary": summary, "path_seed": args.seed,
                                               "gamma": args.gamma, "kind": path.kind})
        return ["probe.csv", "probe.json"]
    # truncation study: gap ||X^L - X|| / (t-s)^gamma at fixed fields
    op = ModulatedOperator(args.equation, path, args.K, lam=args.lam, threads=args.threads)
    fields = [random_field(args.lam, args.K, args.alpha, seed=args.data_seed + i) for i in range(op.arity)]
    rows = []
    for L in args.L_list:
        worst = 0.0
        for s, t in _dyadic_times(path.horizon):
            full = x_apply(op, s, t, fields)
            gap = sobolev_norm(full - x_truncated(op, L, s, t, fields)) / (t - s) ** args.gamma
            worst = max(worst, gap)
        rows.append({"L": L, "gap": float(worst)})
    fileio.write_rows(rows, out / "truncation.csv", ["L", "gap"])
    return ["truncation.csv"]


def cmd_solve(args, out: Path) -> list[str]:
    from .young import galerkin_convergence_study, solve_global, solve_windows

    path = _make_path(args)
    op = ModulatedOperator(args.equation, path, args.K, threads=args.threads)
    if args.zero_data:
        psi0 = random_field(1.0, args.K, args.alpha, seed=args.data_seed) * 0.0
    else:
        psi0 = random_field(1.0, args.K, args.alpha, seed=args.data_seed, norm=args.norm)
    if args.galerkin:
        rows = galerkin_convergence_study(op, psi0, args.T, args.galerkin, tol=args.tol,
                                          h=args.h, gamma=args.gamma)
        fileio.write_rows(rows, out / "galerkin.csv", ["L", "gap_c0", "gap_c_half"])
        return ["galerkin.csv"]
    X = op.increment()
    if args.equation == "kdv":
        trace = solve_global(X, psi0, args.T, tol=args.tol, h=args.h, gamma=args.gamma)
    else:
        trace = solve_windows(X, psi0, args.T, tol=args.tol, h=args.h, gamma=args.gamma)
    snaps = fileio.write_trace(trace, out / "trace.csv", args.snapshots, out)
    fileio.write_json(out / "summary.json", {
        "max_drift": trace.max_drift(), "holder_half": trace.holder(0.5),
        "windows": len(trace.windows), "steps": int(trace.times.size - 1),
        "sobolev_alpha_max": float(trace.sobolev(args.alpha).max()) if not args.zero_data else 0.0,
    })
    print(f"max L2 drift {trace.max_drift():.3e}")
    return ["trace.csv", "summary.json", *snaps]


def cmd_imethod(args, out: Path) -> list[str]:
    from .imethod import (AlmostConservationConfig, almost_conservation_run,
                          commutator_scan, mean_window_increment)

    if args.mode == "scan":
        path = _make_path(args)
        op = ModulatedOperator("kdv", path, args.K, lam=max(args.lam, 1.0), threads=args.threads)
        res = commutator_scan(op, args.alpha, args.N_list, samples=args.samples,
                              seed=args.data_seed, gamma=args.gamma)
        fileio.write_rows(res["rows"], out / "scan.csv", ["N", "median", "max"])
        fileio.write_json(out / "report.json", {"alpha": args.alpha, "K": args.K,
                                                "slope_fit": res["slope"], "rows": res["rows"]})
        print(f"commutator slope {res['slope']:.4f}")
        return ["scan.csv", "report.json"]
    names = []
    increments = []
    reports = []
    for N in args.N_list:
        cfg = AlmostConservationConfig(
            alpha=args.alpha, N=N, K=args.K, epsilon0=args.epsilon0, windows=args.windows,
            h=args.h, tol=args.tol, gamma=args.gamma, path_n=args.n, path_seed=args.seed,
            data_seed=args.data_seed, zero_data=args.zero_data,
            lam=args.lam if args.lam > 0 else None, threads=args.threads,
        )
        reports.append(almost_conservation_run(cfg))
        increments.append(mean_window_increment(reports[-1]))
    slope = float("nan")
    if len(args.N_list) > 1 and all(i > 0 for i in increments):
        slope = float(np.polyfit(np.log2(args.N_list), np.log2(increments), 1)[0])
    ok = True
    for N, rep in zip(args.N_list, reports):
        rep["slope_fit"] = slope
        name = f"report_N{fileio.fmt(N)}.json"
        fileio.write_json(out / name, rep)
        names.append(name)
        ok = ok and rep["ok"]
        if not rep["ok"]:
            print(f"N={N}: modified energy bound violated in window {rep['failed_window']}")
    fileio.write_json(out / "summary.json", {"N": args.N_list, "mean_increment": increments,
                                             "slope_fit": slope, "ok": ok})
    return [*names, "summary.json"]


COMMANDS = {
    "path": cmd_path,
    "irregularity": cmd_irregularity,
    "operator": cmd_operator,
    "solve": cmd_solve,
    "imethod": cmd_imethod,
}


def run(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        pre, _ = parser.parse_known_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if pre.command == "replay":
            cfg = _config()
            if not cfg.read(pre.manifest):
                raise UsageError(f"cannot read manifest {pre.manifest}")
            command = cfg.get("run", "command")
            _load_config(parser, pre.manifest, command)
            head = ["--threads", str(pre.threads)] if pre.threads is not None else []
            args = parser.parse_args(head + [command, "--out", pre.out])
        else:
            if pre.config:
                _load_config(parser, pre.config, pre.command)
            args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"modisperse: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        outputs = COMMANDS[args.command](args, out)
    except NUMERICAL_FAILURES as exc:
        print(f"modisperse: numerical failure: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"modisperse: error: {exc}", file=sys.stderr)
        return 2
    write_manifest(out, args.command, _params(args), outputs)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
