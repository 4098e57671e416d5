"""Command-line entry point: `ladderwalk <experiment> [options]`.

Exit status is 0 when every verdict passes, 2 when any fails and 3 when
nothing failed but some verdict is inconclusive.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import experiments as ex
from .stable import StableParams
from .steps import get_model

DEFAULT_MODELS = {
    "llt-normal": "simple_rw",
    "llt-small": "simple_rw",
    "tau-local": "lazy_rw",
    "q-oscillation": "shifted",
    "identity": "pareto:1.5",
    "meander": None,
    "factorization": "simple_rw",
}
DEFAULT_N = {
    "llt-normal": "1024,2048,4096",
    "llt-small": "1024,2048,4096",
    "tau-local": "512",
    "q-oscillation": "256",
    "identity": "32,64,128",
    "meander": None,
    "factorization": "200",
}


def parse_n_list(text: str) -> list[int]:
    """Comma-separated integers; `2^k` is accepted as shorthand."""
    out = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        if "^" in token:
            base, exp = token.split("^", 1)
            out.append(int(base) ** int(exp))
        else:
            out.append(int(token))
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError("need positive integers")
    return out


def _common(p: argparse.ArgumentParser, name: str) -> None:
    p.add_argument("--model", default=DEFAULT_MODELS[name], help="registry name (name:args) or model file path")
    p.add_argument("--n", type=parse_n_list, default=parse_n_list(DEFAULT_N[name]) if DEFAULT_N[name] else None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, default=None, help="directory for the report")
    p.add_argument("--format", choices=("csv", "json"), default="json")
    p.add_argument("--tol-profile", choices=("default", "strict"), default="default")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ladderwalk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in DEFAULT_MODELS:
        p = sub.add_parser(name)
        _common(p, name)
        if name in ("identity", "llt-normal", "llt-small", "meander"):
            p.add_argument("--accepted", type=int, default=None, help="accepted Monte Carlo samples per n")
        if name == "llt-small":
            p.add_argument("--window-exp", type=float, default=None)
        if name == "meander":
            p.add_argument("--alpha", type=float, default=None)
            p.add_argument("--beta", type=float, default=0.0)
    rep = sub.add_parser("report", help="aggregate JSON reports into one summary table")
    rep.add_argument("paths", nargs="+", type=Path)
    rep.add_argument("--out", type=Path, default=None)
    rep.add_argument("--format", choices=("csv", "json"), default="json")
    return parser


def _mc_kwargs(args) -> dict:
    kw = {"seed": args.seed, "workers": args.workers}
    if getattr(args, "accepted", None):
        kw["target_accepted"] = args.accepted
    return kw


def run_experiment(args) -> ex.ExperimentReport:
    cmd, profile = args.command, args.tol_profile
    if cmd == "meander":
        if args.alpha is not None:
            target = StableParams.canonical(args.alpha, args.beta)
            return ex.check_meander(target, profile)
        model = get_model(args.model or "simple_rw")
        n = args.n[-1] if args.n else None
        return ex.check_meander(model, profile, n=n, **_mc_kwargs(args))
    model = get_model(args.model)
    if cmd == "llt-normal":
        return ex.check_llt_normal(model, args.n, profile, **_mc_kwargs(args))
    if cmd == "llt-small":
        return ex.check_llt_small(model, args.n, args.window_exp, profile, **_mc_kwargs(args))
    if cmd == "tau-local":
        return ex.check_tau_local(model, args.n[-1], profile)
    if cmd == "q-oscillation":
        return ex.check_q_oscillation(model, args.n[-1], profile)
    if cmd == "identity":
        return ex.check_identity(model, args.n, profile, **_mc_kwargs(args))
    if cmd == "factorization":
        return ex.check_factorization(model, args.n[-1], profile)
    raise ValueError(f"unknown command {cmd}")


def _collect(paths: list[Path]) -> list[ex.ExperimentReport]:
    files: list[Path] = []
    for p in paths:
        files.extend(sorted(p.glob("*.json")) if p.is_dir() else [p])
    reports = []
    for f in files:
        try:
            data = json.loads(f.read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise SystemExit(f"cannot read report {f}: {err}")
        if "experiment" in data and "verdict" in data:
            reports.append(ex.ExperimentReport(**data))
    return reports


def _print_table(rows: list[dict]) -> None:
    if not rows:
        print("no reports")
        return
    w_exp = max(len("experiment"), *(len(r["experiment"]) for r in rows))
    w_mod = max(len("model"), *(len(r["model"]) for r in rows))
    print(f"{'experiment':<{w_exp}}  {'model':<{w_mod}}  verdict")
    for r in rows:
        print(f"{r['experiment']:<{w_exp}}  {r['model']:<{w_mod}}  {r['verdict']}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "report":
        reports = _collect(args.paths)
        table = ex.summarize(reports)
        _print_table(table)
        if args.out:
            args.out.mkdir(parents=True, exist_ok=True)
            if args.format == "json":
                (args.out / "summary.json").write_text(
                    json.dumps({"schema_version": ex.SCHEMA_VERSION, "reports": table}, indent=2))
            else:
                with open(args.out / "summary.csv", "w") as fh:
                    fh.write("experiment,model,verdict\n")
                    for r in table:
                        fh.write(f"{r['experiment']},{r['model']},{r['verdict']}\n")
        return ex.exit_code(r["verdict"] for r in table)
    try:
        report = run_experiment(args)
    except (KeyError, ValueError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    if args.out:
        path = report.write(args.out, args.format)
        print(f"wrote {path}")
    print(f"{report.experiment} {report.model}: {report.verdict}")
    return ex.exit_code([report.verdict])


if __name__ == "__main__":
    sys.exit(main())
