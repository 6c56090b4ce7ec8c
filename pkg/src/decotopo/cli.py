"""``decotopo`` command line: single-engine runs and configured grid scans."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .scan import (ConfigError, ScanConfig, emit_report, load_config, presets, run_scan,
                   scan_to_reports, expand_tasks)

log = logging.getLogger("decotopo")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML scan configuration")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.add_argument("--seed", type=int, help="unsigned 64-bit seed")
    p.add_argument("--resume", action="store_true", help="skip tasks already journaled")


def _point_args(p: argparse.ArgumentParser, engine: str) -> None:
    p.add_argument("--family", default="selfdual-at",
                   choices=["selfdual-at", "general-at", "coupled", "nflavor"])
    p.add_argument("--p", type=float, nargs="+", default=None)
    p.add_argument("--h", type=float, nargs="+")
    p.add_argument("--theta", type=float, nargs="+")
    p.add_argument("--n", type=int, nargs="+")
    p.add_argument("--observables", nargs="*", default=[])
    p.add_argument("--r", type=int, nargs="+")
    if engine == "exact":
        p.add_argument("--Lx", type=int, nargs="+")
    if engine in ("imps", "fes"):
        p.add_argument("--chi", type=int, nargs="+")
        p.add_argument("--window", type=int, nargs=2)
    if engine == "mc":
        p.add_argument("--Lx", type=int, default=8)
        p.add_argument("--Ly", type=int, default=8)
        p.add_argument("--sweeps", type=int, default=20000)
        p.add_argument("--thermalization", type=int, default=2000)
        p.add_argument("--chains", type=int, default=8)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="decotopo", description=__doc__)
    ap.add_argument("--version", action="version", version=f"decotopo {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("couplings", help="print the classical couplings of a channel")
    c.add_argument("--p", type=float, required=True)
    c.add_argument("--theta", type=float, default=math.pi / 4)
    c.add_argument("--h", type=float, default=None)

    v = sub.add_parser("verify-channel", help="run the channel-algebra checks")
    v.add_argument("--p", type=float, nargs="+")
    v.add_argument("--theta", type=float, default=math.pi / 4)
    v.add_argument("--out", type=Path)

    for name in ("exact", "imps", "mc", "fes"):
        s = sub.add_parser(name, help=f"run the {name} engine on a parameter grid")
        _common(s)
        _point_args(s, name)

    s = sub.add_parser("scan", help="run a configured or preset grid scan")
    _common(s)
    s.add_argument("--preset", choices=sorted(presets()))
    s.add_argument("--dry-run", action="store_true", help="validate and list tasks only")
    return ap


def _point_config(args, engine: str) -> ScanConfig:
    if args.config is not None:
        cfg = load_config(args.config)
        raw = cfg.to_dict()
    else:
        if args.p is None:
            raise ConfigError("--p is required without --config", "p")
        raw = {"family": args.family, "p": args.p, "name": engine}
    for key in ("h", "theta", "n", "r", "Lx", "chi"):
        val = getattr(args, key, None)
        if val is not None and not (engine == "mc" and key == "Lx"):
            raw[key] = val
    if args.observables:
        raw["observables"] = args.observables
    raw["engine"] = "imps" if engine == "fes" else engine
    if engine == "fes" and "chi" not in raw:
        raw["chi"] = [8, 12, 16, 24, 32, 48]
    if getattr(args, "window", None):
        raw["imps"] = {**raw.get("imps", {}), "window": list(args.window)}
    if engine == "mc":
        raw["mc"] = {**raw.get("mc", {}), "Lx": args.Lx, "Ly": args.Ly, "sweeps": args.sweeps,
                     "thermalization": args.thermalization, "chains": args.chains}
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["output"] = {**raw.get("output", {}), "dir": str(args.out)}
    return ScanConfig.from_dict(raw)


def _print_rows(rows, stream=None) -> None:
    from .scan import fmt_number, report_columns, _flatten, _csv_field

    stream = sys.stdout if stream is None else stream
    cols = report_columns(rows)
    stream.write(",".join(cols) + "\n")
    for r in rows:
        stream.write(",".join(_csv_field(fmt_number(v)) for v in _flatten(r, cols)) + "\n")


def _run_configs(cfgs, args) -> int:
    for cfg in cfgs:
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        if getattr(args, "dry_run", False):
            for t in expand_tasks(cfg):
                print(t.key)
            continue
        if args.out is not None or args.config is not None or args.command == "scan":
            paths = scan_to_reports(cfg, args.out, args.workers, args.resume)
            for fmt, path in paths.items():
                print(f"{fmt}: {path}")
        else:
            import tempfile

            with tempfile.TemporaryDirectory() as tmp:
                rows = list(run_scan(cfg, tmp, args.workers, False))
            _print_rows(rows)
    return 0


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "couplings":
            return _cmd_couplings(args)
        if args.command == "verify-channel":
            return _cmd_verify(args)
        if args.command == "scan":
            if args.preset and args.config:
                raise ConfigError("use either --preset or --config")
            if args.preset:
                cfgs = presets()[args.preset]
            elif args.config:
                cfgs = [load_config(args.config)]
            else:
                raise ConfigError("scan needs --config or --preset")
            return _run_configs(cfgs, args)
        return _run_configs([_point_config(args, args.command)], args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _cmd_couplings(args) -> int:
    from .couplings import (chamon_couplings, general_couplings, perturbed_params,
                            selfdual_couplings, selfduality_residual)

    out = {"p": args.p, "theta": args.theta}
    sd = selfdual_couplings(args.p)
    out["selfdual"] = {"K": sd.K, "K4": sd.K4, "residual": selfduality_residual(sd)}
    gc = general_couplings(args.p, args.theta)
    out["general"] = {"K": gc.K, "K4": gc.K4}
    if args.h is not None:
        pp = perturbed_params(args.h, args.p)
        out["perturbed"] = {"h": args.h, "h_prime": pp.h_prime, "f": pp.f, "lambda": pp.lam}
        K, K4 = chamon_couplings(args.h, args.p)
        out["phase_flip"] = {"K": K, "K4": K4}
    print(json.dumps(out, indent=2, default=lambda x: str(x)).replace("Infinity", '"inf"'))
    return 0


def _cmd_verify(args) -> int:
    from .channels import channel_report

    rows = channel_report(args.p, args.theta)
    text = json.dumps(rows, indent=2)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "channel_report.json").write_text(text + "\n")
    print(text)
    return 0 if all(r["pass"] for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
