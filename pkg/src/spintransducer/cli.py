"""Command-line interface: ``spintransducer <subcommand> ...``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
Result files are written atomically; a one-line summary goes to stdout and
diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import analytics
from .config import ConfigError, RunConfig, apply_overrides, dump_config, load_config
from .control import impedance_matched_cos_theta
from .integrator import IntegrationError
from .model import PhysicalParams, cooperativity
from .presets import PRESETS, get_preset
from .scan import (ProtocolError, compare_protocols, default_workers, output_name, run_protocol,
                   run_scan, SCAN_AXES)

log = logging.getLogger("spintransducer")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def parse_grid(text: str):
    """``name:start:stop:n`` → (name, values)."""
    parts = text.split(":")
    if len(parts) != 4:
        raise ConfigError(f"--grid expects name:start:stop:n, got {text!r}")
    name, a, b, n = parts
    if name not in SCAN_AXES:
        raise ConfigError(f"unknown scan parameter {name!r}; supported: {', '.join(SCAN_AXES)}")
    try:
        a, b, n = float(a), float(b), int(n)
    except ValueError:
        raise ConfigError(f"--grid {text!r}: start/stop must be numbers and n an integer") from None
    if n < 1:
        raise ConfigError("--grid needs n >= 1")
    return name, np.linspace(a, b, n)


def _resolve(args) -> tuple[RunConfig, str]:
    if args.config and args.preset:
        raise ConfigError("give either --preset or --config, not both")
    if args.config:
        cfg = load_config(args.config)
        label = Path(args.config).stem
    elif args.preset:
        try:
            cfg = RunConfig(get_preset(args.preset).run)
        except KeyError as e:
            raise ConfigError(e.args[0]) from None
        label = args.preset
    else:
        raise ConfigError("a run needs --preset NAME or --config FILE")
    if args.set:
        cfg = apply_overrides(cfg, args.set)
    if args.rel_tol is not None:
        if not args.rel_tol > 0:
            raise ConfigError("--rel-tol must be positive")
        cfg = replace(cfg, integrator=replace(cfg.integrator, rel_tol=args.rel_tol))
    return cfg, label


def _summary_doc(cfg: RunConfig, stats) -> dict:
    return {"units": "G", "stats": stats.as_dict(), "config": json.loads(json.dumps(
        {"run": cfg.run.to_dict(), "integrator": asdict(cfg.integrator)}, default=str))}


def cmd_run(args) -> int:
    cfg, label = _resolve(args)
    t0 = time.perf_counter()
    traj, st = run_protocol(cfg.run, cfg.integrator)
    wall = time.perf_counter() - t0
    out = Path(args.out)
    stem = output_name(label, cfg.run, "").rstrip(".")
    write_atomic(out / f"{stem}.csv", traj.to_csv())
    write_atomic(out / f"{stem}.json", json.dumps(_summary_doc(cfg, st), indent=1, sort_keys=True) + "\n")
    write_atomic(out / f"{stem}.yaml", dump_config(cfg))
    parts = [f"run={label}", f"mean={st.mean:.6f}", f"min={st.min:.6f}", f"max={st.max:.6f}",
             f"final={st.final:.6f}"]
    if st.at_eval is not None:
        parts.append(f"at_eval={st.at_eval:.6f}")
    if st.stored is not None:
        parts.append(f"stored={st.stored:.6f}")
    parts += [f"T_tot={st.t_total:.4g}/G", f"wall={wall:.2f}s"]
    print(" ".join(parts))
    return EXIT_OK


def cmd_scan(args) -> int:
    cfg, label = _resolve(args)
    if not args.grid or len(args.grid) > 2:
        raise ConfigError("scan needs one or two --grid name:start:stop:n options")
    axes = [parse_grid(g) for g in args.grid]
    if len(axes) == 1:
        axes.append(("T", np.array([cfg.run.protocol.T])) if axes[0][0] != "T"
                    else ("kappa_coll", np.array([cfg.run.params.kappa_coll])))
    workers = args.workers or default_workers()

    def progress(k, n):
        print(f"cell {k}/{n}", file=sys.stderr)

    t0 = time.perf_counter()
    res = run_scan(cfg.run, axes[0], axes[1], cfg.integrator, workers=workers, progress=progress)
    wall = time.perf_counter() - t0
    res.metadata["integrator"] = json.loads(json.dumps(res.metadata["integrator"], default=str))
    out = Path(args.out)
    stem = f"scan-{label}-{res.metadata['config_hash']}"
    write_atomic(out / f"{stem}.csv", res.to_csv())
    write_atomic(out / f"{stem}.json", res.to_json() + "\n")
    print(f"scan={label} cells={res.fidelity_mean.size} best_mean={np.max(res.fidelity_mean):.6f} "
          f"area_above_0.9={res.area_above(0.9):.3f} wall={wall:.2f}s")
    return EXIT_OK


def cmd_compare(args) -> int:
    t0 = time.perf_counter()
    rows = compare_protocols(args.coupling_ratio, args.target)
    wall = time.perf_counter() - t0
    buf = io.StringIO()
    buf.write("# times in units of 1/G\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["protocol", "T", "mean", "min", "max", "reachable"])
    fmt = lambda v: "" if v is None else f"{v:.12g}"  # noqa: E731
    for r in rows:
        w.writerow([r.protocol, fmt(r.T), fmt(r.mean), fmt(r.min), fmt(r.max), int(r.reachable)])
    name = f"compare-k{args.coupling_ratio:g}-f{args.target:g}.csv"
    write_atomic(Path(args.out) / name, buf.getvalue())
    print(" ".join(f"{r.protocol}:T={fmt(r.T) or 'unreachable'}" for r in rows) + f" wall={wall:.2f}s")
    return EXIT_OK


def cmd_eit_design(args) -> int:
    T = args.T
    gT = args.gamma_co_T
    gamma = gT / T
    try:
        impedance_matched_cos_theta(0.0, T, gamma)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    span = args.span * T
    t = np.linspace(-span, span, args.n)
    c = impedance_matched_cos_theta(t, T, gamma)
    om = args.g_coll * c / np.sqrt(1.0 - c * c)
    buf = io.StringIO()
    buf.write(f"# impedance-matched control, gamma_co*T={gT:g}, T={T:g}/G, g_coll={args.g_coll:g}G; "
              "time in units of 1/G, frequencies in units of G\n")
    buf.write("t,cos_theta,omega0\n")
    for row in zip(t, c, om):
        buf.write(",".join(f"{v:.12g}" for v in row) + "\n")
    name = f"eit-design-gT{gT:g}-T{T:g}.csv"
    write_atomic(Path(args.out) / name, buf.getvalue())
    print(f"eit-design gamma_co_T={gT:g} cos_theta(-inf)={2 / math.sqrt(gT):.6f} "
          f"cos_theta(t0)={c[0]:.6f} omega0_max={om.max():.6g}")
    return EXIT_OK


def cmd_analytic(args) -> int:
    G, k = args.G, args.kappa
    what = args.quantity
    if what == "pi-pulse":
        om = analytics.rabi_frequency(G, k)
        t = args.t if args.t is not None else math.pi / om
        q = complex(analytics.pi_pulse_q(t, G, k))
        res = {"t": t, "q_real": q.real, "q_imag": q.imag, "population": abs(q) ** 2}
    elif what == "mismatch":
        res = {"bound": analytics.mismatch_bound(G, k)}
    elif what == "eigs":
        e = analytics.eigs_full(args.delta_Q, args.Delta_c, G, k)
        res = {"eigenvalues": e.eigenvalues.tolist()}
        if args.Delta_c != 0:
            res["reduced"] = list(analytics.eigs_reduced(args.delta_Q, args.Delta_c, G, k))
    elif what == "cooperativity":
        p = PhysicalParams(g_ab=args.g_ab, n_spins_effective=args.n_spins, gamma_co=args.gamma_co,
                           gamma_a=args.gamma_a)
        C = cooperativity(p)
        res = {"C": C, "eta_eit": analytics.eit_max_efficiency(C)}
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown analytic quantity {what!r}")
    text = json.dumps(res, sort_keys=True)
    if args.out:
        write_atomic(Path(args.out) / f"analytic-{what}.json", text + "\n")
    print(f"{what} " + " ".join(f"{k}={v}" for k, v in res.items()))
    return EXIT_OK


def cmd_presets(args) -> int:
    for name, p in PRESETS.items():
        print(f"{name}\t{p.figure}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spintransducer",
                                 description="Optical-to-microwave single-photon transducer simulator")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_default="out"):
        p.add_argument("--preset", help="named preset (see the presets subcommand)")
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override, e.g. ensemble.n_classes=300 (repeatable)")
        p.add_argument("--out", default=out_default, help="output directory")
        p.add_argument("--rel-tol", type=float, default=None, help="integrator relative tolerance")

    p = sub.add_parser("run", help="integrate one protocol and write its trajectory")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("scan", help="2-D fidelity scan")
    common(p)
    p.add_argument("--grid", action="append", default=[], metavar="NAME:START:STOP:N",
                   help=f"scan axis ({', '.join(SCAN_AXES)}); give once or twice")
    p.add_argument("--workers", type=int, default=0, help="worker processes (default: all cores)")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("compare", help="minimal transfer time per protocol for a target fidelity")
    p.add_argument("--coupling-ratio", type=float, default=1.0, help="kappa_coll / G")
    p.add_argument("--target", type=float, default=0.99)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("eit-design", help="tabulate the impedance-matched control pulse")
    p.add_argument("--gamma-co-T", type=float, required=True, help="gamma_co times photon duration (> 4)")
    p.add_argument("--T", type=float, default=1.0, help="photon duration in 1/G")
    p.add_argument("--g-coll", type=float, default=1.0, help="collective optical coupling in G")
    p.add_argument("--span", type=float, default=10.0, help="half-width of the table in units of T")
    p.add_argument("--n", type=int, default=2001)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_eit_design)

    p = sub.add_parser("analytic", help="closed-form quantities")
    p.add_argument("quantity", choices=["pi-pulse", "mismatch", "eigs", "cooperativity"])
    p.add_argument("--G", type=float, default=1.0)
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--delta-Q", type=float, default=0.0)
    p.add_argument("--Delta-c", type=float, default=0.0)
    p.add_argument("--g-ab", type=float, default=1.0)
    p.add_argument("--n-spins", type=float, default=1.0)
    p.add_argument("--gamma-co", type=float, default=1.0)
    p.add_argument("--gamma-a", type=float, default=1.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("presets", help="list named presets")
    p.set_defaults(func=cmd_presets)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors; usage errors are configuration errors here
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ProtocolError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FloatingPointError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
