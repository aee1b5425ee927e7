"""Command-line entry point.

Subcommands: validate | layout | mc-run | analyze | decode-bench.
Configuration comes from a JSON file plus flag overrides (flags win); every
stochastic command requires a seed.  Exit codes: 0 success, 1 check/bracket
failure, 2 usage error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from . import analysis, decoder, ptmc, storage, validate
from .errors import UnbracketedThresholdError
from .lattice import build_layout, layout_text

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _load_config(args) -> dict:
    cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise SystemExit(f"cannot read config: {exc}")
        except json.JSONDecodeError as exc:
            print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
            raise SystemExit(EXIT_USAGE)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "out", None):
        cfg["out"] = args.out
    if getattr(args, "threads", None):
        cfg["threads"] = args.threads
    return cfg


def _require(cfg: dict, *keys):
    missing = [k for k in keys if k not in cfg]
    if missing:
        print(f"error: config is missing {missing}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _mc_meta(cfg: dict) -> dict:
    return {"config_hash": storage.config_hash(cfg), "seed": cfg["seed"],
            "package_format": storage.SERIES_FORMAT}


def cmd_validate(args) -> int:
    checks = validate.run_all(fast=not args.thorough)
    failed = []
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        if not ok:
            failed.append(name)
    if failed:
        print(f"failed checks: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_layout(args) -> int:
    text = layout_text(build_layout(args.distance))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, f"layout_d{args.distance}.txt")
        with open(path, "w") as fh:
            fh.write(text)
        print(path)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _series_path(out: str, model: str, p: float, L: int) -> str:
    return os.path.join(out, "raw", f"{model}_p{p:g}_L{L}.csv")


def cmd_mc_run(args) -> int:
    cfg = _load_config(args)
    _require(cfg, "seed", "out", "p_grid", "sizes", "t_min", "t_max", "n_t",
             "protocol")
    model = cfg.get("model", "cell")
    proto_cfg = dict(cfg["protocol"])
    protocol = ptmc.RunProtocol(**proto_cfg)
    temps = ptmc.make_ladder(cfg["t_min"], cfg["t_max"], cfg["n_t"])
    out = cfg["out"]
    meta = _mc_meta(cfg)
    work = [(float(p), int(L)) for p in cfg["p_grid"] for L in cfg["sizes"]]

    if args.dry_run:
        for p, L in work:
            print(f"would run: model={model} p={p:g} L={L} "
                  f"N_sa={protocol.n_samples} N_T={len(temps)} "
                  f"-> {_series_path(out, model, p, L)}")
        return EXIT_OK

    os.makedirs(os.path.join(out, "raw"), exist_ok=True)
    manifest = {"config": cfg, "config_hash": meta["config_hash"],
                "series_format": storage.SERIES_FORMAT,
                "checkpoint_format": ptmc.CHECKPOINT_FORMAT,
                "protocol": asdict(protocol)}
    storage.write_json_record(os.path.join(out, "raw", "manifest.json"), manifest)

    workers = int(cfg.get("threads", 1))
    for p, L in work:
        path = _series_path(out, model, p, L)
        if args.resume and os.path.exists(path):
            old_meta, _ = storage.read_series(path)
            if old_meta.get("config_hash") == meta["config_hash"]:
                print(f"skip (complete): {path}")
                continue
        ck_dir = os.path.join(out, "checkpoints") if args.resume else None
        try:
            results = ptmc.run_disorder_ensemble(
                model, p, L, temps, protocol, cfg["seed"], workers=workers,
                checkpoint_dir=ck_dir,
                progress=(lambda done, tot: print(
                    f"  p={p:g} L={L}: {done}/{tot} samples", flush=True))
                if args.verbose else None,
            )
        except OSError as exc:
            print(f"I/O error at p={p:g} L={L}: {exc}", file=sys.stderr)
            return EXIT_IO
        storage.write_series(path, results, meta)
        acc_min = min(r.exch_acc_min for r in results)
        if not 0.05 < acc_min < 0.95:
            print(f"warning: exchange acceptance {acc_min:.3f} outside (0.05, 0.95) "
                  f"at p={p:g} L={L}; consider a denser ladder", file=sys.stderr)
        print(f"wrote {path}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _load_config(args)
    _require(cfg, "seed", "out", "p_grid", "sizes")
    model = cfg.get("model", "cell")
    out = cfg["out"]
    meta = _mc_meta(cfg)
    n_boot = int(cfg.get("n_boot", 1000))

    missing = [(p, L) for p in cfg["p_grid"] for L in cfg["sizes"]
               if not os.path.exists(_series_path(out, model, p, L))]
    if missing:
        print("error: missing raw series for "
              + ", ".join(f"(p={p:g}, L={L})" for p, L in missing),
              file=sys.stderr)
        return EXIT_IO

    results = []
    insufficient = False
    for p in cfg["p_grid"]:
        series_list = []
        for L in cfg["sizes"]:
            _, cols = storage.read_series(_series_path(out, model, p, L))
            series_list.append(analysis.ObservableSeries.from_columns(
                float(p), int(L), cols))
        curves = analysis.xi_curves(series_list, n_boot=n_boot,
                                    seed=int(cfg["seed"]))
        rows = analysis.xi_table_rows(float(p), curves)
        storage.write_table(
            os.path.join(out, "analysis", f"xi_{model}_p{p:g}.csv"),
            ["p", "L", "T", "xi_over_L", "err", "chi0", "chik", "n_samples"],
            rows, meta)
        res = analysis.find_crossing(curves, p=float(p))
        results.append(res)
        if res.verdict == analysis.INCONCLUSIVE and len(cfg["sizes"]) < 2:
            insufficient = True
        print(f"p={p:g}: {res.verdict}"
              + (f" (T_c = {res.t_c:.4f} +- {res.t_c_err:.4f})"
                 if res.verdict == analysis.CROSSING else "")
              + (f" [{res.note}]" if res.note else ""))

    record = {
        "config_hash": meta["config_hash"], "seed": cfg["seed"],
        "model": model,
        "verdicts": {repr(float(r.p)): r.verdict for r in results},
        "crossings": {repr(float(r.p)): {"t_c": r.t_c, "t_c_err": r.t_c_err}
                      for r in results if r.verdict == analysis.CROSSING},
    }
    status = EXIT_OK
    try:
        est = analysis.threshold_scan(results)
        record["p_c"] = est.p_c
        record["p_c_err"] = est.err
        record["bracket"] = list(est.bracket)
        record["grid"] = est.grid
        print(f"threshold: p_c = {est.p_c:g} +- {est.err:g} "
              f"(bracket {est.bracket[0]:g}..{est.bracket[1]:g})")
    except UnbracketedThresholdError as exc:
        record["error"] = str(exc)
        print(f"threshold not bracketed: {exc}", file=sys.stderr)
        status = EXIT_CHECK
    storage.write_json_record(
        os.path.join(out, "analysis", f"threshold_{model}.json"), record)
    return EXIT_CHECK if insufficient else status


def _bench_point(job):
    d, p, mode, trials, seed = job
    return decoder.logical_error_rate(d, p, mode, trials, seed)


def cmd_decode_bench(args) -> int:
    cfg = _load_config(args)
    _require(cfg, "seed", "out", "p_grid", "sizes", "trials")
    modes = cfg.get("modes", [decoder.MODE_IID, decoder.MODE_CORRELATED])
    trials = int(cfg["trials"])
    if trials <= 0:
        print("error: trials must be positive", file=sys.stderr)
        return EXIT_USAGE
    out = cfg["out"]
    meta = _mc_meta(cfg)
    jobs = []
    for mi, mode in enumerate(modes):
        for d in cfg["sizes"]:
            for i, p in enumerate(cfg["p_grid"]):
                seed = (int(cfg["seed"]) * 1000003 + mi * 100019
                        + int(d) * 1009 + i)
                jobs.append((int(d), float(p), mode, trials, seed))
    if args.dry_run:
        for j in jobs:
            print(f"would run: d={j[0]} p={j[1]:g} mode={j[2]} trials={j[3]}")
        return EXIT_OK

    workers = int(cfg.get("threads", 1))
    if workers > 1:
        from multiprocessing import get_context

        with get_context("spawn").Pool(workers) as pool:
            estimates = pool.map(_bench_point, jobs, chunksize=1)
    else:
        estimates = [_bench_point(j) for j in jobs]

    rows = [(e.d, e.p, e.mode, e.trials, e.failures, e.discards,
             e.rate, e.ci_low, e.ci_high) for e in estimates]
    storage.write_table(
        os.path.join(out, "bench", "decoder_rates.csv"),
        ["d", "p", "mode", "trials", "failures", "discards", "rate",
         "ci_low", "ci_high"], rows, meta)

    record = {"config_hash": meta["config_hash"], "seed": cfg["seed"],
              "trials": trials}
    status = EXIT_OK
    for mode in modes:
        by_d = {}
        for d in cfg["sizes"]:
            ps = np.array([e.p for e in estimates if e.mode == mode and e.d == d])
            rs = np.array([e.rate for e in estimates if e.mode == mode and e.d == d])
            order = np.argsort(ps)
            by_d[int(d)] = (ps[order], rs[order])
        try:
            p_th, spread, crossings = decoder.estimate_decoder_threshold(by_d)
            record[mode] = {"p_th": p_th, "spread": spread,
                            "pair_crossings": [
                                {"sizes": list(sz), "p": c} for sz, c in crossings]}
            print(f"{mode}: threshold ~ {p_th:.4f} (pair spread {spread:.4f})")
        except UnbracketedThresholdError as exc:
            record[mode] = {"error": str(exc)}
            print(f"{mode}: threshold not bracketed: {exc}", file=sys.stderr)
            status = EXIT_CHECK
    storage.write_json_record(os.path.join(out, "bench", "thresholds.json"), record)
    return status


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="sqoct",
        description="surface-code thresholds under correlated dephasing: "
                    "statmech mapping, PT Monte Carlo, FSS analysis and "
                    "matching-decoder benchmarks")
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("--threads", type=int, help="worker processes")
    common.add_argument("--resume", action="store_true",
                        help="reuse checkpoints and completed series")
    common.add_argument("--dry-run", action="store_true",
                        help="print planned work, write nothing")
    common.add_argument("--verbose", action="store_true")

    p_val = sub.add_parser("validate", parents=[common],
                           help="run the exact oracle suite")
    p_val.add_argument("--thorough", action="store_true",
                       help="full 1e7-sweep sampler checks")
    p_val.set_defaults(func=cmd_validate)

    p_lay = sub.add_parser("layout", parents=[common],
                           help="print or export a code layout")
    p_lay.add_argument("--distance", type=int, required=True)
    p_lay.set_defaults(func=cmd_layout)

    p_mc = sub.add_parser("mc-run", parents=[common],
                          help="parallel-tempering threshold runs")
    p_mc.set_defaults(func=cmd_mc_run)

    p_an = sub.add_parser("analyze", parents=[common],
                          help="xi/L curves, crossings and threshold scan")
    p_an.set_defaults(func=cmd_analyze)

    p_db = sub.add_parser("decode-bench", parents=[common],
                          help="matching-decoder logical error rates")
    p_db.set_defaults(func=cmd_decode_bench)

    args = ap.parse_args(argv)
    if args.command in ("mc-run", "analyze", "decode-bench"):
        cfg_probe = _load_config(args)
        if "seed" not in cfg_probe:
            print("error: a seed is required for stochastic commands",
                  file=sys.stderr)
            return EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
