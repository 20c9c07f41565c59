"""Command-line experiment driver.

    pmcmc simulate  --config CFG --out DIR [--seed S]
    pmcmc validate  --config CFG [--seed S]
    pmcmc run       --config CFG --out DIR [--seed S] [--parallel-arms]
    pmcmc summarize --run-dir DIR [--bandwidth B]
    pmcmc summarize --draws CSV --warmup W [--bandwidth B]

Log lines go to stderr; artifacts are written only under the output
directory. Configs named without a path are looked up among the bundled
ones (``pmcmc run --config sv_table1_desk.json``).
"""
from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigFileError, ExperimentConfig, load_config, validate_experiment
from .diagnostics import format_table, summarize_chain
from .samplers import ChainError, ChainRecord, run_chain, write_manifest

log = logging.getLogger("pmcmc")


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._+-]+", "_", name).strip("_") or "arm"


def _dump_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=lambda o: o.tolist() if isinstance(o, np.ndarray) else str(o))
        fh.write("\n")


def resolve_config(path: str) -> Path:
    p = Path(path)
    if p.exists() or p.parent != Path("."):
        return p
    bundled = resources.files("pmcmc") / "configs" / p.name
    return Path(str(bundled)) if bundled.is_file() else p


def _truth_json(truth):
    return {k: np.asarray(v).tolist() for k, v in truth.items()}


def write_dataset(cfg: ExperimentConfig, out: Path):
    data, states, truth = cfg.simulate()
    out.mkdir(parents=True, exist_ok=True)
    data.to_csv(out / "data.csv")
    _dump_json({"seed": cfg.seed, "stream": 0, "model": cfg.model_type,
                "theta": _truth_json(truth), "states": states.tolist()}, out / "truth.json")
    return data


def run_arm(cfg: ExperimentConfig, k: int, out: Path) -> dict:
    """Run arm ``k`` and write its draws, summary and manifest. Returns a status dict."""
    arm = cfg.arms[k]
    data, _ = cfg.load_data()
    model = cfg.build_model(data)
    init = cfg.initial_theta(model)
    adir = out / _slug(arm.name)
    adir.mkdir(parents=True, exist_ok=True)
    extra = {"experiment": cfg.raw, "experiment_seed": cfg.seed, "arm": arm.name,
             "bandwidth": arm.bandwidth, "init": _truth_json(init)}

    def progress(i, rec):
        log.info("[%s] iteration %d/%d (%.1fs)", arm.name, i, arm.sampler.iterations, rec.checkpoints[-1])

    status = {"arm": arm.name, "dir": str(adir), "ok": True, "error": None}
    try:
        record = run_chain(model, arm.sampler, init, progress=progress)
    except ChainError as exc:
        log.error("[%s] %s", arm.name, exc)
        status.update(ok=False, error=str(exc))
        record = exc.record
        if record is None:
            return status
        extra["error"] = str(exc)
    record.to_csv(adir / "draws.csv")
    write_manifest(record, adir / "manifest.json", extra)
    if status["ok"]:
        N = None if arm.sampler.scheme == "ideal" else arm.sampler.N
        rep = summarize_chain(record, arm.bandwidth, cfg.groups, arm.name, N)
        rep.to_json(adir / "summary.json")
        status["summary"] = rep.to_dict()
    return status


def _report_from_dict(d):
    from .diagnostics import ParamSummary, SummaryReport

    params = {k: ParamSummary(**v) for k, v in d["params"].items()}
    return SummaryReport(**{**d, "params": params})


def run_experiment(cfg: ExperimentConfig, out: Path, parallel: bool = False) -> int:
    out.mkdir(parents=True, exist_ok=True)
    if cfg.data_path is None:
        write_dataset(cfg, out)
    n = len(cfg.arms)
    if parallel and n > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            statuses = list(pool.map(run_arm, [cfg] * n, range(n), [out] * n))
    else:
        statuses = [run_arm(cfg, k, out) for k in range(n)]
    reports = [_report_from_dict(s["summary"]) for s in statuses if s.get("summary")]
    if reports:
        table = format_table(reports, cfg.scalars)
        (out / "comparison.txt").write_text(table, encoding="utf-8")
        _dump_json({"experiment": cfg.name, "seed": cfg.seed,
                    "arms": [r.to_dict() for r in reports]}, out / "comparison.json")
        sys.stderr.write(table)
    failed = [s for s in statuses if not s["ok"]]
    _dump_json({"experiment": cfg.name, "seed": cfg.seed, "version": __version__,
                "arms": [{k: v for k, v in s.items() if k != "summary"} for s in statuses]},
               out / "status.json")
    return 1 if failed else 0


def summarize_dir(run_dir: Path, bandwidth: int | None) -> int:
    reports = []
    for mpath in sorted(run_dir.glob("*/manifest.json")):
        man = json.loads(mpath.read_text(encoding="utf-8"))
        rec = ChainRecord.from_csv(mpath.parent / "draws.csv", warmup=man["warmup"])
        if not rec.complete or not man.get("complete", True):
            log.warning("%s: incomplete chain, skipped", mpath.parent.name)
            continue
        rec.seconds = man.get("seconds", 0.0)
        b = bandwidth or man.get("bandwidth", 500)
        groups = man.get("experiment", {}).get("groups")
        N = None if man["sampler"]["scheme"] == "ideal" else man["sampler"]["N"]
        rep = summarize_chain(rec, b, groups, man.get("arm", mpath.parent.name), N)
        rep.to_json(mpath.parent / f"summary_b{b}.json")
        reports.append(rep)
    if not reports:
        log.error("%s: no completed arms found", run_dir)
        return 1
    table = format_table(reports)
    suffix = f"_b{bandwidth}" if bandwidth else ""
    (run_dir / f"comparison{suffix}.txt").write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pmcmc", description="Particle MCMC experiment driver")
    p.add_argument("--version", action="version", version=f"pmcmc {__version__}")
    sub = p.add_subparsers(dest="verb", required=True)
    for verb in ("simulate", "validate", "run"):
        s = sub.add_parser(verb)
        s.add_argument("--config", required=True, help="experiment JSON (path or bundled name)")
        s.add_argument("--seed", type=int, default=None, help="override the config seed")
        if verb != "validate":
            s.add_argument("--out", required=True, help="output directory")
        if verb == "run":
            s.add_argument("--parallel-arms", action="store_true", help="run arms in separate processes")
    s = sub.add_parser("summarize")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--run-dir", help="output directory of a previous run")
    g.add_argument("--draws", help="a single draws CSV")
    s.add_argument("--warmup", type=int, default=0)
    s.add_argument("--bandwidth", type=int, default=None)
    return p


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    if args.verb == "summarize":
        if args.run_dir:
            return summarize_dir(Path(args.run_dir), args.bandwidth)
        rec = ChainRecord.from_csv(args.draws, warmup=args.warmup)
        sys.stdout.write(format_table([summarize_chain(rec, args.bandwidth or 500, label=Path(args.draws).parent.name)]))
        return 0
    try:
        cfg = load_config(resolve_config(args.config))
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigFileError("--seed must be an unsigned 64-bit integer")
            cfg = cfg.with_seed(args.seed)
        if args.verb == "validate":
            bad = validate_experiment(cfg)
            json.dump({"config": cfg.source, "violations": bad}, sys.stdout, indent=2, sort_keys=True)
            sys.stdout.write("\n")
            return 0
        bad = validate_experiment(cfg)
        if bad:
            raise ConfigFileError(f"{cfg.source}: " + "; ".join(bad))
        out = Path(args.out)
        if args.verb == "simulate":
            write_dataset(cfg, out)
            log.info("wrote %s", out / "data.csv")
            return 0
        return run_experiment(cfg, out, args.parallel_arms)
    except ConfigFileError as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
