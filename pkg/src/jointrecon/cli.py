"""Command-line entry point: ``jointrecon {simulate,reconstruct,baseline,evaluate,sweep}``."""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from . import io
from .config import DatasetConfig, RunConfig, load_run_config, validate
from .errors import ConfigError, MissingArtifact, ReconError
from .metrics import MetricsReport
from .pipeline import Reconstruction, evaluate, read_phi, reconstruct
from .simulate import load_dataset, save_dataset, simulate_dataset

log = logging.getLogger("jointrecon")

LOG_FIELDS = ["stage", "iteration", "objective", "fidelity", "regularizer", "sigma", "tau",
              "prox_gap", "prox_iterations", "phi"]
METRIC_FIELDS = ["dataset", "method", "ssim", "rd_percent", "max_displacement_px", "wall_time_s"]


def recipe_path(name: str) -> Path:
    """Resolve a bundled recipe by bare name (``mri_desk``) or return the path unchanged."""
    p = Path(name)
    if p.exists() or p.suffix or os.sep in name:
        return p
    ref = resources.files("jointrecon") / "recipes" / f"{name}.json"
    with resources.as_file(ref) as found:
        if found.exists():
            return Path(found)
    return p


def _csv_text(rows, fields) -> str:
    buf = _io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else x


def _log_rows(history):
    for rec in history:
        row = {k: _fmt(rec[k]) for k in LOG_FIELDS if k != "phi"}
        row["phi"] = " ".join(repr(float(p)) for p in rec["phi"])
        yield row


# --- command helpers -------------------------------------------------------------


def _load(args) -> RunConfig:
    if args.config is None:
        raise ConfigError("--config is required")
    return load_run_config(recipe_path(args.config))


def _output(args, cfg: RunConfig, default: str) -> Path:
    out = args.out or cfg.output or default
    return Path(out)


def _dataset_dir(args, cfg: RunConfig) -> Path:
    path = args.dataset or cfg.dataset
    if path is None:
        raise ConfigError("no dataset given (use --dataset or the 'dataset' key)", "dataset")
    return Path(path)


def _dataset_config(cfg: RunConfig, seed) -> DatasetConfig:
    if cfg.simulate is None:
        raise ConfigError("missing section", "simulate")
    data = cfg.simulate.model_dump()
    if seed is not None:
        data["seed"] = seed
    elif cfg.seed is not None:
        data["seed"] = cfg.seed
    return validate(DatasetConfig, data)


def write_reconstruction(out: Path, rec: Reconstruction, save_stages: bool, config: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    io.write_grd(out / "u.grd", rec.u)
    io.write_json(out / "phi.json", {
        "method": rec.method,
        "params": [float(p) for p in rec.phi],
        "affine": [float(p) for p in rec.affine],
    })
    io.atomic_write_text(out / "log.csv", _csv_text(_log_rows(rec.history), LOG_FIELDS))
    io.write_png(out / "u.png", rec.u.values)
    if save_stages:
        for i, st in enumerate(rec.stages):
            stem = out / "stages" / f"stage{i}_{st.resolution}"
            io.write_grd(stem.with_suffix(".grd"), st.u)
            io.write_png(stem.with_suffix(".png"), st.u.values)
            io.write_json(stem.with_suffix(".json"), {"alpha": st.alpha, "phi": [float(p) for p in st.phi]})
    # wall time lives here so u.grd and phi.json stay reproducible byte for byte
    io.write_json(out / "run.json", {"config": config, "method": rec.method, "wall_time_s": rec.seconds,
                                     "extra": rec.extra,
                                     "stage_seconds": [st.seconds for st in rec.stages]})


def cmd_simulate(args) -> int:
    cfg = _load(args)
    ds = simulate_dataset(_dataset_config(cfg, args.seed))
    out = save_dataset(ds, _output(args, cfg, ds.config.name))
    log.info("dataset written to %s", out)
    return 0


def _reconstruct(args, method=None) -> int:
    cfg = _load(args)
    if cfg.reconstruct is None:
        raise ConfigError("missing section", "reconstruct")
    rc = cfg.reconstruct
    if method is not None:
        rc = rc.model_copy(update={"method": method})
    ds = load_dataset(_dataset_dir(args, cfg))
    base = Path(args.config).parent if args.config else None
    rec = reconstruct(ds, rc, base_dir=base)
    out = _output(args, cfg, f"recon_{rc.method}")
    write_reconstruction(out, rec, args.save_stages or cfg.save_stages, rc.model_dump(mode="json"))
    log.info("%s reconstruction written to %s (%.1fs)", rc.method, out, rec.seconds)
    return 0


def cmd_reconstruct(args) -> int:
    return _reconstruct(args)


def cmd_baseline(args) -> int:
    return _reconstruct(args, method="three_step")


def metrics_row(dataset: str, method: str, report: MetricsReport, seconds) -> dict:
    row = {"dataset": dataset, "method": method, **report.row(), "wall_time_s": seconds}
    return {k: _fmt(v) for k, v in row.items()}


def cmd_evaluate(args) -> int:
    ds_dir = Path(args.dataset) if args.dataset else None
    if ds_dir is None:
        raise ConfigError("--dataset is required")
    ds = load_dataset(ds_dir)
    rows = []
    recons = args.recon or []
    if not recons:
        raise ConfigError("give at least one --recon directory")
    for r in recons:
        r = Path(r)
        u = io.read_grd(r / "u.grd")
        phi_path = r / "phi.json"
        if not phi_path.exists():
            raise MissingArtifact(f"missing file: {phi_path}")
        affine = read_phi(phi_path)
        meta = io.read_json(r / "run.json") if (r / "run.json").exists() else {}
        method = meta.get("method", io.read_json(phi_path).get("method", r.name))
        report = evaluate(ds, u, affine)
        rows.append(metrics_row(ds.config.name, method, report, meta.get("wall_time_s", "n/a")))
    text = _csv_text(rows, METRIC_FIELDS)
    if args.out:
        io.atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


# --- sweep -----------------------------------------------------------------------


def _sweep_cell(payload):
    cfg_json, theta, m, method, out = payload
    cfg = RunConfig.model_validate(cfg_json)
    data = cfg.simulate.model_dump()
    data["deformation"]["theta"] = theta
    ds = simulate_dataset(validate(DatasetConfig, data))
    rc = cfg.reconstruct.model_copy(update={"method": method})
    rc = rc.model_copy(update={"schedule": rc.schedule.last(m)})
    if rc.tv_schedule is not None:
        rc = rc.model_copy(update={"tv_schedule": rc.tv_schedule.last(m)})
    cell = Path(out) / f"{method}_theta{theta:g}_M{m}"
    try:
        rec = reconstruct(ds, rc)
        write_reconstruction(cell, rec, False, rc.model_dump(mode="json"))
        rep = evaluate(ds, rec.u, rec.affine)
        return {"theta": theta, "M": m, "method": method, "ssim": rep.ssim, "rd_percent": rep.rd_percent,
                "seconds": rec.seconds, "error": "", "image": rec.u.values}
    except ReconError as exc:
        return {"theta": theta, "M": m, "method": method, "ssim": None, "rd_percent": None,
                "seconds": None, "error": str(exc), "image": None}


def cmd_sweep(args) -> int:
    cfg = _load(args)
    if cfg.simulate is None or cfg.reconstruct is None or cfg.sweep is None:
        raise ConfigError("sweep needs 'simulate', 'reconstruct' and 'sweep' sections")
    sw = cfg.sweep
    if cfg.simulate.deformation.kind not in ("rigid", "zoom", "nonlinear"):
        raise ConfigError("sweep varies the rotation angle; use a rigid, zoom or nonlinear deformation",
                          "simulate.deformation.kind")
    n_stages = len(cfg.reconstruct.schedule.resolutions)
    bad = [m for m in sw.scale_sizes if m < 1 or m > n_stages]
    if bad:
        raise ConfigError(f"scale sizes {bad} exceed the {n_stages}-stage schedule", "sweep.scale_sizes")
    out = _output(args, cfg, "sweep")
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else cfg.seed
    cfg_json = cfg.model_dump(mode="json")
    if seed is not None:
        cfg_json["simulate"]["seed"] = seed
    methods = ["joint"] + (["three_step"] if sw.include_three_step else [])
    cells = [(cfg_json, float(t), int(m), meth, str(out)) for meth in methods for m in sw.scale_sizes
             for t in sw.thetas]
    if args.threads and args.threads > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(c) for c in cells]
    rows = []
    for r in results:
        ok = r["rd_percent"] is not None and r["rd_percent"] <= sw.success_rd
        rows.append({
            "method": r["method"], "M": r["M"], "theta": _fmt(r["theta"]),
            "ssim": "failed" if r["ssim"] is None else _fmt(r["ssim"]),
            "rd_percent": "n/a" if r["rd_percent"] is None else _fmt(r["rd_percent"]),
            "success": int(ok), "wall_time_s": "n/a" if r["seconds"] is None else _fmt(r["seconds"]),
            "error": r["error"],
        })
        log.info("theta=%g M=%d %s: RD=%s success=%d", r["theta"], r["M"], r["method"], rows[-1]["rd_percent"],
                 int(ok))
    fields = ["method", "M", "theta", "ssim", "rd_percent", "success", "wall_time_s", "error"]
    io.atomic_write_text(out / "sweep.csv", _csv_text(rows, fields))
    if results:
        io.write_montage(out / "sweep.png", [r["image"] for r in results], cols=max(len(sw.thetas), 1))
    return 0


# --- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jointrecon", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, dataset=True):
        p.add_argument("--config", help="run configuration JSON (path or bundled recipe name)")
        p.add_argument("--out", help="output directory (or CSV file for evaluate)")
        p.add_argument("--seed", type=int, help="override the dataset seed")
        p.add_argument("--save-stages", action="store_true", help="write per-stage snapshots")
        p.add_argument("--threads", type=int, default=0, help="worker processes; 0 = sequential, deterministic")
        if dataset:
            p.add_argument("--dataset", help="dataset directory")

    common(sub.add_parser("simulate", help="generate a synthetic dataset"), dataset=False)
    common(sub.add_parser("reconstruct", help="reconstruct with the configured method"))
    common(sub.add_parser("baseline", help="three-step TV / MI / dTV reconstruction"))
    p = sub.add_parser("evaluate", help="SSIM / RD of reconstructions against the dataset truth")
    common(p)
    p.add_argument("--recon", action="append", help="reconstruction directory (repeatable)")
    common(sub.add_parser("sweep", help="rotation angle x scale-space size study"), dataset=False)
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "baseline": cmd_baseline,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
}


def _setup_logging():
    level = os.environ.get("RECON_LOG", "info").upper()
    if level not in ("ERROR", "INFO", "DEBUG", "WARNING"):
        level = "INFO"
    logging.basicConfig(level=getattr(logging, level), format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging()
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"jointrecon: config error: {exc}", file=sys.stderr)
        return 2
    except (ReconError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"jointrecon: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
