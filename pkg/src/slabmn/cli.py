"""Command-line entry point wiring the library into reproducible experiments.

Subcommands: sample, train, eval-closure, solve, report.  Every command
takes ``--config PATH`` (a YAML document with sampler / trainer /
solver / report sections) plus targeted flag overrides; the effective
configuration is schema-validated before any computation and unknown
keys are rejected.  All randomness derives from the single top-level
seed through named substreams, and each run directory carries a
manifest with the configuration hash and library versions.
"""

import argparse
import hashlib
import json
import os
import sys
import zlib

import numpy as np

from . import __version__
from .entropy_core import ClosureConfig
from .kinetic_solver import CASE_DEFAULTS, e_rel, run_case
from .quadrature import DEFAULT_ORDER
from .report import build_report, load_run, write_run
from .sampler import SamplerConfig, generate, read_dataset, write_dataset
from .surrogate import (
    NewtonOracleClosure,
    TrainSettings,
    load_closure,
    save_closure,
    test_errors,
    train,
)

__all__ = ["main", "ConfigError", "load_config", "derive_seed"]


class ConfigError(ValueError):
    """The configuration document violates the schema."""


_SCHEMA = {
    "seed": int,
    "run_dir": str,
    "sampler": {
        "order": int,
        "gamma": float,
        "norm_bound": float,
        "tau": float,
        "count": int,
        "quad_order": int,
    },
    "trainer": {
        "arch": str,
        "hidden": list,
        "epochs": int,
        "batch_size": int,
        "learning_rate": float,
        "split": float,
        "target_e_u": float,
    },
    "solver": {
        "case": str,
        "order": int,
        "gamma": float,
        "closures": list,
        "n_cells": int,
        "cfl": float,
        "t_final": float,
        "quad_order": int,
        "sn_order": int,
        "snapshots": int,
        "model": str,
        "reference": str,
    },
    "report": {
        "reference": str,
        "formats": list,
        "runs": list,
    },
}

_DEFAULTS = {
    "seed": 0,
    "run_dir": "runs/experiment",
    "sampler": {"quad_order": DEFAULT_ORDER},
    "trainer": {
        "arch": "icnn",
        "hidden": [16, 16],
        "epochs": 500,
        "batch_size": 256,
        "learning_rate": 1e-3,
        "split": 0.9,
    },
    "solver": {
        "quad_order": DEFAULT_ORDER,
        "sn_order": 64,
        "snapshots": 5,
        "gamma": 0.0,
    },
    "report": {"formats": ["png"]},
}


def _check_section(name, value, schema):
    if not isinstance(value, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    for key, item in value.items():
        if key not in schema:
            raise ConfigError(f"unknown key {name}.{key}")
        want = schema[key]
        if want is float and isinstance(item, (int, float)):
            value[key] = float(item)
        elif want is int and isinstance(item, int) and not isinstance(item, bool):
            pass
        elif want is list and isinstance(item, list):
            pass
        elif want is str and isinstance(item, str):
            pass
        elif isinstance(item, want) and not isinstance(item, bool):
            pass
        else:
            raise ConfigError(f"{name}.{key} must be of type {want.__name__}")


def validate_config(config: dict) -> dict:
    """Schema check with defaults filled in; unknown keys are errors."""
    if not isinstance(config, dict):
        raise ConfigError("configuration must be a mapping")
    merged = {k: (dict(v) if isinstance(v, dict) else v) for k, v in _DEFAULTS.items()}
    for key, value in config.items():
        if key not in _SCHEMA:
            raise ConfigError(f"unknown key {key}")
        want = _SCHEMA[key]
        if isinstance(want, dict):
            _check_section(key, value, want)
            merged.setdefault(key, {})
            merged[key].update(value)
        elif want is int and isinstance(value, int) and not isinstance(value, bool):
            merged[key] = value
        elif want is str and isinstance(value, str):
            merged[key] = value
        else:
            raise ConfigError(f"{key} must be of type {want.__name__}")
    return merged


def load_config(path) -> dict:
    import yaml

    with open(path) as fh:
        raw = yaml.safe_load(fh)
    return validate_config(raw if raw is not None else {})


def config_hash(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def derive_seed(seed: int, name: str) -> int:
    """Deterministic named substream seed from the experiment seed."""
    return (int(seed) * 1_000_003 + zlib.crc32(name.encode())) % (2**63)


def _write_manifest(run_dir, config, artifacts):
    path = os.path.join(run_dir, "manifest.json")
    relative = {os.path.relpath(a, run_dir) for a in artifacts}
    if os.path.exists(path):
        with open(path) as fh:
            relative |= set(json.load(fh).get("artifacts", []))
    manifest = {
        "config": config,
        "config_hash": config_hash(config),
        "versions": {
            "slabmn": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "artifacts": sorted(relative),
    }
    os.makedirs(run_dir, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _effective(config, section, overrides):
    cfg = dict(config.get(section, {}))
    for key, value in overrides.items():
        if value is not None:
            cfg[key] = value
    _check_section(section, cfg, _SCHEMA[section])
    return cfg


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_sample(args, config):
    cfg = _effective(
        config,
        "sampler",
        {
            "order": args.order,
            "gamma": args.gamma,
            "norm_bound": args.norm_bound,
            "tau": args.tau,
            "count": args.count,
        },
    )
    for key in ("order", "gamma", "norm_bound", "tau", "count"):
        if key not in cfg:
            raise ConfigError(f"sampler.{key} is required")
    seed = args.seed if args.seed is not None else derive_seed(config["seed"], "sample")
    sampler_config = SamplerConfig(
        order=cfg["order"],
        gamma=cfg["gamma"],
        norm_bound=cfg["norm_bound"],
        tau=cfg["tau"],
        count=cfg["count"],
        seed=seed,
        quad_order=cfg.get("quad_order", DEFAULT_ORDER),
    )
    samples = generate(sampler_config)
    out = args.out
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    write_dataset(samples, out)
    print(
        json.dumps(
            {
                "samples": len(samples),
                "draws": samples.draws,
                "rejections": samples.rejections,
                "acceptance_rate": samples.acceptance_rate(),
                "guard_trips": samples.guard_trips,
                "out": out,
            }
        )
    )
    return 0


def cmd_train(args, config):
    cfg = _effective(
        config,
        "trainer",
        {"arch": args.arch, "epochs": args.epochs},
    )
    dataset = read_dataset(args.data)
    seed = args.seed if args.seed is not None else derive_seed(config["seed"], "train")
    settings = TrainSettings(
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        learning_rate=cfg["learning_rate"],
        hidden=tuple(cfg["hidden"]),
        seed=seed,
        split=cfg["split"],
        quad_order=dataset.config.quad_order,
        target_e_u=cfg.get("target_e_u"),
    )
    closure = train(dataset, cfg["arch"], settings)
    save_closure(closure, args.out)
    curves_path = args.out + ".curves.csv"
    with open(curves_path, "w") as fh:
        fh.write("epoch,train_loss,test_loss,e_h,e_beta,e_u\n")
        for row in closure.curves:
            fh.write(
                f"{row['epoch']},{row['train_loss']:.17g},{row['test_loss']:.17g},"
                f"{row['e_h']:.17g},{row['e_beta']:.17g},{row['e_u']:.17g}\n"
            )
    print(
        json.dumps(
            {
                "model": args.out,
                "curves": curves_path,
                "status": closure.provenance["status"],
                "final_errors": closure.provenance["final_errors"],
            }
        )
    )
    return 0


def _load_model(model_ref, dataset):
    if model_ref == "newton":
        config = ClosureConfig(
            order=dataset.config.order,
            gamma=dataset.config.gamma,
            quad_order=dataset.config.quad_order,
        )
        return NewtonOracleClosure(config.with_grad_tol(1e-12))
    return load_closure(model_ref)


def cmd_eval_closure(args, config):
    dataset = read_dataset(args.data)
    closure = _load_model(args.model, dataset)
    errors = test_errors(closure, dataset)
    result = {"model": args.model, "data": args.data, **errors}
    if args.reference_data:
        reference = read_dataset(args.reference_data)
        combined = test_errors(closure, reference, psi_gamma=0.0)
        result.update({f"{k}_0": v for k, v in combined.items()})
    print(json.dumps(result))
    return 0


def cmd_solve(args, config):
    cfg = _effective(
        config,
        "solver",
        {
            "case": args.case,
            "order": args.order,
            "gamma": args.gamma,
            "t_final": args.t_final,
            "n_cells": args.n_cells,
            "cfl": args.cfl,
            "model": args.model,
        },
    )
    if "case" not in cfg or "order" not in cfg:
        raise ConfigError("solver.case and solver.order are required")
    closures = [args.closure] if args.closure else cfg.get("closures", ["mn_newton"])
    run_dir = args.out if args.out else config["run_dir"]
    os.makedirs(run_dir, exist_ok=True)

    reference_u0 = None
    if args.reference:
        reference_u0 = load_run(args.reference).final_u0

    artifacts = []
    summaries = []
    for kind in closures:
        trained = None
        if kind == "mn_network":
            if "model" not in cfg:
                raise ConfigError("solver.model is required for the mn_network closure")
            trained = load_closure(cfg["model"])
        result = run_case(
            cfg["case"],
            kind,
            cfg["order"],
            gamma=cfg.get("gamma", 0.0),
            trained=trained,
            n_cells=cfg.get("n_cells"),
            cfl=cfg.get("cfl"),
            t_final=cfg.get("t_final"),
            quad_order=cfg.get("quad_order", DEFAULT_ORDER),
            sn_order=cfg.get("sn_order", 64),
            n_snapshots=cfg.get("snapshots", 5),
        )
        if reference_u0 is not None:
            result.e_rel = e_rel(result.final_u0, reference_u0)
        out = os.path.join(run_dir, result.closure_name)
        artifacts.extend(write_run(result, out))
        summaries.append(
            {
                "closure": result.closure_name,
                "dir": out,
                "n_steps": result.n_steps,
                "wall_time": result.wall_time,
                "e_rel": result.e_rel,
            }
        )
    manifest = _write_manifest(run_dir, config, artifacts)
    print(json.dumps({"run_dir": run_dir, "manifest": manifest, "runs": summaries}))
    return 0


def cmd_report(args, config):
    cfg = _effective(config, "report", {"reference": args.reference})
    run_paths = args.runs if args.runs else cfg.get("runs", [])
    if len(run_paths) == 1 and not os.path.exists(
        os.path.join(run_paths[0], "diagnostics.json")
    ):
        parent = run_paths[0]
        run_paths = sorted(
            os.path.join(parent, d)
            for d in os.listdir(parent)
            if os.path.exists(os.path.join(parent, d, "diagnostics.json"))
        )
    if not run_paths:
        raise ConfigError("report needs at least one run directory")
    out_dir = args.out if args.out else os.path.join(config["run_dir"], "report")
    summary = build_report(
        run_paths,
        out_dir,
        reference=cfg.get("reference"),
        formats=tuple(cfg.get("formats", ["png"])),
    )
    print(json.dumps({"out": out_dir, "rows": summary["rows"]}))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="slabmn",
        description="Regularized entropy moment closures in slab geometry",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="generate training data")
    p.add_argument("--config", default=None)
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--norm-bound", dest="norm_bound", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("train", help="train a surrogate closure")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--arch", choices=["icnn", "resnet"], default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval-closure", help="test errors of a closure on a dataset")
    p.add_argument("--config", default=None)
    p.add_argument("--model", required=True, help="weight file, or 'newton' for the oracle")
    p.add_argument("--data", required=True)
    p.add_argument("--reference-data", dest="reference_data", default=None)
    p.set_defaults(func=cmd_eval_closure)

    p = sub.add_parser("solve", help="run a transport case")
    p.add_argument("--config", default=None)
    p.add_argument("--case", choices=sorted(CASE_DEFAULTS), default=None)
    p.add_argument("--closure", default=None,
                   help="single closure kind (pn, mn_newton, mn_network, sn)")
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--t-final", dest="t_final", type=float, default=None)
    p.add_argument("--n-cells", dest="n_cells", type=int, default=None)
    p.add_argument("--cfl", type=float, default=None)
    p.add_argument("--model", default=None, help="weight file for mn_network")
    p.add_argument("--reference", default=None, help="run directory for e_rel")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("report", help="comparison tables and figures")
    p.add_argument("--config", default=None)
    p.add_argument("--runs", nargs="*", default=None)
    p.add_argument("--reference", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config) if args.config else validate_config({})
        return args.func(args, config)
    except Exception as err:  # noqa: BLE001 - single CLI failure funnel
        print(
            json.dumps({"error": type(err).__name__, "message": str(err)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
