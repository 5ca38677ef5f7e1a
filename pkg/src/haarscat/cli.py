"""Command line: ``haarscat <command> [options]``.

Every command reads an optional JSON config (``--config``), applies flag
overrides on top, and records the hash of the resolved config in its
report. Reports go to ``--out`` (or stdout); logs go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import classify, pipeline
from .features import FeatureDictionary, build_dictionary
from .multires import connectivity_fraction, identity_multires
from .pairing_learn import load_ensemble, save_ensemble
from .reconstruct import round_trip_report
from .scattering import boolean_transform, read_features, write_features

log = logging.getLogger("haarscat")


def _write_report(report: dict, out: str | None) -> None:
    text = json.dumps(report, indent=1, sort_keys=True)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _config(args, **overrides) -> dict:
    file_cfg = json.loads(Path(args.config).read_text()) if getattr(args, "config", None) else {}
    return pipeline.resolve_config(file_cfg, overrides)


def _labels(meta: dict) -> np.ndarray:
    if meta.get("labels") is None:
        raise ValueError("feature file has no labels")
    return np.asarray(meta["labels"])


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_learn(args) -> dict:
    cfg = _config(args, J=args.J, N=args.N, seed=args.seed, geometry=args.geometry)
    h = pipeline.config_hash(cfg)
    out = Path(args.out or Path("runs") / h)
    manifest = out / "manifest.json"
    if manifest.exists() and json.loads(manifest.read_text()).get("config_hash") == h:
        log.info("ensemble for config %s already in %s", h, out)
        return json.loads((out / "learn_report.json").read_text())
    t0 = time.perf_counter()
    train = pipeline.split_dataset(pipeline.load_dataset(cfg["dataset"]), cfg["dataset"], "train")
    members, info = pipeline.build_ensemble(train, cfg, pipeline.thread_count(args.threads))
    save_ensemble(out, members, [np.array(s) for s in info["subsets"]] if info["subsets"] else None, cfg["seed"])
    doc = json.loads(manifest.read_text())
    doc["config_hash"] = h
    manifest.write_text(json.dumps(doc))
    report = {"command": "learn", "config_hash": h, "config": cfg, "ensemble": str(out),
              "members": len(members), "levels": info["levels"], "seconds": time.perf_counter() - t0}
    (out / "learn_report.json").write_text(json.dumps(report, indent=1, sort_keys=True))
    return report


def cmd_features(args) -> dict:
    cfg = _config(args, m_max=args.m_max)
    members, manifest = load_ensemble(args.ensemble)
    J = members[0].J if cfg["J"] is None else cfg["J"]
    ds = pipeline.split_dataset(pipeline.load_dataset(cfg["dataset"]), cfg["dataset"], args.part)
    t0 = time.perf_counter()
    F = pipeline.features(ds.signals, members, J, cfg["m_max"], pipeline.thread_count(args.threads))
    ids = [f"{Path(args.ensemble).name}/{name}" for name in manifest["members"]]
    labels = None if ds.labels is None else ds.labels.tolist()
    write_features(args.out, F, J=J, m_max=cfg["m_max"], multires_ids=ids, d=ds.d,
                   extra={"labels": labels, "config_hash": pipeline.config_hash(cfg)})
    return {"command": "features", "config_hash": pipeline.config_hash(cfg), "rows": int(F.shape[0]),
            "cols": int(F.shape[1]), "path": str(args.out), "seconds": time.perf_counter() - t0}


def cmd_select(args) -> dict:
    cfg = _config(args, K=args.K, M=args.M)
    F, meta = read_features(args.features)
    y = _labels(meta)
    K = pipeline.dictionary_size(cfg, len(np.unique(y)))
    t0 = time.perf_counter()
    dic = build_dictionary(F, y, K, standardize=cfg["standardize"])
    dic.save(args.out)
    return {"command": "select", "config_hash": pipeline.config_hash(cfg), "K": K, "M": dic.M,
            "path": str(args.out), "seconds": time.perf_counter() - t0}


def cmd_train(args) -> dict:
    cfg = _config(args, sigma=args.sigma, **{"lambda": args.lam})
    F, meta = read_features(args.features)
    dic = FeatureDictionary.load(args.dictionary)
    t0 = time.perf_counter()
    model = classify.train(dic.project(F), _labels(meta), cfg["sigma"], cfg["lambda"])
    model.save(args.out)
    return {"command": "train", "config_hash": pipeline.config_hash(cfg), "sigma": model.sigma,
            "lambda": model.lam, "rows": int(len(F)), "path": str(args.out), "seconds": time.perf_counter() - t0}


def cmd_evaluate(args) -> dict:
    cfg = _config(args)
    F, meta = read_features(args.features)
    y = _labels(meta)
    dic = FeatureDictionary.load(args.dictionary)
    model = classify.KernelModel.load(args.model)
    t0 = time.perf_counter()
    P = dic.project(F)
    return {"command": "evaluate", "config_hash": pipeline.config_hash(cfg),
            "error_rate": classify.error_rate(model, P, y),
            "per_class_error": {str(k): v for k, v in classify.per_class_errors(model, P, y).items()},
            "M": dic.M, "K": max(s.K for s in dic.selections), "test_size": int(len(y)),
            "timings": {"evaluate": time.perf_counter() - t0}}


def cmd_connectivity(args) -> dict:
    cfg = _config(args)
    members, _ = load_ensemble(args.ensemble)
    ds = pipeline.split_dataset(pipeline.load_dataset(cfg["dataset"]), cfg["dataset"], "train")
    if ds.geometry is None:
        raise ValueError("dataset has no ground-truth geometry")
    table = [connectivity_fraction(m, ds.geometry, ds.active_vertices) for m in members]
    return {"command": "connectivity", "config_hash": pipeline.config_hash(cfg),
            "per_member": table, "mean": np.mean(table, axis=0).tolist()}


def cmd_reconstruct_demo(args) -> dict:
    cfg = {"d": args.d, "J": args.J, "trials": args.trials, "seed": args.seed, "family": args.family,
           "inputs": args.inputs}
    report = round_trip_report(args.d, args.J, args.trials, args.seed, args.family, args.inputs)
    report.update(command="reconstruct-demo", config_hash=pipeline.config_hash(cfg))
    return report


def cmd_bool_demo(args) -> dict:
    m = identity_multires(args.d, args.J)
    rows = []
    for k in range(1 << args.d):
        x = np.array([(k >> (args.d - 1 - i)) & 1 for i in range(args.d)], dtype=bool)
        rows.append({"input": x.astype(int).tolist(),
                     "output": boolean_transform(x, m)[-1].ravel().astype(int).tolist()})
    cfg = {"d": args.d, "J": args.J}
    return {"command": "bool-demo", "config_hash": pipeline.config_hash(cfg), "d": args.d, "J": args.J,
            "table": rows}


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="haarscat", description="Haar scattering on graphs and unknown geometries.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, config=True, threads=False):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(fn=fn)
        if config:
            p.add_argument("--config", help="JSON experiment config")
        if threads:
            p.add_argument("--threads", type=int, help="worker threads (default: HAAR_THREADS or 1)")
        p.add_argument("--out", help="output path (report commands default to stdout)")
        return p

    p = add("learn", cmd_learn, "learn (or build) an ensemble of multiresolutions", threads=True)
    p.add_argument("--J", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--geometry", choices=["learn", "grid"])

    p = add("features", cmd_features, "scattering features of a dataset part", threads=True)
    p.add_argument("--ensemble", required=True, help="ensemble directory or manifest")
    p.add_argument("--part", choices=["train", "test", "all"], default="train")
    p.add_argument("--m-max", dest="m_max", type=int)
    p.add_argument("--report", help="where to write the command report")

    p = add("select", cmd_select, "per-class PLS feature selection")
    p.add_argument("--features", required=True)
    p.add_argument("--K", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--report")

    p = add("train", cmd_train, "fit the kernel classifier on selected features")
    p.add_argument("--features", required=True)
    p.add_argument("--dictionary", required=True)
    p.add_argument("--sigma", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--report")

    p = add("evaluate", cmd_evaluate, "test error of a trained classifier")
    p.add_argument("--features", required=True)
    p.add_argument("--dictionary", required=True)
    p.add_argument("--model", required=True)

    p = add("connectivity", cmd_connectivity, "connected fraction of multiresolution sets per level")
    p.add_argument("--ensemble", required=True)

    p = add("reconstruct-demo", cmd_reconstruct_demo, "scattering inversion round trips", config=False)
    p.add_argument("--d", type=int, default=16)
    p.add_argument("--J", type=int, default=3)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--family", choices=["random", "standard"], default="random")
    p.add_argument("--inputs", choices=["gaussian", "binary"], default="gaussian")

    p = add("bool-demo", cmd_bool_demo, "truth table of the or/xor cascade", config=False)
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--J", type=int, default=2)
    return parser


# commands whose --out is an artifact; their report goes to --report instead
_ARTIFACT_COMMANDS = {"features", "select", "train"}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    if args.command in _ARTIFACT_COMMANDS and not args.out:
        log.error("%s needs --out", args.command)
        return 2
    try:
        report = args.fn(args)
    except (ValueError, OSError, KeyError, classify.LinAlgError) as exc:
        log.error("%s failed: %s", args.command, exc)
        return 1
    target = args.report if args.command in _ARTIFACT_COMMANDS else (None if args.command == "learn" else args.out)
    _write_report(report, target)
    return 0


if __name__ == "__main__":
    sys.exit(main())
