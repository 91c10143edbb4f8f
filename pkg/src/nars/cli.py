"""Command-line entry points.

Subcommands: space-info, pool, pretrain, search, evolve, run, cost,
export.  Run-level commands read a YAML config file; individual flags
override config fields.  Exit codes: 0 ok, 2 usage/config error, 3
runtime failure.  Errors are also emitted as one JSON record on stderr so
wrappers can parse them.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import engine
from ._util import derive_seed, short_id
from .cost import Constraint, cost
from .encoding import build_layout, encode_batch
from .engine import Stage1Config, Stage2Config, Stage3Config
from .errors import NarsError, UsageError
from .oracle import SyntheticEvaluator
from .predictor import TwoHeadPredictor
from .protocol import ExternalEvaluator
from .sampling import sample_qmc_pool
from .space import (
    SearchSpaceDef,
    builtin_space_path,
    candidate_from_dict,
    candidate_to_dict,
    cardinality,
    fixed_arch,
    free_params,
    load_space,
)

POOL_FILE_VERSION = 1


def _space_from_arg(path_str: str) -> SearchSpaceDef:
    path = Path(path_str)
    if not path.exists():
        builtin = builtin_space_path(path_str)
        if builtin.exists():
            path = builtin
        else:
            raise UsageError(f"space file not found: {path_str}")
    return load_space(path)


# ---------------------------------------------------------------------------
# Individual commands


def cmd_space_info(args) -> int:
    space = _space_from_arg(args.space)
    print(f"space: {space.name}")
    print(f"architecture stages: {len(space.stages)}")
    print(f"resolution grid: {list(space.resolution)}")
    for p in free_params(space):
        values = list(p.values)
        shown = values if len(values) <= 12 else values[:6] + ["..."] + values[-3:]
        shared = f"  (shared across {len(p.targets)} stages)" if len(p.targets) > 1 else ""
        print(f"  {p.key:34s} {p.kind:7s} |{len(values):3d}|  {shown}{shared}")
    arch_log10, recipe_log10 = cardinality(space)
    print(f"arch_log10: {arch_log10:.4f}")
    print(f"recipe_log10: {recipe_log10:.4f}")
    return 0


def cmd_pool(args) -> int:
    if args.n < 1:
        raise UsageError("pool size must be >= 1")
    space = _space_from_arg(args.space)
    candidates = sample_qmc_pool(space, args.n, seed=args.seed)
    window = None
    if args.flop_window:
        lo, hi = args.flop_window
        window = (float(lo), float(hi))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    n_written = 0
    with out.open("w") as fh:
        fh.write(json.dumps({
            "type": "header", "version": POOL_FILE_VERSION,
            "space_fingerprint": space.fingerprint(), "n": args.n, "seed": args.seed,
            "flop_window": list(window) if window else None,
        }) + "\n")
        for cand in candidates:
            report = cost(cand.arch)
            if window and not (window[0] <= report.total_flops <= window[1]):
                continue
            fh.write(json.dumps({
                "candidate": candidate_to_dict(cand),
                "flops": report.total_flops,
                "params": report.total_params,
            }) + "\n")
            n_written += 1
    print(f"wrote {n_written} candidates to {out}")
    return 0


def _read_pool(path: Path, space: SearchSpaceDef):
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise UsageError(f"cannot read pool file: {e}") from e
    if not lines:
        raise UsageError("pool file is empty")
    try:
        header = json.loads(lines[0])
        if header.get("type") != "header" or header.get("version") != POOL_FILE_VERSION:
            raise UsageError("not a pool file (bad header)")
        if header["space_fingerprint"] != space.fingerprint():
            raise UsageError("pool file was generated from a different space")
        records = [json.loads(ln) for ln in lines[1:] if ln.strip()]
        candidates = [candidate_from_dict(r["candidate"]) for r in records]
        flops = np.array([r["flops"] for r in records], dtype=np.float64)
        params = np.array([r["params"] for r in records], dtype=np.float64)
    except (KeyError, ValueError, TypeError) as e:
        raise UsageError(f"corrupt pool file: {e}") from e
    return candidates, flops, params


def cmd_pretrain(args) -> int:
    space = _space_from_arg(args.space)
    layout = build_layout(space)
    if layout.arch_dim == 0:
        raise UsageError("architecture is fully fixed; nothing to pretrain")
    candidates, flops, params = _read_pool(Path(args.pool), space)
    if not candidates:
        raise UsageError("pool file has no candidates")
    X = encode_batch(space, candidates, layout, check=False)
    net = TwoHeadPredictor(
        arch_dim=layout.arch_dim, recipe_dim=layout.recipe_dim,
        layout_fingerprint=layout.fingerprint(), seed=derive_seed(args.seed, "init"),
    )
    report = net.pretrain(X[:, :layout.arch_dim], flops, params,
                          split=args.split, epochs=args.epochs,
                          seed=derive_seed(args.seed, "pretrain"))
    net.save(args.out)
    print(f"pretrained on {len(candidates)} candidates "
          f"(train mse {report.train_mse:.3e}, val mse {report.val_mse:.3e}, "
          f"val rank corr {report.val_rank_correlation}, epochs {report.epochs_run})")
    print(f"checkpoint: {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Run configuration


def _load_run_config(args) -> dict:
    cfg_path = Path(args.config)
    try:
        raw = yaml.safe_load(cfg_path.read_text())
    except OSError as e:
        raise UsageError(f"cannot read config: {e}") from e
    except yaml.YAMLError as e:
        raise UsageError(f"config is not valid YAML: {e}") from e
    if not isinstance(raw, dict):
        raise UsageError("config must be a YAML mapping")
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    if getattr(args, "output", None) is not None:
        raw["output"] = args.output
    if getattr(args, "space", None) is not None:
        raw["space"] = args.space
    for key in ("space", "output"):
        if key not in raw:
            raise UsageError(f"config is missing {key!r}")
    raw.setdefault("seed", 0)
    # Paths in the config resolve relative to the config file.
    for key in ("space", "output"):
        p = Path(raw[key])
        if not p.is_absolute() and not p.exists() and not builtin_space_path(str(p)).exists():
            raw[key] = str((cfg_path.parent / p).resolve())
    return raw


def _constraints_from_config(raw_sets) -> list[tuple[Constraint, ...]]:
    if not raw_sets:
        raise UsageError("config needs at least one constraint set for evolve/run")
    out = []
    for cs in raw_sets:
        if isinstance(cs, dict):
            cs = [cs]
        out.append(tuple(Constraint(metric=c["metric"], bound=int(float(c["bound"]))) for c in cs))
    return out


def _build_configs(raw: dict):
    s1 = raw.get("stage1", {})
    s2 = raw.get("stage2", {})
    s3 = raw.get("stage3", {})
    window = s2.get("flop_window")
    if window is not None:
        window = (float(window[0]), float(window[1]))
    stage1 = Stage1Config(split=float(s1.get("split", 0.8)), epochs=int(s1.get("epochs", 100)))
    stage2 = Stage2Config(
        pool_size=int(s2.get("pool_size", 20000)),
        batch=int(s2.get("batch", 48)),
        iterations=int(s2.get("iterations", 5)),
        early_stop_threshold=float(s2.get("early_stop_threshold", 0.92)),
        epochs_full=int(s2.get("epochs_full", 150)),
        flop_window=window,
    )
    stage3 = Stage3Config(
        p_best=int(s3.get("p_best", 50)),
        q_random=int(s3.get("q_random", 50)),
        children_per_candidate=int(s3.get("children_per_candidate", 24)),
        top_k=int(s3.get("top_k", 40)),
        epsilon=float(s3.get("epsilon", 1e-6)),
        max_generations=int(s3.get("max_generations", 100)),
        initial_mutation_rate=float(s3.get("initial_mutation_rate", 0.1)),
    )
    return stage1, stage2, stage3


def _build_evaluator(raw: dict, space: SearchSpaceDef):
    ev = raw.get("evaluator", {"kind": "synthetic"})
    kind = ev.get("kind", "synthetic")
    if kind == "synthetic":
        return SyntheticEvaluator(space)
    if kind == "plugin":
        command = ev.get("command")
        if not command:
            raise UsageError("plugin evaluator needs a command list")
        return ExternalEvaluator(
            space=space, command=command,
            parallelism=int(ev.get("parallelism", raw.get("parallelism", 1))),
            mode=ev.get("mode", "per_slot"),
            timeout_floor=float(ev.get("timeout_floor", 60.0)),
        )
    raise UsageError(f"unknown evaluator kind {kind!r}")


def _prepare_output(raw: dict, force: bool) -> Path:
    out = Path(raw["output"])
    marker = out / "COMPLETE"
    if marker.exists() and not force:
        raise UsageError(f"output {out} holds a completed run; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.json").write_text(json.dumps(raw, indent=2, default=str))
    return out


def _write_pool_artifact(out: Path, space: SearchSpaceDef, pool, seed: int, window) -> Path:
    """Persist the run's candidate pool under a content-hash name."""
    from ._util import canonical_json, sha256_hex

    candidates, _, flops, params = pool
    digest = sha256_hex(canonical_json([c.key() for c in candidates]))[:12]
    path = out / "pool" / f"pool-{digest}.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write(json.dumps({
            "type": "header", "version": POOL_FILE_VERSION,
            "space_fingerprint": space.fingerprint(), "n": len(candidates), "seed": seed,
            "flop_window": list(window) if window else None,
        }) + "\n")
        for cand, fl, pa in zip(candidates, flops, params):
            fh.write(json.dumps({"candidate": candidate_to_dict(cand),
                                 "flops": int(fl), "params": int(pa)}) + "\n")
    return path


def _write_bundle(bundle, out: Path) -> None:
    results_dir = out / "results"
    engine.export_results(bundle, results_dir)
    predictor_path = out / "predictor.json"
    bundle.state.predictor.save(predictor_path)
    for w in bundle.warnings:
        print(f"warning: {w}", file=sys.stderr)
    (out / "COMPLETE").write_text("")
    print(f"results in {results_dir}")


def cmd_search(args) -> int:
    raw = _load_run_config(args)
    space = _space_from_arg(raw["space"])
    _, stage2, _ = _build_configs(raw)
    evaluator = _build_evaluator(raw, space)
    out = _prepare_output(raw, args.force)
    seed = int(raw["seed"])
    layout = build_layout(space)

    ckpt_dir = out / "checkpoints"
    if args.resume:
        state = engine.stage2_run(space, evaluator, None, stage2, seed,
                                  checkpoint_dir=ckpt_dir, resume_from=args.resume)
    else:
        net = TwoHeadPredictor(
            arch_dim=layout.arch_dim, recipe_dim=layout.recipe_dim,
            layout_fingerprint=layout.fingerprint(), seed=derive_seed(seed, "init"))
        pool = engine.build_pool(space, stage2.pool_size, derive_seed(seed, "pool"),
                                 layout, flop_window=stage2.flop_window)
        _write_pool_artifact(out, space, pool, seed, stage2.flop_window)
        if layout.arch_dim > 0 and len(pool[0]) > 0:
            s1 = Stage1Config(**{k: v for k, v in raw.get("stage1", {}).items() if k in ("split", "epochs")})
            net.pretrain(pool[1][:, :layout.arch_dim], pool[2], pool[3],
                         split=s1.split, epochs=s1.epochs, seed=derive_seed(seed, "pretrain"))
        state = engine.stage2_run(space, evaluator, net, stage2, seed,
                                  checkpoint_dir=ckpt_dir, pool=pool)
    state.predictor.save(out / "predictor.json")
    for w in state.warnings:
        print(f"warning: {w}", file=sys.stderr)
    (out / "COMPLETE").write_text("")
    print(f"dataset size {len(state.dataset)}, checkpoints in {ckpt_dir}")
    return 0


def cmd_evolve(args) -> int:
    raw = _load_run_config(args)
    space = _space_from_arg(raw["space"])
    _, stage2, stage3 = _build_configs(raw)
    constraint_sets = _constraints_from_config(raw.get("constraints"))
    out = _prepare_output(raw, args.force)
    seed = int(raw["seed"])

    state = engine.load_checkpoint(args.checkpoint, space, stage2)
    warnings: list[str] = []
    per_constraint = []
    for j, cset in enumerate(constraint_sets):
        from dataclasses import replace as _replace

        cfg = _replace(stage3, constraints=cset)
        per_constraint.append(engine.stage3_evolve(
            space, state.predictor, state.dataset, cfg,
            derive_seed(seed, "constraint", j), warnings_out=warnings))
    bundle = engine.ResultBundle(state=state, per_constraint=per_constraint,
                                 pretrain_report=None, warnings=warnings)
    _write_bundle(bundle, out)
    return 0


def cmd_run(args) -> int:
    raw = _load_run_config(args)
    space = _space_from_arg(raw["space"])
    stage1, stage2, stage3 = _build_configs(raw)
    constraint_sets = _constraints_from_config(raw.get("constraints"))
    evaluator = _build_evaluator(raw, space)
    out = _prepare_output(raw, args.force)
    seed = int(raw["seed"])

    layout = build_layout(space)
    pool = engine.build_pool(space, stage2.pool_size, derive_seed(seed, "pool"),
                             layout, flop_window=stage2.flop_window)
    _write_pool_artifact(out, space, pool, seed, stage2.flop_window)
    bundle = engine.run_nars(space, evaluator, constraint_sets, seed,
                             stage1=stage1, stage2=stage2, stage3=stage3,
                             checkpoint_dir=out / "checkpoints", pool=pool)
    _write_bundle(bundle, out)
    return 0


def cmd_cost(args) -> int:
    space = _space_from_arg(args.arch_file)
    arch = fixed_arch(space)
    report = cost(arch)
    rows = [(l.label, f"{l.out_resolution[0]}x{l.out_resolution[1]}", l.flops, l.params)
            for l in report.layers]
    label_w = max(len(r[0]) for r in rows) + 2
    print(f"{'layer':<{label_w}}{'out':>10}{'flops':>16}{'params':>12}")
    for label, res, fl, pr in rows:
        print(f"{label:<{label_w}}{res:>10}{fl:>16,}{pr:>12,}")
    print(f"{'total':<{label_w}}{'':>10}{report.total_flops:>16,}{report.total_params:>12,}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["layer", "out_h", "out_w", "flops", "params"])
            for l in report.layers:
                writer.writerow([l.label, l.out_resolution[0], l.out_resolution[1], l.flops, l.params])
            writer.writerow(["total", "", "", report.total_flops, report.total_params])
        print(f"csv: {args.csv}")
    return 0


def cmd_export(args) -> int:
    results_dir = Path(args.results_dir)
    if not results_dir.is_dir():
        raise UsageError(f"not a results directory: {results_dir}")
    rows = []
    for topk in sorted(results_dir.glob("constraint_*_topk.jsonl")):
        for line in topk.read_text().splitlines():
            rec = json.loads(line)
            rows.append((rec["flops"], rec["params"], rec["predicted_score"], ""))
    dataset_csv = results_dir / "dataset.csv"
    if dataset_csv.exists():
        with dataset_csv.open() as fh:
            for rec in csv.DictReader(fh):
                rows.append((int(rec["flops"]), int(rec["params"]), "", rec["measured_accuracy"]))
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        out.write("flops,params,predicted_accuracy,measured_accuracy\n")
        for fl, pr, pred, meas in rows:
            out.write(f"{fl},{pr},{pred},{meas}\n")
    finally:
        if args.out:
            out.close()
            print(f"wrote {len(rows)} rows to {args.out}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nars", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("space-info", help="print grids and cardinality of a space file")
    p.add_argument("space")
    p.set_defaults(fn=cmd_space_info)

    p = sub.add_parser("pool", help="QMC candidate pool with cost labels")
    p.add_argument("space")
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--flop-window", nargs=2, type=float, metavar=("LOW", "HIGH"))
    p.set_defaults(fn=cmd_pool)

    p = sub.add_parser("pretrain", help="pretrain the predictor on a pool's cost labels")
    p.add_argument("pool")
    p.add_argument("--space", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_pretrain)

    for name, fn, extra in (
        ("search", cmd_search, "constrained iterative optimization (stage 2)"),
        ("evolve", cmd_evolve, "evolutionary search from a stage-2 checkpoint"),
        ("run", cmd_run, "full pipeline: pretrain + search + evolve"),
    ):
        p = sub.add_parser(name, help=extra)
        p.add_argument("config")
        p.add_argument("--seed", type=int)
        p.add_argument("--output")
        p.add_argument("--space")
        p.add_argument("--force", action="store_true")
        if name == "search":
            p.add_argument("--resume", help="stage-2 checkpoint to resume from")
        if name == "evolve":
            p.add_argument("checkpoint", help="stage-2 checkpoint to load the predictor from")
        p.set_defaults(fn=fn)

    p = sub.add_parser("cost", help="per-layer cost report for a fixed architecture file")
    p.add_argument("arch_file")
    p.add_argument("--csv")
    p.set_defaults(fn=cmd_cost)

    p = sub.add_parser("export", help="flatten run results into a front-plot CSV")
    p.add_argument("results_dir")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_export)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as e:
        print(json.dumps({"error": "usage", "message": str(e)}), file=sys.stderr)
        return 2
    except NarsError as e:
        kind = type(e).__name__
        code = 2 if kind in ("SpaceParseError", "ValidationError") else 3
        print(json.dumps({"error": kind, "message": str(e)}), file=sys.stderr)
        return code
    except Exception as e:  # keep stderr machine-parsable for wrappers
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
