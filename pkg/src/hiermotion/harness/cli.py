"""Command-line interface.

Subcommands: make-dataset, train-vae, train-diffusion, generate, evaluate,
refine, serve.  Every command writes its artifacts under the output directory
with a manifest; failures exit nonzero with a machine-readable JSON error on
stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
import time
from pathlib import Path

from .. import semgraph
from ..diffusion import GenerationResult, MissingCheckpoint
from ..embed import make_encoder
from ..harness import experiment
from ..motionrep import save_motion
from ..semgraph import EditKind, EditOp, Level, Relation, SemanticGraph
from .config import ConfigError, ExperimentConfig


class MissingArtifact(Exception):
    pass


def _fail(code: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": code, "message": message}) + "\n")
    return 1


def _load_config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        return ExperimentConfig.load(args.config)
    return ExperimentConfig()


def _resolve_node(graph: SemanticGraph, ref: str) -> str:
    if graph.has_node(ref):
        return ref
    matches = [n.id for n in graph.nodes if n.text.lower() == ref.lower()]
    if len(matches) == 1:
        return matches[0]
    if not matches:
        raise semgraph.UnknownNode(f"no node with id or text {ref!r}")
    raise semgraph.UnknownNode(f"text {ref!r} is ambiguous: {matches}")


_EDIT_RE = re.compile(r"^(?P<kind>edge|mask|modify|delete|add):(?P<body>.+)$")


def parse_edit_expr(graph: SemanticGraph, expr: str) -> EditOp:
    """Compact edit syntax used by --edit flags.

    edge:SRC->DST weight=2.0       (SRC/DST are node ids or unique node texts)
    mask:NODE
    modify:NODE text=new text
    delete:NODE
    add:PARENT level=specific text=to the left relation=ARGM-DIR
    """
    m = _EDIT_RE.match(expr.strip())
    if not m:
        raise semgraph.InvalidEdit(f"cannot parse edit {expr!r}")
    kind, body = m.group("kind"), m.group("body").strip()
    if kind == "edge":
        mm = re.match(r"^(.+?)\s*(?:->|→)\s*(.+?)\s+weight\s*=\s*([-0-9.eE]+)$", body)
        if not mm:
            raise semgraph.InvalidEdit(f"edge edit must look like "
                                       f"'edge:src->dst weight=W', got {expr!r}")
        src = _resolve_node(graph, mm.group(1).strip())
        dst = _resolve_node(graph, mm.group(2).strip())
        return EditOp(EditKind.SET_EDGE_WEIGHT, src=src, dst=dst,
                      weight=float(mm.group(3)))
    if kind in ("mask", "delete"):
        node = _resolve_node(graph, body)
        op_kind = EditKind.MASK_NODE if kind == "mask" else EditKind.DELETE_NODE
        return EditOp(op_kind, node=node)
    if kind == "modify":
        mm = re.match(r"^(\S+)\s+text\s*=\s*(.+)$", body)
        if not mm:
            raise semgraph.InvalidEdit("modify edit must look like "
                                       "'modify:node text=...'")
        return EditOp(EditKind.MODIFY_NODE, node=_resolve_node(graph, mm.group(1)),
                      text=mm.group(2).strip().strip("'\""))
    # add
    mm = re.match(r"^(\S+)\s+(.*)$", body)
    if not mm:
        raise semgraph.InvalidEdit("add edit must name a parent node")
    parent = _resolve_node(graph, mm.group(1))
    fields = dict(re.findall(r"(level|text|relation)\s*=\s*('[^']*'|\"[^\"]*\"|\S+)",
                             mm.group(2)))
    if "level" not in fields or "text" not in fields:
        raise semgraph.InvalidEdit("add edit needs level= and text=")
    relation = None
    if "relation" in fields:
        relation = Relation(fields["relation"].strip("'\""))
    return EditOp(EditKind.ADD_NODE, parent=parent,
                  level=Level(fields["level"].strip("'\"")),
                  text=fields["text"].strip("'\""), relation=relation)


def _write_generation(result: GenerationResult, out: Path, stem: str) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    (out / f"{stem}.graph.json").write_text(semgraph.to_json(result.graph))
    files["graph"] = f"{stem}.graph.json"
    save_motion(result.final, out / f"{stem}.motion.bin")
    files["motion"] = f"{stem}.motion.bin"
    for level, motion in result.motions.items():
        save_motion(motion, out / f"{stem}.{level}.bin")
        files[level] = f"{stem}.{level}.bin"
    manifest = {"seed": result.seed, "files": files,
                "frames": result.final.length, "fps": result.final.fps}
    (out / f"{stem}.manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest


def cmd_make_dataset(args) -> int:
    config = _load_config(args)
    if args.size:
        config.dataset_size = args.size
    if args.seed is not None:
        config.dataset_seed = args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = experiment.build_dataset(config)
    experiment.write_manifest(config, dataset, out)
    motions_dir = out / "motions"
    motions_dir.mkdir(exist_ok=True)
    for i, sample in enumerate(dataset.samples):
        save_motion(sample.motion, motions_dir / f"{i:05d}.bin")
    print(f"wrote {len(dataset.samples)} samples to {out}")
    return 0


def cmd_train_vae(args) -> int:
    config = _load_config(args)
    out = Path(args.out)
    dataset = experiment.build_dataset(config)
    experiment.write_manifest(config, dataset, out)
    levels = ["motion", "action", "specific"] if args.level == "all" else [args.level]
    experiment.train_vaes(config, dataset, out, levels=levels, verbose=not args.quiet)
    print(f"trained VAE level(s) {levels} -> {out}")
    return 0


def cmd_train_diffusion(args) -> int:
    config = _load_config(args)
    out = Path(args.out)
    dataset = experiment.build_dataset(config)
    try:
        vaes = experiment.load_vaes(out)
    except MissingCheckpoint:
        if not args.train_missing:
            raise MissingArtifact(
                f"no VAE checkpoints under {out}; run train-vae first "
                "or pass --train-missing")
        experiment.write_manifest(config, dataset, out)
        vaes = experiment.train_vaes(config, dataset, out, verbose=not args.quiet)
    encoder = make_encoder(config.encoder, config.node_dim)
    experiment.train_denoiser(config, dataset, vaes, encoder, out,
                              verbose=not args.quiet)
    experiment.train_eval_model(config, dataset, out, vaes=vaes,
                                verbose=not args.quiet)
    print(f"trained diffusion stack -> {out}")
    return 0


def _sampler_overrides(args) -> dict:
    overrides = {}
    if getattr(args, "steps", None):
        parts = [int(x) for x in args.steps.split(",")]
        if len(parts) != 3:
            raise ConfigError("--steps wants three comma-separated counts")
        overrides["steps"] = {"motion": parts[0], "action": parts[1],
                              "specific": parts[2]}
    if getattr(args, "guidance", None) is not None:
        overrides["guidance"] = args.guidance
    if getattr(args, "eta", None) is not None:
        overrides["eta"] = args.eta
    return overrides


def cmd_generate(args) -> int:
    bundle = experiment.Bundle.load(Path(args.checkpoints))
    if args.graph:
        graph = semgraph.from_json(Path(args.graph).read_text())
    elif args.text:
        graph = bundle.parse(args.text)
    else:
        raise ConfigError("generate needs --text or --graph")
    result = bundle.generate(graph, seed=args.seed, length=args.length,
                             sampler_overrides=_sampler_overrides(args))
    manifest = _write_generation(result, Path(args.out), args.name)
    print(json.dumps(manifest, indent=2))
    return 0


def cmd_refine(args) -> int:
    bundle = experiment.Bundle.load(Path(args.checkpoints))
    graph = semgraph.from_json(Path(args.graph).read_text())
    edits = [parse_edit_expr(graph, e) for e in args.edit]
    baseline = bundle.generate(graph, seed=args.seed, length=args.length,
                               sampler_overrides=_sampler_overrides(args))
    refined = bundle.refine(graph, edits, seed=args.seed, length=args.length,
                            sampler_overrides=_sampler_overrides(args))
    out = Path(args.out)
    manifest = _write_generation(refined, out, args.name)
    diff = {
        "edits": [e.to_dict() for e in edits],
        "displacement": {
            d: {"baseline": baseline.final.displacement_along(d),
                "refined": refined.final.displacement_along(d)}
            for d in ("forward", "backward", "left", "right")
        },
    }
    (out / f"{args.name}.diff.json").write_text(json.dumps(diff, indent=2))
    manifest["diff"] = f"{args.name}.diff.json"
    print(json.dumps(diff["displacement"], indent=2))
    return 0


def cmd_evaluate(args) -> int:
    out = Path(args.checkpoints)
    bundle = experiment.Bundle.load(out)
    dataset = experiment.build_dataset(bundle.config)
    report = experiment.evaluate_bundle(
        bundle, dataset, split=args.split, repeats=args.repeats, seed=args.seed,
        max_samples=args.max_samples,
        mmodality_texts=args.mmodality_texts)
    report_path = Path(args.out) if args.out else out / "metrics.json"
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    print(report.table())
    print(f"report -> {report_path}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    bundle = experiment.Bundle.load(Path(args.checkpoints))
    app = create_app(bundle, static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hiermotion",
                                description="Hierarchical semantic-graph motion "
                                            "generation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, checkpoints=False):
        sp.add_argument("--config", help="experiment config JSON")
        if checkpoints:
            sp.add_argument("--checkpoints",
                            default=os.environ.get("HIERMOTION_CHECKPOINTS",
                                                   "runs/default"),
                            help="directory with trained checkpoints "
                                 "(env: HIERMOTION_CHECKPOINTS)")

    sp = sub.add_parser("make-dataset", help="generate the toy corpus")
    common(sp)
    sp.add_argument("--out", default="runs/default")
    sp.add_argument("--size", type=int)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_make_dataset)

    sp = sub.add_parser("train-vae", help="train per-level motion VAEs")
    common(sp)
    sp.add_argument("--out", default="runs/default")
    sp.add_argument("--level", choices=["motion", "action", "specific", "all"],
                    default="all")
    sp.add_argument("--quiet", action="store_true")
    sp.set_defaults(func=cmd_train_vae)

    sp = sub.add_parser("train-diffusion",
                        help="train the denoiser stack and the evaluator")
    common(sp)
    sp.add_argument("--out", default="runs/default")
    sp.add_argument("--train-missing", action="store_true",
                    help="train VAEs first if their checkpoints are absent")
    sp.add_argument("--quiet", action="store_true")
    sp.set_defaults(func=cmd_train_diffusion)

    sp = sub.add_parser("generate", help="generate a motion from text or graph")
    common(sp, checkpoints=True)
    sp.add_argument("--text")
    sp.add_argument("--graph", help="graph JSON file")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--length", type=int)
    sp.add_argument("--steps", help="per-level DDIM steps, e.g. 15,15,20")
    sp.add_argument("--guidance", type=float)
    sp.add_argument("--eta", type=float)
    sp.add_argument("--out", default="runs/default/generations")
    sp.add_argument("--name", default="sample")
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("refine", help="apply graph edits and regenerate")
    common(sp, checkpoints=True)
    sp.add_argument("--graph", required=True)
    sp.add_argument("--edit", action="append", default=[],
                    help="edit expression, e.g. \"edge:walks->to the left weight=2.0\"")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--length", type=int)
    sp.add_argument("--steps")
    sp.add_argument("--guidance", type=float)
    sp.add_argument("--eta", type=float)
    sp.add_argument("--out", default="runs/default/refinements")
    sp.add_argument("--name", default="refined")
    sp.set_defaults(func=cmd_refine)

    sp = sub.add_parser("evaluate", help="run the metric suite on a split")
    common(sp, checkpoints=True)
    sp.add_argument("--split", choices=["train", "test"], default="test")
    sp.add_argument("--repeats", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--max-samples", type=int)
    sp.add_argument("--mmodality-texts", type=int, default=0,
                    help="texts to probe for MModality (0 skips it)")
    sp.add_argument("--out", help="metric report path (default <ckpt>/metrics.json)")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("serve", help="start the refinement HTTP service")
    common(sp, checkpoints=True)
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8080)
    sp.add_argument("--static", help="directory with the studio build to serve at /")
    sp.set_defaults(func=cmd_serve)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, semgraph.GraphError) as exc:
        return _fail("config", str(exc))
    except (MissingCheckpoint, MissingArtifact) as exc:
        return _fail("missing-artifact", str(exc))
    except FileNotFoundError as exc:
        return _fail("missing-file", str(exc))


if __name__ == "__main__":
    sys.exit(main())
