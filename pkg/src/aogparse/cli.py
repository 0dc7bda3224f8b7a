"""Command-line interface.

Subcommands: build, stats, count, render, gen, train, eval, parse,
gradcheck.  Every run prints its resolved configuration and seed; exit
codes are 0 ok, 2 usage, 3 data, 4 numeric.  The AOG_LOG environment
variable sets the logging level (e.g. AOG_LOG=DEBUG).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
try:
    import tomllib
except ModuleNotFoundError:      # Python < 3.11
    import tomli as tomllib
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import report
from .dot import to_dot
from .errors import AogError, DataError, ParameterError
from .grammar import ParseTree, build_aog, count_parse_trees
from .parsing import GradientMode, Mode
from .scoremaps import conv_backward, compute_terminal_maps, init_params, \
    pool_backward, pool_terminal, Roi
from .serial import load_aog, save_aog
from .synthetic import (SyntheticSpec, generate, jitter_rois, load_dataset,
                        save_dataset)
from .training import (Model, TrainConfig, evaluate, grad_check_end_to_end,
                       load_checkpoint, save_checkpoint, train)

log = logging.getLogger("aogparse")


def parse_grid(text: str) -> tuple[int, int]:
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise ParameterError(f"--grid expects WxH, got {text!r}")
    try:
        w, h = int(parts[0]), int(parts[1])
    except ValueError:
        raise ParameterError(f"--grid expects integers, got {text!r}") from None
    return w, h


def _add_aog_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--grid", default="3x3", help="grid size as WxH")
    p.add_argument("--lmin", type=int, default=1,
                   help="minimum side length of a cut piece")
    p.add_argument("--super-threshold", type=float, default=0.5,
                   help="area fraction above which an OR joins the super root")
    p.add_argument("--no-super-or", action="store_true",
                   help="root the graph at the full-grid OR node")
    p.add_argument("--in", dest="aog_in", default=None,
                   help="load the graph from a JSON file instead of building")


def _resolve_aog(args):
    if args.aog_in:
        return load_aog(args.aog_in)
    w, h = parse_grid(args.grid)
    return build_aog(w, h, args.lmin, args.super_threshold,
                     with_super_or=not args.no_super_or)


def _print_resolved(args) -> None:
    shown = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    print(f"resolved config: {shown}")


def _load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc


def _apply_toml(obj, data: dict, names: set[str]) -> None:
    for key, value in data.items():
        if key not in names:
            raise DataError(f"unknown config key {key!r}")
        setattr(obj, key, value)


def cmd_build(args) -> int:
    aog = _resolve_aog(args)
    save_aog(aog, args.out)
    counts = aog.counts_by_kind()
    print(f"wrote {args.out}: {len(aog.nodes)} nodes "
          f"({counts['terminal']} terminal / {counts['and']} and / "
          f"{counts['or']} or / {counts['super_or']} super-or)")
    return 0


def cmd_stats(args) -> int:
    aog = _resolve_aog(args)
    counts = aog.counts_by_kind()
    edges = sum(len(n.children) for n in aog.nodes)
    print(f"grid {aog.grid_w}x{aog.grid_h} l_min={aog.l_min} "
          f"threshold={aog.super_or_threshold}")
    print(f"terminals: {counts['terminal']}")
    print(f"and nodes: {counts['and']}")
    print(f"or nodes:  {counts['or']}")
    print(f"super-or:  {counts['super_or']} "
          f"(children: {len(aog.root.children) if counts['super_or'] else 0})")
    print(f"edges:     {edges}")
    return 0


def cmd_count(args) -> int:
    aog = _resolve_aog(args)
    node = None if args.at_root else aog.full_grid_symbol_id()
    print(count_parse_trees(aog, node))
    return 0


def cmd_render(args) -> int:
    aog = _resolve_aog(args)
    tree = None
    if args.tree:
        try:
            obj = json.loads(Path(args.tree).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read parse tree {args.tree}: {exc}") from exc
        tree = ParseTree.from_json_obj(aog, obj)
    Path(args.out).write_text(to_dot(aog, tree))
    print(f"wrote {args.out}")
    return 0


def cmd_gen(args) -> int:
    spec = SyntheticSpec()
    if args.spec:
        _apply_toml(spec, _load_toml(args.spec),
                    {f.name for f in fields(SyntheticSpec)})
    if args.seed is not None:
        spec.seed = args.seed
    train_set = generate(spec, spec.seed, spec.num_train)
    train_set = jitter_rois(train_set, spec.roi_jitter, spec.seed + 1)
    save_dataset(train_set, spec.grid_w, spec.grid_h, args.out)
    print(f"wrote {args.out}: {len(train_set)} samples, seed {spec.seed}")
    if args.out_test:
        test_set = generate(spec, spec.seed + 1000, spec.num_test)
        test_set = jitter_rois(test_set, spec.roi_jitter, spec.seed + 1001)
        save_dataset(test_set, spec.grid_w, spec.grid_h, args.out_test)
        print(f"wrote {args.out_test}: {len(test_set)} samples, "
              f"seed {spec.seed + 1000}")
    return 0


def cmd_train(args) -> int:
    cfg = TrainConfig()
    if args.config:
        data = _load_toml(args.config)
        if "gradient_mode" in data:
            data["gradient_mode"] = GradientMode(data["gradient_mode"])
        _apply_toml(cfg, data, {f.name for f in fields(TrainConfig)})
    for name in ("folding_epochs", "unfolding_epochs", "lr", "momentum",
                 "batch_size", "seed"):
        value = getattr(args, name)
        if value is not None:
            setattr(cfg, name, value)
    if args.gradient_mode:
        cfg.gradient_mode = GradientMode(args.gradient_mode)
    samples, grid_w, grid_h = load_dataset(args.data)
    aog = build_aog(grid_w, grid_h, args.lmin, args.super_threshold,
                    with_super_or=not args.no_super_or)
    num_classes = max(s.label for s in samples) + 1
    model = Model.new(aog, samples[0].feature.shape[0], num_classes, cfg.seed)
    model, history = train(model, samples, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out / "checkpoint.json")
    (out / "history.csv").write_text(history.to_csv())
    report.plot_history(history, out / "history.png")
    last = history.epochs[-1] if history.epochs else None
    print(f"trained {len(history.epochs)} epochs; "
          f"final loss {last.loss:.4f} acc {last.accuracy:.3f}"
          if last else "no epochs run")
    print(f"wrote {out/'checkpoint.json'}, {out/'history.csv'}, "
          f"{out/'history.png'}")
    return 0


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    samples, _, _ = load_dataset(args.data)
    mode = Mode(args.mode)
    result = evaluate(model, samples, mode, jobs=args.jobs)
    metrics = {
        "mode": mode.value,
        "accuracy": result.accuracy,
        "mean_loss": result.mean_loss,
        "mean_config_match": result.mean_match(),
        "num_samples": len(samples),
    }
    Path(args.out).write_text(json.dumps(metrics, indent=1) + "\n")
    print(json.dumps(metrics, indent=1))
    fig_path = Path(args.out).with_suffix(".png")
    report.plot_eval(result, fig_path)
    if fig_path.exists():
        print(f"wrote {args.out} and {fig_path}")
    return 0


def cmd_parse(args) -> int:
    model = load_checkpoint(args.checkpoint)
    samples, _, _ = load_dataset(args.data)
    if not 0 <= args.index < len(samples):
        raise DataError(f"sample index {args.index} out of range "
                        f"(dataset has {len(samples)})")
    result = evaluate(model, [samples[args.index]], Mode.UNFOLDING)
    record = result.results[0]
    from .training import terminal_score_table
    from .parsing import extract_parse_tree, forward
    table, _ = terminal_score_table(model, samples[args.index].feature,
                                    samples[args.index].roi)
    state = forward(model.aog, table, Mode.UNFOLDING)
    tree = extract_parse_tree(model.aog, state, record.predicted)
    prefix = Path(args.out)
    tree_path = prefix.with_suffix(".json")
    dot_path = prefix.with_suffix(".dot")
    tree_path.write_text(json.dumps(tree.to_json_obj(model.aog), indent=1) + "\n")
    dot_path.write_text(to_dot(model.aog, tree))
    print(f"sample {args.index}: predicted class {record.predicted} "
          f"(label {record.label}), {len(tree.terminal_ids)} parts")
    print(f"wrote {tree_path} and {dot_path}")
    return 0


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    aog = build_aog(2, 2, 1)
    d, c, h, w = 2, 3, 4, 4
    params = init_params(aog, d, c, seed=args.seed, stddev=0.5)
    feature = rng.normal(size=(d, h, w))
    roi = Roi(0, 0, w, h, label=1)

    # pooling adjoint: <pool(x), g> == <x, pool_backward(g)>
    maps = compute_terminal_maps(feature, params)
    tid = aog.terminal_ids[0]
    g = rng.normal(size=c)
    pooled = pool_terminal(maps, roi, aog, tid)
    gmap = np.zeros((c, h, w))
    pool_backward(g, roi, aog, tid, gmap)
    pool_err = abs(float(pooled @ g) -
                   float((maps.for_terminal(tid) * gmap).sum()))
    # conv adjoint: <conv(x), G> == <x, grad_feature> + <bias, sum G>
    gmaps = rng.normal(size=maps.maps.shape)
    _, _, gfeat = conv_backward(gmaps, feature, params)
    conv_err = abs(float((maps.maps * gmaps).sum()
                         - (feature * gfeat).sum()
                         - (params.bias * gmaps.sum(axis=(2, 3))).sum()))

    mode = Mode(args.mode)
    gradient_mode = GradientMode(args.gradient_mode)
    model = Model(aog, params)
    from .synthetic import Sample
    sample = Sample(feature, roi, 1, None)
    e2e = grad_check_end_to_end(model, sample, mode, step=1e-4,
                                gradient_mode=gradient_mode, max_coords=None)
    print(f"pooling adjoint error:  {pool_err:.3e}")
    print(f"conv adjoint error:     {conv_err:.3e}")
    print(f"end-to-end max rel err: {e2e:.3e} "
          f"(mode={mode.value}, gradient={gradient_mode.value})")
    ok = pool_err < 1e-10 and conv_err < 1e-8 and (
        gradient_mode != GradientMode.EXACT or e2e < 1e-4)
    if not ok:
        print("gradcheck FAILED", file=sys.stderr)
        return 4
    return 0


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="aogparse",
        description="Grid-grammar AND-OR graph parsing toolkit")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build a graph and write it as JSON")
    _add_aog_flags(p)
    p.add_argument("--out", default="aog.json")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("stats", help="node/edge counts by kind")
    _add_aog_flags(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("count", help="number of parse trees")
    _add_aog_flags(p)
    p.add_argument("--at-root", action="store_true",
                   help="count at the (super-OR) root instead of the "
                        "full-grid symbol")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("render", help="write the graph as Graphviz DOT")
    _add_aog_flags(p)
    p.add_argument("--tree", default=None,
                   help="parse-tree JSON to highlight")
    p.add_argument("--out", default="aog.dot")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--spec", default=None, help="TOML spec file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="train.bin")
    p.add_argument("--out-test", default=None,
                   help="also write a test split to this path")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="folding-unfolding training")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None, help="TOML training config")
    p.add_argument("--lmin", type=int, default=1)
    p.add_argument("--super-threshold", type=float, default=0.5)
    p.add_argument("--no-super-or", action="store_true")
    p.add_argument("--folding-epochs", type=int, default=None)
    p.add_argument("--unfolding-epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--momentum", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--gradient-mode", choices=["exact", "paper"], default=None)
    p.add_argument("--out", default="run")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=["folding", "unfolding"],
                   default="unfolding")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="metrics.json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("parse", help="best parse tree for one sample")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--out", default="tree",
                   help="output prefix (.json and .dot are appended)")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("gradcheck", help="adjoint and finite-difference checks")
    p.add_argument("--mode", choices=["folding", "unfolding"],
                   default="folding")
    p.add_argument("--gradient-mode", choices=["exact", "paper"],
                   default="exact")
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_gradcheck)
    return top


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("AOG_LOG", "WARNING"))
    args = build_parser().parse_args(argv)
    _print_resolved(args)
    try:
        return args.func(args)
    except AogError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
