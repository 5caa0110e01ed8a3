"""Command-line front end: ``vmfgae {generate,train,complete,score,eval}``.

Exit codes: 0 success, 1 usage error, 2 data or validation error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .adversarial import train
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, config_fields
from .errors import NumericalError, ValidationError
from .evaluation import edge_anomaly_scores, evaluate_run, node_anomaly_scores
from .graph import PartialGraph, PartialMask, apply_mask, load_graph, load_mask, write_matrix
from .matching import complete_graph
from .synth import generate_dataset, read_dataset, write_dataset

RESOLVED = "resolved_config.json"
CURVE_COLUMNS = ("epoch", "lr", "lp", "lgan", "total", "disc_loss")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _nullable(kind):
    def parse(text):
        if text.strip().lower() in ("none", "null"):
            return None
        return kind(text)

    parse.__name__ = kind.__name__
    return parse


_ALIASES = {"out_dir": ["--out"], "data_dir": ["--data"]}


def build_parser():
    parser = _Parser(prog="vmfgae", description="Hyperspherical graph autoencoder toolkit.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration; flags override its keys")
    for name, kind, nullable in config_fields():
        parse = _parse_bool if kind is bool else kind
        if nullable:
            parse = _nullable(kind)
        flags = ["--" + name.replace("_", "-")] + _ALIASES.get(name, [])
        common.add_argument(*flags, dest=name, type=parse, default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    helps = {
        "generate": "write a synthetic dataset (graphs, labels, manifest) to --out",
        "train": "train on --data and write --checkpoint plus a training curve",
        "complete": "complete the partial graph --graph (with --mask) into candidates",
        "score": "edge and node anomaly scores for --graph",
        "eval": "metrics CSV for the test split of --data",
    }
    for cmd, text in helps.items():
        sub.add_parser(cmd, parents=[common], help=text, description=text)
    return parser


def resolve_config(args):
    base = {}
    if getattr(args, "config", None):
        base = RunConfig.load(args.config).to_dict()
    overrides = {name: getattr(args, name) for name, _, _ in config_fields() if hasattr(args, name)}
    return RunConfig.from_dict({**base, **overrides})


def _out_dir(cfg):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.dump(out / RESOLVED)
    return out


def _require(cfg, key):
    v = getattr(cfg, key)
    if v is None:
        raise UsageError(f"--{key.replace('_', '-')} is required for this command")
    return v


def cmd_generate(cfg):
    ds = generate_dataset(cfg.connectome_spec(), cfg.test_count, cfg.anomaly_fraction, cfg.data_seed,
                          train_count=cfg.train_count, kind=cfg.anomaly_kind, severity=cfg.severity)
    out = _out_dir(cfg)
    write_dataset(ds, out)
    print(f"wrote {len(ds.train)} train and {len(ds.test)} test graphs to {out}")


def write_curve(history, path):
    with open(path, "w") as fh:
        fh.write(",".join(CURVE_COLUMNS) + "\n")
        for r in history.records:
            vals = (r.losses.lr, r.losses.lp, r.losses.lgan, r.total, r.disc_loss)
            fh.write(f"{r.epoch}," + ",".join(repr(float(v)) for v in vals) + "\n")


def cmd_train(cfg):
    ds = read_dataset(cfg.data_dir)
    tcfg = cfg.train_config()
    model, disc, history = train(ds.train, tcfg)
    out = _out_dir(cfg)
    Path(cfg.checkpoint).parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(cfg.checkpoint, model, disc, config=cfg.to_dict(), epoch=tcfg.epochs,
                    rng_note=f"PCG64 streams spawned from SeedSequence({tcfg.seed}); not resumable")
    write_curve(history, out / "training_curve.csv")
    if history.records:
        first, last = history[0].total, history[-1].total
        print(f"epoch 1 loss {first:.6g}, epoch {history[-1].epoch} loss {last:.6g}")
    print(f"checkpoint written to {cfg.checkpoint}")


def _input_partial(cfg):
    g = load_graph(_require(cfg, "graph"), cfg.features)
    if cfg.mask is None:
        return PartialGraph(g, PartialMask.full(g.n))
    mask = load_mask(cfg.mask)
    if mask.n != g.n:
        raise ValidationError(f"mask is {mask.n}x{mask.n}, graph has {g.n} nodes")
    return apply_mask(g, mask)


def _complete(cfg, model, pg):
    rng = np.random.default_rng(cfg.eval_seed)
    return complete_graph(pg, model, cfg.k, cfg.restarts, rng, cfg.completion_config())


def cmd_complete(cfg):
    pg = _input_partial(cfg)
    model, _, _ = load_checkpoint(cfg.checkpoint)
    result = _complete(cfg, model, pg)
    out = _out_dir(cfg)
    summary = []
    for rank, c in enumerate(result.candidates):
        write_matrix(out / f"candidate_{rank}.csv", c.graph)
        summary.append({"rank": rank, "restart": c.latent.restart, "objective": c.objective,
                        "recon_loss": c.latent.recon_loss, "match_loss": c.latent.match_loss,
                        "rounds": len(c.latent.trace)})
    doc = {"candidates": summary, "failures": [list(f) for f in result.failures]}
    (out / "completion.json").write_text(json.dumps(doc, indent=2) + "\n")
    print(f"{len(result)} candidate(s) written to {out}")


def cmd_score(cfg):
    pg = _input_partial(cfg)
    model, _, _ = load_checkpoint(cfg.checkpoint)
    result = _complete(cfg, model, pg)
    edges = edge_anomaly_scores(pg.graph, result.best.graph, cfg.score_variant)
    nodes = node_anomaly_scores(edges)
    out = _out_dir(cfg)
    write_matrix(out / "edge_scores.csv", edges)
    with open(out / "node_scores.csv", "w") as fh:
        fh.write("node,score\n")
        for i, v in enumerate(nodes):
            fh.write(f"{i},{float(v)!r}\n")
    print(f"scores written to {out}")


def cmd_eval(cfg):
    model, _, _ = load_checkpoint(cfg.checkpoint)
    ds = read_dataset(cfg.data_dir)
    report = evaluate_run(model, ds.test, cfg.eval_config())
    out = _out_dir(cfg)
    report.to_csv(out / "metrics.csv")
    for note in report.notes:
        print(f"note: {note}")
    if report.rows:
        agg = report.aggregates["mean"]
        print(f"mean node AUC {agg['node_auc']:.4f}, mean edge AUC {agg['edge_auc']:.4f}")
    print(f"metrics written to {out / 'metrics.csv'}")


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "complete": cmd_complete,
            "score": cmd_score, "eval": cmd_eval}


def run_command(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("a subcommand is required")
        cfg = resolve_config(args)
        COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"vmfgae: usage error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"vmfgae: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ValidationError, OSError) as exc:
        print(f"vmfgae: error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
