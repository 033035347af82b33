"""``mdser`` command line.

Subcommands::

    mdser synth  --out DIR [--config C] [--seed N]
    mdser train  --config C [--out DIR] [--seed N] [--variant TAG]
    mdser eval   --config C --checkpoint PREFIX [--split test] [--seed N] [--out DIR]
    mdser report --config C --checkpoint PREFIX [--out DIR] [--split test] [--seed N]
    mdser suite  {ladder,ablation,gates} --config C [--out DIR] [--seed N]

Exit codes: 0 success, 1 usage, 2 invalid input (config, corpus, missing
files), 3 runtime failure.  On failure every file the command created is
removed again.  ``MDSER_OUTPUT_ROOT`` sets the default output root.
"""

from __future__ import annotations

import argparse
import logging
import shutil
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, parse_config
from .data import CorpusError, SyntheticSpec, generate_synthetic, save_corpus
from .evaluation import domain_compactness, embedding_dump, gate_report
from .experiments import LADDER, attribution_table, gate_attribution, run_ablation, run_ladder
from .models import build_model, load_checkpoint, save_checkpoint
from .training import TrainingError, evaluate, fit, split_corpus

logger = logging.getLogger("mdser")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3
SPLITS = ("train", "val", "test", "all")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class Outputs:
    """Tracks what a command writes so a failure can undo it."""

    def __init__(self, root):
        self.root = Path(root)
        self.existed = self.root.exists()
        self.created = []

    def dir(self, *parts):
        path = self.root.joinpath(*parts)
        missing = [p for p in [path, *path.parents] if not p.exists()]
        path.mkdir(parents=True, exist_ok=True)
        self.created.extend(missing)
        return path

    def path(self, *parts):
        path = self.root.joinpath(*parts)
        self.dir(*parts[:-1])
        self.created.append(path)
        return path

    def write(self, text, *parts):
        path = self.path(*parts)
        path.write_text(text, encoding="utf-8")
        return path

    def rollback(self):
        if not self.existed:
            shutil.rmtree(self.root, ignore_errors=True)
            return
        for p in sorted(set(self.created), key=lambda q: len(q.parts), reverse=True):
            if p.is_dir():
                shutil.rmtree(p, ignore_errors=True)
            else:
                p.unlink(missing_ok=True)


def build_parser():
    parser = _Parser(prog="mdser", description="Multi-domain speech emotion recognition experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="experiment config (YAML)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="run this seed only")
        p.add_argument("--variant", help="override the configured variant")

    p = sub.add_parser("synth", help="write a synthetic corpus")
    common(p, config_required=False)

    p = sub.add_parser("train", help="train every configured seed")
    common(p)

    for name in ("eval", "report"):
        p = sub.add_parser(name, help="score a checkpoint" if name == "eval" else "gate, NAS and compactness tables")
        common(p)
        p.add_argument("--checkpoint", required=True, help="checkpoint prefix (without extension)")
        p.add_argument("--split", choices=SPLITS, default="test")

    p = sub.add_parser("suite", help="canned experiment protocols")
    p.add_argument("protocol", choices=("ladder", "ablation", "gates"))
    common(p)
    return parser


def _load_config(args):
    config = parse_config(args.config) if args.config else ExperimentConfig(synthetic={}).validate()
    changes = {}
    if args.seed is not None:
        changes["seeds"] = [args.seed]
    if args.variant is not None:
        changes["variant"] = args.variant
    return config.replace(**changes) if changes else config


def _out_root(args, config, default):
    return Path(args.out) if args.out else config.output_root() / default


def _select(corpus, split, seed):
    if split == "all":
        return corpus.by_domain()
    train, val, test = split_corpus(corpus, seed)
    return {"train": train, "val": val, "test": test}[split]


def cmd_synth(args, config):
    spec_data = dict(config.synthetic or {})
    if args.seed is not None:
        spec_data["seed"] = args.seed
    corpus = generate_synthetic(SyntheticSpec.from_dict(spec_data))
    out = Outputs(_out_root(args, config, "corpus"))
    try:
        if out.existed and any(out.root.iterdir()):
            raise ConfigError(f"--out: {out.root} exists and is not empty")
        out.dir()
        save_corpus(corpus, out.root)
    except BaseException:
        out.rollback()
        raise
    print(f"wrote {len(corpus.bundles)} bundles to {out.root}")


def cmd_train(args, config):
    corpus = config.load_data()
    out = Outputs(_out_root(args, config, config.variant))
    try:
        out.write(config.dump(), "config.yaml")
        summary = ["seed\tbest_epoch\tbest_val_UA\ttest_mean_UA\ttest_mean_WA"]
        for seed in config.seeds:
            model = build_model(config.model_spec(corpus.manifest), seed)
            train, val, test = split_corpus(corpus, seed)
            result = fit(model, train, val, config.schedule(seed), config.alphas(train))
            scores, _ = evaluate(model, test)
            run_dir = f"seed{seed}"
            out.write(result.log_lines(), run_dir, "train_log.jsonl")
            prefix = out.path(run_dir, "model")
            for ext in (".bin", ".manifest", ".json"):
                out.created.append(prefix.with_name("model" + ext))
            save_checkpoint(model, prefix)
            out.write(scores.to_table(), run_dir, "test_eval.tsv")
            summary.append(
                f"{seed}\t{result.best_epoch}\t{result.best_val_ua:.6f}\t{scores.mean_ua():.6f}\t{scores.mean_wa():.6f}"
            )
            print(f"seed {seed}: best epoch {result.best_epoch}, test mean UA {scores.mean_ua():.4f}")
        out.write("\n".join(summary) + "\n", "summary.tsv")
    except BaseException:
        out.rollback()
        raise
    print(f"outputs in {out.root}")


def _checkpoint(args):
    try:
        return load_checkpoint(args.checkpoint)
    except FileNotFoundError as exc:
        raise ConfigError(str(exc)) from None


def cmd_eval(args, config):
    model = _checkpoint(args)
    corpus = config.load_data()
    data = _select(corpus, args.split, config.seeds[0])
    scores, _ = evaluate(model, data)
    table = scores.to_table()
    sys.stdout.write(table)
    print(f"mean\t{scores.mean_wa():.6f}\t{scores.mean_ua():.6f}")
    if args.out:
        out = Outputs(args.out)
        try:
            out.write(table, f"eval_{args.split}.tsv")
        except BaseException:
            out.rollback()
            raise


def cmd_report(args, config):
    model = _checkpoint(args)
    corpus = config.load_data()
    data = _select(corpus, args.split, config.seeds[0])
    out = Outputs(_out_root(args, config, "report"))
    try:
        if model.gates is not None:
            report = gate_report(model, data)
            path = out.path("gates.tsv")
            if report.connectivity:
                out.created.append(path.with_name("gates_nas.tsv"))
            report.write(path)
            sys.stdout.write(report.to_text())
        lines = ["domain\tintra\tinter\tratio"]
        for domain, score in domain_compactness(model, data).items():
            lines.append(f"{domain}\t{score.intra:.6f}\t{score.inter:.6f}\t{score.ratio:.6f}")
        text = "\n".join(lines) + "\n"
        out.write(text, "compactness.tsv")
        sys.stdout.write(text)
        embedding_dump(model, data, out.path("embeddings.tsv"))
    except BaseException:
        out.rollback()
        raise


def _informative(config):
    if config.synthetic is None:
        raise ConfigError("suite gates: needs a synthetic corpus (informative features must be known)")
    spec = SyntheticSpec.from_dict(config.synthetic)
    return {d: feats[0] for d, feats in spec.informative.items() if len(feats) == 1}


def cmd_suite(args, config):
    corpus = config.load_data()
    out = Outputs(_out_root(args, config, f"suite_{args.protocol}"))

    def progress(run):
        print(f"{run.variant} seed {run.seed}: test mean UA {run.scores.mean_ua():.4f}", flush=True)

    try:
        out.write(config.dump(), "config.yaml")
        if args.protocol == "ladder":
            result = run_ladder(config, corpus, LADDER, on_run=progress)
            out.write(result.to_table(), "ladder.tsv")
            sys.stdout.write(result.to_table())
        elif args.protocol == "ablation":
            result = run_ablation(config, corpus, on_run=progress)
            out.write(result.to_table(), "ablation.tsv")
            sys.stdout.write(result.to_table())
        else:
            informative = _informative(config)
            variants = ("MMoE", "Ours")
            ladder = run_ladder(config, corpus, variants, on_run=progress)
            counts = {v: gate_attribution(ladder.runs[v], informative) for v in variants}
            out.write(attribution_table(counts), "gate_attribution.tsv")
            for v in variants:
                for run in ladder.runs[v]:
                    out.write(run.gates.to_text(), f"gates_{v}_seed{run.seed}.tsv")
            sys.stdout.write(attribution_table(counts))
    except BaseException:
        out.rollback()
        raise


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "report": cmd_report, "suite": cmd_suite}


def run_command(argv=None):
    """Parse ``argv`` and run it; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("mdser: a subcommand is required (synth, train, eval, report, suite)")
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _load_config(args)
        COMMANDS[args.command](args, config)
    except (ConfigError, CorpusError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (TrainingError, ValueError, KeyError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
