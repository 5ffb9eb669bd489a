"""Command-line entry point: ``labeltree {train,predict,eval,dump-tree,bound}``."""
from __future__ import annotations

import argparse
import logging
import sys


from .assign import InfeasibleError
from .corpus import CorpusError, load_classification_corpus, load_lm_corpus, parse_classification_line
from .inference import perplexity, precision_at_1, predict_batch
from .model import CLASSIFY, LM
from .modelfile import ModelFileError, load_model, save_model
from .objective import boosting_node_bound
from .trainer import TREES, DivergedError, TrainConfig, train
from .tree import TreeError, dump_lines

log = logging.getLogger("labeltree")


class UsageError(Exception):
    pass


def _positive(kind):
    def conv(s):
        v = kind(s)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"expected a positive value, got {s}")
        return v
    return conv


def _nonneg_int(s):
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {s}")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="labeltree", description="Learned label trees for large output spaces.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--input", required=True)
    t.add_argument("--output", required=True)
    t.add_argument("--mode", choices=(CLASSIFY, LM), default=CLASSIFY)
    t.add_argument("--tree", choices=TREES, default="learned")
    t.add_argument("--arity", type=int, default=2)
    t.add_argument("--depth", type=_nonneg_int, default=0, help="depth cap; 0 = none")
    t.add_argument("--dim", type=_positive(int), default=32)
    t.add_argument("--lr", type=_positive(float), default=0.1)
    t.add_argument("--epochs", type=_nonneg_int, default=5)
    t.add_argument("--batch", type=_positive(int), default=1000)
    t.add_argument("--reassign", type=_nonneg_int, default=50)
    t.add_argument("--threads", type=_positive(int), default=1)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--min-count", type=_positive(int), default=1)
    t.add_argument("--context", type=_positive(int), default=4)
    t.add_argument("--optimizer", choices=("sgd", "adagrad"), default="sgd")
    t.add_argument("--log-nodes", action="store_true", default=None,
                   help="ascend log p at nodes in classify mode (always on for lm)")

    p = sub.add_parser("predict", help="write one predicted label per input line")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", default="-")

    e = sub.add_parser("eval", help="P@1 (classification) or perplexity (LM)")
    e.add_argument("--model", required=True)
    e.add_argument("--input", required=True)
    e.add_argument("--json", action="store_true", help="emit a JSON record instead of key=value")

    d = sub.add_parser("dump-tree", help="print one line per internal node")
    d.add_argument("--model", required=True)
    d.add_argument("--topk", type=_nonneg_int, default=4)

    b = sub.add_parser("bound", help="internal nodes sufficient for a target error")
    b.add_argument("--kappa", type=float, required=True)
    b.add_argument("--gamma", type=float, required=True)
    b.add_argument("--arity", type=int, required=True)
    b.add_argument("--labels", type=int, required=True)
    b.add_argument("--balanced", action="store_true")
    return ap


def _cmd_train(args) -> int:
    cfg = TrainConfig(mode=args.mode, tree=args.tree, arity=args.arity, depth=args.depth or None, dim=args.dim,
                      lr=args.lr, epochs=args.epochs, batch=args.batch, reassign=args.reassign,
                      threads=args.threads, seed=args.seed, context=args.context, optimizer=args.optimizer,
                      log_nodes=args.log_nodes)
    try:
        cfg.check()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.mode == CLASSIFY:
        corpus = load_classification_corpus(args.input, args.min_count)
        if len(corpus) == 0:
            raise CorpusError(f"{args.input}: no labeled examples")
    else:
        corpus = load_lm_corpus(args.input, args.min_count)
        if not corpus.sentences:
            raise CorpusError(f"{args.input}: no sentences")
    res = train(corpus, cfg)
    save_model(res.model, args.output)
    log.info("trained %d steps in %.1fs, %d rebuilds, %d internal nodes", res.steps, res.seconds,
             len(res.reports), res.model.tree.n_nodes)
    return 0


def _read_text(path) -> list[str]:
    if path == "-":
        return sys.stdin.read().splitlines()
    with open(path, encoding="utf-8") as fh:
        return fh.read().splitlines()


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    lines = _read_text(args.input)
    wid = {w: i for i, w in enumerate(model.words)}
    if model.mode == CLASSIFY:
        inputs = [[wid[t] for t in parse_classification_line(line)[1] if t in wid] for line in lines]
    else:
        unk, bos = wid["<unk>"], wid["<s>"]
        inputs = []
        for line in lines:
            ids = [bos] * model.context + [wid.get(w, unk) for w in line.split()]
            inputs.append(ids[::-1][: model.context])
    preds = predict_batch(model, inputs) if inputs else []
    text = "".join(model.label_names[int(i)] + "\n" for i in preds)
    if args.output == "-":
        sys.stdout.write(text)
    else:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0


def _cmd_eval(args) -> int:
    model = load_model(args.model)
    if model.mode == CLASSIFY:
        corpus = load_classification_corpus(args.input, words=model.words, label_names=model.label_names)
        report = precision_at_1(model, corpus)
    else:
        corpus = load_lm_corpus(args.input, words=model.words)
        report = perplexity(model, corpus)
    print(report.to_json() if args.json else report.to_line())
    return 0


def _cmd_dump(args) -> int:
    model = load_model(args.model)
    for line in dump_lines(model.tree, model.label_names, args.topk):
        print(line)
    return 0


def _cmd_bound(args) -> int:
    try:
        value = boosting_node_bound(args.kappa, args.gamma, args.arity, args.labels, args.balanced)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(f"{value:.10g}")
    return 0


COMMANDS = {"train": _cmd_train, "predict": _cmd_predict, "eval": _cmd_eval, "dump-tree": _cmd_dump,
            "bound": _cmd_bound}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="labeltree: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"labeltree {args.command}: {exc}", file=sys.stderr)
        return 2
    except (OSError, CorpusError, ModelFileError) as exc:
        print(f"labeltree {args.command}: {exc}", file=sys.stderr)
        return 1
    except (InfeasibleError, TreeError, DivergedError) as exc:
        print(f"labeltree {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
