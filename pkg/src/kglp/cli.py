"""``kglp`` command line: ingest, split, train, predict, evaluate, query, export."""
import argparse
import contextlib
import difflib
import os
import shlex
import sys

import numpy as np

from . import _accel
from .checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from .classifier import ClassifierConfig, build_pair_features, labels_from_scores, predict, train_classifier
from .gae import GaeConfig, encoder_forward, predict_pairs, relational_adjacency, train_gae
from .graph import canonical_pairs, load_graph
from .metrics import multiclass_metrics, score_prediction_file
from .optim import TrainConfig, train_kge
from .splits import (cold_start_split, read_split_bundle, split_interactions, write_manifest,
                     write_split_bundle)

MODELS = {"transe": "transe_l2", "transe-l1": "transe_l1", "transr": "transr",
          "rescal": "rescal", "distmult": "distmult", "complex": "complex"}
CLASSIFIERS = {"rf": "forest", "mlp": "mlp", "lstm": "lstm"}
LOCK_NAME = ".kglp.lock"


class CliError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers


def _read_graph(args):
    with open(args.graph, "rb") as fh:
        magic = fh.read(4)
    if magic == b"KGLP":
        return load_checkpoint(args.graph, kind="graph")
    return load_graph(args.graph, args.kinds, args.interaction_rel)


@contextlib.contextmanager
def output_lock(directory):
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, LOCK_NAME)
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise CliError(f"output directory {directory} is locked by another run ({path})") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        yield
    finally:
        os.close(fd)
        os.unlink(path)


def _out_dir(path):
    return os.path.dirname(os.path.abspath(path))


def read_pairs(path):
    """First two integer columns of a tab-separated file (``#`` lines skipped)."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.rstrip("\n").split("\t")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except (ValueError, IndexError):
                raise CliError(f"{path}: line {lineno}: expected head<TAB>tail ids") from None
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def read_types(path):
    pairs, labels = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.rstrip("\n").split("\t")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
                labels.append(int(parts[2]))
            except (ValueError, IndexError):
                raise CliError(f"{path}: line {lineno}: expected head<TAB>tail<TAB>label") from None
    return canonical_pairs(pairs), np.asarray(labels, dtype=np.int64)


def load_embeddings(path, kg):
    """Entity feature rows from a KGE checkpoint or a trained auto-encoder."""
    header, _ = read_checkpoint(path)
    obj = load_checkpoint(path, expect_vocab=kg.vocab_hash())
    if header["kind"] == "kge":
        return obj.entity_emb
    if header["kind"] == "gae":
        graph = kg.with_interactions(obj.train_pairs)
        return encoder_forward(obj, relational_adjacency(graph))[0]
    raise CliError(f"{path}: a {header['kind']} checkpoint holds no entity embeddings")


def _labelled_types(bundle, types_path, K):
    tpairs, tlabels = read_types(types_path)
    if tlabels.size and (tlabels.min() < 0 or tlabels.max() >= K):
        raise CliError(f"{types_path}: type labels must lie in 0..{K - 1}")
    lookup = {tuple(p): y for p, y in zip(tpairs.tolist(), tlabels.tolist())}
    train = [tuple(p) for p in bundle.train_pos.tolist() if tuple(p) in lookup]
    if not train:
        raise CliError(f"{types_path}: no training positives carry a type label")
    return np.asarray(train, dtype=np.int64), np.asarray([lookup[p] for p in train])


# --------------------------------------------------------------------------
# subcommands


def cmd_ingest(args):
    kg = _read_graph(args)
    with output_lock(_out_dir(args.out)):
        save_checkpoint(kg, args.out, seed=args.seed)
    print(f"entities\t{kg.entity_count}")
    print(f"relations\t{kg.relation_count}")
    print(f"triples\t{kg.triple_count}")
    print(f"interactions\t{len(kg.interaction_pairs())}")
    return 0


def cmd_split(args):
    kg = _read_graph(args)
    ratios = tuple(float(x) for x in args.ratios.split(","))
    with output_lock(args.out):
        if args.cold_start is None:
            bundle = split_interactions(kg, ratios, args.seed)
        else:
            cold = cold_start_split(kg, args.cold_start, args.seed, ratios)
            bundle = cold.residual_train
            for name in ("one_new", "both_new"):
                pairs, labels = cold.stratum(name)
                write_manifest(os.path.join(args.out, f"{name}.tsv"), pairs, labels, args.seed, name)
            with open(os.path.join(args.out, "held_out.tsv"), "w", encoding="utf-8") as fh:
                for e in cold.held_out.tolist():
                    fh.write(f"{e}\t{kg.entity_names[e]}\n")
        write_split_bundle(bundle, args.out)
    for name in ("train", "valid", "test"):
        print(f"{name}\t{len(getattr(bundle, name + '_pos'))}\t{len(getattr(bundle, name + '_neg'))}")
    return 0


def cmd_train_kge(args):
    kg = _read_graph(args)
    config = TrainConfig(model=MODELS[args.model], dim=args.dim, rel_dim=args.rel_dim, n_neg=args.neg,
                         batch_size=args.batch_size, max_epochs=args.epochs, patience=args.patience,
                         lr=args.lr, loss=args.loss, margin=args.margin, seed=args.seed)
    graph, vpos, vneg = kg, None, None
    if args.splits:
        bundle = read_split_bundle(args.splits)
        vpos, vneg = bundle.valid_pos, bundle.valid_neg
        if not args.leak_test_edges:
            graph = kg.with_interactions(bundle.train_pos)
    with output_lock(_out_dir(args.out)):
        params, history = train_kge(graph, vpos, vneg, config)
        save_checkpoint(params, args.out, vocab_hash=kg.vocab_hash(), seed=args.seed)
        history.write(args.history or args.out + ".history.tsv")
    print(f"epochs\t{len(history.records)}")
    print(f"best_epoch\t{history.best_epoch}")
    return 0


def _clf_config(args):
    cfg = ClassifierConfig()
    if args.epochs is not None:
        cfg.epochs = args.epochs
    if args.trees is not None:
        cfg.n_trees = args.trees
    return cfg


def cmd_train_clf(args):
    kg = _read_graph(args)
    bundle = read_split_bundle(args.splits)
    emb = load_embeddings(args.emb, kg)
    if args.classes > 2:
        if not args.types:
            raise CliError("--classes K > 2 needs --types with per-pair labels")
        pairs, labels = _labelled_types(bundle, args.types, args.classes)
    else:
        pairs, labels = bundle.pairs("train")
    feats = build_pair_features(emb, pairs)
    with output_lock(_out_dir(args.out)):
        model = train_classifier(CLASSIFIERS[args.clf], feats, labels, _clf_config(args), seed=args.seed,
                                 n_classes=args.classes if args.classes > 2 else None)
        save_checkpoint(model, args.out, vocab_hash=kg.vocab_hash(), seed=args.seed)
    print(f"trained\t{model.kind}\t{len(labels)}")
    return 0


def cmd_train_gae(args):
    kg = _read_graph(args)
    bundle = read_split_bundle(args.splits)
    x0, init = None, "xavier"
    if args.init.startswith("complex:"):
        params = load_checkpoint(args.init[len("complex:"):], expect_vocab=kg.vocab_hash(), kind="kge")
        if params.kind != "complex":
            raise CliError(f"--init complex: expects a ComplEx checkpoint, got {params.kind}")
        x0, init = params.entity_emb, "complex"
    elif args.init != "xavier":
        raise CliError(f"--init must be 'xavier' or 'complex:PATH', got {args.init!r}")
    config = GaeConfig(epochs=args.epochs, lr=args.lr, seed=args.seed,
                       input_dim=x0.shape[1] if x0 is not None else GaeConfig.input_dim)
    graph = kg.with_interactions(bundle.train_pos)
    with output_lock(_out_dir(args.out)):
        model = train_gae(graph, bundle.train_pos, bundle.train_neg, bundle.valid_pos,
                          bundle.valid_neg, config, x0=x0, init=init)
        save_checkpoint(model, args.out, vocab_hash=kg.vocab_hash(), seed=args.seed)
        model.history.write(args.history or args.out + ".history.tsv")
    print(f"epochs\t{len(model.history.records)}")
    print(f"best_epoch\t{model.history.best_epoch}")
    return 0


def cmd_predict(args):
    kg = _read_graph(args)
    header, _ = read_checkpoint(args.model)
    model = load_checkpoint(args.model, expect_vocab=kg.vocab_hash())
    pairs = canonical_pairs(read_pairs(args.pairs))
    multi = False
    if header["kind"] == "gae":
        graph = kg.with_interactions(model.train_pairs)
        scores = predict_pairs(model, relational_adjacency(graph), pairs)[:, None]
    elif header["kind"] == "classifier":
        if not args.emb:
            raise CliError("classifier checkpoints need --emb for pair features")
        scores = predict(model, build_pair_features(load_embeddings(args.emb, kg), pairs))
        multi = model.label_count > 1
    else:
        raise CliError(f"{args.model}: cannot predict with a {header['kind']} checkpoint")
    with output_lock(_out_dir(args.out)):
        with open(args.out, "w", encoding="utf-8") as fh:
            if multi:
                labels = labels_from_scores(scores)
                for (a, b), k, row in zip(pairs.tolist(), labels.tolist(), scores):
                    fh.write(f"{a}\t{b}\t{k}\t{float(row[k])!r}\n")
            else:
                for (a, b), s in zip(pairs.tolist(), scores[:, 0].tolist()):
                    fh.write(f"{a}\t{b}\t{s!r}\n")
    print(f"predicted\t{len(pairs)}")
    return 0


def cmd_evaluate(args):
    if args.types:
        tpairs, tlabels = read_types(args.types)
        truth = {tuple(p): y for p, y in zip(tpairs.tolist(), tlabels.tolist())}
        got = {}
        with open(args.predictions, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip() or line.startswith("#"):
                    continue
                parts = line.rstrip("\n").split("\t")
                try:
                    a, b, k = int(parts[0]), int(parts[1]), int(parts[2])
                except (ValueError, IndexError):
                    raise CliError(f"line {lineno}: expected head<TAB>tail<TAB>label<TAB>prob") from None
                got[(min(a, b), max(a, b))] = k
        missing = [p for p in truth if p not in got]
        if missing:
            raise CliError(f"{len(missing)} missing pair{'s' if len(missing) != 1 else ''}")
        keys = sorted(truth)
        report = multiclass_metrics([truth[p] for p in keys], [got[p] for p in keys], args.classes)
    else:
        from .splits import read_manifest
        pairs, labels, _ = read_manifest(args.truth)
        report = score_prediction_file(args.predictions, pairs, labels, args.threshold)
    lines = list(report.lines())
    print("\n".join(lines))
    if args.report:
        with output_lock(_out_dir(args.report)):
            import json
            from dataclasses import asdict
            with open(args.report, "w", encoding="utf-8") as fh:
                rec = report.to_record() if hasattr(report, "to_record") else asdict(report)
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return 0


def _resolve(name, vocab, what):
    if name in vocab:
        return vocab.index(name)
    close = difflib.get_close_matches(name, vocab, n=5, cutoff=0.5)
    hint = f"; nearest: {', '.join(close)}" if close else ""
    raise CliError(f"unknown {what} {name!r}{hint}")


def cmd_query(args):
    kg = _read_graph(args)
    e = _resolve(args.entity, list(kg.entity_names), "entity")
    r = _resolve(args.relation, list(kg.relation_names), "relation")
    for j in kg.neighbors(e, r, args.direction).tolist():
        print(kg.entity_names[j])
    return 0


def cmd_export_emb(args):
    kg = _read_graph(args)
    emb = load_embeddings(args.model, kg)
    with output_lock(_out_dir(args.out)):
        with open(args.out, "w", encoding="utf-8") as fh:
            for i, row in enumerate(emb):
                fh.write(f"{i}\t{','.join(repr(float(v)) for v in row)}\n")
    print(f"exported\t{len(emb)}\t{emb.shape[1]}")
    return 0


# --------------------------------------------------------------------------
# parser


def _graph_args(p):
    p.add_argument("--graph", required=True, help="triple TSV or an ingested graph checkpoint")
    p.add_argument("--kinds", help="entity<TAB>kind sidecar")
    p.add_argument("--interaction-rel", default="interacts")
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="kglp", description=__doc__)
    parser.add_argument("--config", help="flat key=value file of defaults for the subcommand")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse and index a triple file")
    _graph_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="write train/valid/test manifests")
    _graph_args(p)
    p.add_argument("--ratios", default="0.7,0.3,0.1", help="train,test,valid-of-train")
    p.add_argument("--cold-start", type=float, help="hold out this fraction of drugs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train-kge", help="train an embedding model")
    _graph_args(p)
    p.add_argument("--splits")
    p.add_argument("--model", choices=sorted(MODELS), default="complex")
    p.add_argument("--dim", type=int, default=900)
    p.add_argument("--rel-dim", type=int)
    p.add_argument("--neg", type=int, default=256)
    p.add_argument("--loss", choices=("margin", "logistic"))
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=1024)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--leak-test-edges", action="store_true",
                   help="embed on the full graph, valid/test interactions included")
    p.add_argument("--history")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_kge)

    p = sub.add_parser("train-clf", help="train a pair classifier on embeddings")
    _graph_args(p)
    p.add_argument("--splits", required=True)
    p.add_argument("--emb", required=True, help="KGE or GAE checkpoint")
    p.add_argument("--clf", choices=sorted(CLASSIFIERS), default="lstm")
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--types", help="head<TAB>tail<TAB>label file for K-way training")
    p.add_argument("--epochs", type=int)
    p.add_argument("--trees", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_clf)

    p = sub.add_parser("train-gae", help="train the R-GCN graph auto-encoder")
    _graph_args(p)
    p.add_argument("--splits", required=True)
    p.add_argument("--init", default="xavier", help="xavier or complex:PATH")
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--history")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_gae)

    p = sub.add_parser("predict", help="score pairs with a trained model")
    _graph_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--emb")
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score a prediction file against truth")
    p.add_argument("--predictions", required=True)
    p.add_argument("--truth", help="split manifest with 0/1 labels")
    p.add_argument("--types", help="head<TAB>tail<TAB>label truth for K-way evaluation")
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--report", help="write the machine-readable record here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("query", help="neighbours of an entity under a relation")
    _graph_args(p)
    p.add_argument("--entity", required=True)
    p.add_argument("--relation", required=True)
    p.add_argument("--direction", choices=("out", "in"), default="out")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("export-emb", help="write entity embeddings as text")
    _graph_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_emb)
    return parser


INPUT_PATHS = ("graph", "kinds", "splits", "emb", "pairs", "predictions", "truth", "types", "model")


def _apply_config(parser, argv):
    """Splice ``--config`` key=value pairs in as flags right after the subcommand."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        parser.error("--config needs a path")
    path = argv[i + 1]
    argv = argv[:i] + argv[i + 2:]
    sub = next((a for a in argv if not a.startswith("-")), None)
    subparsers = parser._subparsers._group_actions[0].choices
    if sub not in subparsers:
        parser.error("--config must accompany a subcommand")
    known = {opt for action in subparsers[sub]._actions for opt in action.option_strings}
    extra = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                parser.error(f"{path}: line {lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            flag = "--" + key.replace("_", "-")
            if flag not in known or flag in ("--help", "-h"):
                parser.error(f"{path}: unknown config key {key!r}")
            if value.lower() in ("true", "yes", "on"):
                extra.append(flag)
            elif value.lower() not in ("false", "no", "off"):
                extra.extend([flag, *shlex.split(value)])
    j = argv.index(sub) + 1
    return argv[:j] + extra + argv[j:]


def _validate(parser, args):
    if getattr(args, "model", None) == "complex" and getattr(args, "dim", 2) % 2:
        parser.error("ComplEx requires even dimension")
    for name in ("dim", "neg", "batch_size", "patience"):
        val = getattr(args, name, None)
        if val is not None and val <= 0:
            parser.error(f"--{name.replace('_', '-')} must be positive")
    if getattr(args, "epochs", None) is not None and args.epochs < 0:
        parser.error("--epochs must be non-negative")
    for name in INPUT_PATHS:
        val = getattr(args, name, None)
        if isinstance(val, str) and not os.path.exists(val) and not (name == "model" and args.command == "train-kge"):
            parser.error(f"--{name} path does not exist: {val}")
    init = getattr(args, "init", "xavier")
    if init.startswith("complex:") and not os.path.exists(init[len("complex:"):]):
        parser.error(f"--init checkpoint does not exist: {init[len('complex:'):]}")


def run(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_apply_config(parser, argv))
        _validate(parser, args)
    except SystemExit as exc:
        return int(exc.code or 0)
    _accel.configure_threads()
    try:
        return args.func(args)
    except Exception as exc:  # every failure is one greppable line
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
