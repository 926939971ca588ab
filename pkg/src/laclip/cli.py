"""Command line entry point: one executable, one subcommand per workflow.

Exit codes: 0 success, 1 usage error (bad flags), 2 data error (bad
manifests, stores, ids, or failed checks). Machine-readable results go to
stdout; human diagnostics and progress go to stderr. Output files are
written atomically, and identical invocations over identical inputs
produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import dataset, evaluation, trainer
from ._util import atomic_write
from .alignment import DEFAULT_ALPHA, weights_for_record
from .errors import LaclipError, ManifestError, UnknownIdError
from .retrieval import RetrievalIndex, build_index, query_i2t, query_t2i
from .store import read_store, records_by_id
from .trainer import ProjectionHead, TrainConfig


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; remap to this package's code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _nonneg_float(text: str) -> float:
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _pos_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _diag(message: str) -> None:
    print(message, file=sys.stderr)


def build_parser() -> _Parser:
    parser = _Parser(prog="laclip", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check a manifest and print its summary")
    p.add_argument("--manifest", required=True)
    p.add_argument("--lenient", action="store_true",
                   help="collect all errors instead of stopping at the first")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("split", help="assign 7:1:2 train/test/val splits")
    p.add_argument("--manifest", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True, help="manifest rewritten with split fields")
    p.add_argument("--assignments", help="optional id<TAB>split TSV")
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train", help="fit projection heads on the train split")
    p.add_argument("--texts", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="train", choices=dataset.SPLITS)
    p.add_argument("--val-split", default="val", choices=dataset.SPLITS + ("none",))
    p.add_argument("--batch", type=_pos_int, default=32)
    p.add_argument("--lr", type=_nonneg_float, default=5e-5)
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--optimizer", default="adam", choices=trainer.OPTIMIZERS)
    p.add_argument("--tau", type=_nonneg_float, default=1.0, help="initial temperature")
    p.add_argument("--out", required=True, help="trained head file")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("retrieve", help="top-K retrieval for one query")
    p.add_argument("--direction", required=True, choices=("t2i", "i2t"))
    p.add_argument("--mode", default="local", choices=("local", "global"))
    p.add_argument("--alpha", type=_nonneg_float, default=DEFAULT_ALPHA)
    p.add_argument("--k", type=_pos_int, default=10)
    p.add_argument("--texts", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--query-id", required=True)
    p.add_argument("--lenient", action="store_true",
                   help="clamp oversized K and allow patch-free images in local mode")
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("eval", help="R@1/5/10 and mean recall over a gold file")
    p.add_argument("--texts", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--gold", required=True, help="tab-separated text_id image_id lines")
    p.add_argument("--mode", default="local", choices=("local", "global"))
    p.add_argument("--alpha", type=_nonneg_float, default=DEFAULT_ALPHA)
    p.add_argument("--report", help="also write the machine report to this file")
    p.add_argument("--pool-by-category", action="store_true",
                   help="retrieve within each category pool instead of the full split")
    p.add_argument("--manifest", help="required with --pool-by-category")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("inspect-weights", help="print patch weights for one image")
    p.add_argument("--images", required=True)
    p.add_argument("--image-id", required=True)
    p.add_argument("--alpha", type=_nonneg_float, default=DEFAULT_ALPHA)
    p.set_defaults(func=_cmd_inspect_weights)

    p = sub.add_parser("mr-check", help="verify published mean-recall rows")
    p.add_argument("--fixtures", help="TSV of benchmark rows (default: bundled)")
    p.add_argument("--slack", type=_nonneg_float, default=evaluation.MR_SLACK)
    p.set_defaults(func=_cmd_mr_check)

    p = sub.add_parser("apply-head", help="project a store through a trained head")
    p.add_argument("--head", required=True)
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--modality", required=True, choices=trainer.MODALITIES)
    p.set_defaults(func=_cmd_apply_head)
    return parser


def _cmd_validate(args) -> int:
    if args.lenient:
        records, errors = dataset.scan_manifest(args.manifest)
        for err in errors:
            _diag(f"line {err.line_no}: {err}")
        if errors:
            _diag(f"{len(errors)} error(s) in {args.manifest}")
            return 2
    else:
        records = dataset.parse_manifest(args.manifest)
    summary = dataset.summarize(records)
    print(f"total\t{summary.total}")
    for (source, volume, category), count in sorted(summary.counts.items()):
        print(f"count\t{source}\t{volume}\t{category}\t{count}")
    return 0


def _cmd_split(args) -> int:
    records = dataset.parse_manifest(args.manifest)
    assignment = dataset.assign_splits(records, args.seed)
    dataset.write_manifest(dataset.with_splits(records, assignment), args.out)
    if args.assignments:
        with atomic_write(args.assignments, "w") as handle:
            handle.write(assignment.to_tsv())
    labels = list(assignment.labels.values())
    for split in dataset.SPLITS:
        print(f"{split}\t{labels.count(split)}")
    _diag(f"assigned {len(labels)} records with seed {args.seed}")
    return 0


def _paired_matrices(records, text_store, image_store):
    """Row-aligned (texts, images) global-vector matrices for given ids."""
    ids = sorted(r.id for r in records)
    missing = [i for i in ids if i not in text_store or i not in image_store]
    if missing:
        raise UnknownIdError(f"ids absent from a store: {missing[:5]}"
                             + ("..." if len(missing) > 5 else ""))
    texts = np.stack([np.asarray(text_store[i].global_vector, dtype=np.float64) for i in ids])
    images = np.stack([np.asarray(image_store[i].global_vector, dtype=np.float64) for i in ids])
    return ids, texts, images


def _cmd_train(args) -> int:
    records = dataset.parse_manifest(args.manifest)
    if any(r.split is None for r in records):
        _diag(f"manifest has unsplit records; assigning with seed {args.seed}")
        records = dataset.with_splits(records, dataset.assign_splits(records, args.seed))
    _, texts = read_store(args.texts)
    _, images = read_store(args.images)
    text_store = records_by_id(texts)
    image_store = records_by_id(images)

    train_records = [r for r in records if r.split == args.split]
    _, train_t, train_v = _paired_matrices(train_records, text_store, image_store)
    val_t = val_v = None
    if args.val_split != "none":
        val_records = [r for r in records if r.split == args.val_split]
        if val_records:
            _, val_t, val_v = _paired_matrices(val_records, text_store, image_store)

    config = TrainConfig(batch_size=args.batch, learning_rate=args.lr, epochs=args.epochs,
                         seed=args.seed, optimizer=args.optimizer)
    head = ProjectionHead.identity(train_t.shape[1], tau=args.tau)
    head, history = trainer.train(head, train_t, train_v, config, val_t, val_v)
    trainer.save_head(head, args.out)
    for stats in history:
        val = "" if stats.val_r1 is None else repr(stats.val_r1)
        print(f"{stats.epoch}\t{stats.loss!r}\t{val}")
    _diag(f"saved head to {args.out} (tau {head.tau.value:.4f})")
    return 0


def _cmd_retrieve(args) -> int:
    index = build_index(args.texts, args.images, mode=args.mode, alpha=args.alpha,
                        lenient=args.lenient)
    query = query_t2i if args.direction == "t2i" else query_i2t
    for pair in query(index, args.query_id, args.k, lenient=args.lenient):
        print(f"{pair.rank}\t{pair.score!r}\t{pair.candidate_id}")
    return 0


def _pooled_report(index_pairs):
    """Aggregate per-pool gold ranks into one report."""
    t2i_ranks: dict = {}
    i2t_ranks: dict = {}
    for index, gold in index_pairs:
        t2i_ranks.update(evaluation.gold_ranks(index, gold, "t2i"))
        i2t_ranks.update(evaluation.gold_ranks(index, gold, "i2t"))
    six = (evaluation.recalls_from_ranks(t2i_ranks, evaluation.EVAL_KS)
           + evaluation.recalls_from_ranks(i2t_ranks, evaluation.EVAL_KS))
    return evaluation.RecallReport(
        t2i_r1=six[0], t2i_r5=six[1], t2i_r10=six[2],
        i2t_r1=six[3], i2t_r5=six[4], i2t_r10=six[5],
        mr=evaluation.mean_recall(six),
    )


def _cmd_eval(args) -> int:
    gold = evaluation.load_gold(args.gold)
    if args.pool_by_category:
        report = _pooled_report(_category_pools(args, gold))
    else:
        index = build_index(args.texts, args.images, mode=args.mode, alpha=args.alpha)
        report = evaluation.evaluate_split(index, gold)
    _diag(report.render_table())
    sys.stdout.write(report.machine_lines())
    if args.report:
        with atomic_write(args.report, "w") as handle:
            handle.write(report.machine_lines())
    return 0


def _category_pools(args, gold):
    """Per-category (index, gold) pairs for pooled evaluation."""
    _, texts = read_store(args.texts)
    _, images = read_store(args.images)
    categories = {r.id: r.category for r in dataset.parse_manifest(args.manifest)}
    pools: dict = {}
    for text_id, image_id in gold.text_to_image.items():
        if text_id not in categories:
            raise UnknownIdError(f"gold id {text_id!r} missing from manifest")
        pools.setdefault(categories[text_id], {})[text_id] = image_id
    text_store = records_by_id(texts)
    image_store = records_by_id(images)
    index_pairs = []
    for _, pool in sorted(pools.items()):
        missing = [i for i in sorted(pool) if i not in text_store]
        missing += [pool[i] for i in sorted(pool) if pool[i] not in image_store]
        if missing:
            raise UnknownIdError(f"gold ids absent from a store: {missing[:5]}")
        pool_texts = [text_store[i] for i in sorted(pool)]
        pool_images = [image_store[pool[i]] for i in sorted(pool)]
        sub_index = RetrievalIndex(pool_texts, pool_images, mode=args.mode, alpha=args.alpha)
        index_pairs.append((sub_index, evaluation.GoldMapping(pool)))
    return index_pairs


def _cmd_inspect_weights(args) -> int:
    _, images = read_store(args.images)
    record = records_by_id(images).get(args.image_id)
    if record is None:
        raise UnknownIdError(f"unknown image id {args.image_id!r}")
    weights = weights_for_record(record, args.alpha)
    for k, weight in enumerate(weights.weights):
        print(f"{k}\t{float(weight)!r}")
    _diag(f"{record.patch_count} patches, alpha {args.alpha}, sum {weights.weights.sum():.6f}")
    return 0


def _cmd_mr_check(args) -> int:
    rows = evaluation.load_published_rows(args.fixtures)
    failures = 0
    for row, recomputed, ok in evaluation.check_published_consistency(rows, args.slack):
        status = "ok" if ok else "FAIL"
        failures += 0 if ok else 1
        print(f"{status}\t{row.setting}\t{row.model}\t{row.mr}\t{recomputed!r}")
    _diag(f"{len(rows) - failures}/{len(rows)} rows consistent at slack {args.slack}")
    return 0 if failures == 0 else 2


def _cmd_apply_head(args) -> int:
    head = trainer.load_head(args.head)
    written = trainer.apply_head_to_store(head, args.in_path, args.out, args.modality)
    print(f"{args.out}\t{written}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "pool_by_category", False) and not args.manifest:
        parser.error("--pool-by-category requires --manifest")
    try:
        return args.func(args)
    except ManifestError as exc:
        where = f" (line {exc.line_no})" if exc.line_no is not None else ""
        _diag(f"error: {exc}{where}")
        return 2
    except LaclipError as exc:
        _diag(f"error: {exc}")
        return 2
    except FileNotFoundError as exc:
        _diag(f"error: {exc}")
        return 2
    except OSError as exc:
        _diag(f"error: {exc}")
        return 2
    except ValueError as exc:
        _diag(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
