"""Command-line entry point: ``tenn train | eval | inspect | baseline``.

Exit codes: 0 success, 2 input error, 3 shape or compatibility error,
4 training divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

EXIT_OK, EXIT_INPUT, EXIT_SHAPE, EXIT_DIVERGED = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("TENN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise CliError(EXIT_INPUT, f"TENN_THREADS is not an integer: {env!r}")
    return os.cpu_count() or 1


def _load(path, normalize="off"):
    from .data import DataFormatError, load_dataset, znormalize

    if not os.path.isfile(path):
        raise CliError(EXIT_INPUT, f"no such file: {path}")
    try:
        return znormalize(load_dataset(path), normalize)
    except (DataFormatError, ValueError) as exc:
        raise CliError(EXIT_INPUT, f"{path}: {exc}")


def _load_net(path):
    from .training import load_checkpoint

    if not os.path.isfile(path):
        raise CliError(EXIT_INPUT, f"no such file: {path}")
    try:
        return load_checkpoint(path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_INPUT, f"{path}: unreadable checkpoint ({exc})")


def _check_compatible(net, ds):
    if ds.dimension != net.dimension:
        raise CliError(EXIT_SHAPE, f"dataset dimension {ds.dimension} != network dimension {net.dimension}")
    if ds.max_length > net.length:
        raise CliError(EXIT_SHAPE, f"dataset length {ds.max_length} exceeds network length {net.length}")
    unknown = set(ds.labels) - set(net.categories) - {None}
    if unknown:
        raise CliError(EXIT_SHAPE, f"labels {sorted(unknown)} are not network categories")


def _write_manifest(path, command, args, extra=None):
    doc = {"command": command, "args": {k: v for k, v in vars(args).items() if k != "func"}}
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


def _accuracy(net, ds, threads):
    from .network import infer_many

    outs = infer_many(net, [s.samples for s in ds.items], threads)
    pred = [net.categories[int(np.argmax(o.normalized))] for o in outs]
    return pred, outs, float(np.mean([p == s.label for p, s in zip(pred, ds.items)]))


def cmd_train(args) -> int:
    from .training import DivergenceError, TrainConfig, save_checkpoint, train

    tr = _load(args.train, args.normalize)
    te = _load(args.test, args.normalize) if args.test else None
    if te is not None and te.dimension != tr.dimension:
        raise CliError(EXIT_SHAPE, f"test dimension {te.dimension} != train dimension {tr.dimension}")
    if te is not None and te.max_length > tr.max_length:
        tr = tr.padded_to(te.max_length)
    try:
        cfg = TrainConfig(
            lambda_t=args.lambda_t, lambda_a=args.lambda_a, eta=args.eta,
            batch_size=args.batch_size, nu0=args.nu0, alpha0=args.alpha0,
            refs_per_category=args.n_ref, max_epoch=args.max_epoch,
            optimize_r=not args.freeze_r, optimize_ac=not args.freeze_ac,
            optimize_at=not args.freeze_at, patience=args.patience,
            corridor=args.corridor, seed=args.seed, frozen_at_nu=args.frozen_at_nu,
            threads=_threads(args))
    except ValueError as exc:
        raise CliError(EXIT_INPUT, str(exc))
    os.makedirs(args.out_dir, exist_ok=True)
    t0 = time.perf_counter()
    try:
        lm, ml, report = train(tr, cfg)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValueError as exc:
        raise CliError(EXIT_INPUT, str(exc))
    seconds = time.perf_counter() - t0
    p_lm = os.path.join(args.out_dir, "tenn-lm.json")
    p_ml = os.path.join(args.out_dir, "tenn-ml.json")
    save_checkpoint(lm, p_lm, cfg, "last-min-train-error", report.best_by_train_error)
    save_checkpoint(ml, p_ml, cfg, "last-min-loss", report.best_by_loss)
    report.write_csv(os.path.join(args.out_dir, "report.csv"))
    results = {"trainSeconds": seconds, "lmEpoch": report.best_by_train_error,
               "mlEpoch": report.best_by_loss}
    if te is not None:
        results["testAccuracyLm"] = _accuracy(lm, te, cfg.threads)[2]
        results["testAccuracyMl"] = _accuracy(ml, te, cfg.threads)[2]
    _write_manifest(os.path.join(args.out_dir, "manifest.json"), "train", args,
                    {"config": cfg.to_dict(), "results": results})
    msg = f"trained {len(lm.cells)} cells in {seconds:.1f}s"
    if te is not None:
        msg += (f"; test accuracy teNN-lm {100 * results['testAccuracyLm']:.2f}%"
                f", teNN-ml {100 * results['testAccuracyMl']:.2f}%")
    print(msg)
    return EXIT_OK


def cmd_eval(args) -> int:
    net, _ = _load_net(args.checkpoint)
    ds = _load(args.data, args.normalize)
    _check_compatible(net, ds)
    pred, outs, acc = _accuracy(net, ds, _threads(args))
    print(f"accuracy {100 * acc:.2f}% ({sum(p == s.label for p, s in zip(pred, ds.items))}/{len(ds)})")
    cats = net.categories
    print("confusion (rows true, columns predicted): " + " ".join(cats))
    for c in cats:
        row = [sum(1 for p, s in zip(pred, ds.items) if s.label == c and p == q) for q in cats]
        print(f"{c}: " + " ".join(str(v) for v in row))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "label", "predicted", "degenerate"] + [f"o[{c}]" for c in cats])
            for i, (s, p, o) in enumerate(zip(ds.items, pred, outs)):
                w.writerow([i, s.label, p, int(o.degenerate)] + [repr(float(v)) for v in o.normalized])
    return EXIT_OK


def cmd_inspect(args) -> int:
    from .cell import cell_forward
    from .elastic import write_grid_csv
    from .network import sparsity_report

    net, _ = _load_net(args.checkpoint)
    os.makedirs(args.out_dir, exist_ok=True)
    paths = net.dump_matrices(args.out_dir)
    rep = sparsity_report(net, args.zero_threshold)
    rep.write_csv(os.path.join(args.out_dir, "sparsity.csv"), args.dataset or "")
    print(f"wrote {len(paths)} matrix dumps; mean sparsity Ac {rep.mean_ac:.2f}%, At {rep.mean_at:.2f}%")
    if args.fb_input is not None:
        if args.data is None:
            raise CliError(EXIT_INPUT, "--fb-input needs --data")
        ds = _load(args.data)
        _check_compatible(net, ds)
        if not 0 <= args.fb_input < len(ds):
            raise CliError(EXIT_INPUT, f"--fb-input {args.fb_input} is out of range")
        if not 0 <= args.fb_cell < len(net.cells):
            raise CliError(EXIT_INPUT, f"--fb-cell {args.fb_cell} is out of range")
        from .elastic import fb_matrix

        _, am = cell_forward(net.cells[args.fb_cell], ds.items[args.fb_input].samples, return_grids=True)
        fb = fb_matrix(am)
        path = os.path.join(args.out_dir, f"fb_cell{args.fb_cell:03d}_input{args.fb_input}.csv")
        write_grid_csv(fb.log_cells, path)
        print(f"wrote log-FB grid to {path}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    from .baselines import NU_GRID, append_results_csv, loo_tune_nu, one_nn_classify

    tr = _load(args.train, args.normalize)
    te = _load(args.test, args.normalize)
    if te.dimension != tr.dimension:
        raise CliError(EXIT_SHAPE, f"test dimension {te.dimension} != train dimension {tr.dimension}")
    nu = args.nu
    if args.measure == "kdtw" and args.loo_nu:
        nu = loo_tune_nu(tr, NU_GRID, args.corridor)
    try:
        res = one_nn_classify(tr, te, args.measure, nu, args.corridor, args.dtw_cost)
    except ValueError as exc:
        raise CliError(EXIT_SHAPE, str(exc))
    name = args.dataset or tr.name or os.path.basename(args.train)
    append_results_csv(args.out, name, res)
    extra = f" (nu={nu:g})" if args.measure == "kdtw" else ""
    print(f"1NN-{args.measure.upper()}{extra}: {100 * res.accuracy:.2f}%")
    _write_manifest(os.path.splitext(args.out)[0] + ".manifest.json", "baseline", args,
                    {"nu": nu, "accuracy": res.accuracy})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tenn", description="Time elastic neural networks")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $TENN_THREADS or all cores)")
        sp.add_argument("--deterministic", action="store_true",
                        help="ordered reductions (always the case; kept for scripts)")
        sp.add_argument("--normalize", choices=["off", "per-series", "per-dimension"], default="off")

    t = sub.add_parser("train", help="train a network")
    t.add_argument("--train", required=True)
    t.add_argument("--test")
    t.add_argument("--out-dir", default="tenn-run")
    t.add_argument("--nu0", type=float, default=1e-3)
    t.add_argument("--alpha0", type=float, default=1.0)
    t.add_argument("--eta", type=float, default=0.1)
    t.add_argument("--lambda-t", type=float, default=1e-3)
    t.add_argument("--lambda-a", type=float, default=1e-3)
    t.add_argument("--batch-size", type=int, default=64)
    t.add_argument("--n-ref", type=int, default=1)
    t.add_argument("--max-epoch", type=int, default=2000)
    t.add_argument("--corridor", type=int, default=None)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--patience", type=int, default=20)
    t.add_argument("--freeze-r", action="store_true")
    t.add_argument("--freeze-ac", action="store_true")
    t.add_argument("--freeze-at", action="store_true")
    t.add_argument("--frozen-at-nu", type=float, default=None,
                   help="attention value when --freeze-at is set (default: leave-one-out tuned)")
    common(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", help="per-sample CSV of normalized outputs")
    common(e)
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("inspect", help="dump matrices and sparsity of a checkpoint")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--out-dir", default="tenn-inspect")
    i.add_argument("--zero-threshold", type=float, default=1e-6)
    i.add_argument("--dataset", help="dataset name for the sparsity table")
    i.add_argument("--data", help="dataset holding the FB input")
    i.add_argument("--fb-cell", type=int, default=0)
    i.add_argument("--fb-input", type=int, default=None)
    common(i)
    i.set_defaults(func=cmd_inspect)

    b = sub.add_parser("baseline", help="1NN-DTW or 1NN-KDTW")
    b.add_argument("--train", required=True)
    b.add_argument("--test", required=True)
    b.add_argument("--measure", choices=["dtw", "kdtw"], required=True)
    b.add_argument("--nu", type=float, default=1.0)
    b.add_argument("--loo-nu", action="store_true", help="tune nu by leave-one-out on train")
    b.add_argument("--corridor", type=int, default=None)
    b.add_argument("--dtw-cost", choices=["euclidean", "sqeuclidean"], default="euclidean")
    b.add_argument("--dataset")
    b.add_argument("--out", default="baseline_results.csv")
    common(b)
    b.set_defaults(func=cmd_baseline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
