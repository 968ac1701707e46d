"""Command-line front end: train/eval/sample/parzen/synth/info/compare.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import io as io_mod
from . import training
from .errors import DataError, ModelFormatError, NumericError, SpnError
from .evaluate import full_marginal
from .hypernet import DecoderConfig, hyper_param_count
from .sampling import sample as draw_samples
from .stream import store_provider, stream_eval
from .structure import build_structure, param_count
from .training import HyperModel, PlainModel, TrainConfig, default_config, train_loop
from .weights import WeightStore

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_structure_flags(p, k_default=5, r_default=50):
    p.add_argument("--k", type=int, default=k_default, help="sum/product layer width")
    p.add_argument("--replicas", type=int, default=r_default)
    p.add_argument("--leaves", type=int, default=2, help="leaf distributions per variable")
    p.add_argument("--seed", type=int, default=0)


def _add_train_flags(p):
    p.add_argument("--lr", type=float, default=None, help="default 2e-2 plain / 5e-3 hyper")
    p.add_argument("--batch", type=int, default=500)
    p.add_argument("--max-steps", type=int, default=80_000)
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=10)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spnkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write the 256-variable synthetic dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("info", help="print structure and parameter statistics")
    p.add_argument("--n", type=int, required=True)
    _add_structure_flags(p)
    p.add_argument("--embed-dim", type=int, default=5)

    p = sub.add_parser("train", help="grid-train one variant and keep the best model")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--variant", choices=("plain", "hyper"), required=True)
    _add_structure_flags(p)
    _add_train_flags(p)
    p.add_argument("--weight-decay", default=None,
                   help="comma list; plain grid default 1e-3,1e-4,1e-5")
    p.add_argument("--embed-dim", default=None, help="comma list; hyper grid default 5,10,20")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("eval", help="evaluate a saved model on a dataset split")
    p.add_argument("--model", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", choices=data_mod.SPLITS, default="test")

    p = sub.add_parser("sample", help="draw samples from a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--count", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output file (dataset line format)")

    p = sub.add_parser("parzen", help="Parzen-window sample quality against a test split")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", choices=data_mod.SPLITS, default="test")
    p.add_argument("--samples", required=True, help="sample file (dataset line format)")
    p.add_argument("--sigma", type=float, default=0.2)

    p = sub.add_parser("compare", help="SPN-Large / SPN-Small / hyper comparison run")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--dataset", required=True)
    _add_structure_flags(p, k_default=6, r_default=5)
    _add_train_flags(p)
    p.add_argument("--embed-dim", type=int, default=5)
    p.add_argument("--weight-decay", type=float, default=1e-4,
                   help="decay for the plain baselines")
    p.add_argument("--out", required=True, help="output directory")

    return parser


def _grid(raw: str | None, default: tuple) -> list[float]:
    if raw is None:
        return list(default)
    values = [float(tok) for tok in str(raw).split(",") if tok]
    if not values:
        raise UsageError("empty grid")
    return values


def _make_model(variant, structure, seed, embed_dim=None):
    if variant == "hyper":
        return HyperModel.create(structure, int(embed_dim), DecoderConfig(), seed=seed)
    return PlainModel(structure, seed=seed)


def _config(args, variant, weight_decay=0.0) -> TrainConfig:
    return default_config(
        variant,
        weight_decay=weight_decay,
        batch_size=args.batch,
        max_steps=args.max_steps,
        max_epochs=args.max_epochs,
        patience=args.patience,
        seed=args.seed,
        **({"lr": args.lr} if args.lr is not None else {}),
    )


def _write_history(path: Path, history) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_nll,valid_ll\n")
        for rec in history:
            fh.write(f"{rec.epoch},{rec.train_nll:.10g},{rec.valid_ll:.10g}\n")


def _closed_form_params(n: int, k: int, r: int, l: int) -> int:
    return r * (n * k * l + (n - 2) * k * k + k) + r


def cmd_synth(args) -> int:
    ds = data_mod.gen_synthetic(args.seed)
    data_mod.save_dataset(ds, args.out)
    print(f"wrote {ds.name} to {args.out}: "
          f"train {len(ds.train)}, valid {len(ds.valid)}, test {len(ds.test)} rows, {ds.n} columns")
    return EXIT_OK


def cmd_info(args) -> int:
    st = build_structure(args.n, args.k, args.replicas, args.leaves, args.seed)
    per_replica = (param_count(st) - st.r) // st.r
    store = WeightStore.random(st, seed=args.seed)
    _, peak = stream_eval(st, store_provider(store), full_marginal(st.n))
    print(f"n={st.n} k={st.k} r={st.r} l={st.l} seed={st.seed}")
    print(f"sectors: {st.num_sectors} total, {(st.num_sectors - 1) // st.r} per replica")
    print(f"weights per replica: {per_replica}")
    print(f"param_count: {param_count(st)}")
    print(f"hyper_param_count(h={args.embed_dim}): "
          f"{hyper_param_count(st, args.embed_dim)}")
    print(f"peak_live_vectors: {peak} (bound {int(np.log2(st.n)) + 1})")
    return EXIT_OK


def _train_grid(dataset, variant, args, grid, out_dir: Path):
    structure = build_structure(dataset.n, args.k, args.replicas, args.leaves, args.seed)
    best = None
    runs = []
    for value in grid:
        if variant == "hyper":
            model = _make_model("hyper", structure, args.seed, embed_dim=value)
            config = _config(args, "hyper")
            tag = f"h{int(value)}"
        else:
            model = _make_model("plain", structure, args.seed)
            config = _config(args, "plain", weight_decay=value)
            tag = f"wd{value:g}"
        result = train_loop(model, dataset, config)
        _write_history(out_dir / f"{dataset.name}.{variant}.{tag}.history.csv", result.history)
        runs.append({"grid_value": value, "valid_ll": result.best_valid_ll,
                     "epochs": len(result.history), "steps": result.steps})
        print(f"[{variant} {tag}] valid LL {result.best_valid_ll:.4f} "
              f"({len(result.history)} epochs, {result.steps} steps)")
        if best is None or result.best_valid_ll > best[1].best_valid_ll:
            best = (model, result, value)
    return best, runs


def cmd_train(args) -> int:
    dataset = data_mod.load_dataset(args.data_dir, args.dataset)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = _grid(args.embed_dim if args.variant == "hyper" else args.weight_decay,
                 training.EMBED_DIM_GRID if args.variant == "hyper" else training.WEIGHT_DECAY_GRID)

    (model, result, value), runs = _train_grid(dataset, args.variant, args, grid, out_dir)
    model_path = out_dir / f"{args.dataset}.{args.variant}.spn"
    io_mod.save_model(model_path, model, result.history)
    test_ll, stderr = data_mod.avg_log_likelihood(model, dataset.test)
    summary = {
        "dataset": args.dataset,
        "variant": args.variant,
        "k": args.k, "replicas": args.replicas, "leaves": args.leaves, "seed": args.seed,
        "selected_grid_value": value,
        "trainable_count": model.num_params,
        "valid_ll": result.best_valid_ll,
        "test_ll": test_ll,
        "test_stderr": stderr,
        "runs": runs,
        "model_file": str(model_path),
    }
    summary_path = out_dir / f"{args.dataset}.{args.variant}.summary.json"
    summary_path.write_text(json.dumps(summary, indent=2))
    print(f"best {args.variant}: grid value {value}, test LL {test_ll:.4f} ± {stderr:.4f}, "
          f"{model.num_params} trainables")
    print(f"wrote {model_path} and {summary_path}")
    return EXIT_OK


def cmd_compare(args) -> int:
    """Train the three presets of the size comparison.

    SPN-Large shares the hyper model's underlying structure; SPN-Small uses
    the largest layer width whose weight count stays at or below the hyper
    model's trainable count. Both plain baselines use weight decay.
    """
    dataset = data_mod.load_dataset(args.data_dir, args.dataset)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    structure = build_structure(dataset.n, args.k, args.replicas, args.leaves, args.seed)
    hyper_count = hyper_param_count(structure, args.embed_dim)
    small_k = 1
    while _closed_form_params(dataset.n, small_k + 1, args.replicas, args.leaves) <= hyper_count:
        small_k += 1
    small_structure = build_structure(dataset.n, small_k, args.replicas, args.leaves, args.seed)

    presets = [
        ("hyper", HyperModel.create(structure, args.embed_dim, seed=args.seed),
         _config(args, "hyper")),
        ("spn-large", PlainModel(structure, seed=args.seed),
         _config(args, "plain", weight_decay=args.weight_decay)),
        ("spn-small", PlainModel(small_structure, seed=args.seed),
         _config(args, "plain", weight_decay=args.weight_decay)),
    ]

    summary = {"dataset": args.dataset, "k": args.k, "small_k": small_k,
               "replicas": args.replicas, "embed_dim": args.embed_dim, "models": {}}
    for name, model, config in presets:
        result = train_loop(model, dataset, config)
        _write_history(out_dir / f"{args.dataset}.{name}.history.csv", result.history)
        test_ll, stderr = data_mod.avg_log_likelihood(model, dataset.test)
        io_mod.save_model(out_dir / f"{args.dataset}.{name}.spn", model, result.history)
        summary["models"][name] = {
            "trainable_count": model.num_params,
            "valid_ll": result.best_valid_ll,
            "test_ll": test_ll,
            "test_stderr": stderr,
            "epochs": len(result.history),
        }
        print(f"{name:9s} test LL {test_ll:.4f} ± {stderr:.4f} "
              f"({model.num_params} trainables)")
    (out_dir / f"{args.dataset}.compare.summary.json").write_text(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_eval(args) -> int:
    model, _ = io_mod.load_model(args.model)
    dataset = data_mod.load_dataset(args.data_dir, args.dataset)
    if dataset.n != model.structure.n:
        raise DataError(f"model has {model.structure.n} variables, data has {dataset.n}")
    mean, stderr = data_mod.avg_log_likelihood(model, dataset.split(args.split))
    print(f"{args.dataset}/{args.split}: mean LL {mean:.6f} ± {stderr:.6f}")
    return EXIT_OK


def cmd_sample(args) -> int:
    model, _ = io_mod.load_model(args.model)
    samples = draw_samples(model.structure, model.weight_store(), args.count, args.seed)
    data_mod.write_matrix(args.out, samples)
    print(f"wrote {args.count} samples ({model.structure.n} columns) to {args.out}")
    return EXIT_OK


def cmd_parzen(args) -> int:
    dataset = data_mod.load_dataset(args.data_dir, args.dataset)
    samples = data_mod.read_matrix(args.samples)
    score = data_mod.parzen_score(dataset.split(args.split), samples, args.sigma)
    print(f"parzen score (sigma={args.sigma:g}): {score:.6f}")
    return EXIT_OK


_COMMANDS = {
    "synth": cmd_synth,
    "info": cmd_info,
    "train": cmd_train,
    "eval": cmd_eval,
    "sample": cmd_sample,
    "parzen": cmd_parzen,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ModelFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, SpnError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
