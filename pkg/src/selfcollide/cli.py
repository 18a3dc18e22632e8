"""``selfcollide`` command-line interface.

Every command writes ``<output>.manifest.json`` next to its main output with
the resolved flags, seeds and input hashes; ``selfcollide replay MANIFEST``
re-runs it. Exit codes: 0 success, 1 runtime failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .errors import ClassStarvation, NonFiniteLoss, SelfCollideError

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _arch(name):
    from .neuralnet import PRESETS

    if name not in PRESETS:
        raise argparse.ArgumentTypeError(f"unknown architecture {name!r}; choose from {', '.join(PRESETS)}")
    return name


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Run:
    """Tracks outputs of one command so they can be removed on failure."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.outputs: list[Path] = []
        self.inputs: dict[str, str] = {}

    def output(self, path) -> Path:
        path = Path(path)
        if path.parent and not path.parent.exists():
            raise UsageError(f"output directory {path.parent} does not exist")
        self.outputs.append(path)
        return path

    def input(self, path) -> Path:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"input file not found: {path}")
        self.inputs[str(path)] = _sha256(path)
        return path

    def write_manifest(self, main_output) -> None:
        flags = {k: v for k, v in vars(self.args).items() if k not in ("func",)}
        manifest = {
            "command": self.args.command,
            "argv": self.argv,
            "flags": flags,
            "seed": flags.get("seed"),
            "inputs": self.inputs,
            "outputs": [str(p) for p in self.outputs],
            "tool_version": __version__,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        }
        path = self.output(str(main_output) + ".manifest.json")
        path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")

    def cleanup(self) -> None:
        for p in self.outputs:
            try:
                p.unlink()
            except FileNotFoundError:
                pass


def _load_robot_arg(run: Run, args):
    from .robot import desk_arm, desk_arm_path, load_robot

    if getattr(args, "robot", None):
        path = Path(args.robot)
        if not path.is_file():
            raise FileNotFoundError(f"robot file not found: {path}")
        run.input(path)
        return load_robot(path)
    run.inputs[str(desk_arm_path())] = _sha256(desk_arm_path())
    return desk_arm()


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_gen_data(run: Run, args):
    from .dataset import meta_path, sample_2d_dataset, sample_robot_dataset, save_dataset

    out = run.output(args.out)
    run.output(meta_path(out))
    if args.synthetic2d:
        ds = sample_2d_dataset(2 * args.n_per_class, args.seed)
    else:
        ds = sample_robot_dataset(_load_robot_arg(run, args), args.n_per_class, args.seed, threads=args.threads)
    save_dataset(out, ds)
    run.write_manifest(out)
    print(f"wrote {len(ds)} samples to {out}")


def _load_data(run: Run, path):
    from .dataset import load_dataset

    return load_dataset(run.input(path))


def _train_cfg(args):
    from .neuralnet import TrainConfig

    return TrainConfig(epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.lr, seed=args.seed)


def cmd_train(run: Run, args):
    from .neuralnet import CollisionModel, preset_spec, save_model, train

    ds = _load_data(run, args.data)
    out = run.output(args.out)
    curve_path = run.output(args.curve_out or str(out) + ".loss.csv")
    Xtr, ytr = ds.part("train", args.L)
    Xva, yva = ds.part("val", args.L)
    params, curve = train(preset_spec(args.arch, Xtr.shape[1]), Xtr, ytr, _train_cfg(args), Xva, yva)
    save_model(out, CollisionModel(params, args.L))
    with open(curve_path, "w") as fh:
        fh.write("epoch,train_loss,val_accuracy\n")
        for e, (l, a) in enumerate(zip(curve.train_loss, curve.val_accuracy), start=1):
            fh.write(f"{e},{l!r},{a!r}\n")
    run.write_manifest(out)
    print(f"final train loss {curve.train_loss[-1]:.6f}; model written to {out}")


def cmd_eval(run: Run, args):
    from .evalbench import evaluate
    from .neuralnet import load_model

    model = load_model(run.input(args.model))
    ds = _load_data(run, args.data)
    X, y = ds.part(args.split)
    m = evaluate(model, X, y)
    result = {"split": args.split, "accuracy": m.accuracy, "tp": m.tp, "tn": m.tn, "fp": m.fp, "fn": m.fn}
    if args.out:
        out = run.output(args.out)
        out.write_text(json.dumps(result, indent=2) + "\n")
        run.write_manifest(out)
    print(json.dumps(result))


def cmd_sweep(run: Run, args):
    from .evalbench import export_loss_curves, sweep_L

    ds = _load_data(run, args.data)
    out = run.output(args.out)
    curve_paths = {L: run.output(f"{args.curves_out}.L{L}.csv") for L in args.L_list} if args.curves_out else {}
    res = sweep_L(args.arch, ds, args.L_list, args.trials, _train_cfg(args), seed=args.seed)
    res.to_csv(out)
    for L, p in curve_paths.items():
        export_loss_curves(res.curves[L], p)
    run.write_manifest(out)
    for r in res.rows:
        print(f"L={r.L:2d} n={r.input_length:4d} acc={r.mean_accuracy:.4f} +- {r.std_accuracy:.4f}")
    print(f"best L = {res.best_L}")


def cmd_slice(run: Run, args):
    from .evalbench import oracle_checker, slice_raster
    from .neuralnet import load_model

    robot = _load_robot_arg(run, args)
    if args.oracle:
        predictor = oracle_checker(robot)
    elif args.model:
        predictor = load_model(run.input(args.model))
    else:
        raise UsageError("slice needs --model or --oracle")
    if len(args.joints) != 2:
        raise UsageError("--joints takes exactly two joint indices")
    out = run.output(args.out)
    csv_out = run.output(args.csv or Path(args.out).with_suffix(".csv"))
    raster = slice_raster(predictor, robot, tuple(args.joints), args.fixed, args.resolution)
    raster.write_ppm(out)
    raster.to_csv(csv_out)
    run.write_manifest(out)
    print(json.dumps(raster.counts()))


def cmd_bench(run: Run, args):
    from .evalbench import bench_latency, oracle_checker
    from .neuralnet import CollisionModel, init_params, load_model, preset_spec
    from .robot import self_collision_batch

    robot = _load_robot_arg(run, args)
    methods = {}
    for item in args.models:
        if item == "oracle":
            methods["oracle"] = oracle_checker(robot)
        elif ":" in item and not Path(item).exists():
            # PRESET:L builds an untrained network of that shape
            name, L = item.split(":", 1)
            _arch(name)
            L = int(L)
            dim = robot.dof * (1 + 2 * L)
            methods[item] = CollisionModel(init_params(preset_spec(name, dim), args.seed), L)
        else:
            methods[Path(item).stem] = load_model(run.input(item))
    out = run.output(args.out)
    rng = np.random.default_rng(args.seed)
    Q = rng.uniform(-np.pi, np.pi, size=(args.queries, robot.dof))
    labels = self_collision_batch(robot, Q)
    report = bench_latency(methods, Q, args.repetitions, args.batch_sizes, labels, args.warmup)
    report.to_csv(out)
    run.write_manifest(out)
    for r in report.rows:
        print(f"{r.method:>12s} {r.subset:>9s} b={r.batch_size:<4d} mean={r.mean_ns / 1e3:10.2f}us "
              f"std={r.std_ns / 1e3:9.2f}us")


def cmd_gap_study(run: Run, args):
    from .dataset import train_gap_study
    from .neuralnet import preset_spec

    ds = _load_data(run, args.data)
    out = run.output(args.out)
    rows = train_gap_study(lambda n: preset_spec(args.arch, n), ds, args.sizes, args.trials, args.L,
                           _train_cfg(args), seed=args.seed)
    with open(out, "w") as fh:
        fh.write("size,train_accuracy,test_accuracy,gap,gap_std\n")
        for r in rows:
            fh.write(f"{r.size},{r.train_accuracy!r},{r.test_accuracy!r},{r.gap!r},{r.gap_std!r}\n")
    run.write_manifest(out)
    for r in rows:
        print(f"size={r.size:7d} train={r.train_accuracy:.4f} test={r.test_accuracy:.4f} gap={r.gap:.4f}")


def cmd_replay(run: Run, args):
    try:
        manifest = json.loads(Path(args.manifest).read_text())
        argv = manifest["argv"]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise UsageError(f"cannot read manifest {args.manifest}: {exc}") from None
    code = main(argv)
    if code:
        raise SystemExit(code)


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _add_training(p):
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)


def _add_robot(p, required=False):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--robot", metavar="FILE", help="robot description (JSON)")
    g.add_argument("--desk-arm", action="store_true", help="use the bundled six-joint desk arm")
    return g


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="selfcollide", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker/BLAS thread cap (default: all cores; 1 for bench)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="sample a balanced, split dataset")
    g = _add_robot(p, required=True)
    g.add_argument("--synthetic2d", action="store_true", help="2-D disc-union dataset")
    p.add_argument("--n-per-class", type=int, default=50_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a network on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--arch", type=_arch, required=True)
    p.add_argument("--L", type=int, default=0)
    _add_training(p)
    p.add_argument("--out", required=True)
    p.add_argument("--curve-out", help="loss curve CSV (default: <out>.loss.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a model on a dataset split")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "test", "val"), default="test")
    p.add_argument("--out", help="metrics JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="accuracy versus encoding level")
    p.add_argument("--arch", type=_arch, required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--L-list", dest="L_list", type=_int_list, required=True)
    p.add_argument("--trials", type=int, default=5)
    _add_training(p)
    p.add_argument("--out", required=True)
    p.add_argument("--curves-out", metavar="PREFIX", help="write PREFIX.L<L>.csv loss curves per level")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("slice", help="TP/TN/FP/FN raster over two joints")
    p.add_argument("--model")
    p.add_argument("--oracle", action="store_true", help="use the geometric checker as predictor")
    _add_robot(p)
    p.add_argument("--joints", type=_int_list, default=[1, 2], help="0-based joint indices (default 1,2)")
    p.add_argument("--fixed", type=_float_list, help="values of all joints (varied ones are ignored)")
    p.add_argument("--resolution", type=int, default=256)
    p.add_argument("--out", required=True, help="PPM image path")
    p.add_argument("--csv", help="per-cell CSV (default: image path with .csv)")
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("bench", help="inference latency of models and the geometric checker")
    p.add_argument("--models", type=lambda s: [t for t in s.split(",") if t], required=True,
                   help="model files, PRESET:L (untrained network) or 'oracle'")
    _add_robot(p)
    p.add_argument("--queries", type=int, default=10_000)
    p.add_argument("--batch-sizes", type=_int_list, default=[100])
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--warmup", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gap-study", help="train/test gap versus dataset size")
    p.add_argument("--data", required=True)
    p.add_argument("--arch", type=_arch, default="MLP1")
    p.add_argument("--L", type=int, default=0)
    p.add_argument("--sizes", type=_int_list, required=True)
    p.add_argument("--trials", type=int, default=3)
    _add_training(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gap_study)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    threads = args.threads or (1 if args.command == "bench" else os.cpu_count() or 1)
    args.threads = threads
    run = Run(args, argv)
    try:
        with threadpool_limits(threads):
            args.func(run, args)
    except SystemExit as exc:
        run.cleanup()
        return int(exc.code or 0)
    except (NonFiniteLoss, ClassStarvation) as exc:
        run.cleanup()
        print(f"selfcollide {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (UsageError, FileNotFoundError, ValueError, KeyError, SelfCollideError) as exc:
        run.cleanup()
        print(f"selfcollide {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        run.cleanup()
        print(f"selfcollide {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
