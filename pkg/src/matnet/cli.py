"""Command-line interface.

Commands: gen-data, train, predict, texture, compare-odf, gradcheck.
Exit codes: 0 success, 2 usage error, 3 data/format error, 4 numerical
failure. All commands are deterministic for a fixed --seed; the worker
thread count for online prediction comes from MATNET_THREADS.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import fileio, texture, training
from .crystal import MaterialDivergenceError
from .equilibrium import EquilibriumNetwork, NonConvergenceError, SolverConfig
from .fileio import FormatError
from .network import build_topology, init_parameters
from .training import Dataset, Sample, TrainConfig

EXIT_DATA = 3
EXIT_NUMERICAL = 4


def _cmd_gen_data(args):
    rng = np.random.default_rng(args.seed)
    meta = {"seed": args.seed, "mode": args.mode}
    if args.teacher:
        teacher, _ = fileio.load_checkpoint(args.teacher)
        topo = build_topology(teacher.depth)
        dataset = training.synthesize_teacher_dataset(
            teacher, topo, args.samples, rng,
            two_phase=(args.mode == "two-phase"))
        meta["teacher_sha256"] = fileio.file_sha256(args.teacher)
        meta["teacher_depth"] = teacher.depth
    else:
        # phase sampling only: records carry no target stiffness
        if args.mode == "two-phase":
            pairs = training.generate_two_phase_samples(args.samples, rng)
        else:
            pairs = [(training.sample_cubic_stiffness(rng), None)
                     for _ in range(args.samples)]
        dataset = Dataset([Sample(p1, p2, None) for p1, p2 in pairs])
    fileio.save_dataset(args.out, dataset, meta)
    print(f"wrote {len(dataset)} records to {args.out} "
          f"(mode={args.mode}, seed={args.seed})")
    return 0


def _cmd_train(args):
    dataset = fileio.load_dataset(args.data)
    if any(s.target is None for s in dataset.samples):
        raise FormatError(f"{args.data}: dataset has records without targets")
    n = len(dataset)
    n_val = args.val_count if args.val_count is not None else \
        (100 if n >= 500 else max(1, n // 5))
    n_train = args.train_count if args.train_count is not None else n - n_val
    config = TrainConfig(epochs=args.epochs, learning_rate=args.lr,
                         batch_size=args.batch, weight_decay=args.weight_decay,
                         seed=args.seed, n_train=n_train, n_val=n_val)
    params, curves = training.train(dataset, config, depth=args.depth)
    provenance = {
        "seed": args.seed,
        "epochs": args.epochs,
        "dataset_sha256": fileio.file_sha256(args.data),
        "final_train_error": curves[-1, 0],
        "final_val_error": curves[-1, 1],
    }
    fileio.save_checkpoint(args.out, params, provenance)
    if args.curves:
        fileio.write_curves_csv(args.curves, curves)
    print(f"trained depth-{params.depth} network: "
          f"train={curves[-1, 0]:.3e} val={curves[-1, 1]:.3e}")
    return 0


def _cmd_predict(args):
    params, _ = fileio.load_checkpoint(args.checkpoint)
    topo = build_topology(params.depth)
    laws = fileio.load_material_laws(args.material, topo)
    steps = fileio.load_path_steps(args.path)
    config = SolverConfig(tol_rel=args.tol_rel, tol_abs=args.tol_abs,
                          max_iterations=args.max_iterations,
                          max_bisections=args.max_bisections)
    net = EquilibriumNetwork(params, topo, laws, config)
    history = []
    failure = None
    for step in steps:
        try:
            history.append(net.newton_solve(step))
        except (NonConvergenceError, MaterialDivergenceError) as exc:
            failure = exc
            break
    fileio.write_history_csv(args.out, history)
    if args.dump_orientations:
        fileio.write_orientations_csv(args.dump_orientations, history)
    if failure is not None:
        print(f"error: no convergence after step {len(history)} "
              f"of {len(steps)}: {failure}", file=sys.stderr)
        print(f"last converged step written to {args.out}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"completed {len(history)} steps -> {args.out}")
    return 0


def _orientation_cloud(spec, step=None):
    if spec.endswith(".csv"):
        quats, weights = fileio.read_orientations_csv(spec, step)
        return texture.OrientationSamples(quats, weights)
    params, _ = fileio.load_checkpoint(spec)
    return texture.orientations_from_params(params)


def _parse_miller(text):
    digits = [c for c in text if c not in " ,()"]
    if len(digits) != 3:
        raise FormatError(f"cannot parse Miller indices from {text!r}")
    return tuple(int(c) for c in digits)


def _cmd_texture(args):
    cloud = _orientation_cloud(args.input, args.step)
    pf = texture.pole_figure(cloud, _parse_miller(args.pole))
    fileio.write_pole_figure_csv(args.out, pf)
    print(f"wrote {len(pf.points)} pole-figure points to {args.out}")
    return 0


def _cmd_compare_odf(args):
    a = _orientation_cloud(args.a)
    b = _orientation_cloud(args.b)
    halfwidth = np.radians(args.halfwidth)
    grid = texture.so3_grid(args.grid)
    f_b = texture.odf_estimate(b, halfwidth, grid=grid)
    f_a = texture.odf_estimate(a, halfwidth, grid=grid)
    value = texture.texture_index_diff(f_a, f_b)
    print(repr(float(value)))
    return 0


def _cmd_gradcheck(args):
    worst = training.gradcheck(args.depth, n_points=args.points,
                               batch_size=args.batch, seed=args.seed)
    print(f"max relative gradient error: {worst:.3e}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="matnet",
        description="Material-network surrogate: training, prediction, "
                    "texture analysis.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a stiffness dataset")
    g.add_argument("--teacher", help="checkpoint labelling the samples")
    g.add_argument("--samples", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--mode", choices=["two-phase", "single"],
                   default="two-phase")
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_gen_data)

    t = sub.add_parser("train", help="fit a network to a dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--curves", help="per-epoch error CSV")
    t.add_argument("--depth", type=int, default=4)
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--batch", type=int, default=20)
    t.add_argument("--weight-decay", type=float, default=0.0)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--train-count", type=int)
    t.add_argument("--val-count", type=int)
    t.set_defaults(func=_cmd_train)

    r = sub.add_parser("predict", help="run a load path on a trained network")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--material", required=True)
    r.add_argument("--path", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--dump-orientations")
    r.add_argument("--tol-rel", type=float, default=1e-8)
    r.add_argument("--tol-abs", type=float, default=None)
    r.add_argument("--max-iterations", type=int, default=50)
    r.add_argument("--max-bisections", type=int, default=12)
    r.set_defaults(func=_cmd_predict)

    x = sub.add_parser("texture", help="pole figure from orientations")
    x.add_argument("--input", required=True,
                   help="checkpoint or orientation-dump CSV")
    x.add_argument("--step", type=int, default=None)
    x.add_argument("--pole", required=True, help="Miller indices, e.g. 111")
    x.add_argument("--out", required=True)
    x.set_defaults(func=_cmd_texture)

    c = sub.add_parser("compare-odf", help="texture index between two clouds")
    c.add_argument("--a", required=True)
    c.add_argument("--b", required=True, help="reference cloud")
    c.add_argument("--halfwidth", type=float, default=10.0,
                   help="kernel halfwidth in degrees")
    c.add_argument("--grid", type=int, default=5000)
    c.set_defaults(func=_cmd_compare_odf)

    d = sub.add_parser("gradcheck",
                       help="compare tape gradients with finite differences")
    d.add_argument("--depth", type=int, default=3)
    d.add_argument("--points", type=int, default=10)
    d.add_argument("--batch", type=int, default=5)
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=_cmd_gradcheck)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "samples", None) is not None and args.samples < 1:
        parser.error("--samples must be positive")
    if getattr(args, "depth", None) is not None and args.depth < 1:
        parser.error("--depth must be positive")
    try:
        return args.func(args)
    except (FormatError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonConvergenceError, MaterialDivergenceError,
            np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
