"""Command-line interface.

Every subcommand writes its outputs into ``--out`` (default: current
directory). Failures print ``{"error": ..., "message": ...}`` to stderr and
exit with a nonzero status.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .core import (
    LearnedRcnn,
    RBNNError,
    Rayleigh,
    RcnnWeights,
    environment_from_dict,
    reflection_from_dict,
)
from .data import Dataset, read_table, write_table
from .grid import GridSpec, predict_grid, write_field_csv
from .metrics import evaluate, idw_baseline
from .model import GeometryAidedModel, ImageSourceModel, PlaneWaveModel, model_from_dict
from .oracle import TrajectoryConfig, add_position_noise, gen_zigzag_trajectory, make_dataset
from .raytrace import nominal_rays, write_rays_csv
from .scenarios import SCENARIOS, reflection_curve, run_scenario
from .train import TrainConfig, multi_restart_train, refine_positions

EXIT_USAGE = 2
EXIT_FAILURE = 1


class CliError(RBNNError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("UsageError", message)
        sys.exit(EXIT_USAGE)


def _emit_error(kind, message):
    sys.stderr.write(json.dumps({"error": kind, "message": message}, sort_keys=True) + "\n")


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _write_json(args, name, obj):
    path = os.path.join(args.out, name)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _vec3(text):
    try:
        v = [float(t) for t in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected x,y,z but got {text!r}") from exc
    if len(v) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z but got {text!r}")
    return v


def _floats(text):
    try:
        return [float(t) for t in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _scene(path):
    """Scene JSON: ``environment``, ``source``, ``frequency`` and optional ``max_order``."""
    d = _load_json(path)
    missing = {"environment", "source", "frequency"} - set(d)
    if missing:
        raise CliError(f"scene is missing {sorted(missing)}")
    return environment_from_dict(d["environment"]), d["source"], float(d["frequency"]), d.get("max_order")


def _train_config(args, d=None):
    cfg = dict(d or {})
    cfg["seed"] = args.seed
    cfg["verbose"] = args.verbose
    return TrainConfig.from_dict(cfg)


def _checkpoint(path):
    return model_from_dict(_load_json(path))


def _save_model(args, model, report=None):
    _write_json(args, "checkpoint.json", model.to_dict())
    if report is not None:
        _write_json(args, "report.json", report.to_dict())


# -- subcommands --------------------------------------------------------------


def cmd_simulate(args):
    env, source, freq, max_order = _scene(args.scene)
    traj = TrajectoryConfig.from_dict(_load_json(args.trajectory))
    ds = make_dataset(env, source, gen_zigzag_trajectory(traj), freq, max_order, tuple(args.split), args.seed)
    if args.noise > 0:
        ds = add_position_noise(ds, args.noise, args.seed + 1)
    ds.to_csv(os.path.join(args.out, "dataset.csv"))


def cmd_trace(args):
    env, source, _, max_order = _scene(args.scene)
    rays = nominal_rays(env, source, args.reference, max_order)
    write_rays_csv(os.path.join(args.out, "nominal_rays.csv"), rays)


def _build_model(spec, ds, seed):
    kind = spec.get("kind", "plane")
    X, y = ds.subset("train")
    if kind == "plane":
        k = _wavenumber_of(spec)
        scale = float(spec.get("amplitude_scale", 3.0)) * float(y.max())
        return PlaneWaveModel.random(int(spec.get("n_rays", 60)), k, amplitude_scale=scale, rng=seed)
    if kind == "image_source":
        k = _wavenumber_of(spec)
        ref = spec.get("reference", X.mean(axis=0).tolist())
        lo, hi = spec.get("distance_range", (1.0, 100.0))
        return ImageSourceModel.random(int(spec.get("n_rays", 60)), k, ref, (lo, hi),
                                       float(spec.get("amplitude_scale", 3.0)) * float(y.max()) * lo,
                                       float(spec.get("absorption", 0.0)), rng=seed)
    if kind == "geometry":
        scene = spec["scene"]
        env = environment_from_dict(scene["environment"])
        refl = _reflection_spec(spec.get("reflection", {"type": "rcnn"}), seed)
        ref = spec.get("reference", X.mean(axis=0).tolist())
        return GeometryAidedModel.from_scene(env, scene["source"], ref, float(scene["frequency"]), refl,
                                             scene.get("max_order"))
    raise CliError(f"unknown model kind {kind!r}")


def _wavenumber_of(spec):
    if "wavenumber" in spec:
        return float(spec["wavenumber"])
    return 2.0 * np.pi * float(spec["frequency"]) / float(spec.get("sound_speed", 1500.0))


def _reflection_spec(d, seed):
    if d.get("type") == "rcnn" and "w1" not in d:
        return LearnedRcnn(RcnnWeights.random(int(d.get("hidden_size", 16)), seed))
    return reflection_from_dict(d)


def cmd_train(args):
    ds = Dataset.from_csv(args.data)
    cfg = _load_json(args.config) if args.config else {}
    tcfg = _train_config(args, cfg.get("train"))
    if args.init:
        init = _checkpoint(args.init)

        def factory(seed):
            return init
    else:
        spec = cfg.get("model", {})

        def factory(seed):
            return _build_model(spec, ds, seed)

    model, report = multi_restart_train(factory, ds, tcfg)
    _save_model(args, model, report)


def cmd_refine(args):
    model = _checkpoint(args.checkpoint)
    ds = Dataset.from_csv(args.data)
    cfg = _load_json(args.config) if args.config else {}
    tcfg = _train_config(args, cfg.get("train", cfg))
    offsets, _ = refine_positions(model, ds, args.weight, tcfg, split=args.split)
    index = np.nonzero(ds.mask(args.split))[0]
    write_table(os.path.join(args.out, "offsets.csv"), ("index", "dx", "dy", "dz"),
                [(int(i), *o) for i, o in zip(index, offsets)])


def cmd_predict(args):
    model = _checkpoint(args.checkpoint)
    pts, amp = predict_grid(model, GridSpec.from_json(args.grid))
    write_field_csv(os.path.join(args.out, "field.csv"), pts, amp)


def _inversion(args, reflection, default_train):
    ds = Dataset.from_csv(args.data)
    env, source, freq, max_order = _scene(args.scene)
    cfg = _load_json(args.config) if args.config else {}
    tcfg = _train_config(args, {**default_train, **cfg.get("train", {})})
    ref = args.reference if args.reference else ds.subset("train")[0].mean(axis=0).tolist()

    def factory(seed):
        return GeometryAidedModel.from_scene(env, source, ref, freq, reflection(seed), max_order)

    model, report = multi_restart_train(factory, ds, tcfg)
    _save_model(args, model, report)
    return model, report


def cmd_invert_rayleigh(args):
    rho, c, delta = args.init

    def reflection(seed):
        return Rayleigh(rho, c, delta)

    model, report = _inversion(args, reflection, {"eta": 0.0, "learning_rates": {"delta": 1e-4}})
    est = model.current_reflection()
    _write_json(args, "rayleigh.json", {"estimate": est.to_dict(), "best_validation_loss": report.best_validation_loss})


def cmd_invert_rcnn(args):
    def reflection(seed):
        return LearnedRcnn(RcnnWeights.random(args.hidden_size, seed))

    model, _ = _inversion(args, reflection, {})
    gamma, eps, kappa = reflection_curve(model.current_reflection())
    write_table(os.path.join(args.out, "reflection_curve.csv"), ("gamma", "eps", "kappa"), zip(gamma, eps, kappa))


def _amplitude_table(path):
    header, rows = read_table(path)
    try:
        cols = [header.index(n) for n in ("x", "y", "z", "amplitude")]
    except ValueError as exc:
        raise CliError(f"{path}: expected columns x,y,z,amplitude") from exc
    pts = np.array([[float(r[c]) for c in cols[:3]] for r in rows]).reshape(-1, 3)
    amp = np.array([float(r[cols[3]]) if r[cols[3]] != "" else np.nan for r in rows])
    return pts, amp


def cmd_eval(args):
    p_pts, pred = _amplitude_table(args.pred)
    t_pts, truth = _amplitude_table(args.truth)
    if p_pts.shape != t_pts.shape or not np.allclose(p_pts, t_pts, rtol=0, atol=1e-9):
        raise CliError("prediction and truth tables must list the same positions in the same order")
    ok = np.isfinite(pred) & np.isfinite(truth)
    report = evaluate(pred[ok], truth[ok]).to_dict()
    report["skipped"] = int(np.sum(~ok))
    _write_json(args, "metrics.json", report)


def cmd_baseline_idw(args):
    X, y = Dataset.from_csv(args.data).subset(args.split)
    pts = GridSpec.from_json(args.grid).points()
    write_field_csv(os.path.join(args.out, "field.csv"), pts, idw_baseline(X, y, pts, args.power))


def cmd_run_scenario(args):
    overrides = _load_json(args.config) if args.config else None
    result = run_scenario(args.name, overrides, out_dir=args.out, seed=args.seed, verbose=args.verbose)
    if args.verbose:
        print(json.dumps(result["metrics"], sort_keys=True, default=float))


# -- parser -------------------------------------------------------------------


def _global_flags(parser, suppress=False):
    # the copies on each subcommand only override when given explicitly
    def default(v):
        return argparse.SUPPRESS if suppress else v

    parser.add_argument("--seed", type=int, default=default(0),
                        help="seed for splits, noise, initialization and batching")
    parser.add_argument("--verbose", action="store_true", default=default(False), help="print per-epoch progress")
    parser.add_argument("--out", default=default("."), help="output directory (created if missing)")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    parser = _Parser(prog="rbnn", description="Ray-basis neural networks for acoustic field modelling")
    _global_flags(parser)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, parents=[common])
        p.set_defaults(func=func)
        return p

    p = add("simulate", cmd_simulate, "generate a dataset CSV from a scene and a trajectory")
    p.add_argument("--scene", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--split", type=_floats, default=[0.7, 0.3, 0.0])
    p.add_argument("--noise", type=float, default=0.0, help="max position error per dimension (m)")

    p = add("trace", cmd_trace, "write nominal eigenrays seen from a reference point")
    p.add_argument("--scene", required=True)
    p.add_argument("--reference", type=_vec3, required=True)

    p = add("train", cmd_train, "train a model on a dataset CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="JSON with 'model' and 'train' sections")
    p.add_argument("--init", help="start from this checkpoint instead of building a model")

    p = add("refine-positions", cmd_refine, "estimate per-record position corrections with a frozen model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--weight", type=float, default=1.0)
    p.add_argument("--split", default="train")
    p.add_argument("--config")

    p = add("predict", cmd_predict, "evaluate a checkpoint on a grid")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--grid", required=True)

    for name, func, text in (("invert-rayleigh", cmd_invert_rayleigh, "estimate Rayleigh seabed parameters"),
                             ("invert-rcnn", cmd_invert_rcnn, "learn a reflection curve")):
        p = add(name, func, text)
        p.add_argument("--data", required=True)
        p.add_argument("--scene", required=True)
        p.add_argument("--reference", type=_vec3)
        p.add_argument("--config")
        if name == "invert-rayleigh":
            p.add_argument("--init", type=_floats, default=[1.2, 1.0, 0.01], help="rho_r,c_r,delta")
        else:
            p.add_argument("--hidden-size", type=int, default=16)

    p = add("eval", cmd_eval, "compare two amplitude tables")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)

    p = add("baseline-idw", cmd_baseline_idw, "inverse-distance-weighted interpolation on a grid")
    p.add_argument("--data", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--power", type=float, default=2.0)
    p.add_argument("--split", default="train")

    p = add("run-scenario", cmd_run_scenario, "run a complete simulated scenario")
    p.add_argument("name", choices=SCENARIOS)
    p.add_argument("--config", help="JSON overrides for the scenario defaults")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "init", None) is not None and args.command == "invert-rayleigh" and len(args.init) != 3:
            raise CliError("--init expects rho_r,c_r,delta")
        os.makedirs(args.out, exist_ok=True)
        args.func(args)
    except (RBNNError, ValueError, KeyError, TypeError, OSError, json.JSONDecodeError) as exc:
        _emit_error(type(exc).__name__, str(exc))
        return EXIT_FAILURE
    return 0


if __name__ == "__main__":
    sys.exit(main())
