"""End-to-end scenario runners: simulate data, train, evaluate, write artifacts.

Each runner takes a JSON-like configuration (defaults from
:func:`scenario_defaults`, overridden key by key) and returns a summary dict.
When ``out_dir`` is given, the dataset, checkpoint, training report, metrics
and field grids are written there.
"""

from __future__ import annotations

import copy
import json
import math
import os

import numpy as np

from .core import (
    Box,
    InvalidArgumentError,
    LearnedRcnn,
    PressureRelease,
    RcnnWeights,
    Waveguide,
    angles_from_direction,
    environment_from_dict,
    reflection_from_dict,
)
from .data import Dataset, random_split, write_table
from .grid import GridSpec, predict_points, write_field_csv
from .metrics import evaluate, idw_baseline, mate, spearman
from .model import GeometryAidedModel, PlaneWaveModel
from .oracle import (
    TrajectoryConfig,
    add_position_noise,
    enumerate_images,
    field_ism,
    gen_zigzag_trajectory,
    image_coefficient,
)
from .raytrace import incidence_angles
from .reflection import HALF_PI, magnitude_phase
from .train import TrainConfig, multi_restart_train, refine_positions, train

SCENARIOS = ("far-field", "near-field", "invert-rcnn", "invert-rayleigh", "tank-sim")

_SEABED = {"type": "rayleigh", "rho_r": 1.5, "c_r": 0.9, "delta": 0.001}
_WAVEGUIDE = {"type": "waveguide", "depth": 30.0, "sound_speed": 1541.0,
              "surface": {"type": "pressure_release"}, "bottom": _SEABED, "absorption": 0.0}

_DEFAULTS = {
    "far-field": {
        "frequency": 10000.0,
        "generator": {
            "environment": {**_WAVEGUIDE, "depth": 35.0},
            "source": [-995.0, 0.0, 5.0],
            "reference": [25.0, 0.0, 17.5],
            "max_order": 2,
        },
        "trajectory": {"start": [0.0, 0.0, 2.5], "drift_velocity": 0.0196, "vertical_speed": 0.2,
                       "depth_bounds": [2.5, 32.5], "sample_interval": 2.59, "profiles": 17},
        "split": [0.7, 0.3, 0.0],
        "position_noise": 0.0,
        "n_rays": 60,
        "amplitude_scale": 3.0,
        "alphas": [0.0003],
        "train": {"learning_rate": 0.01, "batch_size": 64, "max_epochs": 1500, "patience": 500,
                  "restarts": 10},
        "grid": {"bounds": [[0.0, 50.0], [0.0, 0.0], [2.5, 32.5]], "resolution": [0.5, 0.0, 0.5]},
        "extrapolation": [
            {"bounds": [[-50.0, 0.0], [0.0, 0.0], [2.5, 32.5]], "resolution": [0.5, 0.0, 0.5]},
            {"bounds": [[50.0, 100.0], [0.0, 0.0], [2.5, 32.5]], "resolution": [0.5, 0.0, 0.5]},
        ],
    },
    "near-field": {
        "frequency": 5000.0,
        "environment": _WAVEGUIDE,
        "source": [0.0, 0.0, 15.0],
        "max_order": 6,
        "reference": [125.0, 0.0, 15.0],
        "trajectory": {"start": [100.0, 0.0, 1.0], "drift_velocity": 0.0896, "vertical_speed": 0.1,
                       "depth_bounds": [1.0, 29.0], "sample_interval": 3.34, "profiles": 2},
        "split": [0.7, 0.3, 0.0],
        "position_noise": 0.0,
        "hidden_size": 16,
        "train": {"learning_rate": 0.01, "batch_size": 32, "max_epochs": 500, "patience": 300,
                  "restarts": 10, "eta": 100.0},
        "grid": {"bounds": [[100.0, 150.0], [0.0, 0.0], [1.0, 29.0]], "resolution": [0.5, 0.0, 0.5]},
        "extrapolation": [
            {"bounds": [[50.0, 100.0], [0.0, 0.0], [1.0, 29.0]], "resolution": [0.5, 0.0, 0.5]},
            {"bounds": [[150.0, 200.0], [0.0, 0.0], [1.0, 29.0]], "resolution": [0.5, 0.0, 0.5]},
        ],
    },
    "invert-rcnn": {
        "frequency": 5000.0,
        "environment": _WAVEGUIDE,
        "source": [0.0, 0.0, 15.0],
        "max_order": 6,
        "reference": [250.0, 0.0, 15.0],
        "trajectory": {"start": [100.0, 0.0, 0.5], "drift_velocity": 0.10352, "vertical_speed": 0.1,
                       "depth_bounds": [0.5, 29.5], "sample_interval": 2.52, "profiles": 10},
        "split": [0.7, 0.3, 0.0],
        "position_noise": 0.0,
        "hidden_size": 16,
        "train": {"learning_rate": 0.01, "batch_size": 32, "max_epochs": 300, "patience": 300,
                  "restarts": 1, "eta": 100.0},
    },
    "invert-rayleigh": {
        "frequency": 5000.0,
        "environment": _WAVEGUIDE,
        "source": [0.0, 0.0, 15.0],
        "max_order": 6,
        "reference": [150.0, 0.0, 15.0],
        "trajectory": {"start": [100.0, 0.0, 0.5], "drift_velocity": 0.1731, "vertical_speed": 0.1,
                       "depth_bounds": [0.5, 29.5], "sample_interval": 3.48, "profiles": 2},
        "split": [0.7, 0.3, 0.0],
        "position_noise": 0.0,
        "initial": {"rho_r": 1.2, "c_r": 1.0, "delta": 0.01},
        "train": {"learning_rate": 0.003, "learning_rates": {"delta": 0.0001}, "batch_size": 32,
                  "max_epochs": 2000, "patience": 300, "restarts": 1, "eta": 0.0},
    },
    "tank-sim": {
        "frequency": 10000.0,
        "environment": {"type": "box", "dims": [2.5, 1.2, 0.8], "sound_speed": 1505.0, "absorption": 0.0,
                        "walls": {"x_min": {"type": "rayleigh", "rho_r": 1.5, "c_r": 0.9, "delta": 0.0},
                                  "x_max": {"type": "rayleigh", "rho_r": 1.5, "c_r": 0.9, "delta": 0.0},
                                  "y_min": {"type": "rayleigh", "rho_r": 1.5, "c_r": 0.9, "delta": 0.0},
                                  "y_max": {"type": "rayleigh", "rho_r": 1.5, "c_r": 0.9, "delta": 0.0},
                                  "z_min": {"type": "pressure_release"},
                                  "z_max": {"type": "rayleigh", "rho_r": 1.5, "c_r": 0.9, "delta": 0.0}}},
        "source": [0.5, 0.6, 0.3],
        "truth_max_order": 4,
        "model_max_order": 2,
        "dims_error": [0.01, 0.015, 0.02],
        "source_error": 0.02,
        "aoi": {"x": [1.0, 1.36], "y": [0.15, 1.05], "z": [0.10, 0.54]},
        "split_depth": 0.40,
        "counts": {"train": 250, "validation": 28, "test": 222},
        "noise_depth": 0.36,
        "noise_bounds": [0.02, 0.04],
        "reference": [1.18, 0.6, 0.32],
        "hidden_size": 16,
        "train": {"learning_rate": 0.003, "batch_size": 32, "max_epochs": 400, "patience": 300, "restarts": 1,
                  "loss": "absolute", "eta": 100.0, "beta": 10.0, "zeta0": 10.0},
        "refine": {"weight": 3.0, "learning_rate": 0.001, "max_epochs": 3000, "patience": 300},
        "idw_power": 2.0,
        "grid": {"bounds": [[1.0, 1.36], [0.15, 1.05], [0.10, 0.54]], "resolution": [0.02, 0.05, 0.05]},
    },
}


def scenario_defaults(name):
    if name not in _DEFAULTS:
        raise InvalidArgumentError(f"unknown scenario {name!r}; expected one of {SCENARIOS}")
    return copy.deepcopy(_DEFAULTS[name])


def _merge(base, overrides):
    out = dict(base)
    for key, val in (overrides or {}).items():
        if isinstance(val, dict) and isinstance(out.get(key), dict) and key not in ("environment",):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _train_config(cfg, seed, verbose, **extra):
    d = {**cfg["train"], **extra, "seed": seed, "verbose": verbose}
    return TrainConfig.from_dict(d)


def _trajectory_dataset(env, source, cfg, seed):
    positions = gen_zigzag_trajectory(TrajectoryConfig.from_dict(cfg["trajectory"]))
    amp = np.abs(field_ism(env, source, positions, cfg["frequency"], cfg.get("max_order")))
    ds = Dataset(positions, amp, random_split(len(positions), cfg["split"], seed))
    return _maybe_noisy(ds, cfg, seed)


def _maybe_noisy(ds, cfg, seed):
    noise = float(cfg.get("position_noise", 0.0))
    return add_position_noise(ds, noise, seed + 1) if noise > 0 else ds


class _Writer:
    def __init__(self, out_dir):
        self.out_dir = out_dir
        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)

    def path(self, name):
        return os.path.join(self.out_dir, name)

    def json(self, name, obj):
        if self.out_dir is not None:
            with open(self.path(name), "w") as fh:
                json.dump(obj, fh, indent=2, sort_keys=True)
                fh.write("\n")

    def dataset(self, name, ds):
        if self.out_dir is not None:
            ds.to_csv(self.path(name))

    def field(self, name, points, amps):
        if self.out_dir is not None:
            write_field_csv(self.path(name), points, amps)

    def table(self, name, header, rows):
        if self.out_dir is not None:
            write_table(self.path(name), header, rows)


def _grid_metrics(model, truth_fn, grid_dict, writer, tag):
    grid = GridSpec.from_dict(grid_dict)
    pts = grid.points()
    pred = predict_points(model, pts)
    truth = truth_fn(pts)
    ok = np.isfinite(pred) & np.isfinite(truth)
    writer.field(f"field_{tag}.csv", pts, pred)
    writer.field(f"truth_{tag}.csv", pts, truth)
    return evaluate(pred[ok], truth[ok]).to_dict()


# -- far field --------------------------------------------------------------


def far_field_rays(cfg):
    """Plane-wave approximation of the generator's eigenrays at its reference point.

    Each image becomes one plane wave with the image's direction, amplitude
    ``|coefficient| / distance`` (normalized by the largest) and the phase that
    matches the spherical term at the reference point.
    """
    gen = cfg["generator"]
    env = environment_from_dict(gen["environment"])
    k = 2.0 * math.pi * cfg["frequency"] / env.sound_speed
    rc = np.asarray(gen["reference"], dtype=float)
    rows = []
    for im in enumerate_images(env, gen["source"], gen["max_order"]):
        v = rc - im.position
        d = float(np.linalg.norm(v))
        u = v / d
        coeff = image_coefficient(env, im, u[None])[0]
        theta, psi = angles_from_direction(u)
        rows.append((abs(coeff) / d, float(np.angle(coeff)) + k * d - k * float(u @ rc), theta, psi))
    rows = np.array(rows)
    rows[:, 0] /= rows[:, 0].max()
    return PlaneWaveModel(rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3], k)


def run_far_field(cfg, seed, writer, verbose=False):
    truth = far_field_rays(cfg)
    positions = gen_zigzag_trajectory(TrajectoryConfig.from_dict(cfg["trajectory"]))
    ds = Dataset(positions, truth.predict(positions), random_split(len(positions), cfg["split"], seed))
    ds = _maybe_noisy(ds, cfg, seed)
    writer.dataset("dataset.csv", ds)
    k = truth.wavenumber
    scale = float(cfg["amplitude_scale"]) * float(ds.subset("train")[1].max())
    n_rays = int(cfg["n_rays"])

    def factory(s):
        return PlaneWaveModel.random(n_rays, k, amplitude_scale=scale, rng=s)

    best = None
    for alpha in cfg["alphas"]:
        model, report = multi_restart_train(factory, ds, _train_config(cfg, seed, verbose, alpha=float(alpha)))
        if best is None or report.best_validation_loss < best[1].best_validation_loss:
            best = (model, report, float(alpha))
    model, report, alpha = best
    metrics = {"alpha": alpha, "best_validation_loss": report.best_validation_loss,
               "n_parameters": model.n_parameters, "aoi": _grid_metrics(model, truth.predict, cfg["grid"], writer, "aoi")}
    for i, g in enumerate(cfg.get("extrapolation", [])):
        metrics[f"extrapolation_{i}"] = _grid_metrics(model, truth.predict, g, writer, f"extrapolation_{i}")
    if cfg.get("extrapolation"):
        pts = np.vstack([GridSpec.from_dict(g).points() for g in cfg["extrapolation"]])
        metrics["extrapolation"] = evaluate(model.predict(pts), truth.predict(pts)).to_dict()
    writer.json("checkpoint.json", model.to_dict())
    writer.json("report.json", report.to_dict())
    writer.json("metrics.json", metrics)
    return {"model": model, "report": report, "metrics": metrics, "dataset": ds, "truth": truth}


# -- waveguide scenarios with known geometry --------------------------------


def _geometry_setup(cfg, seed):
    env = environment_from_dict(cfg["environment"])
    ds = _trajectory_dataset(env, cfg["source"], cfg, seed)
    return env, ds


def _rcnn_factory(env, cfg):
    def factory(s):
        refl = LearnedRcnn(RcnnWeights.random(int(cfg.get("hidden_size", 16)), s))
        return GeometryAidedModel.from_scene(env, cfg["source"], cfg["reference"], cfg["frequency"], refl,
                                             cfg.get("max_order"))

    return factory


def run_near_field(cfg, seed, writer, verbose=False):
    env, ds = _geometry_setup(cfg, seed)
    writer.dataset("dataset.csv", ds)
    model, report = multi_restart_train(_rcnn_factory(env, cfg), ds, _train_config(cfg, seed, verbose))

    def truth(p):
        return np.abs(field_ism(env, cfg["source"], p, cfg["frequency"], cfg.get("max_order")))

    metrics = {"best_validation_loss": report.best_validation_loss, "n_parameters": model.n_parameters,
               "aoi": _grid_metrics(model, truth, cfg["grid"], writer, "aoi")}
    for i, g in enumerate(cfg.get("extrapolation", [])):
        metrics[f"extrapolation_{i}"] = _grid_metrics(model, truth, g, writer, f"extrapolation_{i}")
    writer.json("checkpoint.json", model.to_dict())
    writer.json("report.json", report.to_dict())
    writer.json("metrics.json", metrics)
    return {"model": model, "report": report, "metrics": metrics, "dataset": ds}


def sampled_bottom_angles(model, positions, axis=2):
    """Incidence angles on lossy faces of ``axis`` for every (ray, receiver) pair."""
    out = []
    for ray in model.nominal:
        if ray.lossy_counts[axis]:
            for p in positions:
                out.append(incidence_angles(ray, p)[sum(ray.lossy_counts[:axis])])
    return np.array(out)


def reflection_curve(reflection, n=181):
    gamma = np.linspace(0.0, HALF_PI, n)
    eps, kappa = magnitude_phase(reflection, gamma)
    return gamma, np.broadcast_to(eps, gamma.shape), np.broadcast_to(kappa, gamma.shape)


def run_invert_rcnn(cfg, seed, writer, verbose=False):
    env, ds = _geometry_setup(cfg, seed)
    writer.dataset("dataset.csv", ds)
    model, report = multi_restart_train(_rcnn_factory(env, cfg), ds, _train_config(cfg, seed, verbose))
    learned = model.current_reflection()
    gamma, eps, kappa = reflection_curve(learned)
    writer.table("reflection_curve.csv", ("gamma", "eps", "kappa"), zip(gamma, eps, kappa))
    true_bottom = env.bottom if isinstance(env, Waveguide) else None
    metrics = {"best_validation_loss": report.best_validation_loss}
    if true_bottom is not None and not isinstance(true_bottom, PressureRelease):
        sampled = sampled_bottom_angles(model, ds.subset("train")[0])
        if sampled.size:
            e_hat = magnitude_phase(learned, sampled)[0]
            e_true = magnitude_phase(true_bottom, sampled)[0]
            metrics["eps_mean_abs_deviation"] = float(np.mean(np.abs(e_hat - e_true)))
            metrics["sampled_angle_range"] = [float(sampled.min()), float(sampled.max())]
    writer.json("checkpoint.json", model.to_dict())
    writer.json("report.json", report.to_dict())
    writer.json("metrics.json", metrics)
    return {"model": model, "report": report, "metrics": metrics, "dataset": ds}


def run_invert_rayleigh(cfg, seed, writer, verbose=False):
    env, ds = _geometry_setup(cfg, seed)
    writer.dataset("dataset.csv", ds)
    init = reflection_from_dict({"type": "rayleigh", **cfg["initial"]})

    def factory(s):
        return GeometryAidedModel.from_scene(env, cfg["source"], cfg["reference"], cfg["frequency"], init,
                                             cfg.get("max_order"))

    model, report = multi_restart_train(factory, ds, _train_config(cfg, seed, verbose))
    est = model.current_reflection()
    result = {"estimate": est.to_dict(), "best_validation_loss": report.best_validation_loss}
    true_bottom = env.bottom if isinstance(env, Waveguide) else None
    if true_bottom is not None and true_bottom.to_dict().get("type") == "rayleigh":
        result["truth"] = true_bottom.to_dict()
        result["percent_error"] = {
            name: (100.0 * (getattr(est, name) - getattr(true_bottom, name)) / getattr(true_bottom, name)
                   if getattr(true_bottom, name) else None)
            for name in ("rho_r", "c_r", "delta")
        }
    writer.json("rayleigh.json", result)
    writer.json("checkpoint.json", model.to_dict())
    writer.json("report.json", report.to_dict())
    return {"model": model, "report": report, "metrics": result, "dataset": ds}


# -- tank ---------------------------------------------------------------------


def tank_data(cfg, seed):
    """True and approximate tank geometry plus the clean train/validation/test data.

    Positions are drawn uniformly in the AOI; records shallower than
    ``split_depth`` form the training region, deeper ones the test region.
    """
    env = environment_from_dict(cfg["environment"])
    if not isinstance(env, Box):
        raise InvalidArgumentError("tank scenario needs a box environment")
    src = np.asarray(cfg["source"], dtype=float)
    rng = np.random.default_rng(seed)
    aoi = cfg["aoi"]
    counts = cfg["counts"]
    n_region = counts["train"] + counts["validation"]

    def draw(n, zlo, zhi):
        return np.column_stack([rng.uniform(*aoi["x"], n), rng.uniform(*aoi["y"], n), rng.uniform(zlo, zhi, n)])

    x_region = draw(n_region, aoi["z"][0], cfg["split_depth"])
    x_test = draw(counts["test"], cfg["split_depth"], aoi["z"][1])
    positions = np.vstack([x_region, x_test])
    amp = np.abs(field_ism(env, src, positions, cfg["frequency"], cfg["truth_max_order"]))
    split = np.array(["train"] * counts["train"] + ["validation"] * counts["validation"] + ["test"] * counts["test"],
                     dtype=object)
    clean = Dataset(positions, amp, split)
    approx_env = Box(tuple(np.asarray(env.dims) + np.asarray(cfg["dims_error"])), env.sound_speed, env.walls,
                     env.absorption)
    approx_src = src + cfg["source_error"] / math.sqrt(3.0)
    return env, approx_env, approx_src, clean


def tank_noise_bounds(cfg, positions):
    shallow, deep = cfg["noise_bounds"]
    return np.where(positions[:, 2] < cfg["noise_depth"], shallow, deep)


def run_tank_sim(cfg, seed, writer, verbose=False):
    env, approx_env, approx_src, clean = tank_data(cfg, seed)
    # test records keep their exact positions; only measured records are noisy
    bound = tank_noise_bounds(cfg, clean.positions) * (clean.split != "test")
    noisy = add_position_noise(clean, bound, seed + 1)
    writer.dataset("dataset.csv", noisy)

    def factory(s):
        refl = LearnedRcnn(RcnnWeights.random(int(cfg.get("hidden_size", 16)), s))
        return GeometryAidedModel.from_scene(approx_env, approx_src, cfg["reference"], cfg["frequency"], refl,
                                             cfg["model_max_order"])

    model, report = multi_restart_train(factory, noisy, _train_config(cfg, seed, verbose))
    x_test, y_test = noisy.subset("test")
    x_train, y_train = noisy.subset("train")
    pred = model.predict(x_test)
    base = idw_baseline(x_train, y_train, x_test, cfg["idw_power"])
    metrics = {
        "best_validation_loss": report.best_validation_loss,
        "rbnn_sparse": evaluate(pred, y_test).to_dict(),
        "idw_sparse": evaluate(base, y_test).to_dict(),
        "mate_ratio": mate(base, y_test) / max(mate(pred, y_test), 1e-300),
        "spearman": spearman(pred, y_test),
    }
    ref_cfg = cfg["refine"]
    rcfg = _train_config(cfg, seed, verbose, learning_rate=ref_cfg["learning_rate"],
                         max_epochs=ref_cfg["max_epochs"], patience=ref_cfg["patience"])
    offsets, _ = refine_positions(model, noisy, ref_cfg["weight"], rcfg, split="train")
    true_corr = (clean.positions - noisy.positions)[noisy.mask("train")]
    err = np.linalg.norm(offsets - true_corr, axis=1)
    norms = np.linalg.norm(offsets, axis=1)
    metrics["refinement"] = {
        "median_error": float(np.median(err)),
        "median_injected": float(np.median(np.linalg.norm(true_corr, axis=1))),
        "fraction_below_4cm": float(np.mean(norms < 0.04)),
    }
    writer.table("offsets.csv", ("index", "dx", "dy", "dz"),
                 [(int(i), *o) for i, o in zip(np.nonzero(noisy.mask("train"))[0], offsets)])
    if cfg.get("grid"):
        def truth(p):
            return np.abs(field_ism(env, cfg["source"], p, cfg["frequency"], cfg["truth_max_order"]))

        metrics["dense"] = _grid_metrics(model, truth, cfg["grid"], writer, "aoi")
    writer.json("checkpoint.json", model.to_dict())
    writer.json("report.json", report.to_dict())
    writer.json("metrics.json", metrics)
    return {"model": model, "report": report, "metrics": metrics, "dataset": noisy, "clean": clean,
            "offsets": offsets}


_RUNNERS = {
    "far-field": run_far_field,
    "near-field": run_near_field,
    "invert-rcnn": run_invert_rcnn,
    "invert-rayleigh": run_invert_rayleigh,
    "tank-sim": run_tank_sim,
}


def run_scenario(name, config=None, out_dir=None, seed=0, verbose=False):
    """Run one named scenario; ``config`` overrides the defaults key by key."""
    cfg = _merge(scenario_defaults(name), config)
    result = _RUNNERS[name](cfg, int(seed), _Writer(out_dir), verbose)
    result["config"] = cfg
    return result
