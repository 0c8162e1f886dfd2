"""Acceptance criteria with pinned tolerances.

Each check appends a ``PASS``/``FAIL`` line that pytest prints in its terminal
summary. Run just this module with ``pytest tests/test_acceptance.py`` or
``python3 tests/test_acceptance.py``.
"""

import filecmp
import math
import sys
import time

import numpy as np
import pytest

from cli_inputs import command_lines, write_inputs
from helpers import ACCEPTANCE_LINES, finite_difference_check, helmholtz_residual
from rbnn.cli import main
from rbnn.core import Box, LearnedRcnn, PressureRelease, Rayleigh, RcnnWeights, Waveguide
from rbnn.model import GeometryAidedModel, ImageSourceModel, PlaneWaveModel
from rbnn.oracle import field_ism
from rbnn.scenarios import run_scenario
from rbnn.train import TrainConfig, objective


def record(criterion, name, value, limit, ok, unit=""):
    line = f"{'PASS' if ok else 'FAIL'}  [{criterion}] {name}: {value:.6g}{unit} (limit {limit})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def check(criterion, name, value, limit, ok, unit=""):
    assert record(criterion, name, value, limit, ok, unit), f"{name} = {value} violates {limit}"


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


# -- 1 ------------------------------------------------------------------------


def test_c1_helmholtz_compliance():
    rng = np.random.default_rng(2024)
    worst = 0.0
    with Timer() as t:
        for i in range(10):
            n = int(rng.integers(1, 9))
            k = float(rng.uniform(0.5, 20.0))
            m = PlaneWaveModel.random(n, k, 1.0, rng=rng)
            candidates = rng.uniform(-20, 20, (1000, 3))
            amp = m.predict(candidates)
            pts = candidates[amp > 0.05 * amp.max()][:100]
            assert len(pts) == 100
            res, _ = helmholtz_residual(m.field, pts, k, 2 * math.pi / k / 50)
            worst = max(worst, float(res.max()))
    check(1, "max relative Helmholtz residual", worst, "< 1e-3", worst < 1e-3)
    check(1, "runtime", t.seconds, "< 10 s", t.seconds < 10, " s")


# -- 2 ------------------------------------------------------------------------


def _random_configuration(i, rng):
    kind = ("plane", "image_source", "geometry-rcnn", "geometry-rayleigh")[i % 4]
    if kind == "plane":
        m = PlaneWaveModel.random(int(rng.integers(1, 6)), rng.uniform(0.5, 3), 1.0, rng=rng)
        X = rng.uniform(-2, 2, (8, 3))
    elif kind == "image_source":
        m = ImageSourceModel.random(int(rng.integers(1, 6)), rng.uniform(0.5, 3), rng.normal(size=3),
                                    (3.0, 10.0), 5.0, rng.uniform(0, 0.05), rng=rng)
        X = m.reference + rng.uniform(-1, 1, (8, 3))
    else:
        env = Waveguide(30.0, 1500.0, PressureRelease(), Rayleigh(1.5, 0.9, 0.001), rng.uniform(0, 0.01))
        refl = (LearnedRcnn(RcnnWeights.random(int(rng.integers(2, 8)), rng)) if kind == "geometry-rcnn"
                else Rayleigh(rng.uniform(1.1, 2.0), rng.uniform(0.8, 1.2), rng.uniform(0, 0.05)))
        ref = np.array([rng.uniform(40, 80), 0.0, 15.0])
        m = GeometryAidedModel.from_scene(env, (0, 0, 15), ref, rng.uniform(100, 400), refl, 3)
        n = m.n_rays
        m = m.with_params({"e_theta": rng.normal(0, 0.02, n), "e_psi": rng.normal(0, 0.02, n),
                           "e_d": rng.normal(0, 0.3, n)})
        X = np.column_stack([ref[0] + rng.uniform(-3, 3, 8), rng.uniform(-1, 1, 8), rng.uniform(2, 28, 8)])
    y = m.predict(X) * rng.uniform(0.5, 1.5, len(X))
    cfg = TrainConfig(loss=("squared", "absolute")[(i // 4) % 2], alpha=0.01, beta=0.5, eta=1.0,
                      trainable=tuple(m.params))
    return kind, m, X, y, cfg


def test_c2_gradient_oracle():
    rng = np.random.default_rng(7)
    mismatches, checked, kinds = [], 0, set()
    with Timer() as t:
        for i in range(20):
            kind, m, X, y, cfg = _random_configuration(i, rng)
            kinds.add(kind)
            _, grads, _ = objective(m, X, y, cfg)

            def fun(p, m=m, X=X, y=y, cfg=cfg):
                return objective(m.with_params(p), X, y, cfg)[0]

            bad = finite_difference_check(fun, dict(m.params), grads, rel=1e-5, abs_tol=1e-7)
            mismatches.extend((kind, *b) for b in bad)
            checked += m.n_parameters
    assert kinds == {"plane", "image_source", "geometry-rcnn", "geometry-rayleigh"}
    check(2, f"gradient mismatches over {checked} parameters", len(mismatches), "== 0", not mismatches)
    check(2, "runtime", t.seconds, "< 30 s", t.seconds < 30, " s")


# -- 3 ------------------------------------------------------------------------


def test_c3_ism_equivalence():
    rng = np.random.default_rng(3)
    with Timer() as t:
        wg = Waveguide(30.0, 1500.0, PressureRelease(), Rayleigh(1.5, 0.9, 0.001))
        m = GeometryAidedModel.from_scene(wg, (0, 0, 15), (125, 0, 15), 5000.0, wg.bottom, 6)
        X = np.column_stack([rng.uniform(100, 150, 100), rng.uniform(-5, 5, 100), rng.uniform(0.5, 29.5, 100)])
        truth = np.abs(field_ism(wg, (0, 0, 15), X, 5000.0, 6))
        err_wg = float(np.max(np.abs(m.predict(X) - truth) / truth))

        box = Box.tank((2.5, 1.2, 0.8), 1505.0, Rayleigh(1.5, 0.9, 0.0))
        mb = GeometryAidedModel.from_scene(box, (0.5, 0.6, 0.3), (1.2, 0.6, 0.3), 10000.0, Rayleigh(1.5, 0.9, 0.0),
                                           4)
        Xb = rng.uniform((0.9, 0.05, 0.05), (2.4, 1.15, 0.75), (100, 3))
        truth_b = np.abs(field_ism(box, (0.5, 0.6, 0.3), Xb, 10000.0, 4))
        err_box = float(np.max(np.abs(mb.predict(Xb) - truth_b) / truth_b))
    check(3, "waveguide max relative deviation", err_wg, "< 1e-10", err_wg < 1e-10)
    check(3, "tank max relative deviation", err_box, "< 1e-10", err_box < 1e-10)
    check(3, "runtime", t.seconds, "< 10 s", t.seconds < 10, " s")


# -- 4 ------------------------------------------------------------------------


def test_c4_plane_wave_recovery(tmp_path):
    with Timer() as t:
        r = run_scenario("far-field", {"frequency": 500.0}, out_dir=tmp_path, seed=0)
    m = r["metrics"]
    n_train = r["dataset"].counts()["train"]
    strips = [m[k]["rms_error_db"] for k in m if k.startswith("extrapolation_")]
    ok_area = record(4, f"dense AOI RMS error ({n_train} train points)", m["aoi"]["rms_error_db"], "< 1.0 dB",
                     m["aoi"]["rms_error_db"] < 1.0, " dB")
    ok_strip = record(4, "worst 50 m extrapolation strip RMS error", max(strips), "< 3 dB", max(strips) < 3.0, " dB")
    ok_time = record(4, "runtime (10 restarts)", t.seconds, "< 600 s", t.seconds < 600, " s")
    assert ok_area and ok_strip and ok_time


# -- 5 ------------------------------------------------------------------------


def test_c5_rayleigh_inversion():
    out = {}
    with Timer() as t:
        for label, noise in (("noiseless", 0.0), ("noisy", 0.01)):
            out[label] = run_scenario("invert-rayleigh", {"position_noise": noise}, seed=0)["metrics"]
    ok = []
    for label, limit in (("noiseless", 2.0), ("noisy", 5.0)):
        pe = out[label]["percent_error"]
        for name in ("rho_r", "c_r"):
            ok.append(record(5, f"{label} {name} error", abs(pe[name]), f"< {limit}%", abs(pe[name]) < limit, "%"))
    est, true = out["noiseless"]["estimate"]["delta"], out["noiseless"]["truth"]["delta"]
    ratio = est / true
    ok.append(record(5, "noiseless delta estimate / truth", ratio, "within [0.1, 10]", 0.1 <= ratio <= 10))
    ok.append(record(5, "runtime (both runs)", t.seconds, "< 600 s", t.seconds < 600, " s"))
    assert all(ok)


# -- 6 ------------------------------------------------------------------------


def test_c6_rcnn_curve_recovery():
    with Timer() as t:
        m = run_scenario("invert-rcnn", seed=0)["metrics"]
    lo, hi = np.degrees(m["sampled_angle_range"])
    ok = record(6, f"mean |eps - |Gamma|| over sampled angles ({lo:.1f}-{hi:.1f} deg)", m["eps_mean_abs_deviation"],
                "< 0.05", m["eps_mean_abs_deviation"] < 0.05)
    ok &= record(6, "runtime", t.seconds, "< 900 s", t.seconds < 900, " s")
    assert ok


# -- 7 and 8 ------------------------------------------------------------------


@pytest.fixture(scope="module")
def tank_run():
    with Timer() as t:
        r = run_scenario("tank-sim", seed=0)
    return r, t.seconds


def test_c7_tank_mate_ratio(tank_run):
    r, seconds = tank_run
    m = r["metrics"]
    check(7, f"IDW / RBNN sparse-region MATE ({m['rbnn_sparse']['mate_linear']:.4g} vs "
             f"{m['idw_sparse']['mate_linear']:.4g})", m["mate_ratio"], ">= 10x", m["mate_ratio"] >= 10, "x")


def test_c7_tank_spearman(tank_run):
    r, seconds = tank_run
    rho = r["metrics"]["spearman"]
    counts = r["dataset"].counts()
    assert counts == {"train": 250, "validation": 28, "test": 222}
    check(7, "Spearman rho on held-out region", rho, "> 0.9", rho > 0.9)
    check(7, "runtime", seconds, "< 900 s", seconds < 900, " s")


def test_c8_two_stage_refinement(tank_run):
    r, seconds = tank_run
    ref = r["metrics"]["refinement"]
    ok = record(8, f"median offset error (injected median {ref['median_injected']:.4g} m)", ref["median_error"],
                "< 0.02 m", ref["median_error"] < 0.02, " m")
    ok &= record(8, "fraction of estimated offsets below 4 cm", ref["fraction_below_4cm"], "> 0.5",
                 ref["fraction_below_4cm"] > 0.5)
    ok &= record(8, "runtime (shared tank run)", seconds, "< 600 s", seconds < 600, " s")
    assert ok


# -- 9 ------------------------------------------------------------------------


def _snapshot(tmp_path, name):
    files = write_inputs(tmp_path)
    out = tmp_path / name
    codes = [main(["--seed", "11", "--out", str(out / tag), *argv]) for tag, argv in command_lines(files, out)]
    assert codes == [0] * len(codes)
    return out


def test_c9_cli_determinism(tmp_path):
    a = _snapshot(tmp_path, "first")
    b = _snapshot(tmp_path, "second")
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.suffix in (".csv", ".json"))
    differing = [str(f) for f in files if not filecmp.cmp(a / f, b / f, shallow=False)]
    n_commands = len({f.parts[0] for f in files})
    check(9, f"differing outputs across {len(files)} files from {n_commands} commands", len(differing), "== 0",
          not differing)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
