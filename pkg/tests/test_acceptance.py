"""Acceptance criteria 1-10.

Each test records one PASS/FAIL line (echoed in the terminal summary) and then asserts.
Criteria 5-8 share one desk-scale experiment: 64 training scenes at 64x64, 40 epochs,
8192-pixel batches, 128 rays, Adam at lr 5e-5, then the shadow network with and without
AO.  It takes most of an hour on one core.  Set ``NDS_ACCEPT_DIR`` to keep its artifacts
and reuse them on the next run (results are only reused when the settings match).
"""

from __future__ import annotations

import csv
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

import gradcheck
from conftest import record_criterion
from neural_deferred.cli import main as cli
from neural_deferred.core import read_pfm
from neural_deferred.evaluation import EvalSettings, evaluate_scenes, summarize, write_metrics_csv
from neural_deferred.metrics import evaluate, mse, psnr, psnr_from_mse, ssim
from neural_deferred.nn import load_checkpoint, save_checkpoint
from neural_deferred.sampling import Rng, sample_uniform_hemisphere
from neural_deferred.shading import (LightSample, SurfacePoint, fresnel_schlick, ggx_ndf,
                                     ggx_specular, shade_classical)
from neural_deferred.synthdata import generate_dataset, load_split
from neural_deferred.training import TrainConfig, train_phase1, train_phase2, write_loss_csv

EXPERIMENT = {
    "train": 64, "test": 16, "heldout_envs": 8, "resolution": 64, "gt_rays": 1024,
    "epochs": 40, "batch": 8192, "rays": 128, "lr": 5e-5, "seed": 2024, "hidden": [64, 64, 64],
}


def run(*argv):
    return cli([str(a) for a in argv])


# -- 1 -----------------------------------------------------------------------------------------


def test_criterion_01_gradients_match_finite_differences():
    t0 = time.perf_counter()
    worst = {}
    for seed in range(3):
        gen = np.random.default_rng(seed)
        for name in ("dense", "conv", "shader", "shadow_pipeline"):
            err = getattr(gradcheck, f"{name}_case")(gen)
            worst[name] = max(worst.get(name, 0.0), err)
        worst["shadow_pipeline_no_ao"] = max(worst.get("shadow_pipeline_no_ao", 0.0),
                                             gradcheck.shadow_pipeline_case(gen, use_ao=False))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-4 and elapsed < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {elapsed:.1f}s"
    record_criterion(1, "gradient checks (float64, rel err < 1e-4, < 60 s)", ok, detail)
    assert ok


# -- 2 -----------------------------------------------------------------------------------------


def _lambert(count, seed):
    n = np.array([0.0, 0.0, 1.0])
    d = sample_uniform_hemisphere(n, count, Rng(seed))
    pt = SurfacePoint(np.ones(3), n, np.array(0.0), np.array(0.5))
    return shade_classical(pt, n, LightSample(d, np.ones_like(d)), "ggx")[0]


def test_criterion_02_monte_carlo_estimator():
    t0 = time.perf_counter()
    albedo = _lambert(1_000_000, 1)
    trials = 500
    se_small = np.std([_lambert(256, 10_000 + k) for k in range(trials)])
    se_large = np.std([_lambert(1024, 20_000 + k) for k in range(trials)])
    ratio = se_small / se_large
    elapsed = time.perf_counter() - t0
    ok = 0.98 <= albedo <= 1.02 and 1.6 <= ratio <= 2.4 and elapsed < 120
    record_criterion(2, "white furnace and 1/sqrt(N) error", ok,
                     f"albedo {albedo:.4f}; SE(256)/SE(1024) = {ratio:.3f}; {elapsed:.1f}s")
    assert ok


# -- 3 -----------------------------------------------------------------------------------------


def test_criterion_03_ggx_analytics():
    gen = np.random.default_rng(3)
    d_err = abs(ggx_ndf(1.0, 0.5) - 1 / (np.pi * 0.25))
    f0 = 0.08 * gen.random(1000)
    f_exact = bool(np.all(fresnel_schlick(1.0, f0) == f0))
    m = 100_000
    n = gradcheck_units(gen, m)
    pt = SurfacePoint(gen.random((m, 3)), n, gen.random(m), gen.uniform(0.0, 1.0, m))
    l = _upper(gradcheck_units(gen, m), n)
    v = _upper(gradcheck_units(gen, m), n)
    a = ggx_specular(pt, l, v)
    b = ggx_specular(pt, v, l)
    recip = float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a))))
    ok = d_err <= 1e-6 and f_exact and recip < 1e-5
    record_criterion(3, "GGX closed forms and reciprocity", ok,
                     f"|D - 1/(0.25 pi)| = {d_err:.1e}; F(1) == F0: {f_exact}; "
                     f"worst reciprocity error {recip:.1e} over {m} probes")
    assert ok


def gradcheck_units(gen, n):
    v = gen.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _upper(d, n):
    return np.where((np.sum(d * n, -1) < 0)[:, None], -d, d)


# -- 4 -----------------------------------------------------------------------------------------


def test_criterion_04_oracle_self_consistency(tmp_path):
    data = tmp_path / "data"
    assert run("gen-data", "--count", 1, "--test-count", 0, "--heldout-envs", 0,
               "--resolution", 64, "--gt-rays", 4096, "--seed", 11, "--out", data) == 0
    scene = data / "train" / "scene_0000"
    t0 = time.perf_counter()
    assert run("render", "--gbuffer", scene, "--model", "ggx", "--rays", 4096,
               "--out", tmp_path / "ggx.pfm") == 0
    elapsed = time.perf_counter() - t0
    mask = read_pfm(scene / "mask.pfm")
    value = psnr(read_pfm(tmp_path / "ggx.pfm"), read_pfm(scene / "gt_unshadowed.pfm"), mask)
    ok = value > 40 and elapsed < 60
    record_criterion(4, "render --model ggx reproduces stored ground truth", ok,
                     f"PSNR {value:.1f} dB at 4096 rays, render {elapsed:.1f}s")
    assert ok


# -- shared experiment for 5-8 -----------------------------------------------------------------


class _Progress:
    def __init__(self, path):
        self.path = path

    def __call__(self, text):
        with open(self.path, "a") as f:
            f.write(text + "\n")


def _run_experiment(root: Path) -> dict:
    cfg = EXPERIMENT
    log = _Progress(root / "progress.log")
    data = root / "data"
    timing = {}
    t0 = time.perf_counter()
    generate_dataset(cfg["train"], cfg["seed"], data, resolution=cfg["resolution"],
                     test_count=cfg["test"], heldout_envs=cfg["heldout_envs"], rays=cfg["gt_rays"])
    timing["gen_data"] = time.perf_counter() - t0
    log(f"dataset {timing['gen_data']:.0f}s")
    train = load_split(data, "train")
    test = load_split(data, "test")
    relight = load_split(data, "relight")

    tc = TrainConfig(epochs=cfg["epochs"], batch=cfg["batch"], rays=cfg["rays"], lr=cfg["lr"],
                     seed=cfg["seed"], hidden=tuple(cfg["hidden"]))
    t0 = time.perf_counter()
    p1 = train_phase1(tc, train, progress=lambda r: log(f"phase1 epoch {r[0]} loss {r[1]:.5f} {r[2]:.0f}s"))
    timing["phase1"] = time.perf_counter() - t0
    save_checkpoint(root / "phase1.ckpt", p1.model, p1.adam, tc.seed, tc.epochs, {"phase": 1})
    write_loss_csv(root / "phase1.loss.csv", p1.losses)

    settings = EvalSettings(rays=cfg["rays"], seed=cfg["seed"])
    t0 = time.perf_counter()
    rows_test = evaluate_scenes(test, ["blinn-phong", "ggx", "neural"], settings, p1.model)
    timing["eval_test"] = time.perf_counter() - t0
    rows_relight = evaluate_scenes(relight, ["blinn-phong", "ggx", "neural"], settings, p1.model)
    write_metrics_csv(root / "metrics_test.csv", rows_test)
    write_metrics_csv(root / "metrics_relight.csv", rows_relight)
    log(f"phase1 {timing['phase1']:.0f}s; eval {timing['eval_test']:.0f}s")

    shadow = {}
    for use_ao in (True, False):
        key = "ao" if use_ao else "no_ao"
        c2 = TrainConfig(epochs=cfg["epochs"], batch=cfg["batch"], rays=cfg["rays"], lr=cfg["lr"],
                         seed=cfg["seed"], use_ao=use_ao)
        t0 = time.perf_counter()
        p2 = train_phase2(c2, train, p1.model,
                          progress=lambda r, k=key: log(f"phase2[{k}] epoch {r[0]} loss {r[1]:.5f}"))
        timing[f"phase2_{key}"] = time.perf_counter() - t0
        save_checkpoint(root / f"phase2_{key}.ckpt", p2.model, p2.adam, c2.seed, c2.epochs,
                        {"phase": 2, "use_ao": use_ao})
        write_loss_csv(root / f"phase2_{key}.loss.csv", p2.losses)
        s2 = EvalSettings(rays=cfg["rays"], seed=cfg["seed"], target="shadowed")
        rows = evaluate_scenes(test, ["neural", "neural+shadow"], s2, p1.model, p2.model)
        write_metrics_csv(root / f"metrics_shadowed_{key}.csv", rows)
        shadow[key] = rows

    results = {"config": cfg, "timing": timing, "phase1_losses": p1.losses,
               "test": rows_test, "relight": rows_relight, "shadow": shadow}
    (root / "results.json").write_text(json.dumps(results, indent=1))
    return results


@pytest.fixture(scope="session")
def experiment(tmp_path_factory):
    keep = os.environ.get("NDS_ACCEPT_DIR")
    root = Path(keep) if keep else tmp_path_factory.mktemp("experiment")
    root.mkdir(parents=True, exist_ok=True)
    cached = root / "results.json"
    if cached.exists():
        results = json.loads(cached.read_text())
        if results.get("config") == EXPERIMENT:
            return results
    return _run_experiment(root)


def _mean(rows, model, key):
    return float(np.mean([r[key] for r in rows if r["model"] == model]))


# -- 5 -----------------------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_05_shading_experiment(experiment):
    rows = experiment["test"]
    p, s = _mean(rows, "neural", "psnr"), _mean(rows, "neural", "ssim")
    t = experiment["timing"]
    total = t["gen_data"] + t["phase1"] + t["eval_test"]
    ok = p >= 30 and s >= 0.95 and total <= 3600
    record_criterion(5, "neural shader on 16 held-out scenes", ok,
                     f"PSNR {p:.2f} dB (>= 30), SSIM {s:.3f} (>= 0.95); "
                     f"data+train+eval {total / 60:.1f} min (<= 60)")
    assert ok


# -- 6 -----------------------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_06_relighting(experiment):
    p = _mean(experiment["relight"], "neural", "psnr")
    base = _mean(experiment["test"], "neural", "psnr")
    ok = p >= 25 and base - p <= 5
    record_criterion(6, "relighting under 8 held-out envmaps", ok,
                     f"PSNR {p:.2f} dB (>= 25); degradation {base - p:+.2f} dB vs criterion 5 (<= 5)")
    assert ok


# -- 7 -----------------------------------------------------------------------------------------


def _gain(rows):
    by_scene = {}
    for r in rows:
        by_scene.setdefault(r["scene_id"], {})[r["model"]] = r["psnr"]
    return float(np.mean([v["neural+shadow"] - v["neural"] for v in by_scene.values()]))


@pytest.mark.slow
def test_criterion_07_shadowing_ablation(experiment):
    with_ao = _gain(experiment["shadow"]["ao"])
    without = _gain(experiment["shadow"]["no_ao"])
    ok = with_ao >= 1.0 and without < with_ao
    record_criterion(7, "phase-2 shadow gain on contact-shadow scenes", ok,
                     f"AO {with_ao:+.2f} dB (>= +1), no AO {without:+.2f} dB (must be smaller)")
    assert ok


# -- 8 -----------------------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_08_beats_blinn_phong(experiment):
    rows = experiment["test"]
    n = {k: _mean(rows, "neural", k) for k in ("mse", "psnr", "ssim")}
    b = {k: _mean(rows, "blinn-phong", k) for k in ("mse", "psnr", "ssim")}
    ok = n["mse"] < b["mse"] and n["psnr"] > b["psnr"] and n["ssim"] > b["ssim"]
    record_criterion(8, "neural beats Blinn-Phong", ok,
                     f"MSE {n['mse']:.4f} vs {b['mse']:.4f}, PSNR {n['psnr']:.2f} vs {b['psnr']:.2f}, "
                     f"SSIM {n['ssim']:.3f} vs {b['ssim']:.3f}")
    assert ok


# -- 9 -----------------------------------------------------------------------------------------


def _pipeline(root: Path, workers: int) -> bytes:
    w = ["--workers", workers]
    data = root / "data"
    assert run("gen-data", "--count", 4, "--test-count", 2, "--heldout-envs", 1, "--resolution", 32,
               "--gt-rays", 32, "--seed", 9, "--out", data, *w) == 0
    common = ["--data", data, "--epochs", 2, "--rays", 16, "--seed", 9, *w]
    assert run("train", "--phase", 1, "--out", root / "p1.ckpt", *common) == 0
    assert run("train", "--phase", 2, "--phase1", root / "p1.ckpt", "--out", root / "p2.ckpt",
               *common) == 0
    assert run("eval", "--data", data, "--models", "blinn-phong,ggx,neural,neural+shadow",
               "--checkpoint", root / "p1.ckpt", "--shadow-checkpoint", root / "p2.ckpt",
               "--rays", 16, "--seed", 9, "--out", root / "metrics.csv", *w) == 0
    return (root / "metrics.csv").read_bytes()


def test_criterion_09_determinism(tmp_path):
    a = _pipeline(tmp_path / "a", 1)
    b = _pipeline(tmp_path / "b", 1)
    c = _pipeline(tmp_path / "c", 8)
    rows = len(a.splitlines()) - 1
    ok = a == b == c and rows > 0
    record_criterion(9, "gen-data -> train 1 -> train 2 -> eval is bit-identical", ok,
                     f"{rows} CSV rows; run1 == run2: {a == b}; workers 1 == workers 8: {a == c}")
    assert ok


# -- 10 ----------------------------------------------------------------------------------------


def test_criterion_10_metric_units():
    gen = np.random.default_rng(10)
    a = gen.random((32, 32, 3))
    b = np.clip(a + gen.normal(scale=0.05, size=a.shape), 0, 1)
    mask = np.zeros((32, 32), bool)
    mask[6:26, 5:28] = True
    base = evaluate(a, b, mask)
    probes = []
    for k in range(20):
        a2, b2 = a.copy(), b.copy()
        out = ~mask
        a2[out] = gen.permutation(a[out])
        b2[out] = gen.random((out.sum(), 3))
        probes.append(evaluate(a2, b2, mask) == base)
    ok = psnr_from_mse(0.01) == 20.0 and ssim(a, a) == 1.0 and all(probes) and mse(a, a) == 0.0
    record_criterion(10, "metric identities and mask invariance", ok,
                     f"psnr(0.01) = {psnr_from_mse(0.01)!r}; ssim(a, a) = {ssim(a, a)!r}; "
                     f"{sum(probes)}/{len(probes)} mask probes unchanged")
    assert ok
