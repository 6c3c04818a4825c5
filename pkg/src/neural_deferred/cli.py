"""Command line entry point: gen-data, train, render, relight, eval, check.

Exit codes: 0 ok, 1 usage error, 2 data contract violation, 3 numeric failure.
Errors are also reported as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .core import ContractError, Image, read_pfm, save_image
from .nn.checkpoint import CheckpointError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

# name -> (type, default); the subset of flags that may also come from --config files
CONFIGURABLE = {
    "seed": (int, 0), "epochs": (int, 40), "batch": (int, 8192), "rays": (int, 128),
    "lr": (float, 5e-5), "workers": (int, 1), "hidden": (str, "64,64,64"),
    "count": (int, 8), "resolution": (int, 64), "gt_rays": (int, 1024),
    "exposure": (float, 1.0), "intensity_scale": (float, 1.0),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(p, *names):
    helps = {
        "seed": "random seed (every subcommand is deterministic under a fixed seed)",
        "workers": "parallel worker processes; results do not depend on this",
        "rays": "light rays sampled per pixel",
        "exposure": "scalar multiplied into the environment map after loading",
        "intensity_scale": "output scale for the classical models (blinn-phong, ggx)",
    }
    for name in names:
        typ, _ = CONFIGURABLE[name]
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None,
                       help=f"{helps[name]} (default {CONFIGURABLE[name][1]})")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="neural-deferred", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset with the GGX oracle")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=None, help="training scenes (default 8)")
    p.add_argument("--test-count", type=int, default=None, help="held-out scenes (default count/4)")
    p.add_argument("--heldout-envs", type=int, default=8, help="held-out relighting envmaps")
    p.add_argument("--resolution", type=int, default=None, help="image width and height (default 64)")
    p.add_argument("--gt-rays", dest="gt_rays", type=int, default=None,
                   help="oracle rays per pixel for ground truth (default 1024)")
    p.add_argument("--config", help="key=value file; flags override it")
    _common(p, "seed", "workers")

    p = sub.add_parser("train", help="train phase 1 (shader) or phase 2 (shadow net)")
    p.add_argument("--phase", type=int, choices=(1, 2), required=True)
    p.add_argument("--data", required=True, help="dataset directory from gen-data")
    p.add_argument("--out", required=True, help="checkpoint path; loss CSV and config go beside it")
    p.add_argument("--epochs", type=int, default=None, help="epochs (default 40)")
    p.add_argument("--batch", type=int, default=None, help="foreground pixels per image step (default 8192)")
    p.add_argument("--lr", type=float, default=None, help="Adam learning rate (default 5e-5)")
    p.add_argument("--hidden", default=None, help="hidden widths of the shading MLP (default 64,64,64)")
    p.add_argument("--phase1", help="phase-1 checkpoint to freeze (required for --phase 2)")
    p.add_argument("--no-ao", dest="no_ao", action="store_true", help="drop the AO input of the shadow net")
    p.add_argument("--resume", help="continue from this checkpoint (weights, Adam state, epoch)")
    p.add_argument("--config", help="key=value file; flags override it")
    _common(p, "seed", "rays", "workers")

    for name, helptext in (("render", "render one G-buffer"),
                           ("relight", "render a G-buffer under a different environment map")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--gbuffer", required=True, help="scene manifest (scene.json or its directory)")
        p.add_argument("--env", required=(name == "relight"),
                       help="environment map (.pfm or .hdr); default: the manifest's")
        p.add_argument("--checkpoint", help="phase-1 checkpoint (for --model neural)")
        p.add_argument("--shadow-checkpoint", dest="shadow_checkpoint",
                       help="phase-2 checkpoint; applies the predicted shadow map")
        p.add_argument("--model", choices=("blinn-phong", "ggx", "neural"), default="neural")
        p.add_argument("--out", required=True, help="output image (.pfm keeps linear floats, else PNG)")
        p.add_argument("--config", help="key=value file; flags override it")
        _common(p, "seed", "rays", "workers", "exposure", "intensity_scale")

    p = sub.add_parser("eval", help="score shading models against oracle ground truth (CSV)")
    p.add_argument("--data", help="dataset directory")
    p.add_argument("--split", default="test", help="train, test or relight (default test)")
    p.add_argument("--models", default="blinn-phong,ggx,neural",
                   help="comma list from blinn-phong, ggx, neural, neural+shadow")
    p.add_argument("--checkpoint", help="phase-1 checkpoint")
    p.add_argument("--shadow-checkpoint", dest="shadow_checkpoint", help="phase-2 checkpoint")
    p.add_argument("--target", choices=("unshadowed", "shadowed"), default="unshadowed",
                   help="which ground truth to compare against")
    p.add_argument("--whole-image", action="store_true", help="score all pixels, not just foreground")
    p.add_argument("--pred", help="score this image file directly against --gt")
    p.add_argument("--gt", help="ground-truth image for --pred")
    p.add_argument("--mask", help="optional mask image for --pred/--gt")
    p.add_argument("--out", required=True, help="metrics CSV")
    p.add_argument("--config", help="key=value file; flags override it")
    _common(p, "seed", "rays", "workers", "intensity_scale")

    p = sub.add_parser("check", help="run the fast invariant self-test suite")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized probes")
    return ap


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment.  Keys use flag names (dashes or underscores)."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIGURABLE:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = CONFIGURABLE[key][0](value.strip("\"'"))
    return out


def resolve(args) -> dict:
    """Effective settings: CLI flag > config file > default."""
    file_values = read_config_file(args.config) if getattr(args, "config", None) else {}
    eff = {}
    for key, value in vars(args).items():
        if key in CONFIGURABLE and value is None:
            default = CONFIGURABLE[key][1]
            if key == "seed" and args.command in ("render", "relight"):
                default = None  # fall back to the scene manifest's seed
            value = file_values.get(key, default)
        eff[key] = value
    return eff


def _echo(directory, eff: dict, name="effective_config.json"):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / name).write_text(json.dumps(eff, indent=2, sort_keys=True, default=str) + "\n")


def _hidden(text) -> tuple:
    try:
        return tuple(int(x) for x in str(text).split(",") if x.strip())
    except ValueError as exc:
        raise UsageError(f"bad --hidden {text!r}") from exc


# -- subcommands -------------------------------------------------------------------------------


def cmd_gen_data(eff):
    from .synthdata import generate_dataset
    out = Path(eff["out"])
    generate_dataset(eff["count"], eff["seed"], out, resolution=eff["resolution"],
                     test_count=eff["test_count"], heldout_envs=eff["heldout_envs"],
                     rays=eff["gt_rays"], workers=eff["workers"])
    # the tree must not depend on where it was written, or on the worker count
    _echo(out, {k: v for k, v in eff.items() if k not in ("out", "workers")})


def _train_config(eff):
    from .training import TrainConfig
    return TrainConfig(epochs=eff["epochs"], batch=eff["batch"], rays=eff["rays"], lr=eff["lr"],
                       seed=eff["seed"], hidden=_hidden(eff["hidden"]), use_ao=not eff["no_ao"],
                       workers=eff["workers"])


def cmd_train(eff):
    from .nn.checkpoint import load_checkpoint, save_checkpoint
    from .synthdata import load_split
    from .training import train_phase1, train_phase2, write_config, write_loss_csv

    cfg = _train_config(eff)
    out = Path(eff["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    dataset = load_split(eff["data"], "train")
    if not dataset:
        raise ContractError(f"no training scenes under {eff['data']}/train")
    model = adam = None
    start = 0
    if eff["resume"]:
        ck = load_checkpoint(eff["resume"])
        model, adam, start = ck.model, ck.adam, ck.epoch
    diag = out.with_suffix(".diag.ckpt")
    if eff["phase"] == 1:
        res = train_phase1(cfg, dataset, model, adam, start, diag_path=diag)
        meta = {"phase": 1}
    else:
        if not eff["phase1"]:
            raise UsageError("--phase 2 needs --phase1 <checkpoint>")
        frozen = load_checkpoint(eff["phase1"]).model
        res = train_phase2(cfg, dataset, frozen, model, adam, start, diag_path=diag)
        meta = {"phase": 2, "use_ao": cfg.use_ao}
    save_checkpoint(out, res.model, res.adam, cfg.seed, cfg.epochs, meta)
    write_loss_csv(out.with_suffix(".loss.csv"), res.losses)
    write_config(out.with_suffix(".config.json"), cfg, pixel_batches="per-image rotation",
                 data=str(eff["data"]), phase=eff["phase"])
    _echo(out.parent, eff, out.stem + ".effective_config.json")


def _load_models(eff):
    from .nn.checkpoint import load_checkpoint
    shader = load_checkpoint(eff["checkpoint"]).model if eff.get("checkpoint") else None
    shadow = load_checkpoint(eff["shadow_checkpoint"]).model if eff.get("shadow_checkpoint") else None
    return shader, shadow


def cmd_render(eff):
    from .envmap import load_envmap
    from .neural_shader import render_unshadowed
    from .sampling import Rng
    from .shading import render_classical
    from .shadow_net import apply_shadow, shadow_input
    from .synthdata import camera_from_manifest, load_gbuffer, load_manifest

    manifest, root = load_manifest(eff["gbuffer"])
    g = load_gbuffer(manifest, root)
    cam = camera_from_manifest(manifest)
    env_path = eff["env"] or (root / manifest["envmap"])
    env = load_envmap(env_path, eff["exposure"])
    seed = eff["seed"] if eff["seed"] is not None else manifest.get("seed", 0)
    rng = Rng(seed)
    if eff["model"] == "neural":
        shader, shadow = _load_models(eff)
        if shader is None:
            raise UsageError("--model neural needs --checkpoint")
        img = render_unshadowed(shader, g, cam, env, eff["rays"], rng, eff["workers"]).data
        if shadow is not None:
            img = apply_shadow(img, shadow(shadow_input(img, g, shadow.use_ao)[None])[0])
    else:
        img = np.clip(render_classical(g, cam, env, eff["rays"], rng, eff["model"],
                                       eff["intensity_scale"]), 0.0, 1.0)
    out = Path(eff["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_image(out, img)
    eff = {**eff, "seed": seed}
    _echo(out.parent, eff, out.stem + ".effective_config.json")


def cmd_eval(eff):
    from .evaluation import EvalSettings, evaluate_scenes, write_metrics_csv
    from .metrics import evaluate
    from .synthdata import load_split

    out = Path(eff["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    if eff["pred"]:
        if not eff["gt"]:
            raise UsageError("--pred needs --gt")
        mask = read_pfm(eff["mask"]) if eff["mask"] else None
        row = {"scene_id": Path(eff["pred"]).stem, "model": "image",
               **evaluate(read_pfm(eff["pred"]), read_pfm(eff["gt"]), mask)}
        write_metrics_csv(out, [row])
        _echo(out.parent, eff, out.stem + ".effective_config.json")
        return
    if not eff["data"]:
        raise UsageError("eval needs --data or --pred/--gt")
    models = [m.strip() for m in eff["models"].split(",") if m.strip()]
    bad = set(models) - {"blinn-phong", "ggx", "neural", "neural+shadow"}
    if bad:
        raise UsageError(f"unknown models: {sorted(bad)}")
    shader, shadow = _load_models(eff)
    records = load_split(eff["data"], eff["split"])
    if not records:
        raise ContractError(f"no scenes under {eff['data']}/{eff['split']}")
    settings = EvalSettings(rays=eff["rays"], seed=eff["seed"], target=eff["target"],
                            whole_image=eff["whole_image"], intensity_scale=eff["intensity_scale"],
                            workers=eff["workers"])
    rows = evaluate_scenes(records, models, settings, shader, shadow)
    write_metrics_csv(out, rows)
    _echo(out.parent, eff, out.stem + ".effective_config.json")


def cmd_check(eff):
    from .selfcheck import run_checks
    failures = run_checks(seed=eff["seed"])
    if failures:
        raise ContractError(f"{failures} self-check(s) failed")


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "render": cmd_render,
            "relight": cmd_render, "eval": cmd_eval, "check": cmd_check}


def _fail(code, exc):
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}),
          file=sys.stderr)
    return code


def main(argv=None) -> int:
    from .training import NumericError
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        eff = resolve(args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if eff.get("verbose") else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[eff["command"]](eff)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except (NumericError, FloatingPointError) as exc:
        return _fail(EXIT_NUMERIC, exc)
    except (ContractError, CheckpointError, FileNotFoundError, ValueError, KeyError) as exc:
        return _fail(EXIT_DATA, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
