"""Phase two and relighting: learn a shadow map on top of a frozen shader, then swap the light.

Builds on the dataset from demo 02 (run that first).

Run:  python3 demos/03_shadows_and_relighting.py   (writes demo_out/relit_*.png)
"""

from pathlib import Path

import numpy as np

from neural_deferred.core import save_image
from neural_deferred.evaluation import EvalSettings, evaluate_scenes, summarize
from neural_deferred.neural_shader import render_unshadowed
from neural_deferred.sampling import Rng
from neural_deferred.shadow_net import apply_shadow, shadow_input
from neural_deferred.synthdata import load_split
from neural_deferred.training import TrainConfig, train_phase1, train_phase2

data = Path("demo_out/tiny_data")
train, test, relight = (load_split(data, s) for s in ("train", "test", "relight"))

shader = train_phase1(TrainConfig(epochs=40, lr=1e-3, rays=64), train).model
shadow = train_phase2(TrainConfig(epochs=15, lr=1e-3, rays=64), train, shader).model

rows = evaluate_scenes(test, ["neural", "neural+shadow"], EvalSettings(target="shadowed"),
                       shader, shadow)
for model, m in summarize(rows).items():
    print(f"vs shadowed ground truth  {model:14s} PSNR {m['psnr']:6.2f} dB")

# Same G-buffer, new light: the checkpoint never saw these environment maps.
for rec in relight[:2]:
    img = render_unshadowed(shader, rec.gbuffer, rec.camera, rec.env, 128, Rng(0)).data
    img = apply_shadow(img, shadow(shadow_input(img, rec.gbuffer, shadow.use_ao)[None])[0])
    save_image(Path("demo_out") / f"relit_{rec.scene_id}.png", img)
    err = np.abs(img - rec.gt_shadowed)[rec.gbuffer.foreground].mean()
    print(rec.scene_id, "relit under", Path(rec.manifest["envmap"]).name, "mean abs error %.4f" % err)
