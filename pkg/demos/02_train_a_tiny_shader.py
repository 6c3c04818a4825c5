"""Fit the per-ray shading MLP to a handful of oracle scenes and compare it with Blinn-Phong.

Everything is shrunk (32x32 images, 12 scenes, a larger learning rate) so it finishes in about
a minute; the acceptance suite runs the full-size version.

Run:  python3 demos/02_train_a_tiny_shader.py
"""

from pathlib import Path

from neural_deferred.evaluation import EvalSettings, evaluate_scenes, summarize
from neural_deferred.synthdata import generate_dataset, load_split
from neural_deferred.training import TrainConfig, train_phase1

data = Path("demo_out/tiny_data")
if not (data / "dataset.json").exists():
    generate_dataset(12, seed=5, out_dir=data, resolution=32, test_count=4, heldout_envs=2, rays=512)
train, test = load_split(data, "train"), load_split(data, "test")
print(len(train), "training scenes,", len(test), "test scenes")

# Around 15 epochs the MLP still trails Blinn-Phong; by 40 it is clearly ahead.
cfg = TrainConfig(epochs=40, lr=1e-3, rays=64, hidden=(64, 64, 64))
result = train_phase1(cfg, train, progress=lambda row: print("epoch %2d  L1 %.4f  %5.1fs" % row))

rows = evaluate_scenes(test, ["blinn-phong", "ggx", "neural"], EvalSettings(rays=128), result.model)
for model, m in summarize(rows).items():
    print(f"{model:12s} PSNR {m['psnr']:6.2f} dB   SSIM {m['ssim']:.3f}")
