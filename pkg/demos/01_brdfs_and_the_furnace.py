"""Classical shading: two BRDFs, the uniform-hemisphere estimator, and one rendered sphere.

Run:  python3 demos/01_brdfs_and_the_furnace.py   (writes demo_out/sphere_*.png)
"""

from pathlib import Path

import numpy as np

from neural_deferred.core import save_image
from neural_deferred.sampling import Rng, sample_uniform_hemisphere
from neural_deferred.shading import (LightSample, SurfacePoint, brdf_blinn_phong, brdf_ggx,
                                     shade_classical)
from neural_deferred.synthdata import Material, Plane, Scene, Sphere, oracle_render, random_envmap
from neural_deferred.sampling import Camera

out = Path("demo_out")
out.mkdir(exist_ok=True)

# One shading point facing +z, lit and viewed head-on.
n = np.array([0.0, 0.0, 1.0])
pt = SurfacePoint(albedo=np.full(3, 0.5), normal=n, specular=np.array(1.0), roughness=np.array(0.3))
print("blinn-phong f(n, n):", brdf_blinn_phong(pt, n, n))
print("ggx         f(n, n):", brdf_ggx(pt, n, n))

# White furnace: a white Lambertian surface under unit light reflects exactly 1.
white = SurfacePoint(np.ones(3), n, np.array(0.0), np.array(0.5))
for count in (16, 256, 4096, 65536):
    d = sample_uniform_hemisphere(n, count, Rng(0))
    est = shade_classical(white, n, LightSample(d, np.ones_like(d)))
    print(f"furnace estimate with {count:5d} rays: {est[0]:.4f}")

# A glossy sphere on a floor, rendered by the ray-traced oracle with and without shadows.
shiny = Material((0.8, 0.3, 0.2), specular=1.0, roughness=0.25)
floor = Material((0.6, 0.6, 0.6), specular=0.2, roughness=0.8)
scene = Scene((Sphere((0.0, -0.3, -4.0), 0.7, shiny),), Camera(np.radians(45), 64, 64),
              Plane(-1.0, floor))
env = random_envmap(Rng(4))
for shadows in (False, True):
    img, g = oracle_render(scene, env, 256, Rng(1), with_shadows=shadows)
    name = out / f"sphere_{'shadowed' if shadows else 'unshadowed'}.png"
    save_image(name, img.data)
    print(name, "mean radiance on foreground:", img.data[g.foreground].mean().round(4))
