"""Analytic sphere/plane scenes and the GGX ray-traced oracle that renders their ground truth."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .core import GBuffer, Image, write_pfm, read_pfm, validate_gbuffer
from .envmap import EnvironmentMap, load_pfm, save_pfm, texel_directions
from .sampling import Camera, Rng, sample_uniform_hemisphere, view_directions
from .shading import SurfacePoint, render_classical

RAY_EPS = 1e-4
AO_RAYS = 64
AO_STREAM = 0xA0
ENV_SIZE = (32, 64)
MANIFEST = "scene.json"


@dataclass(frozen=True)
class Material:
    albedo: tuple[float, float, float]
    specular: float
    roughness: float

    def __post_init__(self):
        vals = (*self.albedo, self.specular, self.roughness)
        if len(self.albedo) != 3 or not all(0.0 <= x <= 1.0 for x in vals):
            raise ValueError(f"material parameters outside [0, 1]: {self}")


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float
    material: Material

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")


@dataclass(frozen=True)
class Plane:
    """Horizontal ground plane ``y = height`` facing +y."""

    height: float
    material: Material


@dataclass(frozen=True)
class Scene:
    spheres: tuple[Sphere, ...]
    camera: Camera
    plane: Plane | None = None
    envmap: str | None = None
    max_distance: float = 12.0  # plane hits beyond this are background
    feature_size: float = field(default=0.0)

    def local_feature_size(self, primitive: np.ndarray) -> np.ndarray:
        """Occlusion radius scale per hit: sphere radius, or mean sphere radius for the plane."""
        radii = np.array([s.radius for s in self.spheres] or [1.0])
        table = np.append(radii, self.feature_size or radii.mean())
        return table[np.where(primitive < 0, len(radii), primitive)]


class Hits(NamedTuple):
    t: np.ndarray  # [...], inf on miss
    point: np.ndarray  # [..., 3]
    normal: np.ndarray  # [..., 3]
    primitive: np.ndarray  # [...], sphere index, -1 for the plane, -2 for a miss

    @property
    def hit(self) -> np.ndarray:
        return np.isfinite(self.t)


def _sphere_t(center, radius, origin, d):
    oc = origin - np.asarray(center, origin.dtype)
    b = np.sum(oc * d, axis=-1)
    c = np.sum(oc * oc, axis=-1) - radius * radius
    disc = b * b - c
    ok = disc >= 0.0  # tangent rays count as hits
    s = np.sqrt(np.where(ok, disc, 0.0))
    t0 = -b - s
    t1 = -b + s
    t = np.where(t0 > RAY_EPS, t0, np.where(t1 > RAY_EPS, t1, np.inf))
    return np.where(ok, t, np.inf)


def ray_intersect(scene: Scene, origin, d) -> Hits:
    """Nearest positive hit of rays ``origin + t d`` (``d`` unit) against every primitive."""
    origin = np.asarray(origin)
    d = np.asarray(d)
    origin, d = np.broadcast_arrays(origin, d)
    best = np.full(d.shape[:-1], np.inf, d.dtype)
    prim = np.full(d.shape[:-1], -2, np.int64)
    for i, s in enumerate(scene.spheres):
        t = _sphere_t(s.center, s.radius, origin, d)
        closer = t < best
        best = np.where(closer, t, best)
        prim = np.where(closer, i, prim)
    if scene.plane is not None:
        t = _plane_t(scene, origin, d)
        closer = t < best
        best = np.where(closer, t, best)
        prim = np.where(closer, -1, prim)
    point = origin + np.where(np.isfinite(best), best, 0.0)[..., None] * d
    normal = np.zeros_like(point)
    for i, s in enumerate(scene.spheres):
        sel = prim == i
        if np.any(sel):
            nrm = (point - np.asarray(s.center, point.dtype)) / np.asarray(s.radius, point.dtype)
            nrm = nrm / np.linalg.norm(nrm, axis=-1, keepdims=True)
            normal = np.where(sel[..., None], nrm, normal)
    normal[prim == -1] = (0.0, 1.0, 0.0)
    return Hits(best, point, normal, prim)


def _plane_t(scene, origin, d):
    dy = d[..., 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (scene.plane.height - origin[..., 1]) / dy
    t = np.where((dy < 0.0) & (t > RAY_EPS), t, np.inf)
    return np.where(t <= scene.max_distance, t, np.inf)


def occluded(scene: Scene, origin, d, max_t=np.inf) -> np.ndarray:
    """True where the ray hits any primitive closer than ``max_t``."""
    origin, d = np.broadcast_arrays(np.asarray(origin), np.asarray(d))
    blocked = np.zeros(d.shape[:-1], bool)
    for s in scene.spheres:
        blocked |= _sphere_t(s.center, s.radius, origin, d) < max_t
    if scene.plane is not None:
        blocked |= _plane_t(scene, origin, d) < max_t
    return blocked


def shadow_visibility(scene: Scene):
    """Visibility callback for :func:`render_classical`: 1 where a light sample escapes."""
    def fn(points, normals, dirs):
        origin = (points + RAY_EPS * 10 * normals)[:, None, :]
        return ~occluded(scene, origin, dirs)
    return fn


def _materials(scene: Scene, prim: np.ndarray, attr: str) -> np.ndarray:
    mats = [s.material for s in scene.spheres]
    mats.append(scene.plane.material if scene.plane else Material((0, 0, 0), 0, 0))
    table = np.array([np.atleast_1d(getattr(m, attr)) for m in mats], np.float64)
    return table[np.where(prim == -1, len(mats) - 1, prim)]


def geometry_pass(scene: Scene, rng: Rng, dtype=np.float32) -> GBuffer:
    """Primary rays fill the G-buffer; AO uses ``AO_RAYS`` uniform hemisphere probes."""
    cam = scene.camera
    h, w = cam.height, cam.width
    dirs = cam.ray_directions(np.float64)
    hits = ray_intersect(scene, np.zeros(3), dirs)
    mask = hits.hit
    prim = np.where(mask, hits.primitive, -2)

    def plane(x, c):
        x = np.where(mask[..., None], x.reshape(h, w, c), 0.0)
        return x.astype(dtype)

    albedo = plane(_materials(scene, prim, "albedo"), 3)
    specular = plane(_materials(scene, prim, "specular"), 1)
    roughness = plane(_materials(scene, prim, "roughness"), 1)
    normal = plane(hits.normal, 3)
    depth = plane(np.where(mask, hits.t, 0.0), 1)

    ao = np.zeros((h, w), np.float64)
    idx = np.flatnonzero(mask.ravel())
    if len(idx):
        n = hits.normal.reshape(-1, 3)[idx]
        p = hits.point.reshape(-1, 3)[idx] + RAY_EPS * 10 * n
        probe = sample_uniform_hemisphere(n, AO_RAYS, rng.split(AO_STREAM), streams=idx)
        reach = 2.0 * scene.local_feature_size(hits.primitive.ravel()[idx])
        blocked = occluded(scene, p[:, None, :], probe, reach[:, None])
        ao.ravel()[idx] = 1.0 - blocked.mean(axis=1)
    return GBuffer(albedo, normal, specular, roughness, depth,
                   ao[..., None].astype(dtype), mask[..., None].astype(dtype))


def oracle_render(scene: Scene, env: EnvironmentMap, rays_per_pixel: int, rng: Rng,
                  with_shadows: bool = True) -> tuple[Image, GBuffer]:
    """Ground-truth GGX render of ``scene`` (clamped to [0, 1]) and its G-buffer."""
    g = geometry_pass(scene, rng)
    vis = shadow_visibility(scene) if with_shadows else None
    rgb = render_classical(g, scene.camera, env, rays_per_pixel, rng, "ggx", visibility_fn=vis)
    return Image(np.clip(rgb, 0.0, 1.0)), g


def oracle_render_pair(scene: Scene, env: EnvironmentMap, rays_per_pixel: int, rng: Rng):
    """Unshadowed and shadowed renders sharing one G-buffer and identical light samples.

    Returns unclamped radiance so callers can check linearity before clamping.
    """
    g = geometry_pass(scene, rng)
    unshadowed = render_classical(g, scene.camera, env, rays_per_pixel, rng, "ggx")
    shadowed = render_classical(g, scene.camera, env, rays_per_pixel, rng, "ggx",
                                visibility_fn=shadow_visibility(scene))
    return unshadowed, shadowed, g


# -- random scenes and environment maps --------------------------------------------------------


def random_material(gen: np.random.Generator) -> Material:
    return Material(tuple(float(x) for x in gen.uniform(0.05, 0.95, 3)),
                    float(gen.uniform(0.0, 1.0)), float(gen.uniform(0.1, 1.0)))


def random_envmap(rng: Rng, size=ENV_SIZE) -> EnvironmentMap:
    """Low-frequency sky: 1-3 colored exponential lobes above the horizon, lower hemisphere black."""
    gen = rng.generator()
    h, w = size
    dirs = texel_directions(h, w)
    radiance = np.zeros((h, w, 3))
    for _ in range(int(gen.integers(1, 4))):
        elev = gen.uniform(np.radians(15), np.radians(75))
        azim = gen.uniform(-np.pi, np.pi)
        mu = np.array([np.cos(elev) * np.sin(azim), np.sin(elev), -np.cos(elev) * np.cos(azim)])
        kappa = gen.uniform(1.0, 6.0)
        color = gen.uniform(0.4, 1.0, 3)
        power = gen.uniform(0.4, 0.9) * kappa / 2.0
        radiance += power * color * np.exp(kappa * (dirs @ mu - 1.0))[..., None]
    radiance[dirs[..., 1] < 0.0] = 0.0
    return EnvironmentMap(radiance.astype(np.float32))


def random_scene(rng: Rng, resolution: int = 64, plane_probability: float = 0.75) -> Scene:
    gen = rng.generator()
    fov = float(np.radians(gen.uniform(38.0, 50.0)))
    cam = Camera(fov, resolution, resolution)
    has_plane = gen.uniform() < plane_probability
    floor = -1.0
    spheres: list[Sphere] = []
    target = int(gen.integers(1, 5))
    tries = 0
    while len(spheres) < target and tries < 200:
        tries += 1
        r = float(gen.uniform(0.35, 0.9))
        z = float(gen.uniform(-6.0, -3.5))
        x = float(gen.uniform(-0.3, 0.3) * -z)
        y = floor + r if has_plane else float(gen.uniform(-0.6, 0.6))
        c = np.array([x, y, z])
        if any(np.linalg.norm(c - np.array(s.center)) < r + s.radius + 0.05 for s in spheres):
            continue
        spheres.append(Sphere((x, y, z), r, random_material(gen)))
    plane = Plane(floor, random_material(gen)) if has_plane else None
    return Scene(tuple(spheres), cam, plane)


# -- dataset on disk ---------------------------------------------------------------------------

GT_PLANES = ("gt_shadowed", "gt_unshadowed")


def scene_to_dict(scene: Scene) -> dict:
    def mat(m):
        return {"albedo": list(m.albedo), "specular": m.specular, "roughness": m.roughness}
    return {
        "spheres": [{"center": list(s.center), "radius": s.radius, "material": mat(s.material)}
                    for s in scene.spheres],
        "plane": None if scene.plane is None else {"height": scene.plane.height,
                                                   "material": mat(scene.plane.material)},
        "max_distance": scene.max_distance,
    }


def scene_from_dict(d: dict, camera: Camera) -> Scene:
    def mat(m):
        return Material(tuple(m["albedo"]), m["specular"], m["roughness"])
    spheres = tuple(Sphere(tuple(s["center"]), s["radius"], mat(s["material"])) for s in d["spheres"])
    plane = None if d["plane"] is None else Plane(d["plane"]["height"], mat(d["plane"]["material"]))
    return Scene(spheres, camera, plane, max_distance=d.get("max_distance", 12.0))


@dataclass
class SceneRecord:
    """One scene loaded from disk: G-buffer, camera, light and ground truth."""

    scene_id: str
    gbuffer: GBuffer
    camera: Camera
    env: EnvironmentMap
    gt_unshadowed: np.ndarray
    gt_shadowed: np.ndarray
    seed: int
    manifest: dict
    path: Path

    @property
    def has_plane(self) -> bool:
        return self.manifest["scene"]["plane"] is not None


def write_scene(out_dir: Path, scene: Scene, env: EnvironmentMap, env_name: str, seed: int,
                rays: int) -> dict:
    """Render ``scene`` with the oracle and write its planes and manifest to ``out_dir``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = Rng(seed)
    unshadowed, shadowed, g = oracle_render_pair(scene, env, rays, rng)
    problems = validate_gbuffer(g)
    if problems:
        raise ValueError(f"generated G-buffer violates invariants: {problems[:3]}")
    planes = {}
    for name, img in g.planes().items():
        planes[name] = f"{name}.pfm"
        write_pfm(out_dir / planes[name], img.data)
    for name, data in (("gt_unshadowed", unshadowed), ("gt_shadowed", shadowed)):
        planes[name] = f"{name}.pfm"
        write_pfm(out_dir / planes[name], np.clip(data, 0.0, 1.0))
    manifest = {
        "resolution": [scene.camera.width, scene.camera.height],
        "fov_y": scene.camera.fov_y,
        "planes": planes,
        "envmap": env_name,
        "seed": seed,
        "rays": rays,
        "scene": scene_to_dict(scene),
    }
    (out_dir / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_manifest(path: str | Path) -> tuple[dict, Path]:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST
    return json.loads(path.read_text()), path.parent


def load_gbuffer(manifest: dict, root: Path) -> GBuffer:
    planes = manifest["planes"]
    return GBuffer(*(Image(read_pfm(root / planes[name])) for name in
                     ("albedo", "normal", "specular", "roughness", "depth", "ao", "mask")))


def camera_from_manifest(manifest: dict) -> Camera:
    w, h = manifest["resolution"]
    return Camera(manifest["fov_y"], w, h)


def load_scene(path: str | Path, env: EnvironmentMap | None = None) -> SceneRecord:
    manifest, root = load_manifest(path)
    if env is None:
        env = load_pfm((root / manifest["envmap"]).resolve())
    planes = manifest["planes"]
    return SceneRecord(
        scene_id=root.name,
        gbuffer=load_gbuffer(manifest, root),
        camera=camera_from_manifest(manifest),
        env=env,
        gt_unshadowed=read_pfm(root / planes["gt_unshadowed"]),
        gt_shadowed=read_pfm(root / planes["gt_shadowed"]),
        seed=manifest["seed"],
        manifest=manifest,
        path=root,
    )


SPLITS = {"train": 1, "test": 2, "relight": 3}
ENV_SETS = {"train": 10, "heldout": 11}


def _scene_job(args):
    out_dir, scene, env_path, env_name, seed, rays = args
    env = load_pfm(env_path)
    return write_scene(Path(out_dir), scene, env, env_name, seed, rays)


def generate_dataset(count: int, seed: int, out_dir: str | Path, resolution: int = 64,
                     test_count: int | None = None, heldout_envs: int = 8, rays: int = 1024,
                     train_envs: int | None = None, workers: int = 1) -> list[dict]:
    """Write ``count`` training scenes, held-out test scenes and relighting scenes.

    Layout::

        envmaps/train_000.pfm ...     training-distribution lights
        envmaps/heldout_000.pfm ...   held-out lights, only used for relighting
        train/scene_0000/  test/scene_0000/  relight/scene_0000/

    Test scenes reuse training-distribution envmaps and always include the ground plane; relight scenes are the test scenes'
    geometry lit by the held-out maps (test scene ``k`` under held-out map ``k mod 8``).
    Training and held-out envmaps come from disjoint seed streams.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    out = Path(out_dir)
    root = Rng(seed)
    test_count = max(1, count // 4) if test_count is None else test_count
    train_envs = count if train_envs is None else train_envs

    env_dir = out / "envmaps"
    env_dir.mkdir(parents=True, exist_ok=True)
    env_paths = {}
    for kind, n in (("train", train_envs), ("heldout", heldout_envs)):
        for i in range(n):
            name = f"{kind}_{i:03d}.pfm"
            save_pfm(random_envmap(root.split(ENV_SETS[kind], i)), env_dir / name)
            env_paths[kind, i] = name

    jobs = []
    env_gen = root.split(0xE0).generator()
    for split, n in (("train", count), ("test", test_count)):
        for i in range(n):
            scene_seed = root.split(SPLITS[split], i).state & 0x7FFFFFFFFFFFFFFF
            # held-out scenes always get the ground plane so every one has contact shadows
            scene = random_scene(Rng(scene_seed), resolution,
                                 plane_probability=1.0 if split == "test" else 0.75)
            env_name = env_paths["train", int(env_gen.integers(train_envs))]
            jobs.append((out / split / f"scene_{i:04d}", scene, env_dir / env_name,
                         f"../../envmaps/{env_name}", scene_seed, rays))
            if split == "test" and heldout_envs:
                held = env_paths["heldout", i % heldout_envs]
                jobs.append((out / "relight" / f"scene_{i:04d}", scene, env_dir / held,
                             f"../../envmaps/{held}", scene_seed, rays))

    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as pool:
            manifests = list(pool.map(_scene_job, jobs))
    else:
        manifests = [_scene_job(j) for j in jobs]
    index = {"seed": seed, "count": count, "test_count": test_count, "resolution": resolution,
             "rays": rays, "scenes": [str(Path(j[0]).relative_to(out)) for j in jobs]}
    (out / "dataset.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    return manifests


def list_split(data_dir: str | Path, split: str) -> list[Path]:
    base = Path(data_dir) / split
    return sorted(p for p in base.iterdir() if (p / MANIFEST).exists()) if base.exists() else []


def load_split(data_dir: str | Path, split: str) -> list[SceneRecord]:
    return [load_scene(p) for p in list_split(data_dir, split)]
