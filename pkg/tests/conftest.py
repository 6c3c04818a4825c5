import numpy as np
import pytest

from neural_deferred.core import GBuffer, Image


def make_gbuffer(h=4, w=4, mask=None, normal=(0.0, 0.0, 1.0), albedo=0.5, dtype=np.float32):
    m = np.ones((h, w), dtype) if mask is None else np.asarray(mask, dtype)
    mm = m[..., None]
    return GBuffer(
        albedo=Image(np.full((h, w, 3), albedo, dtype) * mm),
        normal=Image(np.broadcast_to(np.asarray(normal, dtype), (h, w, 3)) * mm),
        specular=Image(np.full((h, w, 1), 0.5, dtype) * mm),
        roughness=Image(np.full((h, w, 1), 0.5, dtype) * mm),
        depth=Image(np.full((h, w, 1), 2.0, dtype) * mm),
        ao=Image(np.ones((h, w, 1), dtype) * mm),
        mask=Image(mm),
    )


@pytest.fixture
def gbuffer_factory():
    return make_gbuffer


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_unit(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Four 16x16 training scenes plus one test scene, cheap enough for unit tests."""
    from neural_deferred.synthdata import generate_dataset
    out = tmp_path_factory.mktemp("tiny")
    generate_dataset(4, seed=3, out_dir=out, resolution=16, test_count=1, heldout_envs=2, rays=64)
    return out


# -- acceptance summary ------------------------------------------------------------------------

CRITERIA: dict = {}


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[number])
