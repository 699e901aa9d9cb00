import numpy as np
import pytest

from rxdet import RngSpec


@pytest.fixture
def gen():
    return np.random.default_rng(20240811)


def random_spd(gen, m, cond=100.0):
    """Random SPD matrix with the given condition number."""
    Q, _ = np.linalg.qr(gen.normal(size=(m, m)))
    eigs = np.logspace(0.0, np.log10(cond), m)
    return (Q * eigs) @ Q.T


@pytest.fixture
def spd_builder(gen):
    def build(m, cond=100.0):
        return random_spd(gen, m, cond)

    return build


def scene_cloud(seed=3, height=20, width=10, fraction=0.05):
    """Small labelled 2-D cloud from the curved scene family."""
    from rxdet.synthgen import SceneSpec, generate_scene

    spec = SceneSpec(
        height=height, width=width, rng=RngSpec(seed=seed), anomaly_fraction=fraction
    )
    raster, mask = generate_scene(spec)
    return raster.samples, mask.labels
