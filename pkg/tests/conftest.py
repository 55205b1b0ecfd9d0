import numpy as np
import pytest

from tags.phantom import PhantomSpec, synth_phantom
from tags.pipeline import Case, TrainConfig, text_embeddings_for, train


def make_phantom_case(
    seed: int,
    tumor_radius: float = 7.0,
    size: int = 64,
    tumor_level: float = 0.9,
    noise_sigma: float = 0.03,
) -> Case:
    rng = np.random.default_rng(seed)
    spec = PhantomSpec(
        shape=(size, size, size),
        organ_radii=(0.34 * size, 0.31 * size, 0.29 * size),
        tumor_radii=(tumor_radius,) * 3,
        tumor_level=tumor_level,
        noise_sigma=noise_sigma,
    )
    image, organ, tumor = synth_phantom(spec, rng)
    return Case(f"phantom_{seed:03d}", image, organ, tumor)


@pytest.fixture(scope="session")
def phantom_cases():
    """Training phantom plus four unseen cases of graded difficulty.

    The tumor contrast (and noise) degrade from case 1 to case 4, so
    segmentation quality genuinely varies between cases — which is what an
    agreement statistic across point strategies needs to be meaningful.
    """
    return [
        make_phantom_case(0, tumor_radius=7.0),
        make_phantom_case(1, tumor_radius=9.0, tumor_level=0.85),
        make_phantom_case(2, tumor_radius=7.0, tumor_level=0.75),
        make_phantom_case(3, tumor_radius=6.0, tumor_level=0.65, noise_sigma=0.06),
        make_phantom_case(4, tumor_radius=5.0, tumor_level=0.60, noise_sigma=0.10),
    ]


@pytest.fixture(scope="session")
def overfit(phantom_cases):
    """Tiny model trained 500 steps on one phantom (shared across tests)."""
    cfg = TrainConfig.tiny(max_steps=500, seed=4)
    net, records = train(cfg, [phantom_cases[0]])
    return {
        "net": net,
        "cfg": cfg,
        "records": records,
        "case": phantom_cases[0],
        "text_pair": text_embeddings_for(cfg),
    }
