import pytest

from hiermotion.harness.config import ExperimentConfig
from hiermotion.harness import experiment

# Tiny end-to-end bundle shared by harness/service tests: small enough to
# train in about a minute, structurally identical to a real run.
MINI_CONFIG = dict(
    dataset_size=48,
    dataset_seed=21,
    frame_min=30,
    frame_max=60,
    node_dim=32,
    latent_dim=8,
    vae_d_model=32,
    vae_layers=2,
    vae_heads=2,
    vae_ff=64,
    vae_epochs=6,
    vae_batch=16,
    train_steps=200,
    denoiser_d_model=32,
    denoiser_layers=2,
    denoiser_heads=2,
    denoiser_ff=64,
    diffusion_epochs=8,
    diffusion_batch=16,
    eval_epochs=6,
    eval_batch=16,
    sampler_steps={"motion": 4, "action": 4, "specific": 5},
    seed=3,
)


@pytest.fixture(scope="session")
def mini_config() -> ExperimentConfig:
    return ExperimentConfig.from_dict(dict(MINI_CONFIG))


@pytest.fixture(scope="session")
def mini_run_dir(tmp_path_factory, mini_config):
    out = tmp_path_factory.mktemp("mini-run")
    experiment.train_all(mini_config, out, verbose=False)
    return out


@pytest.fixture(scope="session")
def mini_bundle(mini_run_dir):
    return experiment.Bundle.load(mini_run_dir)
