import copy
import math

import numpy as np
import pytest
import torch

from hiermotion.diffusion import (
    DiffusionConfig,
    GuidanceContext,
    HierarchicalDiffusion,
    InvalidRange,
    SamplerConfig,
    cfg_predict,
    collate_graphs,
    ddim_step,
    ddim_timesteps,
    prepare_samples,
    q_sample,
    q_sample_torch,
    sample_hierarchical,
    sample_hierarchical_batch,
    schedule_linear,
    train_diffusion,
)
from hiermotion.embed import make_encoder, embed_graph
from hiermotion.motionrep import make_dataset
from hiermotion.motionvae import VAEConfig, train_vae

PAPER_BETA = dict(beta_start=8.5e-4, beta_end=0.012)


def tiny_stack(dataset, seed=0):
    """Small VAEs + prepared samples + tiny diffusion config for smoke tests."""
    encoder = make_encoder("hashed", 32)
    vaes = {}
    for level in ("motion", "action", "specific"):
        cfg = VAEConfig.for_level(level, feature_width=68, latent_dim=8, d_model=32,
                                  num_layers=2, num_heads=2, ff_dim=64, max_frames=80)
        vaes[level], _ = train_vae(dataset.train, dataset.normalizer, cfg, epochs=2,
                                   batch_size=8, seed=seed)
    prepared = prepare_samples(dataset.train, vaes, dataset.normalizer, encoder)
    dcfg = DiffusionConfig(node_dim=32, latent_dim=8, train_steps=100,
                           d_model=32, num_layers=2, num_heads=2, ff_dim=64)
    return encoder, vaes, prepared, dcfg


@pytest.fixture(scope="module")
def dataset():
    return make_dataset(20, seed=13, frame_range=(30, 50))


class TestSchedule:
    def test_paper_first_step(self):
        s = schedule_linear(1000, **PAPER_BETA)
        assert s.alpha_bar_at(1) == pytest.approx(1 - 8.5e-4, abs=1e-12)
        assert s.alpha_bar_at(1) == pytest.approx(0.99915, abs=1e-9)

    def test_two_step_product(self):
        s = schedule_linear(2, 0.1, 0.2)
        assert s.alpha_bar_at(2) == pytest.approx(0.9 * 0.8, abs=1e-12)

    def test_monotonic(self):
        s = schedule_linear(1000, **PAPER_BETA)
        assert (np.diff(s.beta) > 0).all()
        assert (np.diff(s.alpha_bar) < 0).all()
        assert 0 < s.alpha_bar[-1] < s.alpha_bar[0] < 1

    def test_invalid_ranges(self):
        with pytest.raises(InvalidRange):
            schedule_linear(1, 0.1, 0.2)
        with pytest.raises(InvalidRange):
            schedule_linear(10, 0.2, 0.1)
        with pytest.raises(InvalidRange):
            schedule_linear(10, 0.0, 0.5)


class TestQSample:
    def test_zero_noise(self):
        s = schedule_linear(100, **PAPER_BETA)
        z0 = np.random.default_rng(0).standard_normal((4, 8))
        out = q_sample(s, z0, 50, np.zeros_like(z0))
        np.testing.assert_allclose(out, math.sqrt(s.alpha_bar_at(50)) * z0, atol=1e-12)

    def test_zero_signal(self):
        s = schedule_linear(100, **PAPER_BETA)
        eps = np.random.default_rng(1).standard_normal((4, 8))
        out = q_sample(s, np.zeros_like(eps), 70, eps)
        np.testing.assert_allclose(out, math.sqrt(1 - s.alpha_bar_at(70)) * eps,
                                   atol=1e-12)

    def test_t_bounds(self):
        s = schedule_linear(100, **PAPER_BETA)
        z = np.zeros((2, 2))
        with pytest.raises(InvalidRange):
            q_sample(s, z, 0, z)
        with pytest.raises(InvalidRange):
            q_sample(s, z, 101, z)

    def test_marginal_monte_carlo(self):
        # projection of the empirical mean on z0 recovers sqrt(alpha_bar);
        # pooled variance recovers 1 - alpha_bar (small-n version; the
        # acceptance suite runs the full 10^4-draw check)
        s = schedule_linear(1000, **PAPER_BETA)
        rng = np.random.default_rng(2)
        z0 = 4.0 * rng.standard_normal((4, 8))
        t = 500
        draws = np.stack([q_sample(s, z0, t, rng.standard_normal(z0.shape))
                          for _ in range(2000)])
        mean = draws.mean(axis=0)
        coef = float((mean * z0).sum() / (z0 * z0).sum())
        assert coef == pytest.approx(math.sqrt(s.alpha_bar_at(t)), rel=0.05)
        var = draws.var(axis=0).mean()
        assert var == pytest.approx(1 - s.alpha_bar_at(t), rel=0.05)

    def test_torch_matches_numpy(self):
        s = schedule_linear(50, **PAPER_BETA)
        rng = np.random.default_rng(3)
        z0 = rng.standard_normal((2, 4, 8))
        eps = rng.standard_normal((2, 4, 8))
        for t in (1, 25, 50):
            want = np.stack([q_sample(s, z0[i], t, eps[i]) for i in range(2)])
            got = q_sample_torch(torch.as_tensor(s.alpha_bar),
                                 torch.as_tensor(z0),
                                 torch.tensor([t, t]),
                                 torch.as_tensor(eps)).numpy()
            np.testing.assert_allclose(got, want, atol=1e-12)


class TestCFG:
    def test_alpha_one_is_conditional_bitwise(self):
        c = torch.randn(3, 4)
        u = torch.randn(3, 4)
        assert cfg_predict(c, u, 1.0) is c

    def test_alpha_zero_is_unconditional(self):
        c = torch.randn(3, 4)
        u = torch.randn(3, 4)
        assert cfg_predict(c, u, 0.0) is u

    def test_scalar_probe_arithmetic(self):
        c = torch.tensor([2.0])
        u = torch.tensor([1.0])
        assert cfg_predict(c, u, 7.5).item() == pytest.approx(8.5, abs=1e-12)

    def test_affine_in_inputs(self):
        gen = torch.Generator().manual_seed(4)
        for alpha in (0.5, 2.0, 7.5):
            c = torch.randn(5, generator=gen, dtype=torch.float64)
            u = torch.randn(5, generator=gen, dtype=torch.float64)
            out = cfg_predict(c, u, alpha)
            torch.testing.assert_close(out, alpha * c + (1 - alpha) * u,
                                       atol=1e-12, rtol=0)


class TestDDIM:
    def test_deterministic_at_eta_zero(self):
        s = schedule_linear(100, **PAPER_BETA)
        z = torch.randn(2, 4, dtype=torch.float64)
        eps = torch.randn(2, 4, dtype=torch.float64)
        a = ddim_step(s, z, eps, 80, 60, eta=0.0)
        b = ddim_step(s, z, eps, 80, 60, eta=0.0)
        assert torch.equal(a, b)

    def test_one_step_inversion_recovers_z0(self):
        s = schedule_linear(1000, **PAPER_BETA)
        gen = torch.Generator().manual_seed(5)
        z0 = torch.randn(3, 6, generator=gen, dtype=torch.float64)
        eps = torch.randn(3, 6, generator=gen, dtype=torch.float64)
        for t in (1, 500, 1000):
            z_t = torch.as_tensor(q_sample(s, z0.numpy(), t, eps.numpy()))
            back = ddim_step(s, z_t, eps, t, 0, eta=0.0)
            torch.testing.assert_close(back, z0, atol=1e-6, rtol=0)

    def test_eta_one_injects_noise(self):
        s = schedule_linear(100, **PAPER_BETA)
        z = torch.randn(2, 4)
        eps = torch.randn(2, 4)
        a = ddim_step(s, z, eps, 80, 60, eta=1.0,
                      generator=torch.Generator().manual_seed(1))
        b = ddim_step(s, z, eps, 80, 60, eta=1.0,
                      generator=torch.Generator().manual_seed(2))
        assert not torch.equal(a, b)

    def test_step_order_validation(self):
        s = schedule_linear(100, **PAPER_BETA)
        z = torch.zeros(1, 2)
        with pytest.raises(InvalidRange):
            ddim_step(s, z, z, 10, 10)

    def test_timestep_subsequence(self):
        ts = ddim_timesteps(1000, 15)
        assert ts[0] == 1000 and ts[-1] == 1
        assert len(ts) == 15
        assert all(a > b for a, b in zip(ts, ts[1:]))
        assert ddim_timesteps(1000, 1) == [1000]

    def test_exact_noise_double_full_chain(self):
        # a test-double denoiser that returns the exact noise consistent with
        # a fixed z0 makes DDIM recover that z0
        s = schedule_linear(1000, **PAPER_BETA)
        gen = torch.Generator().manual_seed(6)
        z_target = torch.randn(2, 8, generator=gen, dtype=torch.float64)

        def oracle_eps(z_t, t):
            a = s.alpha_bar_at(t)
            return (z_t - math.sqrt(a) * z_target) / math.sqrt(1 - a)

        z = torch.randn(2, 8, generator=gen, dtype=torch.float64)
        ts = ddim_timesteps(1000, 25)
        for k, t in enumerate(ts):
            t_prev = ts[k + 1] if k + 1 < len(ts) else 0
            z = ddim_step(s, z, oracle_eps(z, t), t, t_prev, eta=0.0)
        torch.testing.assert_close(z, z_target, atol=1e-5, rtol=0)


class TestConditioning:
    def test_condition_token_counts(self, dataset):
        encoder, vaes, prepared, dcfg = tiny_stack(dataset)
        torch.manual_seed(0)
        model = HierarchicalDiffusion(dcfg)
        chosen = prepared[:6]
        batch = collate_graphs([c.graph for c in chosen], [c.embeds for c in chosen])
        reasoned = model.reasoned_rows(batch)
        cm = dcfg.token_counts["motion"]
        ca = dcfg.token_counts["action"]

        cond, mask = model.condition_tokens("motion", batch, reasoned)
        counts = (~mask).sum(dim=1).tolist()
        assert counts == [1] * len(chosen)

        zm = torch.zeros(len(chosen), cm, dcfg.latent_dim)
        cond, mask = model.condition_tokens("action", batch, reasoned, zm)
        counts = (~mask).sum(dim=1).tolist()
        assert counts == [1 + batch.action_counts[i] + cm for i in range(len(chosen))]

        za = torch.zeros(len(chosen), ca, dcfg.latent_dim)
        cond, mask = model.condition_tokens("specific", batch, reasoned, za)
        counts = (~mask).sum(dim=1).tolist()
        assert counts == [1 + batch.action_counts[i] + batch.specific_counts[i] + ca
                          for i in range(len(chosen))]

    def test_guidance_context_validates(self):
        with pytest.raises(ValueError):
            GuidanceContext(dropout=1.5)
        assert GuidanceContext().dropout == pytest.approx(0.10)

    def test_sampler_config_validation(self):
        with pytest.raises(ValueError):
            SamplerConfig(steps={"motion": 0, "action": 5, "specific": 5})
        with pytest.raises(ValueError):
            SamplerConfig(eta=2.0)
        cfg = SamplerConfig.from_dict({"steps": {"specific": 30}, "guidance": 3.0})
        assert cfg.steps["specific"] == 30 and cfg.steps["motion"] == 15
        assert cfg.guidance == 3.0


class TestTraining:
    def test_smoke_three_terms_decrease(self, dataset):
        encoder, vaes, prepared, dcfg = tiny_stack(dataset)
        model, sched, log = train_diffusion(prepared, dcfg, epochs=14, batch_size=8,
                                            seed=1)
        for level in ("motion", "action", "specific"):
            assert log.epochs[-1][f"loss_{level}"] < log.epochs[0][f"loss_{level}"]

    def test_vaes_frozen(self, dataset):
        encoder, vaes, prepared, dcfg = tiny_stack(dataset)
        before = {lv: copy.deepcopy(vaes[lv].state_dict()) for lv in vaes}
        train_diffusion(prepared, dcfg, epochs=2, batch_size=8, seed=2)
        for lv, model in vaes.items():
            after = model.state_dict()
            for key, tensor in before[lv].items():
                assert torch.equal(tensor, after[key]), f"{lv}.{key} changed"

    def test_full_dropout_trains_unconditionally(self, dataset):
        encoder, vaes, prepared, dcfg = tiny_stack(dataset)
        dcfg.cond_dropout = 1.0
        model, sched, _ = train_diffusion(prepared, dcfg, epochs=2, batch_size=8,
                                          seed=3)
        assert model.unconditional
        chosen = prepared[:3]
        batch = collate_graphs([c.graph for c in chosen], [c.embeds for c in chosen])
        reasoned = model.reasoned_rows(batch)
        cond, mask = model.condition_tokens("motion", batch, reasoned)
        ncond, nmask = model.denoisers["motion"].null_condition(3)
        assert torch.equal(cond, ncond)
        z = torch.randn(3, dcfg.token_counts["motion"], dcfg.latent_dim)
        t = torch.tensor([10, 10, 10])
        eps_c = model.predict_noise("motion", z, t, cond, mask)
        eps_u = model.predict_noise("motion", z, t, ncond, nmask)
        assert torch.equal(cfg_predict(eps_c, eps_u, 1.0), eps_u)

    def test_training_deterministic(self, dataset):
        encoder, vaes, prepared, dcfg = tiny_stack(dataset)
        _, _, log1 = train_diffusion(prepared, dcfg, epochs=2, batch_size=8, seed=5)
        _, _, log2 = train_diffusion(prepared, dcfg, epochs=2, batch_size=8, seed=5)
        assert log1.final["total"] == pytest.approx(log2.final["total"], abs=1e-9)


class TestSampling:
    def test_deterministic_and_masked_graph(self, dataset):
        from hiermotion.semgraph import EditKind, EditOp, apply_edit

        encoder, vaes, prepared, dcfg = tiny_stack(dataset)
        model, sched, _ = train_diffusion(prepared, dcfg, epochs=2, batch_size=8,
                                          seed=6)
        graph = dataset.test[0].graph
        config = SamplerConfig(steps={"motion": 4, "action": 4, "specific": 5},
                               guidance=7.5, eta=0.0, seed=42)
        r1 = sample_hierarchical(model, sched, vaes, dataset.normalizer, encoder,
                                 graph, 40, config)
        r2 = sample_hierarchical(model, sched, vaes, dataset.normalizer, encoder,
                                 graph, 40, config)
        assert np.array_equal(r1.final.frames, r2.final.frames)
        assert set(r1.motions) == {"motion", "action", "specific"}
        assert set(r1.latents) == {"motion", "action", "specific"}
        assert r1.latents["specific"].tokens.shape == (8, dcfg.latent_dim)
        assert r1.final.length == 40
        assert r1.final.validate() == []

        masked = apply_edit(graph, EditOp(EditKind.MASK_NODE,
                                          node=graph.action_nodes()[0].id))
        rm = sample_hierarchical(model, sched, vaes, dataset.normalizer, encoder,
                                 masked, 40, config)
        assert np.isfinite(rm.final.frames).all()

    def test_eta_one_varies_with_seed(self, dataset):
        encoder, vaes, prepared, dcfg = tiny_stack(dataset)
        model, sched, _ = train_diffusion(prepared, dcfg, epochs=1, batch_size=8,
                                          seed=7)
        graph = dataset.test[0].graph
        base = dict(steps={"motion": 3, "action": 3, "specific": 3}, guidance=1.0,
                    eta=1.0)
        r1 = sample_hierarchical(model, sched, vaes, dataset.normalizer, encoder,
                                 graph, 36, SamplerConfig(**base, seed=1))
        r2 = sample_hierarchical(model, sched, vaes, dataset.normalizer, encoder,
                                 graph, 36, SamplerConfig(**base, seed=2))
        assert not np.array_equal(r1.final.frames, r2.final.frames)

    def test_step_allocation_configs_valid(self, dataset):
        encoder, vaes, prepared, dcfg = tiny_stack(dataset)
        model, sched, _ = train_diffusion(prepared, dcfg, epochs=1, batch_size=8,
                                          seed=8)
        graph = dataset.test[0].graph
        for steps in ({"motion": 15, "action": 15, "specific": 20},
                      {"motion": 20, "action": 15, "specific": 15}):
            cfg = SamplerConfig(steps=steps, seed=0)
            out = sample_hierarchical(model, sched, vaes, dataset.normalizer,
                                      encoder, graph, 32, cfg)
            assert np.isfinite(out.final.frames).all()

    def test_missing_vae_raises(self, dataset):
        from hiermotion.diffusion import MissingCheckpoint

        encoder, vaes, prepared, dcfg = tiny_stack(dataset)
        model, sched, _ = train_diffusion(prepared, dcfg, epochs=1, batch_size=8,
                                          seed=9)
        broken = {k: v for k, v in vaes.items() if k != "action"}
        with pytest.raises(MissingCheckpoint):
            sample_hierarchical_batch(model, sched, broken, dataset.normalizer,
                                      encoder, [dataset.test[0].graph], [30],
                                      SamplerConfig(seed=0))
