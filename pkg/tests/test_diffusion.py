import numpy as np
import pytest
import torch

from spectracast.codec import train_codec
from spectracast.conditioning import SpectralConfig
from spectracast.core import InputValidationError
from spectracast.corpus import SyntheticSpec, generate_synthetic
from spectracast.diffusion import (
    Denoiser,
    DenoiserConfig,
    NoiseSchedule,
    SpectralDiffusionGenerator,
    UntrainedModelError,
    q_sample,
)

PROBE_SPECTRAL = SpectralConfig(
    n_bands=2, tokens_per_band=3, model_dim=4, text_dim=5, band_proj_dim=3
)
PROBE_CONFIG = DenoiserConfig(
    n_layers=1, model_dim=4, n_heads=2, ff_dim=8, patch_size=1, spectral=PROBE_SPECTRAL
)


def _probe_denoiser(seed=0, dtype=torch.float64, code_dim=3):
    torch.manual_seed(seed)
    return Denoiser(PROBE_CONFIG, code_dim=code_dim, dtype=dtype)


def test_schedule_invariants():
    sched = NoiseSchedule.linear(200)
    assert sched.k_steps == 200
    assert np.all(np.diff(sched.alpha_bars) < 0)
    assert sched.alpha_bars[0] > 0.999
    cos = NoiseSchedule.cosine(100)
    assert np.all(np.diff(cos.alpha_bars) < 0)
    with pytest.raises(InputValidationError):
        NoiseSchedule(alphas=np.array([0.5, 0.5]), alpha_bars=np.array([0.5, 0.5]))


def test_q_sample_endpoint_bound():
    sched = NoiseSchedule.linear(200)
    rng = np.random.default_rng(0)
    z0 = torch.as_tensor(rng.normal(size=(4, 10, 3)))
    noise = torch.as_tensor(rng.normal(size=(4, 10, 3)))
    z_t = q_sample(z0, np.zeros(4, dtype=int), sched, noise)
    ab0 = sched.alpha_bars[0]
    bound = (1 - np.sqrt(ab0)) * float(z0.abs().max()) + np.sqrt(1 - ab0) * float(
        noise.abs().max()
    )
    assert float((z_t - z0).abs().max()) <= bound + 1e-12


def test_q_sample_zero_signal_exact():
    sched = NoiseSchedule.linear(200)
    noise = torch.as_tensor(np.random.default_rng(1).normal(size=(2, 8, 3)))
    z_t = q_sample(torch.zeros(2, 8, 3, dtype=noise.dtype), [50, 120], sched, noise)
    for i, t in enumerate([50, 120]):
        expected = np.sqrt(1 - sched.alpha_bars[t]) * noise[i]
        assert torch.allclose(z_t[i], expected, atol=1e-12)


def test_q_sample_variance_preservation():
    sched = NoiseSchedule.linear(200)
    rng = np.random.default_rng(7)
    n = 10_000
    z0 = torch.as_tensor(rng.standard_normal((n, 1, 1)))
    noise = torch.as_tensor(rng.standard_normal((n, 1, 1)))
    for t in (0, 50, 150, 199):
        z_t = q_sample(z0, np.full(n, t), sched, noise)
        var = float(z_t.var())
        assert abs(var - 1.0) <= 0.05


def test_q_sample_validation():
    sched = NoiseSchedule.linear(10)
    z0 = torch.zeros(1, 4, 2)
    with pytest.raises(InputValidationError):
        q_sample(z0, [10], sched, torch.zeros(1, 4, 2))
    with pytest.raises(InputValidationError):
        q_sample(z0, [0], sched, torch.zeros(1, 4, 3))


def test_lambda_zero_equals_zero_prompt_bitwise():
    net = _probe_denoiser(seed=1)
    z_t = torch.randn(2, 6, 3, dtype=torch.float64)
    t = torch.tensor([3, 7])
    prompt = torch.randn(2, 3, 4, dtype=torch.float64)
    out_lambda0 = net(z_t, t, prompt, lambda_k=0.0)
    out_zero_prompt = net(z_t, t, torch.zeros_like(prompt), lambda_k=1.0)
    assert torch.equal(out_lambda0, out_zero_prompt)
    out_none = net(z_t, t, None, lambda_k=1.0)
    assert torch.equal(out_lambda0, out_none)


def test_lambda_range_validated():
    net = _probe_denoiser()
    z_t = torch.randn(1, 6, 3, dtype=torch.float64)
    with pytest.raises(InputValidationError):
        net(z_t, torch.tensor([1]), None, lambda_k=1.5)


def test_attention_rows_sum_to_one():
    net = _probe_denoiser(seed=2)
    z_t = torch.randn(2, 6, 3, dtype=torch.float64)
    prompt = torch.randn(2, 3, 4, dtype=torch.float64)
    _, attn = net(z_t, torch.tensor([1, 5]), prompt, lambda_k=1.0, return_attn=True)
    for maps in attn:
        for kind in ("self", "cross"):
            rows = maps[kind].sum(dim=-1)
            assert torch.allclose(rows, torch.ones_like(rows), atol=1e-6)


def test_prompt_sensitivity():
    net = _probe_denoiser(seed=3)
    z_t = torch.randn(1, 6, 3, dtype=torch.float64)
    t = torch.tensor([4])
    prompt = torch.randn(1, 3, 4, dtype=torch.float64)
    a = net(z_t, t, prompt, lambda_k=1.0)
    b = net(z_t, t, 2.0 * prompt, lambda_k=1.0)
    assert float((a - b).abs().max()) > 0


def test_denoiser_gradients_match_finite_differences():
    """Training-style loss through the full probe model (denoiser + prompt
    generator): every parameter group matches central finite differences."""
    from spectracast.conditioning import SpectralPromptGenerator

    torch.manual_seed(4)
    net = _probe_denoiser(seed=4)
    prompt_gen = SpectralPromptGenerator(PROBE_SPECTRAL, dtype=torch.float64)
    rng = np.random.default_rng(5)
    z_t = torch.as_tensor(rng.normal(size=(2, 6, 3)))
    t = torch.tensor([2, 9])
    eps_target = torch.as_tensor(rng.normal(size=(2, 6, 3)))
    h = torch.as_tensor(rng.normal(size=(2, 5)))

    def loss_tensor():
        prompt, _, _ = prompt_gen(h)
        eps_hat = net(z_t, t, prompt, lambda_k=0.7)
        return torch.mean((eps_hat - eps_target) ** 2)

    loss = loss_tensor()
    named = {f"denoiser.{k}": v for k, v in net.named_parameters()}
    named.update({f"prompt.{k}": v for k, v in prompt_gen.named_parameters()})
    grads = torch.autograd.grad(loss, list(named.values()))
    autograd = dict(zip(named.keys(), grads))

    coord_rng = np.random.default_rng(6)
    eps = 1e-6
    for name, tensor in named.items():
        flat = tensor.data.reshape(-1)
        coords = coord_rng.choice(flat.numel(), size=min(8, flat.numel()), replace=False)
        ag_flat = autograd[name].reshape(-1)
        for c in coords:
            orig = float(flat[c])
            flat[c] = orig + eps
            lp = float(loss_tensor())
            flat[c] = orig - eps
            lm = float(loss_tensor())
            flat[c] = orig
            fd = (lp - lm) / (2 * eps)
            assert fd == pytest.approx(float(ag_flat[c]), rel=1e-3, abs=1e-9), f"{name}[{c}]"


@pytest.fixture(scope="module")
def tiny_trained():
    series = [
        generate_synthetic(SyntheticSpec(seed=s, regime="transitional", length=96))
        for s in range(2)
    ]
    codec, _ = train_codec(series, steps=300, seed=0)
    spectral = SpectralConfig(
        n_bands=2, tokens_per_band=4, model_dim=32, text_dim=64, band_proj_dim=8
    )
    config = DenoiserConfig(
        n_layers=1, model_dim=32, n_heads=2, ff_dim=64, patch_size=2, spectral=spectral
    )
    gen = SpectralDiffusionGenerator(codec, config, NoiseSchedule.linear(50), seed=0)
    pairs = [(series[0], "an abrupt cold front"), (series[1], "another front passage")]
    gen.train(pairs, steps=60, batch_size=4, log_every=0)
    return gen, pairs


def test_training_determinism():
    series = [generate_synthetic(SyntheticSpec(seed=9, regime="transitional", length=96))]
    codec, _ = train_codec(series, steps=100, seed=1)
    spectral = SpectralConfig(
        n_bands=2, tokens_per_band=4, model_dim=32, text_dim=64, band_proj_dim=8
    )
    config = DenoiserConfig(
        n_layers=1, model_dim=32, n_heads=2, ff_dim=64, patch_size=2, spectral=spectral
    )
    traces = []
    for _ in range(2):
        gen = SpectralDiffusionGenerator(codec, config, NoiseSchedule.linear(50), seed=5)
        traces.append(gen.train([(series[0], "caption")], steps=30, batch_size=4, log_every=0))
    assert traces[0] == traces[1]


def test_sampling_determinism(tiny_trained):
    gen, _ = tiny_trained
    a = gen.sample("an abrupt cold front", n_steps=20, seed=7)
    b = gen.sample("an abrupt cold front", n_steps=20, seed=7)
    assert np.array_equal(a.values, b.values)
    c = gen.sample("an abrupt cold front", n_steps=20, seed=8)
    assert not np.array_equal(a.values, c.values)


def test_sample_single_step_finite(tiny_trained):
    gen, _ = tiny_trained
    out = gen.sample("an abrupt cold front", n_steps=1, seed=3)
    assert np.all(np.isfinite(out.values))
    assert out.values.shape == (96, 5)


def test_untrained_sample_rejected():
    series = [generate_synthetic(SyntheticSpec(seed=11, regime="transitional", length=96))]
    codec, _ = train_codec(series, steps=50, seed=2)
    gen = SpectralDiffusionGenerator(
        codec,
        DenoiserConfig(
            n_layers=1,
            model_dim=32,
            n_heads=2,
            ff_dim=64,
            patch_size=2,
            spectral=SpectralConfig(
                n_bands=2, tokens_per_band=4, model_dim=32, text_dim=64, band_proj_dim=8
            ),
        ),
        seed=0,
    )
    with pytest.raises(UntrainedModelError):
        gen.sample("anything", n_steps=5, seed=0)


def test_checkpoint_round_trip(tmp_path, tiny_trained):
    gen, pairs = tiny_trained
    path = tmp_path / "model.pt"
    gen.save(path)
    loaded = SpectralDiffusionGenerator.load(path)
    assert loaded.state.iteration == gen.state.iteration
    a = gen.sample("an abrupt cold front", n_steps=10, seed=1)
    b = loaded.sample("an abrupt cold front", n_steps=10, seed=1)
    assert np.allclose(a.values, b.values, atol=1e-5)


def test_single_sample_overfit():
    series = generate_synthetic(SyntheticSpec(seed=0, regime="transitional", length=96))
    codec, _ = train_codec([series], steps=400, seed=0)
    spectral = SpectralConfig(
        n_bands=4, tokens_per_band=8, model_dim=64, text_dim=64, band_proj_dim=16
    )
    config = DenoiserConfig(
        n_layers=2, model_dim=64, n_heads=4, ff_dim=128, patch_size=2, spectral=spectral
    )
    gen = SpectralDiffusionGenerator(codec, config, NoiseSchedule.linear(1000), seed=0)
    trace = gen.train(
        [(series, "single fixture caption")],
        steps=3000,
        batch_size=16,
        lr=2e-3,
        weight_decay=0.0,
        log_every=0,
    )
    assert float(np.mean(trace[-100:])) < 0.05
