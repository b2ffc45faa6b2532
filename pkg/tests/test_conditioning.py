import numpy as np
import pytest
import torch

from spectracast.conditioning import (
    SpectralConfig,
    SpectralPrompt,
    SpectralPromptGenerator,
    default_phases,
    scheduler_lambda,
)
from spectracast.core import InputValidationError

PROBE = SpectralConfig(
    n_bands=2, tokens_per_band=3, model_dim=4, text_dim=5, band_proj_dim=3
)


def _probe_gen(seed=0, dtype=torch.float64, config=PROBE):
    torch.manual_seed(seed)
    return SpectralPromptGenerator(config, dtype=dtype)


def test_config_validation():
    with pytest.raises(InputValidationError):
        SpectralConfig(n_bands=0)


def test_zero_embedding_gives_zero_band_features():
    gen = _probe_gen()
    h = torch.zeros(1, 5, dtype=torch.float64)
    f = gen.project_bands(h)
    assert torch.all(f == 0)  # no bias in the band projections


def test_project_bands_linearity():
    gen = _probe_gen()
    h = torch.randn(1, 5, dtype=torch.float64)
    assert torch.allclose(gen.project_bands(2 * h), 2 * gen.project_bands(h), atol=1e-12)


def test_single_global_band():
    config = SpectralConfig(n_bands=1, tokens_per_band=3, model_dim=4, text_dim=5, band_proj_dim=3)
    gen = _probe_gen(config=config)
    tokens, gate, pre = gen(torch.randn(2, 5, dtype=torch.float64))
    assert tokens.shape == (2, 3, 4)


def test_token_shape_for_any_band_count():
    for b in (1, 2, 5):
        config = SpectralConfig(
            n_bands=b, tokens_per_band=3, model_dim=4, text_dim=5, band_proj_dim=3
        )
        gen = _probe_gen(config=config)
        s = gen.generate_tokens(gen.project_bands(torch.randn(1, 5, dtype=torch.float64)))
        assert s.shape == (1, 3, 4)


def test_band_mask_changes_fused_tokens():
    gen = _probe_gen(seed=3)
    h = torch.randn(1, 5, dtype=torch.float64)
    f = gen.project_bands(h)
    full = gen.generate_tokens(f)
    masked = gen.generate_tokens(f, band_mask=torch.tensor([True, False]))
    assert not torch.allclose(full, masked)


def test_forward_deterministic():
    gen = _probe_gen(seed=4)
    h = torch.randn(1, 5, dtype=torch.float64)
    a = gen(h)
    b = gen(h)
    for x, y in zip(a, b):
        assert torch.equal(x, y)


def test_gate_at_zero_logits():
    gen = _probe_gen()
    g = gen.gate(torch.zeros(1, 5, dtype=torch.float64))
    assert torch.allclose(g, torch.full((1, 3), 0.5, dtype=torch.float64))


def test_gate_monotone_in_logit():
    gen = _probe_gen(seed=5)
    h = torch.randn(1, 5, dtype=torch.float64)
    g0 = gen.gate(h)
    # move h along the gradient direction of gate 0's logit
    direction = gen.gate_proj[0].detach().reshape(1, -1)
    g1 = gen.gate(h + 0.1 * direction)
    assert g1[0, 0] > g0[0, 0]


def test_apply_gate_limits_and_scaling():
    gen = _probe_gen(seed=6)
    s = torch.randn(1, 3, 4, dtype=torch.float64)
    tiny = torch.full((1, 3), 1e-9, dtype=torch.float64)
    assert torch.allclose(gen.apply_gate(s, tiny), torch.zeros_like(s), atol=1e-8)
    # positive row scaling commutes with gating
    g = torch.rand(1, 3, dtype=torch.float64) * 0.8 + 0.1
    c = torch.tensor([2.0, 0.5, 3.0], dtype=torch.float64).reshape(1, 3, 1)
    assert torch.allclose(gen.apply_gate(s * c, g), gen.apply_gate(s, g) * c, atol=1e-12)


def test_prompt_invariants():
    gen = _probe_gen(seed=7)
    prompt = gen.prompt_for(torch.randn(5, dtype=torch.float64))
    assert torch.all((prompt.gate > 0) & (prompt.gate < 1))
    assert torch.allclose(prompt.tokens, prompt.pre_gate * prompt.gate.unsqueeze(-1))
    with pytest.raises(InputValidationError):
        SpectralPrompt(
            tokens=prompt.tokens,
            gate=torch.ones_like(prompt.gate),  # not strictly inside (0, 1)
            pre_gate=prompt.pre_gate,
        )


def test_raw_embedding_ablation_tiles_tokens():
    config = SpectralConfig(
        n_bands=2, tokens_per_band=3, model_dim=4, text_dim=5, band_proj_dim=3, mspg=False
    )
    gen = _probe_gen(config=config)
    tokens, gate, pre = gen(torch.randn(1, 5, dtype=torch.float64))
    assert torch.allclose(pre[0, 0], pre[0, 1]) and torch.allclose(pre[0, 0], pre[0, 2])


def test_scheduler_lambda_shape():
    phases = (100, 200, 400)
    assert scheduler_lambda(0, phases) == 0.0
    assert scheduler_lambda(99, phases) == 0.0
    assert scheduler_lambda(150, phases) == pytest.approx(0.5)
    assert scheduler_lambda(200, phases) == 1.0
    assert scheduler_lambda(399, phases) == 1.0
    values = [scheduler_lambda(i, phases) for i in range(400)]
    assert all(b >= a for a, b in zip(values, values[1:]))  # monotone


def test_scheduler_validation():
    with pytest.raises(InputValidationError):
        scheduler_lambda(0, (200, 100, 400))
    assert default_phases(80_000) == (20_000, 40_000, 80_000)


def test_conditioning_gradients_match_finite_differences():
    """Every parameter of project -> generate -> gate -> apply, plus h itself,
    matches central finite differences at <= 1e-3 relative error (float64)."""
    gen = _probe_gen(seed=8)
    h_leaf = torch.randn(1, 5, dtype=torch.float64, requires_grad=True)
    target = torch.randn(1, 3, 4, dtype=torch.float64)

    def loss_tensor():
        tokens, _, _ = gen(h_leaf)
        return torch.mean((tokens - target) ** 2)

    loss = loss_tensor()
    params = dict(gen.named_parameters())
    grads = torch.autograd.grad(loss, [h_leaf] + list(params.values()))
    autograd = dict(zip(["h"] + list(params.keys()), grads))

    rng = np.random.default_rng(0)
    eps = 1e-6
    for name, tensor in [("h", h_leaf)] + list(params.items()):
        flat = tensor.data.reshape(-1)
        coords = rng.choice(flat.numel(), size=min(10, flat.numel()), replace=False)
        ag_flat = autograd[name].reshape(-1)
        for c in coords:
            orig = float(flat[c])
            with torch.no_grad():
                flat[c] = orig + eps
                lp = float(loss_tensor())
                flat[c] = orig - eps
                lm = float(loss_tensor())
                flat[c] = orig
            fd = (lp - lm) / (2 * eps)
            assert fd == pytest.approx(float(ag_flat[c]), rel=1e-3, abs=1e-9), f"{name}[{c}]"
