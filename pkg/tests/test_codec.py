import numpy as np
import pytest
import torch

from spectracast.codec import (
    CheckpointError,
    CodecConfig,
    LatentTensor,
    SeriesCodec,
    VQVAENet,
    train_codec,
)
from spectracast.core import InputValidationError, NormalizationStats
from spectracast.corpus import SyntheticSpec, generate_synthetic

REGIMES = ("steady", "transitional", "volatile")


def _corpus(n, length=96, base_seed=0):
    return [
        generate_synthetic(
            SyntheticSpec(seed=base_seed + i, regime=REGIMES[i % 3], length=length)
        )
        for i in range(n)
    ]


@pytest.fixture(scope="module")
def overfit_codec():
    series = _corpus(8)
    codec, trace = train_codec(series, steps=900, seed=0)
    return codec, trace, series


def central_diff(loss_fn, tensor: torch.Tensor, coords, eps=1e-5):
    flat = tensor.reshape(-1)
    out = {}
    for c in coords:
        orig = float(flat[c])
        flat[c] = orig + eps
        lp = float(loss_fn())
        flat[c] = orig - eps
        lm = float(loss_fn())
        flat[c] = orig
        out[int(c)] = (lp - lm) / (2 * eps)
    return out


def sample_coords(tensor: torch.Tensor, k: int, seed: int):
    n = tensor.numel()
    rng = np.random.default_rng(seed)
    return rng.choice(n, size=min(k, n), replace=False)


def test_latent_shape_arithmetic():
    stats = NormalizationStats(mean=np.zeros(5), std=np.ones(5))
    codec = SeriesCodec(CodecConfig(), stats, seed=0)
    s = generate_synthetic(SyntheticSpec(seed=1, length=168))
    z = codec.encode(s)
    assert z.values.shape == (42, 16)


def test_encode_deterministic():
    stats = NormalizationStats(mean=np.zeros(5), std=np.ones(5))
    codec = SeriesCodec(CodecConfig(), stats, seed=0)
    s = generate_synthetic(SyntheticSpec(seed=2, length=96))
    assert np.array_equal(codec.encode(s).values, codec.encode(s).values)


def test_length_not_divisible_rejected():
    stats = NormalizationStats(mean=np.zeros(5), std=np.ones(5))
    codec = SeriesCodec(CodecConfig(downsample_factor=4), stats, seed=0)
    s = generate_synthetic(SyntheticSpec(seed=3, length=50))
    with pytest.raises(InputValidationError, match="divisible"):
        codec.encode(s)


def test_config_validation():
    with pytest.raises(InputValidationError):
        CodecConfig(downsample_factor=3)
    with pytest.raises(InputValidationError):
        CodecConfig(codebook_size=1)


def test_quantizer_nearest_and_ties():
    net = VQVAENet(CodecConfig(codebook_size=2, code_dim=2), dtype=torch.float64)
    with torch.no_grad():
        net.quantizer.codebook.copy_(torch.tensor([[0.0, 0.0], [1.0, 1.0]]))
    z_e = torch.tensor([[[0.1, 0.1]]], dtype=torch.float64)
    _, idx, _, _ = net.quantizer(z_e)
    assert int(idx) == 0

    # exact codebook member: both losses vanish
    z_e2 = torch.tensor([[[1.0, 1.0]]], dtype=torch.float64)
    _, idx2, cb_loss, commit_loss = net.quantizer(z_e2)
    assert int(idx2) == 1
    assert float(cb_loss) == 0.0 and float(commit_loss) == 0.0

    # equidistant tie resolves to the lowest index
    with torch.no_grad():
        net.quantizer.codebook.copy_(torch.tensor([[0.0, 0.0], [2.0, 0.0]]))
    z_e3 = torch.tensor([[[1.0, 0.0]]], dtype=torch.float64)
    _, idx3, _, _ = net.quantizer(z_e3)
    assert int(idx3) == 0


def test_quantize_rows_are_codebook_members():
    stats = NormalizationStats(mean=np.zeros(5), std=np.ones(5))
    codec = SeriesCodec(CodecConfig(codebook_size=16, code_dim=4), stats, seed=1)
    s = generate_synthetic(SyntheticSpec(seed=4, length=96))
    z_q, idx, _ = codec.quantize(codec.encode(s))
    book = codec.net.quantizer.codebook.detach().numpy()
    assert np.allclose(z_q.values, book[idx], atol=1e-6)


def test_decode_shape_and_finite_untrained():
    stats = NormalizationStats(mean=np.zeros(5), std=np.ones(5))
    codec = SeriesCodec(CodecConfig(), stats, seed=2)
    latent = LatentTensor(values=np.random.default_rng(0).normal(size=(42, 16)))
    out = codec.decode(latent)
    assert out.shape == (168, 5)
    assert np.all(np.isfinite(out))


def test_straight_through_gradient_contract():
    """Autograd through the straight-through estimator equals the finite-difference
    gradient of the loss with the quantization offset frozen, in double precision."""
    torch.manual_seed(0)
    config = CodecConfig(
        in_channels=5, hidden=8, n_res_layers=1, codebook_size=8, code_dim=3, downsample_factor=2
    )
    net = VQVAENet(config, dtype=torch.float64)
    x = torch.as_tensor(np.random.default_rng(1).normal(size=(1, 8, 5)))

    # autograd side: true straight-through forward
    z_e = net.encode(x)
    z_q_st, _, codebook_loss, commit_loss = net.quantizer(z_e)
    recon = net.decode(z_q_st)
    loss = torch.mean((recon - x) ** 2) + codebook_loss + commit_loss
    params = {
        "encoder": next(net.encoder.parameters()),
        "decoder": next(net.decoder.parameters()),
        "codebook": net.quantizer.codebook,
    }
    grads = torch.autograd.grad(loss, list(params.values()))
    autograd_grads = dict(zip(params.keys(), grads))

    # finite-difference side: the same loss with every detach replaced by a
    # frozen constant captured at the evaluation point, so it is smooth
    with torch.no_grad():
        z_e0 = net.encode(x)
        z_q0, assign_grid, _, _ = net.quantizer(z_e0)
        offset = (z_q0 - z_e0).clone()  # z_q_st = z_e + offset at this point
        assign = assign_grid.reshape(-1)
        flat0 = z_e0.reshape(-1, config.code_dim).clone()  # frozen z_e for the codebook term
        sel0 = net.quantizer.codebook[assign].clone()  # frozen rows for the commitment term

    def frozen_loss():
        with torch.no_grad():
            z_e_f = net.encode(x)
            recon_f = net.decode(z_e_f + offset)
            flat = z_e_f.reshape(-1, config.code_dim)
            cb_loss = torch.mean((net.quantizer.codebook[assign] - flat0) ** 2)
            commit = net.quantizer.beta * torch.mean((flat - sel0) ** 2)
            return float(torch.mean((recon_f - x) ** 2) + cb_loss + commit)

    for name, p in params.items():
        coords = sample_coords(p, 12, seed=hash(name) % 2**31)
        fd = central_diff(frozen_loss, p.data, coords, eps=1e-6)
        ag = autograd_grads[name].reshape(-1)
        for c, fd_val in fd.items():
            ag_val = float(ag[c])
            assert fd_val == pytest.approx(ag_val, rel=1e-3, abs=1e-7), (
                f"{name}[{c}]: fd={fd_val} autograd={ag_val}"
            )


def test_overfit_reconstruction(overfit_codec):
    codec, trace, series = overfit_codec
    errs = [np.mean((n - r) ** 2) for n, r in (codec.reconstruct_normalized(s) for s in series)]
    assert max(errs) < 0.01
    # smoothed loss decreases over training
    head = np.mean(trace[:100])
    tail = np.mean(trace[-100:])
    assert tail < head * 0.2


def test_zero_steps_returns_initialized_model():
    series = _corpus(2)
    codec, trace = train_codec(series, steps=0, seed=3)
    assert trace == []
    assert not codec.trained


def test_codebook_usage_on_diverse_corpus():
    corpus = _corpus(120, base_seed=500)
    codec, _ = train_codec(corpus, steps=600, seed=4)
    used = set()
    for s in corpus:
        _, idx, _ = codec.quantize(codec.encode(s))
        used.update(int(i) for i in idx)
    assert len(used) >= 0.10 * codec.config.codebook_size


def test_checkpoint_round_trip(tmp_path, overfit_codec):
    codec, _, series = overfit_codec
    path = tmp_path / "codec.pt"
    codec.save(path)
    loaded = SeriesCodec.load(path)
    assert loaded.config == codec.config
    assert loaded.trained_steps == codec.trained_steps
    a = codec.encode(series[0]).values
    b = loaded.encode(series[0]).values
    assert np.allclose(a, b, atol=1e-6)


def test_checkpoint_config_mismatch(tmp_path, overfit_codec):
    codec, _, _ = overfit_codec
    path = tmp_path / "codec.pt"
    codec.save(path)
    with pytest.raises(CheckpointError):
        SeriesCodec.load(path, expected_config=CodecConfig(hidden=32))
