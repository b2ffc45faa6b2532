"""Latent DDPM with a diffusion-transformer denoiser.

The denoiser runs AdaLN-modulated self-attention over temporal patch tokens,
then cross-attention where patches query the gated spectral tokens (the
conditioning branch is scaled by the scheduler value), then an AdaLN MLP.
Training predicts the added noise; sampling runs the ancestral reverse chain
over an optionally strided timestep subsequence.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from datetime import timedelta
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .codec import CheckpointError, SeriesCodec, TrainingDivergedError, CHECKPOINT_VERSION
from .conditioning import SpectralConfig, SpectralPromptGenerator, default_phases, scheduler_lambda
from .core import DEFAULT_START, InputValidationError, SpectracastError, TimeSeries
from .embedding import encode_text

log = logging.getLogger(__name__)

DEFAULT_K_STEPS = 200


class UntrainedModelError(InputValidationError):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=np.float64)
        ab = np.asarray(self.alpha_bars, dtype=np.float64)
        if np.any(a <= 0) or np.any(a >= 1):
            raise InputValidationError("alphas must lie in (0, 1)")
        if np.any(np.diff(ab) >= 0):
            raise InputValidationError("alpha_bars must be strictly decreasing")
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "alpha_bars", ab)

    @property
    def k_steps(self) -> int:
        return self.alphas.shape[0]

    @property
    def betas(self) -> np.ndarray:
        return 1.0 - self.alphas

    @classmethod
    def linear(cls, k_steps: int = DEFAULT_K_STEPS, beta_start=1e-4, beta_end=0.02):
        betas = np.linspace(beta_start, beta_end, k_steps)
        alphas = 1.0 - betas
        return cls(alphas=alphas, alpha_bars=np.cumprod(alphas))

    @classmethod
    def cosine(cls, k_steps: int = DEFAULT_K_STEPS, s: float = 0.008):
        grid = np.arange(k_steps + 1) / k_steps
        f = np.cos((grid + s) / (1 + s) * np.pi / 2) ** 2
        alpha_bars = f[1:] / f[0]
        alphas = np.clip(alpha_bars / np.r_[1.0, alpha_bars[:-1]], 1e-4, 1 - 1e-4)
        return cls(alphas=alphas, alpha_bars=np.cumprod(alphas))


def q_sample(z0: torch.Tensor, t, schedule: NoiseSchedule, noise: torch.Tensor) -> torch.Tensor:
    """Closed-form forward marginal: sqrt(a_bar_t) z0 + sqrt(1 - a_bar_t) noise."""
    if noise.shape != z0.shape:
        raise InputValidationError("noise must match z0 shape")
    t_idx = np.atleast_1d(np.asarray(t, dtype=np.int64))
    if np.any(t_idx < 0) or np.any(t_idx >= schedule.k_steps):
        raise InputValidationError(f"t must lie in [0, {schedule.k_steps})")
    ab = torch.as_tensor(schedule.alpha_bars[t_idx], dtype=z0.dtype)
    while ab.dim() < z0.dim():
        ab = ab.unsqueeze(-1)
    return torch.sqrt(ab) * z0 + torch.sqrt(1.0 - ab) * noise


@dataclass(frozen=True)
class DenoiserConfig:
    n_layers: int = 4
    model_dim: int = 128
    n_heads: int = 4
    ff_dim: int = 256
    patch_size: int = 2
    dropout: float = 0.0
    spectral: SpectralConfig = field(default_factory=SpectralConfig)

    def __post_init__(self):
        if self.model_dim % self.n_heads != 0:
            raise InputValidationError("model_dim must be divisible by n_heads")
        if self.spectral.model_dim != self.model_dim:
            raise InputValidationError("spectral model_dim must equal denoiser model_dim")


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of integer timesteps: [N] -> [N, dim]."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=t.dtype, device=t.device) / half
    )
    args = t[:, None] * freqs[None, :]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=-1)
    if dim % 2:
        emb = torch.cat([emb, torch.zeros_like(emb[:, :1])], dim=-1)
    return emb


def _position_embedding(length: int, dim: int, dtype: torch.dtype) -> torch.Tensor:
    pos = torch.arange(length, dtype=dtype)
    return timestep_embedding(pos, dim)


def _modulate(x: torch.Tensor, shift: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
    return x * (1 + scale.unsqueeze(1)) + shift.unsqueeze(1)


class _MultiHeadAttention(nn.Module):
    """Attention with P as queries; keys/values from `context` (no biases)."""

    def __init__(self, dim: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = dim // n_heads
        self.w_q = nn.Linear(dim, dim, bias=False)
        self.w_k = nn.Linear(dim, dim, bias=False)
        self.w_v = nn.Linear(dim, dim, bias=False)
        self.w_o = nn.Linear(dim, dim, bias=False)

    def forward(self, x: torch.Tensor, context: torch.Tensor, return_attn: bool = False):
        n, lq, d = x.shape
        lk = context.shape[1]
        q = self.w_q(x).reshape(n, lq, self.n_heads, self.head_dim).transpose(1, 2)
        k = self.w_k(context).reshape(n, lk, self.n_heads, self.head_dim).transpose(1, 2)
        v = self.w_v(context).reshape(n, lk, self.n_heads, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        attn = torch.softmax(scores, dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(n, lq, d)
        out = self.w_o(out)
        if return_attn:
            return out, attn
        return out


class DiTBlock(nn.Module):
    """AdaLN self-attention, lambda-scaled spectral cross-attention, AdaLN MLP."""

    def __init__(self, config: DenoiserConfig):
        super().__init__()
        d = config.model_dim
        self.norm1 = nn.LayerNorm(d, elementwise_affine=False)
        self.self_attn = _MultiHeadAttention(d, config.n_heads)
        self.norm_cross = nn.LayerNorm(d, elementwise_affine=False)
        self.cross_attn = _MultiHeadAttention(d, config.n_heads)
        self.norm2 = nn.LayerNorm(d, elementwise_affine=False)
        self.mlp = nn.Sequential(
            nn.Linear(d, config.ff_dim),
            nn.SiLU(),
            nn.Dropout(config.dropout),
            nn.Linear(config.ff_dim, d),
        )
        self.ada = nn.Sequential(nn.SiLU(), nn.Linear(d, 6 * d))

    def forward(
        self,
        x: torch.Tensor,
        cond: torch.Tensor,
        prompt: torch.Tensor | None,
        lambda_k: float,
        return_attn: bool = False,
    ):
        shift_sa, scale_sa, gate_sa, shift_mlp, scale_mlp, gate_mlp = self.ada(cond).chunk(
            6, dim=-1
        )
        attn_maps = {}
        h = _modulate(self.norm1(x), shift_sa, scale_sa)
        if return_attn:
            sa_out, attn_maps["self"] = self.self_attn(h, h, return_attn=True)
        else:
            sa_out = self.self_attn(h, h)
        x = x + gate_sa.unsqueeze(1) * sa_out
        if prompt is not None and lambda_k != 0.0:
            q = self.norm_cross(x)
            if return_attn:
                ca_out, attn_maps["cross"] = self.cross_attn(q, prompt, return_attn=True)
            else:
                ca_out = self.cross_attn(q, prompt)
            x = x + lambda_k * ca_out
        h = _modulate(self.norm2(x), shift_mlp, scale_mlp)
        x = x + gate_mlp.unsqueeze(1) * self.mlp(h)
        if return_attn:
            return x, attn_maps
        return x


class Denoiser(nn.Module):
    """Patchified latent transformer predicting the added noise."""

    def __init__(self, config: DenoiserConfig, code_dim: int, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.config = config
        self.code_dim = code_dim
        d = config.model_dim
        self.patch_embed = nn.Linear(config.patch_size * code_dim, d)
        self.time_mlp = nn.Sequential(nn.Linear(d, d), nn.SiLU(), nn.Linear(d, d))
        self.blocks = nn.ModuleList(DiTBlock(config) for _ in range(config.n_layers))
        self.final_norm = nn.LayerNorm(d, elementwise_affine=False)
        self.final_ada = nn.Sequential(nn.SiLU(), nn.Linear(d, 2 * d))
        self.final_proj = nn.Linear(d, config.patch_size * code_dim)
        self.to(dtype)

    def forward(
        self,
        z_t: torch.Tensor,
        t: torch.Tensor,
        prompt: torch.Tensor | None = None,
        lambda_k: float = 1.0,
        return_attn: bool = False,
    ):
        """z_t: [N, L, code_dim]; t: [N]; prompt: [N, M, d] gated tokens."""
        if not 0.0 <= lambda_k <= 1.0:
            raise InputValidationError("lambda_k must lie in [0, 1]")
        n, length, cd = z_t.shape
        p = self.config.patch_size
        if length % p != 0:
            raise InputValidationError(f"latent length {length} not divisible by patch {p}")
        tokens = z_t.reshape(n, length // p, p * cd)
        x = self.patch_embed(tokens)
        x = x + _position_embedding(x.shape[1], x.shape[2], x.dtype).unsqueeze(0)
        cond = self.time_mlp(timestep_embedding(t.to(x.dtype), self.config.model_dim))
        attn_all = []
        for block in self.blocks:
            if return_attn:
                x, maps = block(x, cond, prompt, lambda_k, return_attn=True)
                attn_all.append(maps)
            else:
                x = block(x, cond, prompt, lambda_k)
        shift, scale = self.final_ada(cond).chunk(2, dim=-1)
        x = _modulate(self.final_norm(x), shift, scale)
        out = self.final_proj(x).reshape(n, length, cd)
        if return_attn:
            return out, attn_all
        return out


@dataclass
class TrainState:
    iteration: int = 0
    seed: int = 0
    loss_trace: list[float] = field(default_factory=list)


class SpectralDiffusionGenerator:
    """Frozen codec + denoiser + prompt generator, with train/sample plumbing."""

    def __init__(
        self,
        codec: SeriesCodec,
        denoiser_config: DenoiserConfig | None = None,
        schedule: NoiseSchedule | None = None,
        seed: int = 0,
        dtype: torch.dtype = torch.float32,
    ):
        self.codec = codec
        self.config = denoiser_config or DenoiserConfig()
        self.schedule = schedule or NoiseSchedule.linear()
        self.dtype = dtype
        torch.manual_seed(seed)
        self.denoiser = Denoiser(self.config, codec.config.code_dim, dtype=dtype)
        self.prompt_gen = SpectralPromptGenerator(self.config.spectral, dtype=dtype)
        self.state = TrainState(seed=seed)

    @property
    def trained(self) -> bool:
        return self.state.iteration > 0 and self.codec.trained

    def caption_embedding(self, caption: str) -> torch.Tensor:
        h = encode_text(caption, dim=self.config.spectral.text_dim).values
        return torch.as_tensor(h, dtype=self.dtype)

    def parameters(self):
        yield from self.denoiser.parameters()
        yield from self.prompt_gen.parameters()

    # -- training ------------------------------------------------------------

    def training_step(
        self,
        z0: torch.Tensor,
        h: torch.Tensor,
        lambda_k: float,
        rng: np.random.Generator,
    ) -> torch.Tensor:
        n = z0.shape[0]
        t_idx = rng.integers(0, self.schedule.k_steps, size=n)
        noise = torch.as_tensor(
            rng.standard_normal(z0.shape), dtype=z0.dtype
        )
        z_t = q_sample(z0, t_idx, self.schedule, noise)
        prompt, _, _ = self.prompt_gen(h)
        eps_hat = self.denoiser(
            z_t, torch.as_tensor(t_idx, dtype=torch.long), prompt, lambda_k
        )
        return torch.mean((eps_hat - noise) ** 2)

    def train(
        self,
        pairs: list[tuple[TimeSeries, str]],
        steps: int,
        batch_size: int = 16,
        lr: float = 2e-4,
        weight_decay: float = 1e-4,
        phases: tuple[int, int, int] | None = None,
        seed: int | None = None,
        log_every: int = 500,
    ) -> list[float]:
        """Denoising training over (series, caption) pairs; returns loss trace."""
        if not pairs:
            raise InputValidationError("training needs at least one (series, caption) pair")
        if not self.codec.trained:
            raise UntrainedModelError("codec must be trained before diffusion training")
        seed = self.state.seed if seed is None else seed
        torch.manual_seed(seed + 1)
        rng = np.random.default_rng(seed)
        phases = phases or default_phases(steps)

        latents = torch.stack(
            [
                torch.as_tensor(self.codec.encode(s).values, dtype=self.dtype)
                for s, _ in pairs
            ]
        )
        self._trained_latent_length = latents.shape[1]
        captions = [c for _, c in pairs]
        unique = sorted(set(captions))
        h_table = {c: self.caption_embedding(c) for c in unique}
        h_all = torch.stack([h_table[c] for c in captions])

        opt = torch.optim.AdamW(self.parameters(), lr=lr, weight_decay=weight_decay)
        trace: list[float] = []
        self.denoiser.train()
        self.prompt_gen.train()
        start = self.state.iteration
        for step in range(start, start + steps):
            lam = scheduler_lambda(step, phases)
            idx = np.sort(rng.integers(0, latents.shape[0], size=min(batch_size, len(pairs))))
            loss = self.training_step(latents[idx], h_all[idx], lam, rng)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(f"diffusion loss non-finite at step {step}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            trace.append(float(loss.detach()))
            if log_every and (step + 1) % log_every == 0:
                log.info(
                    "diffusion step %d lambda=%.2f loss=%.4f",
                    step + 1,
                    lam,
                    float(np.mean(trace[-log_every:])),
                )
        self.state.iteration = start + steps
        self.state.loss_trace.extend(trace)
        self._optimizer_state = opt.state_dict()
        return trace

    # -- sampling ------------------------------------------------------------

    def _reverse_steps(self, n_steps: int) -> list[int]:
        k = self.schedule.k_steps
        if n_steps >= k:
            return list(range(k - 1, -1, -1))
        chosen = np.unique(np.linspace(0, k - 1, n_steps).round().astype(int))
        return list(chosen[::-1])

    def sample_latent(
        self, caption: str, n_steps: int | None = None, seed: int = 0, lambda_k: float = 1.0
    ) -> torch.Tensor:
        if not self.trained:
            raise UntrainedModelError("generator is untrained; run train-codec and train first")
        n_steps = n_steps or self.schedule.k_steps
        if n_steps < 1:
            raise InputValidationError("n_steps must be >= 1")
        gen = torch.Generator().manual_seed(seed)
        # latent length follows the codec training geometry: T / downsample
        length = self._latent_length()
        z = torch.randn(1, length, self.codec.config.code_dim, generator=gen, dtype=self.dtype)
        h = self.caption_embedding(caption).unsqueeze(0)
        prompt, _, _ = self.prompt_gen(h)
        ab = self.schedule.alpha_bars
        steps = self._reverse_steps(n_steps)
        self.denoiser.eval()
        self.prompt_gen.eval()
        with torch.no_grad():
            for i, t in enumerate(steps):
                t_tensor = torch.full((1,), t, dtype=torch.long)
                eps_hat = self.denoiser(z, t_tensor, prompt, lambda_k)
                ab_t = float(ab[t])
                z0_hat = (z - math.sqrt(1.0 - ab_t) * eps_hat) / math.sqrt(ab_t)
                if i == len(steps) - 1:
                    z = z0_hat
                    break
                s = steps[i + 1]
                ab_s = float(ab[s])
                beta_ts = 1.0 - ab_t / ab_s
                mean = (
                    math.sqrt(ab_s) * beta_ts / (1.0 - ab_t) * z0_hat
                    + math.sqrt(ab_t / ab_s) * (1.0 - ab_s) / (1.0 - ab_t) * z
                )
                var = (1.0 - ab_s) / (1.0 - ab_t) * beta_ts
                noise = torch.randn(z.shape, generator=gen, dtype=self.dtype)
                z = mean + math.sqrt(max(var, 0.0)) * noise
        return z.squeeze(0)

    def _latent_length(self) -> int:
        if getattr(self, "_trained_latent_length", None):
            return self._trained_latent_length
        raise UntrainedModelError("latent length unknown; train the generator first")

    def sample(
        self, caption: str, n_steps: int | None = None, seed: int = 0, station_id: str = ""
    ) -> TimeSeries:
        """caption -> spectral prompt -> reverse chain -> decode -> denormalize."""
        from .codec import LatentTensor

        z0 = self.sample_latent(caption, n_steps=n_steps, seed=seed)
        latent = LatentTensor(values=z0.numpy().astype(np.float64))
        quantized, _, _ = self.codec.quantize(latent)
        values = self.codec.decode(quantized)
        return TimeSeries(
            values=values,
            start_time=DEFAULT_START,
            step=timedelta(hours=1),
            station_id=station_id or f"gen-{seed}",
        )

    # -- persistence ---------------------------------------------------------

    def save(self, path: str | Path):
        path = Path(path)
        state = {
            "format_version": CHECKPOINT_VERSION,
            "codec": self.codec.state(),
            "denoiser_config": _denoiser_config_dict(self.config),
            "denoiser_state": self.denoiser.state_dict(),
            "spectral_state": self.prompt_gen.state_dict(),
            "schedule_alphas": self.schedule.alphas,
            "optimizer_state": getattr(self, "_optimizer_state", None),
            "iteration": self.state.iteration,
            "seed": self.state.seed,
            "loss_trace": self.state.loss_trace,
            "latent_length": getattr(self, "_trained_latent_length", None),
        }
        tmp = path.with_suffix(path.suffix + ".tmp")
        torch.save(state, tmp)
        tmp.replace(path)

    @classmethod
    def load(cls, path: str | Path) -> "SpectralDiffusionGenerator":
        state = torch.load(Path(path), weights_only=False)
        if state.get("format_version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {state.get('format_version')!r}")
        codec = SeriesCodec.from_state(state["codec"])
        config = _denoiser_config_from_dict(state["denoiser_config"])
        schedule = NoiseSchedule(
            alphas=state["schedule_alphas"], alpha_bars=np.cumprod(state["schedule_alphas"])
        )
        gen = cls(codec, config, schedule, seed=int(state["seed"]))
        gen.denoiser.load_state_dict(state["denoiser_state"])
        gen.prompt_gen.load_state_dict(state["spectral_state"])
        gen.state.iteration = int(state["iteration"])
        gen.state.loss_trace = list(state.get("loss_trace", []))
        if state.get("optimizer_state") is not None:
            gen._optimizer_state = state["optimizer_state"]
        if state.get("latent_length"):
            gen._trained_latent_length = int(state["latent_length"])
        return gen


def _denoiser_config_dict(config: DenoiserConfig) -> dict:
    d = asdict(config)
    return d


def _denoiser_config_from_dict(d: dict) -> DenoiserConfig:
    spectral = SpectralConfig(**d["spectral"])
    kwargs = {k: v for k, v in d.items() if k != "spectral"}
    return DenoiserConfig(spectral=spectral, **kwargs)
