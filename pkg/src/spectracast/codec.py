"""VQ-VAE codec mapping series to the latent grid the diffusion model uses.

1-D convolutional encoder/decoder around a nearest-neighbor codebook with
straight-through gradients, plain loss-based codebook updates, and periodic
dead-code reinitialization. The public wrapper works on TimeSeries in and
out (normalizing internally); tensors stay inside.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .core import (
    InputValidationError,
    NormalizationStats,
    SpectracastError,
    TimeSeries,
    N_CHANNELS,
)

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
DEAD_CODE_INTERVAL = 500


class TrainingDivergedError(SpectracastError):
    pass


class CheckpointError(SpectracastError):
    pass


@dataclass(frozen=True)
class CodecConfig:
    in_channels: int = N_CHANNELS
    hidden: int = 64
    n_res_layers: int = 2
    codebook_size: int = 256
    code_dim: int = 16
    downsample_factor: int = 4
    commitment_beta: float = 0.25

    def __post_init__(self):
        f = self.downsample_factor
        if f < 1 or (f & (f - 1)) != 0:
            raise InputValidationError("downsample_factor must be a power of 2")
        if self.codebook_size < 2:
            raise InputValidationError("codebook_size must be >= 2")


@dataclass(frozen=True)
class LatentTensor:
    values: np.ndarray  # [L, code_dim]
    code_indices: np.ndarray | None = None

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or not np.all(np.isfinite(arr)):
            raise InputValidationError("latent values must be a finite 2-D array")
        object.__setattr__(self, "values", arr)

    @property
    def length(self) -> int:
        return self.values.shape[0]


class _ResBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.ReLU(),
            nn.Conv1d(channels, channels, kernel_size=3, padding=1),
            nn.ReLU(),
            nn.Conv1d(channels, channels, kernel_size=1),
        )

    def forward(self, x):
        return x + self.block(x)


class VectorQuantizer(nn.Module):
    """Nearest-codebook quantization with straight-through gradients."""

    def __init__(self, codebook_size: int, code_dim: int, commitment_beta: float):
        super().__init__()
        self.codebook = nn.Parameter(torch.empty(codebook_size, code_dim))
        nn.init.uniform_(self.codebook, -1.0 / codebook_size, 1.0 / codebook_size)
        self.beta = commitment_beta

    def forward(self, z_e: torch.Tensor):
        """z_e: [B, L, D] -> (z_q straight-through, indices, codebook_loss, commit_loss)."""
        flat = z_e.reshape(-1, z_e.shape[-1])
        d = (
            flat.pow(2).sum(dim=1, keepdim=True)
            - 2.0 * flat @ self.codebook.t()
            + self.codebook.pow(2).sum(dim=1)
        )
        indices = torch.argmin(d, dim=1)  # argmin takes the lowest index on ties
        z_q = self.codebook[indices].reshape(z_e.shape)
        codebook_loss = torch.mean((z_q - z_e.detach()) ** 2)
        commit_loss = self.beta * torch.mean((z_e - z_q.detach()) ** 2)
        z_q_st = z_e + (z_q - z_e).detach()
        return z_q_st, indices.reshape(z_e.shape[:-1]), codebook_loss, commit_loss


class VQVAENet(nn.Module):
    def __init__(self, config: CodecConfig, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.config = config
        c, h = config.in_channels, config.hidden
        n_down = int(np.log2(config.downsample_factor))
        enc: list[nn.Module] = []
        in_c = c
        for _ in range(n_down):
            enc += [nn.Conv1d(in_c, h, kernel_size=4, stride=2, padding=1), nn.ReLU()]
            in_c = h
        enc += [_ResBlock(h) for _ in range(config.n_res_layers)]
        enc += [nn.Conv1d(h, config.code_dim, kernel_size=3, padding=1)]
        self.encoder = nn.Sequential(*enc)

        dec: list[nn.Module] = [nn.Conv1d(config.code_dim, h, kernel_size=3, padding=1)]
        dec += [_ResBlock(h) for _ in range(config.n_res_layers)]
        for _ in range(n_down):
            dec += [nn.ReLU(), nn.ConvTranspose1d(h, h, kernel_size=4, stride=2, padding=1)]
        dec += [nn.ReLU(), nn.Conv1d(h, c, kernel_size=3, padding=1)]
        self.decoder = nn.Sequential(*dec)

        self.quantizer = VectorQuantizer(
            config.codebook_size, config.code_dim, config.commitment_beta
        )
        self.to(dtype)

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        """x: [B, T, C] -> continuous latents [B, L, code_dim]."""
        return self.encoder(x.transpose(1, 2)).transpose(1, 2)

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        """z: [B, L, code_dim] -> [B, T, C]."""
        return self.decoder(z.transpose(1, 2)).transpose(1, 2)

    def forward(self, x: torch.Tensor):
        z_e = self.encode(x)
        z_q, indices, codebook_loss, commit_loss = self.quantizer(z_e)
        recon = self.decode(z_q)
        return recon, z_e, z_q, indices, codebook_loss, commit_loss


class SeriesCodec:
    """TimeSeries-facing wrapper: normalization + tensor plumbing."""

    def __init__(
        self,
        config: CodecConfig,
        stats: NormalizationStats,
        dtype: torch.dtype = torch.float32,
        seed: int = 0,
    ):
        self.config = config
        self.stats = stats
        self.dtype = dtype
        torch.manual_seed(seed)
        self.net = VQVAENet(config, dtype=dtype)
        self.trained_steps = 0

    @property
    def trained(self) -> bool:
        return self.trained_steps > 0

    def _check_length(self, t_len: int):
        if t_len % self.config.downsample_factor != 0:
            raise InputValidationError(
                f"series length {t_len} not divisible by downsample factor "
                f"{self.config.downsample_factor}"
            )

    def _to_tensor(self, series: TimeSeries) -> torch.Tensor:
        self._check_length(series.length)
        normed = (series.values - self.stats.mean) / self.stats.std
        return torch.as_tensor(normed, dtype=self.dtype).unsqueeze(0)

    def encode(self, series: TimeSeries) -> LatentTensor:
        """Continuous pre-quantization latent [T/f, code_dim]."""
        self.net.eval()
        with torch.no_grad():
            z_e = self.net.encode(self._to_tensor(series))
        return LatentTensor(values=z_e.squeeze(0).numpy())

    def quantize(self, latent: LatentTensor) -> tuple[LatentTensor, np.ndarray, dict]:
        self.net.eval()
        with torch.no_grad():
            z_e = torch.as_tensor(latent.values, dtype=self.dtype).unsqueeze(0)
            _, indices, codebook_loss, commit_loss = self.net.quantizer(z_e)
            # exact codebook rows (the straight-through sum is float-inexact)
            rows = self.net.quantizer.codebook[indices.reshape(-1)].reshape(z_e.shape)
        idx = indices.squeeze(0).numpy()
        return (
            LatentTensor(values=rows.squeeze(0).numpy(), code_indices=idx),
            idx,
            {"codebook": float(codebook_loss), "commitment": float(commit_loss)},
        )

    def decode(self, latent: LatentTensor) -> np.ndarray:
        """Latent -> denormalized values [T, C]."""
        if latent.values.shape[1] != self.config.code_dim:
            raise InputValidationError(
                f"latent width {latent.values.shape[1]} != code_dim {self.config.code_dim}"
            )
        self.net.eval()
        with torch.no_grad():
            z = torch.as_tensor(latent.values, dtype=self.dtype).unsqueeze(0)
            out = self.net.decode(z).squeeze(0).numpy()
        return out * np.asarray(self.stats.std) + np.asarray(self.stats.mean)

    def reconstruct_normalized(self, series: TimeSeries) -> tuple[np.ndarray, np.ndarray]:
        """(normalized input, normalized reconstruction) for error reporting."""
        self.net.eval()
        with torch.no_grad():
            x = self._to_tensor(series)
            recon, *_ = self.net(x)
        normed = (series.values - self.stats.mean) / self.stats.std
        return normed, recon.squeeze(0).numpy()

    def state(self) -> dict:
        return {
            "format_version": CHECKPOINT_VERSION,
            "config": asdict(self.config),
            "state_dict": self.net.state_dict(),
            "stats_mean": np.asarray(self.stats.mean),
            "stats_std": np.asarray(self.stats.std),
            "trained_steps": self.trained_steps,
        }

    @classmethod
    def from_state(cls, state: dict, dtype: torch.dtype = torch.float32) -> "SeriesCodec":
        if state.get("format_version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported codec format {state.get('format_version')!r}")
        config = CodecConfig(**state["config"])
        stats = NormalizationStats(mean=state["stats_mean"], std=state["stats_std"])
        codec = cls(config, stats, dtype=dtype)
        codec.net.load_state_dict(state["state_dict"])
        codec.net.to(dtype)
        codec.trained_steps = int(state["trained_steps"])
        return codec

    def save(self, path: str | Path):
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        torch.save(self.state(), tmp)
        tmp.replace(path)

    @classmethod
    def load(cls, path: str | Path, expected_config: CodecConfig | None = None) -> "SeriesCodec":
        state = torch.load(Path(path), weights_only=False)
        codec = cls.from_state(state)
        if expected_config is not None and codec.config != expected_config:
            raise CheckpointError("checkpoint codec config does not match the expected config")
        return codec


def train_codec(
    corpus: list[TimeSeries],
    config: CodecConfig | None = None,
    steps: int = 2000,
    batch_size: int = 16,
    lr: float = 2e-3,
    seed: int = 0,
    stats: NormalizationStats | None = None,
) -> tuple[SeriesCodec, list[float]]:
    """Train on reconstruction + codebook + commitment; returns loss trace.

    Codes unused since the last check are reinitialized to random encoder
    outputs every DEAD_CODE_INTERVAL steps.
    """
    if not corpus:
        raise InputValidationError("train_codec needs a nonempty corpus")
    config = config or CodecConfig()
    stats = stats or NormalizationStats.fit(corpus)
    codec = SeriesCodec(config, stats, seed=seed)
    if steps == 0:
        return codec, []
    net = codec.net
    for s in corpus:
        codec._check_length(s.length)
    data = np.stack([(s.values - stats.mean) / stats.std for s in corpus])
    tensor = torch.as_tensor(data, dtype=codec.dtype)

    rng = np.random.default_rng(seed)
    opt = torch.optim.AdamW(net.parameters(), lr=lr, weight_decay=1e-5)
    trace: list[float] = []
    usage = torch.zeros(config.codebook_size, dtype=torch.long)
    net.train()
    for step in range(steps):
        idx = rng.integers(0, tensor.shape[0], size=min(batch_size, tensor.shape[0]))
        batch = tensor[np.sort(idx)]
        recon, z_e, _, indices, codebook_loss, commit_loss = net(batch)
        recon_loss = torch.mean((recon - batch) ** 2)
        loss = recon_loss + codebook_loss + commit_loss
        if not torch.isfinite(loss):
            raise TrainingDivergedError(
                f"codec loss became non-finite at step {step} "
                f"(recon={float(recon_loss)}, codebook={float(codebook_loss)})"
            )
        opt.zero_grad()
        loss.backward()
        opt.step()
        trace.append(float(loss.detach()))
        usage.scatter_add_(
            0, indices.reshape(-1), torch.ones(indices.numel(), dtype=torch.long)
        )
        if (step + 1) % DEAD_CODE_INTERVAL == 0:
            dead = torch.nonzero(usage == 0).squeeze(1)
            if dead.numel() > 0:
                with torch.no_grad():
                    flat = z_e.detach().reshape(-1, config.code_dim)
                    pick = torch.as_tensor(
                        rng.integers(0, flat.shape[0], size=dead.numel()), dtype=torch.long
                    )
                    net.quantizer.codebook.data[dead] = flat[pick]
                log.info("reinitialized %d dead codes at step %d", dead.numel(), step + 1)
            usage.zero_()
    codec.trained_steps = steps
    return codec, trace
