"""Text-to-spectral-prior machinery.

A caption embedding h is projected into B learned frequency subspaces, each
subspace emits M tokens through a small generator MLP, the per-band stacks
are fused position-wise into S, and an adaptive sigmoid gate modulates each
token row. A training scheduler ramps the conditioning branch from 0 to 1
across the spectral phase.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .core import InputValidationError


@dataclass(frozen=True)
class SpectralConfig:
    n_bands: int = 8
    tokens_per_band: int = 16
    model_dim: int = 128
    text_dim: int = 256
    band_proj_dim: int = 32
    mspg: bool = True  # False: ablation feeding the raw text embedding tiled to M tokens

    def __post_init__(self):
        for name in ("n_bands", "tokens_per_band", "model_dim", "text_dim", "band_proj_dim"):
            if getattr(self, name) <= 0:
                raise InputValidationError(f"{name} must be positive")


@dataclass(frozen=True)
class SpectralPrompt:
    """Gated spectral tokens for one caption: rows of `tokens` are S * g."""

    tokens: torch.Tensor  # [M, d], gated
    gate: torch.Tensor  # [M]
    pre_gate: torch.Tensor  # [M, d]

    def __post_init__(self):
        if self.tokens.shape != self.pre_gate.shape or self.gate.shape[0] != self.tokens.shape[0]:
            raise InputValidationError("spectral prompt shapes are inconsistent")
        if torch.any(self.gate <= 0) or torch.any(self.gate >= 1):
            raise InputValidationError("gate values must lie strictly inside (0, 1)")


class SpectralPromptGenerator(nn.Module):
    """Multi-band prompt generator with adaptive gating."""

    def __init__(self, config: SpectralConfig, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.config = config
        b, m, d = config.n_bands, config.tokens_per_band, config.model_dim
        d_text, d_f = config.text_dim, config.band_proj_dim
        if config.mspg:
            # band projections W_b and the gate W_g carry no bias so that a
            # zero text embedding degenerates cleanly
            self.band_proj = nn.Parameter(torch.empty(b, d_f, d_text))
            nn.init.normal_(self.band_proj, std=d_text**-0.5)
            self.generators = nn.ModuleList(
                [
                    nn.Sequential(nn.Linear(d_f, d), nn.SiLU(), nn.Linear(d, m * d))
                    for _ in range(b)
                ]
            )
            self.fuse = nn.Linear(b * d, d)
        else:
            self.raw_proj = nn.Linear(d_text, d, bias=False)
        self.gate_proj = nn.Parameter(torch.empty(m, d_text))
        nn.init.normal_(self.gate_proj, std=d_text**-0.5)
        self.to(dtype)

    def project_bands(self, h: torch.Tensor) -> torch.Tensor:
        """h: [N, d_text] -> per-band features [N, B, d_f] (f_b = W_b h)."""
        if h.shape[-1] != self.config.text_dim:
            raise InputValidationError(
                f"text embedding width {h.shape[-1]} != configured {self.config.text_dim}"
            )
        return torch.einsum("bfd,nd->nbf", self.band_proj, h)

    def generate_tokens(
        self, f_bands: torch.Tensor, band_mask: torch.Tensor | None = None
    ) -> torch.Tensor:
        """[N, B, d_f] -> fused tokens S [N, M, d].

        Per-band stacks are arranged [M, B * d] by token position and fused
        with one linear map. `band_mask` (test hook) zeroes selected bands'
        tokens before fusion.
        """
        n = f_bands.shape[0]
        m, d = self.config.tokens_per_band, self.config.model_dim
        stacks = []
        for b, gen in enumerate(self.generators):
            s_b = gen(f_bands[:, b]).reshape(n, m, d)
            if band_mask is not None and not bool(band_mask[b]):
                s_b = torch.zeros_like(s_b)
            stacks.append(s_b)
        concat = torch.cat(stacks, dim=-1)  # [N, M, B*d]
        return self.fuse(concat)

    def gate(self, h: torch.Tensor) -> torch.Tensor:
        """g = sigmoid(W_g h): [N, d_text] -> [N, M]."""
        return torch.sigmoid(h @ self.gate_proj.t())

    @staticmethod
    def apply_gate(s: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
        return s * g.unsqueeze(-1)

    def forward(
        self, h: torch.Tensor, band_mask: torch.Tensor | None = None
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """h: [N, d_text] -> (gated tokens [N, M, d], gate [N, M], pre-gate S)."""
        if h.dim() == 1:
            h = h.unsqueeze(0)
        if self.config.mspg:
            s = self.generate_tokens(self.project_bands(h), band_mask)
        else:
            s = self.raw_proj(h).unsqueeze(1).expand(-1, self.config.tokens_per_band, -1)
        g = self.gate(h)
        return self.apply_gate(s, g), g, s

    def prompt_for(self, h: torch.Tensor) -> SpectralPrompt:
        gated, g, s = self.forward(h)
        return SpectralPrompt(tokens=gated.squeeze(0), gate=g.squeeze(0), pre_gate=s.squeeze(0))


def scheduler_lambda(iteration: int, phases: tuple[int, int, int]) -> float:
    """0 through warmup, linear 0->1 across the spectral phase, then 1."""
    warmup_end, spectral_end, total = phases
    if not 0 <= warmup_end <= spectral_end <= total:
        raise InputValidationError(
            f"phase boundaries must satisfy 0 <= warmup <= spectral <= total, got {phases}"
        )
    if iteration < warmup_end:
        return 0.0
    if iteration >= spectral_end:
        return 1.0
    if spectral_end == warmup_end:
        return 1.0
    return (iteration - warmup_end) / (spectral_end - warmup_end)


def default_phases(total: int) -> tuple[int, int, int]:
    """Desk-scale analogue of the warmup/spectral/full phase split."""
    return (total // 4, total // 2, total)
