"""Central finite-difference gradient helpers shared by the gradient tests."""

import numpy as np
import torch


def sampled_coords(tensor: torch.Tensor, k: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    n = tensor.numel()
    return rng.choice(n, size=min(k, n), replace=False)


def central_diff_at(loss_fn, tensor: torch.Tensor, coord: int, eps: float = 1e-6) -> float:
    flat = tensor.data.reshape(-1)
    orig = float(flat[coord])
    with torch.no_grad():
        flat[coord] = orig + eps
        lp = float(loss_fn())
        flat[coord] = orig - eps
        lm = float(loss_fn())
        flat[coord] = orig
    return (lp - lm) / (2 * eps)


def assert_grads_match(
    loss_fn,
    named_params: dict[str, torch.Tensor],
    autograd: dict[str, torch.Tensor],
    coords_per_group: int = 8,
    rel: float = 1e-3,
    atol: float = 1e-9,
    seed: int = 0,
):
    """Every sampled coordinate's central difference matches autograd."""
    for name, tensor in named_params.items():
        ag_flat = autograd[name].reshape(-1)
        for coord in sampled_coords(tensor, coords_per_group, seed=seed + hash(name) % 10_000):
            fd = central_diff_at(loss_fn, tensor, int(coord))
            ag = float(ag_flat[int(coord)])
            err = abs(fd - ag)
            bound = atol + rel * max(abs(fd), abs(ag))
            assert err <= bound, f"{name}[{coord}]: fd={fd!r} autograd={ag!r} err={err!r}"
