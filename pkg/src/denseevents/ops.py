"""Differentiable numeric building blocks and the finite-difference oracle.

Thin wrappers over torch with the error contracts the rest of the model
relies on (explicit shape errors, exact masked-softmax semantics) plus the
sinusoidal position encoding and a central-difference gradient checker used
to validate every other module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import torch
from torch import nn

from .errors import ConfigurationError, DegenerateSliceError, ShapeMismatchError

NEG_INF = float("-inf")


def affine(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor | None = None) -> torch.Tensor:
    """y = x W + b with an explicit inner-dimension check."""
    if x.shape[-1] != weight.shape[0]:
        raise ShapeMismatchError(
            f"affine: inner dims disagree, x {tuple(x.shape)} vs W {tuple(weight.shape)}"
        )
    y = x @ weight
    if bias is not None:
        y = y + bias
    return y


def layer_norm(
    x: torch.Tensor,
    scale: torch.Tensor | None = None,
    shift: torch.Tensor | None = None,
    eps: float = 1e-5,
) -> torch.Tensor:
    """Per-row zero mean / unit variance over the last dim, then scale/shift."""
    mean = x.mean(dim=-1, keepdim=True)
    var = x.var(dim=-1, keepdim=True, unbiased=False)
    y = (x - mean) / torch.sqrt(var + eps)
    if scale is not None:
        y = y * scale
    if shift is not None:
        y = y + shift
    return y


def masked_softmax(x: torch.Tensor, dim: int = -1) -> torch.Tensor:
    """Softmax where -inf entries map to exactly 0.

    Raises DegenerateSliceError if any slice along `dim` is fully masked.
    """
    masked = torch.isneginf(x)
    if masked.all(dim=dim).any():
        raise DegenerateSliceError("softmax: fully masked slice")
    y = torch.softmax(x, dim=dim)
    if masked.any():
        y = torch.where(masked, torch.zeros((), dtype=y.dtype), y)
    return y


def sinusoidal_encoding(
    pos: torch.Tensor, dim: int, temperature: float = 10000.0
) -> torch.Tensor:
    """Interleaved sin/cos encoding at geometric frequencies.

    Every element of `pos` is treated as a scalar position: shape [...] maps
    to [..., dim]. Use `encode_coordinates` for (c, d)-style coordinate pairs.
    """
    pos = torch.as_tensor(pos)
    if dim % 2 != 0:
        raise ConfigurationError(f"encoding dim must be even, got {dim}")
    dtype = pos.dtype if pos.is_floating_point() else torch.get_default_dtype()
    half = dim // 2
    freqs = temperature ** (
        -2.0 * torch.arange(half, dtype=dtype, device=pos.device) / dim
    )
    angles = pos.to(dtype).unsqueeze(-1) * freqs
    out = torch.empty(*angles.shape[:-1], dim, dtype=dtype, device=pos.device)
    out[..., 0::2] = torch.sin(angles)
    out[..., 1::2] = torch.cos(angles)
    return out


def encode_coordinates(
    coords: torch.Tensor, dim: int, temperature: float = 10000.0
) -> torch.Tensor:
    """Concatenate per-coordinate sinusoidal encodings of width dim // k.

    `coords` has shape [..., k]; output has shape [..., dim].
    """
    coords = torch.as_tensor(coords)
    k = coords.shape[-1]
    if dim % k != 0:
        raise ConfigurationError(f"encoding dim {dim} not divisible by {k} coordinates")
    parts = [
        sinusoidal_encoding(coords[..., i], dim // k, temperature) for i in range(k)
    ]
    return torch.cat(parts, dim=-1)


def inverse_sigmoid(x: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    x = x.clamp(eps, 1.0 - eps)
    return torch.log(x) - torch.log1p(-x)


def mlp(dims: list[int], activation: type[nn.Module] = nn.ReLU) -> nn.Sequential:
    """[in, hidden..., out] stack of Linear + activation (none after the last)."""
    layers: list[nn.Module] = []
    for i in range(len(dims) - 1):
        layers.append(nn.Linear(dims[i], dims[i + 1]))
        if i < len(dims) - 2:
            layers.append(activation())
    return nn.Sequential(*layers)


@dataclass
class GradCheckReport:
    passed: bool
    tolerance: float
    max_rel_error: float
    per_param: dict[str, float] = field(default_factory=dict)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} max_rel_err={self.max_rel_error:.3e} tol={self.tolerance:.1e}"


def grad_check(
    f: Callable[[], torch.Tensor],
    module: nn.Module,
    step: float = 1e-5,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Compare autograd gradients of the scalar f() against central differences.

    The module (and everything f touches) must be double precision and f must
    be deterministic. Relative error uses max(|analytic|, |fd|, 1e-3) as the
    denominator so near-zero gradients are judged absolutely.
    """
    params = [(n, p) for n, p in module.named_parameters() if p.requires_grad]
    if not params:
        return GradCheckReport(passed=True, tolerance=tolerance, max_rel_error=0.0)
    for _, p in params:
        p.grad = None
    loss = f()
    if not torch.isfinite(loss):
        raise ValueError("grad_check: non-finite loss at base point")
    loss.backward()
    analytic = {
        n: (p.grad.clone() if p.grad is not None else torch.zeros_like(p))
        for n, p in params
    }

    per_param: dict[str, float] = {}
    max_err = 0.0
    with torch.no_grad():
        for name, p in params:
            flat = p.view(-1)
            fd = torch.zeros_like(flat)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + step
                lp = f()
                flat[i] = orig - step
                lm = f()
                flat[i] = orig
                if not (torch.isfinite(lp) and torch.isfinite(lm)):
                    raise ValueError(
                        f"grad_check: non-finite loss perturbing '{name}'[{i}]"
                    )
                fd[i] = (lp - lm) / (2.0 * step)
            a = analytic[name].view(-1)
            denom = torch.maximum(
                torch.maximum(a.abs(), fd.abs()), torch.full_like(fd, 1e-3)
            )
            err = ((a - fd).abs() / denom).max().item() if flat.numel() else 0.0
            per_param[name] = err
            max_err = max(max_err, err)
    return GradCheckReport(
        passed=max_err <= tolerance,
        tolerance=tolerance,
        max_rel_error=max_err,
        per_param=per_param,
    )


def kaiming_uniform_(tensor: torch.Tensor) -> torch.Tensor:
    """Uniform fan-in init used for all projection weights."""
    fan_in = tensor.shape[0] if tensor.dim() >= 2 else tensor.numel()
    bound = math.sqrt(3.0 / max(fan_in, 1))
    with torch.no_grad():
        return tensor.uniform_(-bound, bound)
