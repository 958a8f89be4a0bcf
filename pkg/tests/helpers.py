"""Shared numeric test utilities: central finite differences against
autograd, and linear-scan nearest-neighbor oracles."""

import numpy as np
import torch


def central_difference(fn, x: torch.Tensor, flat_index: int,
                       eps: float = 1e-6) -> float:
    """d fn / d x[flat_index] by central differences; fn returns a scalar.

    Only the parameter nudges run without grad; fn itself may need grad mode
    internally (e.g. a gradient penalty).
    """
    def scalar(v):
        return float(v.detach()) if torch.is_tensor(v) else float(v)

    flat = x.reshape(-1)
    with torch.no_grad():
        orig = flat[flat_index].item()
        flat[flat_index] = orig + eps
    hi = scalar(fn())
    with torch.no_grad():
        flat[flat_index] = orig - eps
    lo = scalar(fn())
    with torch.no_grad():
        flat[flat_index] = orig
    return (hi - lo) / (2.0 * eps)


def gradcheck_against_fd(fn, x: torch.Tensor, n_probe: int = 6,
                         eps: float = 1e-6, seed: int = 0) -> float:
    """Max relative error between autograd and central differences on a
    random subset of x's entries. x must be a float64 leaf with grad."""
    value = fn()
    if x.grad is not None:
        x.grad = None
    value.backward()
    grad = x.grad.reshape(-1).detach().clone()
    rng = np.random.default_rng(seed)
    indices = rng.choice(x.numel(), size=min(n_probe, x.numel()), replace=False)
    worst = 0.0
    for idx in indices:
        numeric = central_difference(fn, x, int(idx), eps)
        analytic = float(grad[int(idx)])
        denom = max(abs(numeric), abs(analytic), 1e-8)
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst


def linear_scan_nn(queries: np.ndarray, points: np.ndarray) -> np.ndarray:
    """O(N*M) exact nearest-neighbor distances."""
    diffs = queries[:, None, :] - points[None, :, :]
    return np.sqrt((diffs ** 2).sum(axis=2)).min(axis=1)


def chamfer_oracle(a: np.ndarray, b: np.ndarray) -> float:
    return (linear_scan_nn(a, b).mean() + linear_scan_nn(b, a).mean()) / 2.0


def mean_hausdorff_oracle(a: np.ndarray, b: np.ndarray) -> float:
    return max(linear_scan_nn(a, b).mean(), linear_scan_nn(b, a).mean())


def rms_oracle(a: np.ndarray, b: np.ndarray) -> float:
    total = 0.0
    for pa, pb in zip(a, b):
        d = 0.0
        for i in range(3):
            d += (pa[i] - pb[i]) ** 2
        total += d
    return float(np.sqrt(total / len(a)))
