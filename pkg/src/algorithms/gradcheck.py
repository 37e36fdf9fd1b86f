"""
Finite-difference check of loss_and_gradients

Central differences in float64 are compared with autograd per parameter
tensor: rel = ||g - g_fd|| / max(||g||, ||g_fd||), checked when ||g|| > 1e-8.
Very wide tensors (the patch embedding) are checked on a fixed random
subset of entries.
"""
from dataclasses import dataclass, field

import numpy as np
import torch

from src.algorithms.model import RawSequence, build_model, loss_and_gradients
from src.algorithms.utils import batch_loss, sequence_targets
from src.operators.tokenizer import RAW_DIM
from src.utils import LOGGER


@dataclass
class ParamCheck:
    name: str
    n_checked: int
    grad_norm: float
    rel_error: float
    skipped: bool = False

    def passed(self, tol):
        return self.skipped or self.rel_error < tol


@dataclass
class GradCheckReport:
    seed: int
    loss: float
    tol: float
    params: list = field(default_factory=list)

    @property
    def passed(self):
        return all(p.passed(self.tol) for p in self.params)

    @property
    def max_rel_error(self):
        checked = [p.rel_error for p in self.params if not p.skipped]
        return max(checked) if checked else 0.0

    def lines(self):
        out = [f"seed {self.seed}: loss {self.loss:.6f}, max relative error {self.max_rel_error:.3e}"]
        for p in self.params:
            status = "skip" if p.skipped else ("ok" if p.passed(self.tol) else "FAIL")
            out.append(f"  {status:4s} {p.name:40s} n={p.n_checked:6d} |g|={p.grad_norm:.3e} rel={p.rel_error:.3e}")
        return out


def random_clip(n_objects=3, n_frames=2, seed=0, dtype=torch.float64):
    """Random clip where every object appears in every frame, in a shuffled order per frame."""
    rng = np.random.default_rng(seed)
    raw, frames, boxes, tids = [], [], [], []
    base = rng.random((n_objects, RAW_DIM))
    for t in range(n_frames):
        for k in rng.permutation(n_objects):
            raw.append(np.clip(base[k] + 0.05 * rng.standard_normal(RAW_DIM), 0.0, 1.0))
            frames.append(t)
            boxes.append(rng.uniform(0.05, 0.95, size=4))
            tids.append(int(k))
    return RawSequence(
        torch.tensor(np.array(raw), dtype=dtype),
        torch.tensor(frames, dtype=torch.long),
        torch.tensor(np.array(boxes), dtype=torch.float64),
        torch.tensor(tids, dtype=torch.long),
    )


def gradient_check(config, seed=0, n_objects=3, n_frames=2, step=1e-4, tol=1e-4, max_entries=256):
    """Compare autograd gradients with central differences for every parameter tensor."""
    model = build_model(config, seed=seed).double()
    clip = random_clip(n_objects, n_frames, seed=seed)
    batch, targets = [clip], [sequence_targets(clip)]
    loss, grads = loss_and_gradients(model, batch, targets)

    rng = np.random.default_rng(seed + 1)
    report = GradCheckReport(seed=seed, loss=loss, tol=tol)
    with torch.no_grad():
        for name, param in model.named_parameters():
            flat = param.view(-1)
            if max_entries is not None and flat.numel() > max_entries:
                entries = np.sort(rng.choice(flat.numel(), size=max_entries, replace=False))
            else:
                entries = np.arange(flat.numel())

            numeric = np.zeros(len(entries))
            for k, idx in enumerate(entries):
                original = flat[idx].item()
                flat[idx] = original + step
                plus = batch_loss(model, batch, targets).item()
                flat[idx] = original - step
                minus = batch_loss(model, batch, targets).item()
                flat[idx] = original
                numeric[k] = (plus - minus) / (2 * step)

            analytic = grads[name].reshape(-1)[entries]
            g_norm = float(np.linalg.norm(analytic))
            fd_norm = float(np.linalg.norm(numeric))
            if g_norm <= 1e-8 and fd_norm <= 1e-6:
                report.params.append(ParamCheck(name, len(entries), g_norm, 0.0, skipped=True))
                continue
            rel = float(np.linalg.norm(analytic - numeric) / max(g_norm, fd_norm))
            report.params.append(ParamCheck(name, len(entries), g_norm, rel))

    LOGGER.info(f"Gradient check seed {seed} - max relative error {report.max_rel_error:.3e}")
    return report


def run_gradient_checks(config, seeds=(0, 1, 2), **kwargs):
    return [gradient_check(config, seed=s, **kwargs) for s in seeds]
