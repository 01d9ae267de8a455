"""Central finite-difference gradient checks for any scalar loss."""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import torch

from jrrelp.models.embeddings import ParamView

logger = logging.getLogger(__name__)


@dataclass
class GradMismatch:
    name: str
    index: tuple[int, ...]
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradcheckReport:
    checked: int = 0
    max_rel_error: float = 0.0
    mismatches: list[GradMismatch] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.mismatches

    def summary(self, limit: int = 5) -> str:
        lines = [f"{self.checked} entries checked, max relative error {self.max_rel_error:.3e}"]
        for m in self.mismatches[:limit]:
            lines.append(
                f"  {m.name}{list(m.index)}: analytic={m.analytic:.6e} numeric={m.numeric:.6e} "
                f"rel={m.rel_error:.3e}"
            )
        return "\n".join(lines)


def check_gradients(
    loss_fn: Callable[[], torch.Tensor],
    params: list[ParamView],
    h: float = 1e-4,
    tolerance: float = 1e-4,
    max_entries: Optional[int] = None,
    seed: int = 0,
) -> GradcheckReport:
    """
    Compare backprop gradients with central differences.

    ``loss_fn`` must be deterministic (eval mode) and is called
    ``2 * entries + 1`` times. Relative error is
    ``|g - fd| / max(1, |g|)``. With ``max_entries`` only a seeded sample of
    entries per tensor is perturbed.
    """
    for view in params:
        view.value.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {
        view.name: (view.value.grad.detach().clone() if view.value.grad is not None else torch.zeros_like(view.value))
        for view in params
    }

    rng = np.random.default_rng(seed)
    report = GradcheckReport()
    with torch.no_grad():
        for view in params:
            tensor = view.value
            flat_count = tensor.numel()
            if flat_count == 0:
                continue
            indices = np.arange(flat_count)
            if max_entries is not None and flat_count > max_entries:
                indices = np.sort(rng.choice(flat_count, size=max_entries, replace=False))
            flat = tensor.view(-1)
            grad_flat = analytic[view.name].view(-1)
            for i in indices.tolist():
                original = flat[i].item()
                flat[i] = original + h
                plus = float(loss_fn())
                flat[i] = original - h
                minus = float(loss_fn())
                flat[i] = original
                numeric = (plus - minus) / (2.0 * h)
                g = float(grad_flat[i])
                rel_error = abs(g - numeric) / max(1.0, abs(g))
                report.checked += 1
                report.max_rel_error = max(report.max_rel_error, rel_error)
                if rel_error >= tolerance:
                    report.mismatches.append(
                        GradMismatch(
                            name=view.name,
                            index=tuple(int(k) for k in np.unravel_index(i, tuple(tensor.shape))),
                            analytic=g,
                            numeric=numeric,
                            rel_error=rel_error,
                        )
                    )
    logger.debug(report.summary())
    return report
