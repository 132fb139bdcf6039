"""Central finite-difference check of analytic gradients."""
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from . import functional
from .tensor import Tensor, backward


@dataclass
class GradCheckReport:
    max_relative_error: float
    per_parameter_errors: Dict[str, float]
    passed: bool
    tolerance: float
    checked: int = 0
    skipped_kinks: int = 0
    failure: Optional[str] = None
    worst: Dict[str, tuple] = field(default_factory=dict)


def _evaluate(build_loss):
    functional._kink_log = []
    try:
        loss = build_loss()
        pattern = tuple(functional._kink_log)
    finally:
        functional._kink_log = None
    return loss, pattern


def relative_error(a, n):
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


# central stencils as (offset in steps, weight) for the differences
# f(x + k*h) - f(x - k*h); pairing keeps exact zeros exact
STENCILS = {
    2: ((1, 1 / 2),),
    4: ((1, 8 / 12), (2, -1 / 12)),
}


def grad_check(build_loss: Callable[[], Tensor], params: Dict[str, Tensor], tolerance=1e-5,
               step=1e-4, max_entries=None, rng=None, grad_hook=None, order=4) -> GradCheckReport:
    """Compare backprop gradients of ``build_loss()`` against central differences.

    ``build_loss`` must rebuild the graph from ``params`` on every call and be
    deterministic. Parameters should be float64. ``max_entries`` caps how
    many coordinates per parameter are probed (sampled with ``rng``).

    ``order`` picks the central stencil: 2 is the classic (f(x+h) - f(x-h)) / 2h,
    4 the five-point rule. The second-order rule's h^2 truncation term is
    about 1e-9 at h = 1e-4, which alone exceeds a 1e-5 relative tolerance on
    any entry whose true gradient is below 1e-4; the fourth-order rule does
    not have that problem at the same step.

    Probes where any stencil point changes the ReLU/max pattern sit on a kink
    where no derivative exists; they are skipped and counted. ``grad_hook``
    may rewrite the analytic gradients before comparison (failure injection).
    """
    if order not in STENCILS:
        raise ValueError(f"order must be one of {sorted(STENCILS)}")
    stencil = STENCILS[order]
    rng = rng if rng is not None else np.random.default_rng(0)
    for p in params.values():
        p.zero_grad()
    loss, base_pattern = _evaluate(build_loss)
    backward(loss)
    analytic = {name: p.grad.copy() for name, p in params.items()}
    if grad_hook is not None:
        analytic = grad_hook(analytic)

    per_param, worst = {}, {}
    checked = skipped = 0
    for name, p in params.items():
        g = analytic[name]
        if not np.all(np.isfinite(g)):
            return GradCheckReport(float("inf"), {name: float("inf")}, False, tolerance,
                                   failure=f"non-finite gradient in {name}")
        flat = p.data.reshape(-1)
        entries = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            entries = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        err = 0.0
        for k in entries:
            orig = flat[k]
            numeric, kink = 0.0, False
            for off, wt in stencil:
                flat[k] = orig + off * step
                lp, pat_p = _evaluate(build_loss)
                flat[k] = orig - off * step
                lm, pat_m = _evaluate(build_loss)
                kink |= pat_p != base_pattern or pat_m != base_pattern
                numeric += wt * (lp.item() - lm.item())
            flat[k] = orig
            if kink:
                skipped += 1
                continue
            numeric /= step
            if not np.isfinite(numeric):
                return GradCheckReport(float("inf"), {name: float("inf")}, False, tolerance,
                                       failure=f"non-finite loss probing {name}")
            e = relative_error(g.reshape(-1)[k], numeric)
            checked += 1
            if e > err:
                err = e
                worst[name] = (int(k), float(g.reshape(-1)[k]), float(numeric))
        per_param[name] = err
    max_err = max(per_param.values(), default=0.0)
    return GradCheckReport(max_err, per_param, max_err < tolerance, tolerance,
                           checked=checked, skipped_kinks=skipped, worst=worst)
