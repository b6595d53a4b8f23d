"""Central finite-difference checks of analytic gradients."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .trainer import joint_loss, param_groups

DEFAULT_EPS = 1e-4
DEFAULT_TOL = 1e-3
# gradients below this magnitude are compared in absolute terms
ABS_FLOOR = 1e-6
# smallest step tried when a probe crosses a relu kink
MIN_EPS = 1e-8


def relative_error(analytic, numeric, floor=ABS_FLOOR):
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def _same_pattern(a, b):
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def numeric_gradient(loss_fn, tensor, indices, eps=DEFAULT_EPS):
    """Central differences of ``loss_fn()`` w.r.t. ``tensor`` at flat ``indices``.

    If a probe at ``+-eps`` flips some relu on or off, the difference would
    straddle a kink; the step for that entry is shrunk tenfold (down to
    ``MIN_EPS``) until both probes keep the unperturbed activity pattern.
    """
    flat = tensor.data.reshape(-1)
    out = np.empty(len(indices))
    with ad.no_grad():
        with ad.record_kinks() as base:
            loss_fn()
        for n, i in enumerate(indices):
            saved = flat[i]
            step = eps
            while True:
                flat[i] = saved + step
                with ad.record_kinks() as up:
                    plus = loss_fn().item()
                flat[i] = saved - step
                with ad.record_kinks() as down:
                    minus = loss_fn().item()
                flat[i] = saved
                if step <= MIN_EPS or (_same_pattern(base, up) and _same_pattern(base, down)):
                    break
                step /= 10
            out[n] = (plus - minus) / (2 * step)
    return out


def check_gradients(loss_fn, tensors, eps=DEFAULT_EPS, indices=None):
    """Max relative error per named tensor between backward() and central differences.

    ``tensors`` maps names to leaf tensors with ``requires_grad``; ``indices``
    optionally restricts the flat entries checked per name.
    """
    for t in tensors.values():
        t.zero_grad()
    ad.backward(loss_fn())
    errors = {}
    for name, t in tensors.items():
        idx = np.arange(t.size) if indices is None or name not in indices else indices[name]
        if len(idx) == 0:
            continue
        analytic = t.grad.reshape(-1)[idx]
        numeric = numeric_gradient(loss_fn, t, idx, eps)
        errors[name] = float(relative_error(analytic, numeric).max())
    return errors


@dataclass
class GradcheckReport:
    group_errors: dict
    param_errors: dict
    tolerance: float

    @property
    def max_error(self):
        return max(self.group_errors.values())

    @property
    def passed(self):
        return self.max_error <= self.tolerance

    def lines(self):
        return [f"{g}: max_rel_err={e:.3e} {'ok' if e <= self.tolerance else 'FAIL'}"
                for g, e in self.group_errors.items()]


def gradcheck_model(model, preps, eps=DEFAULT_EPS, tol=DEFAULT_TOL):
    """Finite-difference check of the joint loss over every parameter group.

    Runs in evaluation mode (no dropout) with teacher-forced arcs.  Only the
    embedding rows used by ``preps`` are perturbed; the other rows get no
    gradient by construction.
    """
    def loss_fn():
        total = None
        for prep in preps:
            loss, _ = joint_loss(model, prep, training=False)
            total = loss if total is None else total + loss
        return total

    used = np.unique(np.concatenate([p.word_ids for p in preps]))
    d_emb = model.params["encoder.embedding"].shape[1]
    emb_idx = (used[:, None] * d_emb + np.arange(d_emb)[None, :]).reshape(-1)
    tensors = dict(model.params.items())
    errors = check_gradients(loss_fn, tensors, eps, {"encoder.embedding": emb_idx})
    groups = {name: max(errors[p] for p in paths)
              for name, paths in param_groups(model.params).items()}
    return GradcheckReport(groups, errors, tol)
