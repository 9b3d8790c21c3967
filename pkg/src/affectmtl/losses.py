"""Loss terms for heterogeneous multi-task training, with analytic gradients.

Every gradient here is taken with respect to the model's post-activation
outputs (probabilities, VA values); chaining through the output nonlinearities
and trunk is the model's job. ``*_grad`` variants return (value, gradient).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NumericalError
from .relatedness import RelatednessTable

DEFAULT_EPS = 1e-7
CCC_EPS = 1e-8


@dataclass
class LossWeights:
    """Per-task lambdas and coupling-loss weights; unknown names default to 1."""

    lambda_per_task: dict = field(default_factory=dict)
    coupling_weights: dict = field(default_factory=dict)
    epsilon: float = DEFAULT_EPS

    def __post_init__(self):
        for name, w in {**self.lambda_per_task, **self.coupling_weights}.items():
            if w < 0:
                raise DataError(f"negative loss weight for {name!r}")
        if not 0.0 < self.epsilon <= 1e-3:
            raise DataError(f"epsilon {self.epsilon} outside (0, 1e-3]")

    def task(self, name: str) -> float:
        return float(self.lambda_per_task.get(name, 1.0))

    def coupling(self, name: str) -> float:
        return float(self.coupling_weights.get(name, 1.0))


@dataclass
class SoftTargets:
    """Soft targets: per-binary-label marginals or a categorical distribution."""

    q_binary: np.ndarray | None = None
    q_categorical: np.ndarray | None = None

    def __post_init__(self):
        if self.q_binary is not None:
            self.q_binary = np.asarray(self.q_binary, dtype=float)
        if self.q_categorical is not None:
            self.q_categorical = np.asarray(self.q_categorical, dtype=float)
            if abs(self.q_categorical.sum() - 1.0) > 1e-9:
                raise DataError("categorical soft target does not sum to 1")


@dataclass
class LossReport:
    """Per-task and per-coupling loss values plus the weighted total."""

    task_losses: dict
    coupling_losses: dict
    total: float

    @staticmethod
    def csv_header(task_names, coupling_names):
        return list(task_names) + list(coupling_names) + ["total"]

    def csv_row(self, task_names, coupling_names):
        vals = [self.task_losses.get(t, 0.0) for t in task_names]
        vals += [self.coupling_losses.get(c, 0.0) for c in coupling_names]
        vals.append(self.total)
        return [repr(float(v)) for v in vals]


# -- concordance correlation --------------------------------------------


def ccc(y, y_hat, eps: float = CCC_EPS) -> float:
    """Concordance correlation coefficient with population moments.

    2*cov(y, y_hat) / (var(y) + var(y_hat) + (mean(y) - mean(y_hat))^2), with
    the denominator clamped below at ``eps`` so degenerate inputs stay finite.
    """
    return _ccc(np.asarray(y, float), np.asarray(y_hat, float), eps)[0]


def _ccc(y, yh, eps):
    if y.shape != yh.shape or y.ndim != 1:
        raise DataError("ccc inputs must be 1-D sequences of equal length")
    n = y.size
    if n < 2:
        raise DataError("ccc needs at least 2 points")
    my, mh = y.mean(), yh.mean()
    cov = ((y - my) * (yh - mh)).mean()
    denom = max(y.var() + yh.var() + (my - mh) ** 2, eps)
    return 2.0 * cov / denom, (n, my, mh, cov, denom)


def ccc_grad(y, y_hat, eps: float = CCC_EPS):
    """CCC value and its gradient with respect to ``y_hat``."""
    y = np.asarray(y, float)
    yh = np.asarray(y_hat, float)
    val, (n, my, mh, cov, denom) = _ccc(y, yh, eps)
    dcov = (y - my) / n
    if denom <= eps:  # clamp active: denominator locally constant
        ddenom = np.zeros_like(yh)
    else:
        ddenom = (2.0 * (yh - mh) - 2.0 * (my - mh)) / n
    grad = (2.0 * dcov * denom - 2.0 * cov * ddenom) / denom**2
    return val, grad


def ccc_loss(y_va, y_hat_va, eps: float = CCC_EPS) -> float:
    """1 - mean of per-dimension CCC over a batch of (valence, arousal) pairs."""
    return ccc_loss_grad(y_va, y_hat_va, eps)[0]


def ccc_loss_grad(y_va, y_hat_va, eps: float = CCC_EPS):
    """Loss value and gradient with respect to the predicted VA matrix."""
    y = np.asarray(y_va, float)
    yh = np.asarray(y_hat_va, float)
    if y.ndim != 2 or y.shape[1] != 2 or y.shape != yh.shape:
        raise DataError("ccc_loss expects (n, 2) truth and prediction arrays")
    cv, gv = ccc_grad(y[:, 0], yh[:, 0], eps)
    ca, ga = ccc_grad(y[:, 1], yh[:, 1], eps)
    grad = np.stack([-gv / 2.0, -ga / 2.0], axis=1)
    return 1.0 - (cv + ca) / 2.0, grad


# -- cross-entropy family ------------------------------------------------


def masked_bce(p_au, y_au, weights=None, eps: float = DEFAULT_EPS) -> float:
    """Binary cross entropy over annotated AUs, normalized by total mask weight."""
    return masked_bce_grad(p_au, y_au, weights, eps)[0]


def masked_bce_grad(p_au, y_au, weights=None, eps: float = DEFAULT_EPS):
    p = np.asarray(p_au, float)
    y = np.asarray(y_au, float)
    mask = ~np.isnan(y)
    if not mask.any():
        raise DataError("masked_bce: no annotated AUs")
    if weights is None:
        w = mask.astype(float)
    else:
        w = np.where(mask, np.nan_to_num(np.asarray(weights, float), nan=0.0), 0.0)
    pc = np.clip(p, eps, 1.0 - eps)
    ys = np.where(mask, y, 0.0)
    terms = ys * np.log(pc) + (1.0 - ys) * np.log(1.0 - pc)
    wsum = w.sum()
    val = -float((w * np.where(mask, terms, 0.0)).sum() / wsum)
    grad = np.where(
        mask & (p == pc), -w * (ys / pc - (1.0 - ys) / (1.0 - pc)) / wsum, 0.0
    )
    return val, grad


def softmax_ce(p, y, eps: float = DEFAULT_EPS) -> float:
    """Cross entropy of a probability vector against a hard or soft label."""
    return softmax_ce_grad(p, y, eps)[0]


def softmax_ce_grad(p, y, eps: float = DEFAULT_EPS):
    p = np.asarray(p, float)
    if abs(p.sum() - 1.0) > 1e-6:
        raise DataError("softmax_ce: prediction does not sum to 1")
    pc = np.clip(p, eps, None)
    grad = np.zeros_like(p)
    if np.isscalar(y) or np.ndim(y) == 0:
        y = int(y)
        if not 0 <= y < p.size:
            raise DataError(f"softmax_ce: label index {y} out of range")
        val = -float(np.log(pc[y]))
        if p[y] == pc[y]:
            grad[y] = -1.0 / pc[y]
    else:
        q = np.asarray(y, float)
        if q.shape != p.shape:
            raise DataError("softmax_ce: soft label shape mismatch")
        if abs(q.sum() - 1.0) > 1e-6:
            raise DataError("softmax_ce: soft label does not sum to 1")
        val = -float(q @ np.log(pc))
        grad = np.where(p == pc, -q / pc, 0.0)
    return val, grad


# -- distribution matching ----------------------------------------------


def dm_targets(p_cat, table: RelatednessTable, reweight: bool = False) -> SoftTargets:
    """Soft binary-label targets as a relatedness mixture over class predictions."""
    p = np.asarray(p_cat, float)
    if p.size != len(table.class_names):
        raise DataError(
            f"dm_targets: {p.size} classes vs table with {len(table.class_names)}"
        )
    r = table.weight_matrix(reweight)
    return SoftTargets(q_binary=p @ r)


def dm_loss(p_bin, q: SoftTargets, eps: float = DEFAULT_EPS) -> float:
    """Cross entropy with soft targets: sum_i -p_i log q_i, q clamped at eps."""
    return dm_loss_grad(p_bin, q, eps)[0]


def dm_loss_grad(p_bin, q: SoftTargets, eps: float = DEFAULT_EPS):
    """Value plus gradients with respect to predictions and targets."""
    p = np.asarray(p_bin, float)
    qb = q.q_binary
    if qb is None or qb.shape != p.shape:
        raise DataError("dm_loss: prediction/target length mismatch")
    qc = np.clip(qb, eps, None)
    logq = np.log(qc)
    val = -float(np.sum(np.where(p == 0.0, 0.0, p * logq)))
    grad_p = -logq
    grad_q = np.where(qb == qc, -p / qc, 0.0)
    return val, grad_p, grad_q


def sca_loss(p_emo, q_emo, eps: float = DEFAULT_EPS) -> float:
    """Soft co-annotation loss: cross entropy of predictions against the soft label."""
    return sca_loss_grad(p_emo, q_emo, eps)[0]


def sca_loss_grad(p_emo, q_emo, eps: float = DEFAULT_EPS):
    """Value and gradient with respect to the predicted emotion distribution."""
    p = np.asarray(p_emo, float)
    q = q_emo.q if hasattr(q_emo, "q") else np.asarray(q_emo, float)
    if p.shape != q.shape:
        raise DataError("sca_loss: dimensionality mismatch")
    logq = np.log(np.clip(q, eps, None))
    return -float(p @ logq), -logq


# -- aggregation ---------------------------------------------------------


def total_mt_loss(
    task_losses: dict, coupling_losses: dict, weights: LossWeights
) -> LossReport:
    """Weighted sum of all components; missing tasks simply contribute nothing."""
    total = 0.0
    for name, v in task_losses.items():
        total += weights.task(name) * v
    for name, v in coupling_losses.items():
        total += weights.coupling(name) * v
    if not np.isfinite(total):
        raise NumericalError("non-finite total loss")
    return LossReport(dict(task_losses), dict(coupling_losses), float(total))
