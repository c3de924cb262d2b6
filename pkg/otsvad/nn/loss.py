import torch
from torch import Tensor

from otsvad.nn.ops import ShapeError, check_finite

PROB_EPS = 1e-7


def bce_loss(pred: Tensor, label: Tensor, mask: Tensor | None = None, eps: float = PROB_EPS) -> Tensor:
    """Mean binary cross entropy over all entries (or the entries where ``mask`` is set).

    ``pred`` is clamped to ``[eps, 1 - eps]`` before the logs.
    """
    if pred.shape != label.shape:
        msg = f"bce_loss: prediction shape {tuple(pred.shape)} != label shape {tuple(label.shape)}"
        raise ShapeError(msg)
    p = pred.clamp(eps, 1.0 - eps)
    label = label.to(p.dtype)
    losses = -(label * torch.log(p) + (1.0 - label) * torch.log1p(-p))
    if mask is None:
        return check_finite(losses.mean(), "bce_loss")
    weights = mask.to(p.dtype).expand_as(losses)
    total = weights.sum()
    if not bool(total > 0):
        msg = "bce_loss: mask selects no entries"
        raise ShapeError(msg)
    return check_finite((losses * weights).sum() / total, "bce_loss")
