"""RGB-T tracker core bindings.

Exposes the numerical kernels (matmul, softmax, layer_norm, gelu, conv2d,
soft_argmax, positional tables), the training objectives (GIoU / L1 box
losses, feature-distribution KL divergence), the evaluation metrics
(IoU, center error, precision/success curves) and an inference model
wrapper, all backed by the C++ core.
"""

from ._macft import (
    Model,
    __version__,
    box_loss,
    cle,
    conv2d,
    gelu,
    giou_loss,
    iou,
    kl_divergence,
    l1_box_loss,
    layer_norm,
    matmul,
    mean_iou,
    precision_curve,
    repair_box,
    sinusoid_pos_table,
    soft_argmax,
    softmax,
    success_curve,
)

__all__ = [
    "Model",
    "__version__",
    "box_loss",
    "cle",
    "conv2d",
    "gelu",
    "giou_loss",
    "iou",
    "kl_divergence",
    "l1_box_loss",
    "layer_norm",
    "matmul",
    "mean_iou",
    "precision_curve",
    "repair_box",
    "sinusoid_pos_table",
    "soft_argmax",
    "softmax",
    "success_curve",
]
