"""
Training losses and their gradients
===================================

Evaluates the four loss heads on random inputs, verifies each analytic
gradient against central finite differences, and combines them with the
gated total.
"""

import numpy as np

from shoreseg.losses import (
    LossWeights,
    mask_bce,
    semantic_ce,
    smooth_l1,
    softmax_cross_entropy,
    total_loss,
)


def finite_difference(fn, x, step=1e-5):
    flat = x.reshape(-1).copy()
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] += step
        up = fn(bumped.reshape(x.shape))
        bumped[i] -= 2 * step
        down = fn(bumped.reshape(x.shape))
        grad[i] = (up - down) / (2 * step)
    return grad.reshape(x.shape)


rng = np.random.default_rng(21)

# classification head: softmax cross entropy over 4 classes
logits = rng.normal(size=4)
lc, grad_c = softmax_cross_entropy(logits, label=2)
numeric = finite_difference(lambda x: softmax_cross_entropy(x, 2)[0], logits)
print(f"classification  loss {lc:.4f}  "
      f"max grad err {np.abs(grad_c - numeric).max():.2e}")

# box head: smooth L1 over 4 coordinates
pred_box = rng.normal(size=4) * 3
true_box = pred_box + rng.uniform(-0.5, 0.5, size=4)  # stay off the kink
lb, grad_b = smooth_l1(pred_box, true_box)
numeric = finite_difference(lambda x: smooth_l1(x, true_box)[0], pred_box)
print(f"box             loss {lb:.4f}  "
      f"max grad err {np.abs(grad_b - numeric).max():.2e}")

# mask head: per-pixel binary cross entropy
probs = rng.uniform(0.1, 0.9, size=(8, 8))
target = rng.random((8, 8)) < 0.5
lm, grad_m = mask_bce(probs, target)
numeric = finite_difference(lambda x: mask_bce(x, target)[0], probs)
print(f"mask            loss {lm:.4f}  "
      f"max grad err {np.abs(grad_m - numeric).max():.2e}")

# semantic head: dense cross entropy with an ignored pixel (id 255)
sem_logits = rng.normal(size=(4, 4, 3))
sem_truth = rng.integers(0, 3, size=(4, 4)).astype(np.uint8)
sem_truth[0, 0] = 255
ls, grad_s = semantic_ce(sem_logits, sem_truth)
numeric = finite_difference(lambda x: semantic_ce(x, sem_truth)[0], sem_logits)
print(f"semantic        loss {ls:.4f}  "
      f"max grad err {np.abs(grad_s - numeric).max():.2e}")

# the gated total: lambda_s = 0 silences the semantic branch
print()
full = total_loss(lc, lb, lm, ls, LossWeights(lambda1=1.0, lambda_s=1.0))
gated = total_loss(lc, lb, lm, ls, LossWeights(lambda1=1.0, lambda_s=0.0))
print("total with semantic branch:", round(full.total, 4))
print("total without:             ", round(gated.total, 4))
