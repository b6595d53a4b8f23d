"""Referent attention over context tokens and dropped-pronoun classification."""

import numpy as np

from . import autodiff as ad
from .errors import ValidationError


def init_recovery(params, d, n_labels):
    params.glorot("recovery.W2", (1, d))
    params.zeros("recovery.b2", ())
    params.glorot("recovery.W3", (2 * d, d))
    params.zeros("recovery.b3", (d,))
    params.glorot("recovery.W4", (d, n_labels))
    params.zeros("recovery.b4", (n_labels,))


def referent_attention(params, z_target, z_context):
    """Attention weights [n x Nc] and referents [n x d] for each target row.

    One softmax spans every context token of every context utterance.
    """
    if z_context.shape[0] == 0:
        raise ValidationError("referent attention needs at least one context token")
    w2 = params["recovery.W2"]
    logits = ad.mul_row(z_target, ad.reshape(w2, (w2.shape[1],))) @ z_context.T
    weights = ad.softmax(logits + params["recovery.b2"])
    return weights, weights @ z_context


def classify(params, h_target, referents):
    hr = ad.tanh(ad.add_row(ad.concat([h_target, referents], axis=1) @ params["recovery.W3"],
                            params["recovery.b3"]))
    return ad.softmax(ad.add_row(hr @ params["recovery.W4"], params["recovery.b4"]))


def dpr_loss(probs, gold_labels, reduction="sum"):
    gold = np.asarray(gold_labels, dtype=np.int64)
    n, n_labels = probs.shape
    if gold.shape != (n,):
        raise ValidationError(f"expected {n} gold labels, got {gold.shape}")
    if np.any(gold < 0) or np.any(gold >= n_labels):
        raise ValidationError("gold pronoun label outside the label vocabulary")
    loss = ad.nll(probs, np.arange(n), gold)
    return loss * (1.0 / n) if reduction == "mean" else loss
