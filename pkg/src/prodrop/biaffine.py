"""Biaffine arc and relation scoring between utterances.

Utterance states form a [(m+1) x d] matrix whose row 0 is a learned virtual
root and whose row i is the mean of utterance i's token states.  Arc scores
are laid out head-major: ``scores[i, j-1]`` scores head i for dependent j.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ValidationError

MLPS = ("arc_head", "arc_dep", "rel_head", "rel_dep")


@dataclass
class DiscourseGraph:
    arc_probs: np.ndarray        # [(m+1) x m], column j-1 is P(head | dependent j)
    chosen_heads: list
    rel_probs: np.ndarray        # [m x k] at the chosen heads
    relations: list              # relation indices, 0 (Root) iff head is 0


def init_biaffine(params, d, d_arc, d_rel, n_relations):
    params.uniform("utterance.root", (d,), 0.1)
    for name in MLPS:
        out = d_arc if name.startswith("arc") else d_rel
        params.glorot(f"biaffine.{name}.W", (d, out))
        params.zeros(f"biaffine.{name}.b", (out,))
    params.glorot("biaffine.U_arc", (d_arc, d_arc))
    params.zeros("biaffine.u_arc", (d_arc,))
    params.glorot("biaffine.U_rel", (n_relations, d_rel, d_rel))
    params.glorot("biaffine.W_rel_head", (d_rel, n_relations))
    params.glorot("biaffine.W_rel_dep", (d_rel, n_relations))
    params.zeros("biaffine.b_rel", (n_relations,))


def averaging_matrix(lengths):
    """Constant [m x N] matrix mapping packed token rows to per-utterance means."""
    lengths = np.asarray(lengths)
    mat = np.zeros((len(lengths), int(lengths.sum())))
    start = 0
    for i, n in enumerate(lengths):
        mat[i, start:start + n] = 1.0 / n
        start += n
    return mat


def utterance_states(params, token_states, avg):
    root = params["utterance.root"]
    return ad.concat([ad.reshape(root, (1, root.shape[0])), ad.Tensor(avg) @ token_states],
                     axis=0)


def mlp(params, name, x):
    return ad.relu(ad.add_row(x @ params[f"biaffine.{name}.W"], params[f"biaffine.{name}.b"]))


def score_arcs(params, utt_states):
    """Raw scores ``r_i^T U r_j + r_i^T u`` for heads i in [0, m], dependents j in [1, m]."""
    m = utt_states.shape[0] - 1
    heads = mlp(params, "arc_head", utt_states)
    deps = mlp(params, "arc_dep", ad.gather_rows(utt_states, np.arange(1, m + 1)))
    bilinear = heads @ params["biaffine.U_arc"] @ deps.T
    u = params["biaffine.u_arc"]
    prior = (heads @ ad.reshape(u, (u.shape[0], 1))) @ ad.Tensor(np.ones((1, m)))
    return bilinear + prior


def arc_mask(m):
    """True where head i may govern dependent j (i < j)."""
    return np.arange(m + 1)[:, None] < np.arange(1, m + 1)[None, :]


def mask_and_normalize(scores):
    m = scores.shape[1]
    return ad.transpose(ad.softmax(ad.transpose(scores), arc_mask(m).T))


def _reduce(loss, count, reduction):
    if reduction == "mean" and count > 0:
        return loss * (1.0 / count)
    return loss


def arc_loss(arc_probs, gold_heads, reduction="sum"):
    gold_heads = np.asarray(gold_heads, dtype=np.int64)
    m = arc_probs.shape[1]
    if gold_heads.shape != (m,) or np.any(gold_heads >= np.arange(1, m + 1)) or np.any(gold_heads < 0):
        raise ValidationError(f"gold heads {gold_heads.tolist()} violate precedence")
    return _reduce(ad.nll(arc_probs, gold_heads, np.arange(m)), m, reduction)


def relation_states(params, utt_states):
    return mlp(params, "rel_head", utt_states), mlp(params, "rel_dep", utt_states)


def score_relation_pairs(params, utt_states, heads, deps, states=None):
    """Relation scores [n x k] for arcs ``heads[a] -> deps[a]``."""
    rel_head, rel_dep = states if states is not None else relation_states(params, utt_states)
    h = ad.gather_rows(rel_head, heads)
    d = ad.gather_rows(rel_dep, deps)
    scores = (ad.bilinear(h, params["biaffine.U_rel"], d)
              + h @ params["biaffine.W_rel_head"] + d @ params["biaffine.W_rel_dep"])
    return ad.add_row(scores, params["biaffine.b_rel"])


def score_relations(params, utt_states, head_index, dep_index):
    """P_rel over all k relations for the single arc head -> dep."""
    if not (head_index < dep_index or head_index == 0):
        raise ValidationError(f"head {head_index} does not precede dependent {dep_index}")
    scores = score_relation_pairs(params, utt_states, [head_index], [dep_index])
    return ad.reshape(ad.softmax(scores), (scores.shape[1],))


def rel_loss(rel_probs, gold_relations, gold_heads, reduction="sum"):
    """Relation cross-entropy over dependents whose gold head is not the root."""
    gold_heads = np.asarray(gold_heads)
    scored = np.flatnonzero(gold_heads != 0)
    if scored.size == 0:
        return ad.Tensor(0.0)
    rels = np.asarray(gold_relations, dtype=np.int64)[scored]
    return _reduce(ad.nll(rel_probs, scored, rels), scored.size, reduction)


def decode_heads(arc_probs):
    """Greedy head choice per dependent; ties go to the smaller index."""
    m = arc_probs.shape[1]
    return [int(np.argmax(arc_probs[:j, j - 1])) for j in range(1, m + 1)]


def decode(arc_probs, rel_prob_fn, root_relation=0):
    """Build a :class:`DiscourseGraph` from arc probabilities.

    ``rel_prob_fn(heads)`` returns the [m x k] relation distributions at the
    chosen heads.  Root-attached dependents get the Root relation; others
    take the best non-Root relation.
    """
    arc_probs = np.asarray(arc_probs)
    heads = decode_heads(arc_probs)
    rel_probs = np.asarray(rel_prob_fn(heads))
    relations = []
    for j, head in enumerate(heads):
        if head == 0:
            relations.append(root_relation)
        else:
            scores = rel_probs[j].copy()
            scores[root_relation] = -np.inf
            relations.append(int(np.argmax(scores)))
    return DiscourseGraph(arc_probs, heads, rel_probs, relations)
