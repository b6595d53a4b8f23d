"""Multi-relational GCN over the discourse graph, and token/utterance fusion.

Each arc ``head -> dep`` carries a distribution over relations.  Messages use
multiplicative composition ``r_src * h_rel`` and are weighted by that
distribution; because the message is linear in ``h_rel``, the weighted sum
over relations equals one message built from the expected relation
embedding ``P_rel @ h_rel``, which is what the layer computes.

Three direction buckets carry their own weight matrix: ``in`` (head to
dependent), ``out`` (dependent to head) and ``self`` (self loop with a
dedicated relation embedding stored as the last row of ``relgcn.rel_emb``).
"""

import numpy as np

from . import autodiff as ad
from .errors import ValidationError

BUCKETS = ("in", "out", "self")


def init_relgcn(params, d, n_relations, n_layers):
    params.glorot("relgcn.rel_emb", (n_relations + 1, d))
    for k in range(n_layers):
        for bucket in BUCKETS:
            params.glorot(f"relgcn.{k}.W_{bucket}", (d, d))
        params.glorot(f"relgcn.{k}.W_rel", (d, d))


def init_fusion(params, d):
    params.glorot("fusion.W", (2 * d, d))
    params.zeros("fusion.b", (d,))


def soft_message_weighting(dist, messages):
    """Expected message ``sum_t dist[t] * messages[t]`` for dist [k], messages [k x d]."""
    k = dist.shape[0]
    return ad.reshape(ad.reshape(dist, (1, k)) @ messages, (messages.shape[1],))


def check_distributions(dist, tol=1e-6):
    sums = np.asarray(dist).sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > tol):
        raise ValidationError(f"arc relation distributions must sum to 1, got {sums.tolist()}")


def arc_distributions(rel_probs, heads, root_relation=0):
    """Arc distributions with root-attached arcs pinned to a one-hot Root."""
    heads = np.asarray(heads)
    rooted = heads == 0
    if not rooted.any():
        return rel_probs
    keep = np.repeat((~rooted)[:, None].astype(np.float64), rel_probs.shape[1], axis=1)
    onehot = np.zeros(rel_probs.shape)
    onehot[rooted, root_relation] = 1.0
    return ad.mul(rel_probs, ad.Tensor(keep)) + ad.Tensor(onehot)


def _scatter(targets, n_nodes):
    mat = np.zeros((n_nodes, len(targets)))
    mat[np.asarray(targets), np.arange(len(targets))] = 1.0
    return ad.Tensor(mat)


def relgcn_layer(params, states, rel_emb, heads, deps, dist, k):
    """One layer; returns the next utterance states and relation embeddings.

    ``states`` is [(m+1) x d] including the virtual root, ``dist`` is
    [n_arcs x n_relations] with rows summing to one.
    """
    check_distributions(dist.data)
    n_nodes, d = states.shape
    n_rel = rel_emb.shape[0] - 1
    self_emb = ad.reshape(ad.gather_rows(rel_emb, [n_rel]), (d,))
    out = ad.mul_row(states, self_emb) @ params[f"relgcn.{k}.W_self"]
    if len(heads):
        expected = dist @ ad.gather_rows(rel_emb, np.arange(n_rel))
        to_dep = (ad.gather_rows(states, heads) * expected) @ params[f"relgcn.{k}.W_in"]
        to_head = (ad.gather_rows(states, deps) * expected) @ params[f"relgcn.{k}.W_out"]
        out = out + _scatter(deps, n_nodes) @ to_dep + _scatter(heads, n_nodes) @ to_head
    return ad.tanh(out), rel_emb @ params[f"relgcn.{k}.W_rel"]


def encode_discourse(params, states, heads, deps, dist, n_layers,
                     dropout=0.0, training=False, rng=None):
    rel_emb = params["relgcn.rel_emb"]
    for k in range(n_layers):
        states, rel_emb = relgcn_layer(params, states, rel_emb, heads, deps, dist, k)
        states = ad.dropout(states, dropout, training, rng)
    return states


def training_graph(gold_heads, rel_probs_at_gold, root_relation=0):
    """Teacher-forced graph: gold arcs, predicted (soft) relation distributions."""
    heads = np.asarray(gold_heads, dtype=np.int64)
    deps = np.arange(1, len(heads) + 1)
    return heads, deps, arc_distributions(rel_probs_at_gold, heads, root_relation)


def fuse(params, token_states, utt_states, token_utterance_rows):
    """``z = W [h ; r_utt] + b`` for every token row."""
    r = ad.gather_rows(utt_states, token_utterance_rows)
    return ad.add_row(ad.concat([token_states, r], axis=1) @ params["fusion.W"],
                      params["fusion.b"])
