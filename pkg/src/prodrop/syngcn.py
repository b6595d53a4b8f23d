"""Gated directed graph convolution over each utterance's dependency tree."""

import enum

import numpy as np

from . import autodiff as ad
from .corpus import chain_fallback_dependencies
from .errors import ValidationError


class SynEdgeType(enum.Enum):
    FORWARD = "forward"     # head -> dependent
    BACKWARD = "backward"   # dependent -> head
    SELF_LOOP = "self"


EDGE_TYPES = tuple(SynEdgeType)


def build_syntactic_graph(utterance, exclude_labels=()):
    """Edges ``(src, dst, type)`` over 0-based token positions.

    Each dependency contributes a forward and a backward edge; every token has
    one self loop.  Root attachments and excluded dependency labels add no
    forward/backward edge.
    """
    utterance = chain_fallback_dependencies(utterance)
    n = len(utterance.tokens)
    excluded = set(exclude_labels)
    edges = []
    for dep, tok in enumerate(utterance.tokens):
        head = tok.dep_head
        if not 0 <= head <= n or head == dep + 1:
            raise ValidationError(f"token {dep + 1}: dependency head {head} out of range")
        if head == 0 or tok.dep_label in excluded:
            continue
        edges.append((head - 1, dep, SynEdgeType.FORWARD))
        edges.append((dep, head - 1, SynEdgeType.BACKWARD))
    edges.extend((i, i, SynEdgeType.SELF_LOOP) for i in range(n))
    return edges


def adjacency(edge_lists, n_tokens):
    """Stack per-utterance edge lists into one [N x N] matrix per edge type.

    ``edge_lists`` pairs each utterance's row offset with its edges;
    ``A[dst, src]`` counts edges so that ``A @ messages`` aggregates sources.
    """
    mats = {e: np.zeros((n_tokens, n_tokens)) for e in EDGE_TYPES}
    for offset, edges in edge_lists:
        for src, dst, etype in edges:
            mats[etype][offset + dst, offset + src] += 1.0
    return mats


def init_syngcn(params, d, n_layers):
    for k in range(n_layers):
        for etype in EDGE_TYPES:
            prefix = f"syngcn.{k}.{etype.value}"
            params.glorot(f"{prefix}.W", (d, d))
            params.zeros(f"{prefix}.b", (d,))
            params.glorot(f"{prefix}.gate_w", (d, 1))
            params.zeros(f"{prefix}.gate_b", ())


def syngcn_layer(params, states, adj, k):
    out = None
    for etype in EDGE_TYPES:
        prefix = f"syngcn.{k}.{etype.value}"
        message = ad.add_row(states @ params[f"{prefix}.W"], params[f"{prefix}.b"])
        gate = ad.sigmoid(states @ params[f"{prefix}.gate_w"] + params[f"{prefix}.gate_b"])
        term = ad.Tensor(adj[etype]) @ ad.mul_col(message, gate)
        out = term if out is None else out + term
    return ad.relu(out)


def encode_syntax(params, states, adj, n_layers, dropout=0.0, training=False, rng=None):
    for k in range(n_layers):
        states = syngcn_layer(params, states, adj, k)
        states = ad.dropout(states, dropout, training, rng)
    return states
