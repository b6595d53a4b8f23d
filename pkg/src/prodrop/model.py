"""The joint discourse-parsing and pronoun-recovery network."""

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .biaffine import (decode, decode_heads, averaging_matrix, init_biaffine,
                       mask_and_normalize, score_arcs, score_relation_pairs,
                       utterance_states)
from .corpus import ROOT_RELATION
from .encoder import build_word_vocab, encode_tokens, init_encoder, load_embeddings, token_ids
from .errors import ValidationError
from .recovery import classify, init_recovery, referent_attention
from .relgcn import arc_distributions, encode_discourse, fuse, init_fusion, init_relgcn
from .syngcn import adjacency, build_syntactic_graph, encode_syntax, init_syngcn


@dataclass
class PreparedSnippet:
    """Index arrays derived once from a snippet for repeated forward passes."""

    snippet: object
    word_ids: np.ndarray
    lengths: np.ndarray
    utt_rows: np.ndarray        # per token, its row in the utterance-state matrix (1..m)
    adj: dict
    avg: np.ndarray
    gold_heads: np.ndarray
    gold_rels: np.ndarray
    target_rows: np.ndarray
    context_rows: np.ndarray
    gold_labels: np.ndarray

    @property
    def m(self):
        return len(self.lengths)


@dataclass
class ForwardOutput:
    arc_probs: ad.Tensor
    heads: np.ndarray
    rel_probs: ad.Tensor
    dp_probs: ad.Tensor
    attention: ad.Tensor
    token_states: ad.Tensor
    fused: ad.Tensor


class JointModel:
    """Encoder, SynGCN, biaffine parser, RelGCN + fusion and recovery layer.

    Parameter paths are grouped by prefix: ``encoder.``, ``syngcn.``,
    ``utterance.root``, ``biaffine.arc_*``/``biaffine.*_arc``,
    ``biaffine.rel_*``/``biaffine.*_rel*``, ``relgcn.``, ``fusion.``,
    ``recovery.``.
    """

    def __init__(self, word_vocab, vocabs, config):
        self.word_vocab = word_vocab
        self.vocabs = vocabs
        self.config = config
        self.params = ad.ParamStore(config.seed)
        d = config.d
        init_encoder(self.params, len(word_vocab), config.d_emb, config.d_hidden)
        init_syngcn(self.params, d, config.syngcn_layers)
        init_biaffine(self.params, d, config.d_arc, config.d_rel, len(vocabs.relations))
        init_relgcn(self.params, d, len(vocabs.relations), config.relgcn_layers)
        init_fusion(self.params, d)
        init_recovery(self.params, d, len(vocabs.pronoun_labels))
        if config.embeddings:
            load_embeddings(config.embeddings, word_vocab, self.params)

    @classmethod
    def from_corpus(cls, corpus, config):
        return cls(build_word_vocab(corpus.snippets), corpus.vocabs, config)

    @property
    def root_relation(self):
        return self.vocabs.relations.index(ROOT_RELATION)

    def prepare(self, snippet):
        utts = snippet.utterances
        lengths = np.array([len(u) for u in utts], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]])
        surfaces = [t.surface for u in utts for t in u.tokens]
        edges = [(off, build_syntactic_graph(u, self.config.exclude_dep_labels))
                 for off, u in zip(offsets, utts)]
        try:
            gold_rels = np.array([self.vocabs.relations.index(u.disc_relation) for u in utts])
            target = snippet.target
            gold_labels = np.array([self.vocabs.pronoun_labels.index(t.pronoun_label)
                                    for t in target.tokens])
        except KeyError as exc:
            raise ValidationError(f"snippet {snippet.id!r}: unknown label {exc}") from None
        t = snippet.pro_drop_index - 1
        all_rows = np.arange(int(lengths.sum()))
        target_rows = np.arange(offsets[t], offsets[t] + lengths[t])
        return PreparedSnippet(
            snippet=snippet,
            word_ids=token_ids(self.word_vocab, surfaces),
            lengths=lengths,
            utt_rows=np.repeat(np.arange(1, len(utts) + 1), lengths),
            adj=adjacency(edges, int(lengths.sum())),
            avg=averaging_matrix(lengths),
            gold_heads=np.array([u.disc_head for u in utts], dtype=np.int64),
            gold_rels=gold_rels,
            target_rows=target_rows,
            context_rows=np.setdiff1d(all_rows, target_rows),
            gold_labels=gold_labels,
        )

    def forward(self, prep, training=False, rng=None, use_gold_arcs=None):
        """Run the full network on one prepared snippet.

        With ``use_gold_arcs`` (default: ``training``) the RelGCN graph uses
        the gold heads; otherwise the greedily decoded heads.  Relation
        distributions are the predicted soft ones in both cases.
        """
        cfg, p = self.config, self.params
        if use_gold_arcs is None:
            use_gold_arcs = training
        seq = encode_tokens(p, prep.word_ids, prep.lengths)
        h = encode_syntax(p, seq, prep.adj, cfg.syngcn_layers, cfg.dropout, training, rng)
        u0 = utterance_states(p, h, prep.avg)
        arc_probs = mask_and_normalize(score_arcs(p, u0))
        heads = prep.gold_heads if use_gold_arcs else np.array(decode_heads(arc_probs.data))
        deps = np.arange(1, prep.m + 1)
        rel_probs = ad.softmax(score_relation_pairs(p, u0, heads, deps))
        if cfg.disable_relgcn:
            z = h
        else:
            dist = arc_distributions(rel_probs, heads, self.root_relation)
            r = encode_discourse(p, u0, heads, deps, dist, cfg.relgcn_layers,
                                 cfg.dropout, training, rng)
            z = fuse(p, h, r, prep.utt_rows)
        attention, referents = referent_attention(
            p, ad.gather_rows(z, prep.target_rows), ad.gather_rows(z, prep.context_rows))
        dp_probs = classify(p, ad.gather_rows(h, prep.target_rows), referents)
        return ForwardOutput(arc_probs, heads, rel_probs, dp_probs, attention, h, z)

    def predict(self, prep):
        """Return ``(DiscourseGraph, pronoun label indices)`` for a prepared snippet."""
        with ad.no_grad():
            out = self.forward(prep, training=False, use_gold_arcs=False)
        graph = decode(out.arc_probs.data, lambda heads: out.rel_probs.data, self.root_relation)
        labels = np.argmax(out.dp_probs.data, axis=1).tolist()
        return graph, labels

    def predict_snippet(self, snippet):
        """Copy of ``snippet`` with predicted heads, relations and target labels."""
        graph, labels = self.predict(self.prepare(snippet))
        utts = []
        for j, utt in enumerate(snippet.utterances):
            utt = replace(utt, disc_head=graph.chosen_heads[j],
                          disc_relation=self.vocabs.relations[graph.relations[j]])
            if j == snippet.pro_drop_index - 1:
                tokens = tuple(replace(t, pronoun_label=self.vocabs.pronoun_labels[y])
                               for t, y in zip(utt.tokens, labels))
                utt = replace(utt, tokens=tokens)
            utts.append(utt)
        return replace(snippet, utterances=tuple(utts))
