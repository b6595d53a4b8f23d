"""Word embeddings followed by a bidirectional GRU.

Utterances of a snippet are encoded together: time step t of the forward
pass reads token t of every utterance at once, and the backward pass does
the same on each utterance reversed.  Utterances shorter than the current
step keep their previous hidden state through a constant 0/1 mask, so the
result equals running every utterance separately.
"""

import numpy as np

from . import autodiff as ad
from .corpus import Vocab
from .errors import ParseError, ValidationError

UNK = "<unk>"
GATES = ("z", "r", "n")


def build_word_vocab(snippets):
    vocab = Vocab([UNK])
    for snippet in snippets:
        for utt in snippet.utterances:
            for tok in utt.tokens:
                vocab.add(tok.surface)
    return vocab


def token_ids(word_vocab, surfaces):
    unk = word_vocab.index(UNK)
    return np.array([word_vocab.get(s, unk) for s in surfaces], dtype=np.int64)


def init_encoder(params, n_words, d_emb, d_hidden):
    params.uniform("encoder.embedding", (n_words, d_emb), 0.1)
    for direction in ("fwd", "bwd"):
        for gate in GATES:
            params.glorot(f"encoder.{direction}.W_{gate}", (d_emb, d_hidden))
            params.glorot(f"encoder.{direction}.U_{gate}", (d_hidden, d_hidden))
            params.zeros(f"encoder.{direction}.b_{gate}", (d_hidden,))


def load_embeddings(path, word_vocab, params):
    """Overwrite embedding rows from a ``surface v1 ... vd`` text file.

    Returns the number of rows replaced; surfaces absent from the vocabulary
    are skipped.
    """
    table = params["encoder.embedding"]
    dim = table.shape[1]
    replaced = 0
    with open(path, encoding="utf-8") as fh:
        for number, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if not line.strip():
                continue
            surface, values = parts[0], parts[1:]
            if len(values) != dim:
                raise ValidationError(
                    f"line {number}: embedding has {len(values)} values, model expects {dim}")
            try:
                vector = np.array([float(v) for v in values])
            except ValueError:
                raise ParseError("embedding values must be numbers", number) from None
            index = word_vocab.get(surface)
            if index is not None:
                table.data[index] = vector
                replaced += 1
    return replaced


def embed(params, ids):
    return ad.gather_rows(params["encoder.embedding"], ids)


def _run_direction(params, prefix, x, steps, valid):
    """Run one GRU direction; row ``t*B + b`` of the result is sequence b at step t."""
    batch = steps.shape[1]
    d_hidden = params[f"{prefix}.U_z"].shape[0]
    proj = {g: x @ params[f"{prefix}.W_{g}"] for g in GATES}
    h = ad.Tensor(np.zeros((batch, d_hidden)))
    outputs = []
    for t in range(steps.shape[0]):
        rows = steps[t]
        z = ad.sigmoid(ad.add_row(ad.gather_rows(proj["z"], rows) + h @ params[f"{prefix}.U_z"],
                                  params[f"{prefix}.b_z"]))
        r = ad.sigmoid(ad.add_row(ad.gather_rows(proj["r"], rows) + h @ params[f"{prefix}.U_r"],
                                  params[f"{prefix}.b_r"]))
        n = ad.tanh(ad.add_row(ad.gather_rows(proj["n"], rows) + (r * h) @ params[f"{prefix}.U_n"],
                               params[f"{prefix}.b_n"]))
        h_new = n + z * (h - n)
        if valid[t].all():
            h = h_new
        else:
            keep = ad.Tensor(np.repeat(valid[t][:, None].astype(np.float64), d_hidden, axis=1))
            h = h + keep * (h_new - h)
        outputs.append(h)
    return ad.concat(outputs, axis=0)


def bigru(params, x, lengths, prefixes=("encoder.fwd", "encoder.bwd")):
    """Encode the sequences packed row-wise in ``x`` with lengths ``lengths``.

    Returns a [sum(lengths) x 2*d_hidden] tensor whose row for each token is
    the concatenation of its forward and backward hidden states.
    """
    lengths = np.asarray(lengths, dtype=np.int64)
    if lengths.size == 0 or np.any(lengths < 1):
        raise ValidationError("every sequence needs at least one token")
    batch, longest = len(lengths), int(lengths.max())
    offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    t = np.arange(longest)[:, None]
    valid = t < lengths[None, :]
    fwd_steps = np.where(valid, offsets[None, :] + t, offsets[None, :])
    bwd_steps = np.where(valid, offsets[None, :] + lengths[None, :] - 1 - t, offsets[None, :])

    forward = _run_direction(params, prefixes[0], x, fwd_steps, valid)
    backward = _run_direction(params, prefixes[1], x, bwd_steps, valid)

    seq = np.repeat(np.arange(batch), lengths)
    pos = np.arange(int(lengths.sum())) - offsets[seq]
    fwd_rows = pos * batch + seq
    bwd_rows = (lengths[seq] - 1 - pos) * batch + seq
    return ad.concat([ad.gather_rows(forward, fwd_rows), ad.gather_rows(backward, bwd_rows)],
                     axis=1)


def encode_tokens(params, ids, lengths):
    return bigru(params, embed(params, ids), lengths)
