import numpy as np
import pytest

from prodrop import autodiff as ad
from prodrop.corpus import Vocab
from prodrop.encoder import (UNK, bigru, build_word_vocab, embed, encode_tokens, init_encoder,
                             load_embeddings, token_ids)
from prodrop.errors import ValidationError
from prodrop.gradcheck import check_gradients


def make_params(n_words=6, d_emb=3, d_hidden=2, seed=0):
    params = ad.ParamStore(seed)
    init_encoder(params, n_words, d_emb, d_hidden)
    return params


def gru_reference(params, prefix, x):
    """One GRU direction over a single sequence, step by step in numpy."""
    get = lambda name: params[f"{prefix}.{name}"].data
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    h = np.zeros(get("U_z").shape[0])
    out = []
    for row in x:
        z = sig(row @ get("W_z") + h @ get("U_z") + get("b_z"))
        r = sig(row @ get("W_r") + h @ get("U_r") + get("b_r"))
        n = np.tanh(row @ get("W_n") + (r * h) @ get("U_n") + get("b_n"))
        h = (1 - z) * n + z * h
        out.append(h)
    return np.array(out)


def test_unk_lookup(tiny_corpus):
    vocab = build_word_vocab(tiny_corpus.snippets)
    assert vocab.index(UNK) == 0
    ids = token_ids(vocab, ["never-seen-word"])
    assert ids.tolist() == [0]


def test_repeated_token_gradient_accumulates_twice():
    params = make_params()
    rows = embed(params, np.array([2, 2]))
    np.testing.assert_array_equal(rows.data[0], rows.data[1])
    ad.backward(ad.sum_all(rows))
    np.testing.assert_array_equal(params["encoder.embedding"].grad[2], 2.0)
    assert not params["encoder.embedding"].grad[3].any()


def test_single_token_sequence_shape():
    params = make_params()
    out = bigru(params, embed(params, np.array([1])), [1])
    assert out.shape == (1, 4)


def test_zero_gates_hand_step():
    params = make_params(d_emb=2, d_hidden=2)
    for name, t in params.items():
        if name.startswith("encoder.fwd.") and ("_z" in name or "_r" in name):
            t.data[...] = 0.0
    x = np.array([[0.3, -0.7]])
    out = bigru(params, ad.Tensor(x), [1])
    candidate = np.tanh(x[0] @ params["encoder.fwd.W_n"].data)
    np.testing.assert_allclose(out.data[0, :2], 0.5 * candidate, atol=1e-15)


def test_matches_per_sequence_reference():
    params = make_params(d_emb=3, d_hidden=4, seed=3)
    rng = np.random.default_rng(0)
    lengths = [3, 1, 5]
    x = rng.normal(size=(sum(lengths), 3))
    out = bigru(params, ad.Tensor(x), lengths).data
    start = 0
    for n in lengths:
        seq = x[start:start + n]
        np.testing.assert_allclose(out[start:start + n, :4],
                                   gru_reference(params, "encoder.fwd", seq), atol=1e-12)
        np.testing.assert_allclose(out[start:start + n, 4:],
                                   gru_reference(params, "encoder.bwd", seq[::-1])[::-1],
                                   atol=1e-12)
        start += n


def test_reversal_swaps_directions_when_weights_shared():
    params = make_params(d_emb=3, d_hidden=2, seed=4)
    for gate in ("z", "r", "n"):
        for kind in ("W", "U", "b"):
            params[f"encoder.bwd.{kind}_{gate}"].data[...] = params[f"encoder.fwd.{kind}_{gate}"].data
    x = np.random.default_rng(1).normal(size=(4, 3))
    out = bigru(params, ad.Tensor(x), [4]).data
    rev = bigru(params, ad.Tensor(x[::-1]), [4]).data
    np.testing.assert_allclose(out[:, :2], rev[::-1, 2:], atol=1e-14)


def test_empty_sequence_rejected():
    params = make_params()
    with pytest.raises(ValidationError):
        bigru(params, embed(params, np.array([1, 2])), [2, 0])


def test_encoder_gradients():
    params = make_params(n_words=5, d_emb=3, d_hidden=2, seed=2)
    ids, lengths = np.array([1, 2, 3, 1, 4]), [2, 3]
    weights = ad.Tensor(np.random.default_rng(3).normal(size=(5, 4)))
    errors = check_gradients(lambda: ad.sum_all(encode_tokens(params, ids, lengths) * weights),
                             dict(params.items()))
    assert max(errors.values()) <= 1e-4


def test_load_embeddings(tmp_path):
    vocab = Vocab([UNK, "a", "b"])
    params = make_params(n_words=3, d_emb=2)
    path = tmp_path / "emb.txt"
    path.write_text("a 1.0 2.0\nzzz 3.0 4.0\n")
    assert load_embeddings(path, vocab, params) == 1
    np.testing.assert_array_equal(params["encoder.embedding"].data[1], [1.0, 2.0])
    path.write_text("a 1.0\n")
    with pytest.raises(ValidationError, match="line 1"):
        load_embeddings(path, vocab, params)
