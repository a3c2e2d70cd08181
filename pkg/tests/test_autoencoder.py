import numpy as np
import pytest
from scipy import sparse

from attnrec import nn
from attnrec.autoencoder import (AttentiveAutoencoder, load_autoencoder,
                                 pretrain, save_autoencoder)
from attnrec.corpus import ContentMatrix
from attnrec.errors import ConfigError


def _toy_content(n_rows=40, n_cols=30, seed=0):
    """Two blocks of rows with disjoint active column ranges."""
    rng = np.random.default_rng(seed)
    dense = np.zeros((n_rows, n_cols))
    for i in range(n_rows):
        cols = rng.choice(n_cols // 2, size=5, replace=False)
        if i >= n_rows // 2:
            cols = cols + n_cols // 2
        dense[i, cols] = rng.uniform(0.2, 1.0, size=5)
    return ContentMatrix(sparse.csr_matrix(dense))


def test_architecture_mirrors_encoder():
    ae = AttentiveAutoencoder(30, [16, 8, 4], seed=0)
    dense_dims = [(l.w.shape[0], l.w.shape[1]) for l in ae.net.layers
                  if isinstance(l, nn.Dense)]
    assert dense_dims == [(30, 16), (16, 8), (8, 4), (4, 8), (8, 16), (16, 30)]
    assert ae.latent_dim == 4
    assert isinstance(ae.net.layers[-1], nn.Sigmoid)
    # the layer feeding the sigmoid output carries no normalization
    assert isinstance(ae.net.layers[-2], nn.Dense)


def test_width_validation():
    with pytest.raises(ConfigError):
        AttentiveAutoencoder(30, [])
    with pytest.raises(ConfigError):
        AttentiveAutoencoder(30, [8, 16])  # not strictly decreasing
    with pytest.raises(ConfigError):
        AttentiveAutoencoder(30, [30, 8])  # first width must shrink the input
    with pytest.raises(ConfigError):
        AttentiveAutoencoder(30, [16, 0])


def test_encode_applies_attention_gate():
    ae = AttentiveAutoencoder(30, [8], seed=1)
    data = _toy_content()
    pre = ae.encoder_output(data)
    gated = ae.encode(data)
    assert np.array_equal(gated, nn.softmax(pre) * pre)


def test_encode_chunking_is_invisible(monkeypatch):
    import attnrec.autoencoder as mod
    ae = AttentiveAutoencoder(30, [8], seed=2)
    data = _toy_content(n_rows=50)
    full = ae.encode(data)
    monkeypatch.setattr(mod, "ENCODE_CHUNK", 7)
    chunked = ae.encode(data)
    # chunk shape may steer BLAS down different kernels, so allow for
    # rounding differences but nothing larger
    assert np.allclose(full, chunked, rtol=1e-12, atol=1e-14)


def test_reconstruct_shape_and_range():
    ae = AttentiveAutoencoder(30, [8], seed=3)
    out = ae.reconstruct(_toy_content(), training=False)
    assert out.shape == (40, 30)
    assert np.all((out > 0.0) & (out < 1.0))


def test_pretrain_reduces_loss_and_is_deterministic():
    data = _toy_content()
    ae1 = AttentiveAutoencoder(30, [12, 6], seed=4)
    losses1 = pretrain(ae1, data, epochs=60, batch_size=16, seed=9)
    ae2 = AttentiveAutoencoder(30, [12, 6], seed=4)
    losses2 = pretrain(ae2, data, epochs=60, batch_size=16, seed=9)
    assert losses1 == losses2
    assert np.array_equal(ae1.encode(data), ae2.encode(data))
    assert losses1[-1] < 0.7 * losses1[0]


def test_pretrain_zero_epochs_is_a_noop():
    data = _toy_content()
    ae = AttentiveAutoencoder(30, [8], seed=5)
    before = ae.encode(data)
    assert pretrain(ae, data, epochs=0) == []
    assert np.array_equal(ae.encode(data), before)


def test_pretrain_handles_trailing_singleton_batch():
    # 33 rows with batch 16 leaves one row over; it must fold into the
    # previous batch instead of hitting the batch-norm size floor.
    data = _toy_content(n_rows=33)
    ae = AttentiveAutoencoder(30, [8], seed=6)
    losses = pretrain(ae, data, epochs=2, batch_size=16, seed=0)
    assert len(losses) == 2


def test_checkpoint_roundtrip(tmp_path):
    data = _toy_content()
    ae = AttentiveAutoencoder(30, [12, 6], seed=7)
    pretrain(ae, data, epochs=5, batch_size=16, seed=1)
    path = tmp_path / "ae.bin"
    save_autoencoder(ae, path)
    again = load_autoencoder(path)
    # storage quantizes to f32, so reloaded outputs agree only that closely
    assert np.allclose(again.encode(data), ae.encode(data), atol=1e-5)
    save_autoencoder(again, tmp_path / "ae2.bin")
    third = load_autoencoder(tmp_path / "ae2.bin")
    assert np.array_equal(third.encode(data), again.encode(data))


def test_accepts_dense_arrays():
    ae = AttentiveAutoencoder(10, [4], seed=8)
    rows = np.random.default_rng(0).uniform(0.0, 1.0, size=(5, 10))
    assert ae.encode(rows).shape == (5, 4)
