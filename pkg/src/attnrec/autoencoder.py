"""Attentive autoencoders that turn article content rows into latent priors.

Architecture: a stack of dense+batchnorm+ReLU encoder blocks with strictly
decreasing widths, a softmax self-gating bottleneck, a mirrored decoder
stack, and a sigmoid output layer back to the input width. Two instances
(one over text bag-of-words, one over tag/citation rows) are trained
independently with the same code.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy import sparse

from . import storage
from .errors import ConfigError, NumericalError
from .nn import (
    Adam,
    Attention,
    BatchNorm,
    Dense,
    ReLU,
    Sequential,
    Sigmoid,
    attention_bottleneck,
    bce_grad,
    bce_loss,
)

logger = logging.getLogger(__name__)

ENCODE_CHUNK = 512


class AttentiveAutoencoder:
    def __init__(self, input_dim: int, hidden_widths, seed: int = 0):
        hidden_widths = list(hidden_widths)
        if not hidden_widths:
            raise ConfigError("hidden_widths must be nonempty")
        if any(w <= 0 for w in hidden_widths):
            raise ConfigError("hidden widths must be positive")
        if any(b >= a for a, b in zip(hidden_widths, hidden_widths[1:])):
            raise ConfigError(f"hidden widths must be strictly decreasing: {hidden_widths}")
        if hidden_widths[0] >= input_dim:
            raise ConfigError(
                f"first hidden width {hidden_widths[0]} must be < input_dim {input_dim}"
            )
        self.input_dim = input_dim
        self.widths = hidden_widths
        self.seed = seed

        rng = np.random.default_rng(seed)
        encoder = []
        dims = [input_dim] + hidden_widths
        for a, b in zip(dims, dims[1:]):
            encoder += [Dense(a, b, rng), BatchNorm(b), ReLU()]
        decoder = []
        mirrored = dims[::-1]
        for a, b in zip(mirrored[:-2], mirrored[1:-1]):
            decoder += [Dense(a, b, rng), BatchNorm(b), ReLU()]
        decoder += [Dense(mirrored[-2], mirrored[-1], rng), Sigmoid()]

        self._encoder = Sequential(encoder)
        self._attention = Attention()
        self._decoder = Sequential(decoder)
        self.net = Sequential(encoder + [self._attention] + decoder)

    @property
    def latent_dim(self) -> int:
        return self.widths[-1]

    def reconstruct(self, x, training: bool = False) -> np.ndarray:
        """Full forward pass; outputs lie in (0, 1)."""
        return self.net.forward(_as_dense(x), training=training)

    def encoder_output(self, rows) -> np.ndarray:
        """Encoder stack output before the attention gate (evaluation mode)."""
        return self._forward_rows(rows, through_attention=False)

    def encode(self, rows) -> np.ndarray:
        """Latent rows: attention-gated encoder output, evaluation mode."""
        return self._forward_rows(rows, through_attention=True)

    def _forward_rows(self, rows, through_attention: bool) -> np.ndarray:
        dense_rows = _as_dense(rows)
        if dense_rows.shape[1] != self.input_dim:
            raise ValueError(
                f"expected rows of width {self.input_dim}, got {dense_rows.shape[1]}"
            )
        chunks = []
        for start in range(0, dense_rows.shape[0], ENCODE_CHUNK):
            x = self._encoder.forward(dense_rows[start:start + ENCODE_CHUNK], training=False)
            if through_attention:
                x = attention_bottleneck(x)
            chunks.append(x)
        if not chunks:
            return np.zeros((0, self.latent_dim))
        return np.concatenate(chunks, axis=0)

    def named_tensors(self) -> dict:
        tensors = {}
        dense_i = bn_i = 0
        for layer in self.net.layers:
            if isinstance(layer, Dense):
                tensors[f"dense{dense_i}/w"] = layer.w
                tensors[f"dense{dense_i}/b"] = layer.b
                dense_i += 1
            elif isinstance(layer, BatchNorm):
                tensors[f"bn{bn_i}/gamma"] = layer.gamma
                tensors[f"bn{bn_i}/beta"] = layer.beta
                tensors[f"bn{bn_i}/running_mean"] = layer.running_mean
                tensors[f"bn{bn_i}/running_var"] = layer.running_var
                bn_i += 1
        return tensors

    def load_tensors(self, tensors: dict):
        dense_i = bn_i = 0
        for layer in self.net.layers:
            if isinstance(layer, Dense):
                layer.w[...] = tensors[f"dense{dense_i}/w"]
                layer.b[...] = tensors[f"dense{dense_i}/b"]
                dense_i += 1
            elif isinstance(layer, BatchNorm):
                layer.gamma[...] = tensors[f"bn{bn_i}/gamma"]
                layer.beta[...] = tensors[f"bn{bn_i}/beta"]
                layer.running_mean[...] = tensors[f"bn{bn_i}/running_mean"]
                layer.running_var[...] = tensors[f"bn{bn_i}/running_var"]
                bn_i += 1


def _as_dense(rows) -> np.ndarray:
    if hasattr(rows, "matrix"):  # ContentMatrix / TagMatrix
        rows = rows.matrix
    if sparse.issparse(rows):
        return np.asarray(rows.todense(), dtype=np.float64)
    return np.asarray(rows, dtype=np.float64)


def _batch_slices(n: int, batch_size: int):
    """Contiguous batch bounds; a trailing singleton merges into its neighbor
    because batch normalization cannot standardize a single row."""
    bounds = list(range(0, n, batch_size)) + [n]
    if len(bounds) > 2 and bounds[-1] - bounds[-2] == 1:
        bounds.pop(-2)
    return list(zip(bounds[:-1], bounds[1:]))


def pretrain(ae: AttentiveAutoencoder, data, epochs: int = 200, batch_size: int = 128,
             seed: int = 0, learning_rate: float = 1e-3) -> list:
    """Train the autoencoder to reconstruct its input rows under BCE.

    Returns the per-epoch mean reconstruction loss. Deterministic for a
    fixed seed; epochs=0 leaves the model untouched and returns [].
    """
    if hasattr(data, "matrix"):
        data = data.matrix
    n = data.shape[0]
    if data.shape[1] != ae.input_dim:
        raise ValueError(f"data width {data.shape[1]} != input_dim {ae.input_dim}")
    if epochs == 0:
        return []
    if n < 2:
        raise ValueError("pretraining needs at least 2 rows")

    rng = np.random.default_rng(seed)
    optimizer = Adam(ae.net.parameters(), lr=learning_rate)
    is_sparse = sparse.issparse(data)
    history = []
    for epoch in range(epochs):
        perm = rng.permutation(n)
        total = 0.0
        for batch_i, (lo, hi) in enumerate(_batch_slices(n, batch_size)):
            batch = data[perm[lo:hi]]
            x = np.asarray(batch.todense(), dtype=np.float64) if is_sparse else \
                np.asarray(batch, dtype=np.float64)
            out = ae.net.forward(x, training=True)
            loss = bce_loss(out, x)
            if not np.isfinite(loss):
                raise NumericalError(
                    f"non-finite reconstruction loss at epoch {epoch}, batch {batch_i}"
                )
            ae.net.backward(bce_grad(out, x))
            optimizer.step(ae.net.gradients())
            total += loss * x.shape[0]
        history.append(total / n)
        if epoch % 50 == 0 or epoch == epochs - 1:
            logger.debug("pretrain epoch %d: loss %.6f", epoch, history[-1])
    return history


def save_autoencoder(ae: AttentiveAutoencoder, path):
    meta = {"input_dim": ae.input_dim, "widths": ae.widths, "seed": ae.seed}
    storage.write_tensors(path, ae.named_tensors(), meta)


def load_autoencoder(path) -> AttentiveAutoencoder:
    tensors, meta = storage.read_tensors(path)
    ae = AttentiveAutoencoder(meta["input_dim"], meta["widths"], seed=meta.get("seed", 0))
    ae.load_tensors(tensors)
    return ae
