import math
from typing import Iterator, Sequence

import numpy as np
from loguru import logger

from lrc_distill.data.vocab import PAD_ID
from lrc_distill.encoder.models import EncoderConfig, ForwardTrace
from lrc_distill.errors import DimensionError, InputError
from lrc_distill.tensor import Tensor, ops

INIT_RANGE = 0.08
_MASK_VALUE = -1e9


def parameter_shapes(config: EncoderConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) of every parameter tensor of an encoder."""
    h, f = config.hidden_size, config.ffn_size
    shapes: list[tuple[str, tuple[int, ...]]] = [
        ("embeddings.token", (config.vocab_size, h)),
        ("embeddings.position", (config.max_len, h)),
        ("embeddings.norm.gain", (h,)),
        ("embeddings.norm.bias", (h,)),
    ]
    for i in range(config.num_layers):
        prefix = f"layers.{i}"
        for proj in ("query", "key", "value", "output"):
            shapes.append((f"{prefix}.attention.{proj}.weight", (h, h)))
            shapes.append((f"{prefix}.attention.{proj}.bias", (h,)))
        shapes += [
            (f"{prefix}.attention_norm.gain", (h,)),
            (f"{prefix}.attention_norm.bias", (h,)),
            (f"{prefix}.ffn.inner.weight", (h, f)),
            (f"{prefix}.ffn.inner.bias", (f,)),
            (f"{prefix}.ffn.outer.weight", (f, h)),
            (f"{prefix}.ffn.outer.bias", (h,)),
            (f"{prefix}.ffn_norm.gain", (h,)),
            (f"{prefix}.ffn_norm.bias", (h,)),
        ]
    shapes += [
        ("classifier.weight", (h, config.num_classes)),
        ("classifier.bias", (config.num_classes,)),
    ]
    return shapes


def param_count(config: EncoderConfig) -> int:
    """
    Closed-form number of scalar parameters.

    With vocabulary V, length l, hidden h, FFN width f, layers L and C
    classes::

        embeddings  V*h + l*h + 2*h
        per layer   4*(h*h + h) + 2*h + (h*f + f) + (f*h + h) + 2*h
                    = 4*h*h + 2*h*f + 9*h + f
        classifier  h*C + C
    """
    h, f = config.hidden_size, config.ffn_size
    embeddings = config.vocab_size * h + config.max_len * h + 2 * h
    per_layer = 4 * h * h + 2 * h * f + 9 * h + f
    classifier = h * config.num_classes + config.num_classes
    return embeddings + config.num_layers * per_layer + classifier


class EncoderModel:
    """Miniature post-norm transformer encoder with a first-position classifier."""

    def __init__(self, config: EncoderConfig, params: dict[str, Tensor]) -> None:
        expected = parameter_shapes(config)
        if [name for name, _ in expected] != list(params):
            raise DimensionError("parameter names do not match the encoder layout")
        for name, shape in expected:
            if params[name].shape != shape:
                raise DimensionError(
                    f"parameter {name} has shape {params[name].shape}, expected {shape}"
                )
        self.config = config
        self.params = params

    # ------------------------------------------------------------------
    # Parameter access
    # ------------------------------------------------------------------
    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield from self.params.items()

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.zero_grad()

    def state(self) -> dict[str, np.ndarray]:
        return {name: param.numpy() for name, param in self.params.items()}

    def clone(self) -> "EncoderModel":
        return EncoderModel(
            self.config,
            {
                name: Tensor(param.data, requires_grad=True, name=name)
                for name, param in self.params.items()
            },
        )

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    # ------------------------------------------------------------------
    # Forward pieces
    # ------------------------------------------------------------------
    def embed(self, ids: np.ndarray) -> Tensor:
        """Token plus position embeddings after the embedding layer norm."""
        length = ids.shape[-1]
        tokens = ops.take(self["embeddings.token"], ids, axis=0)
        positions = ops.take(self["embeddings.position"], np.arange(length), axis=0)
        return ops.layer_norm(
            tokens + positions,
            self["embeddings.norm.gain"],
            self["embeddings.norm.bias"],
        )

    def _linear(self, x: Tensor, prefix: str) -> Tensor:
        return ops.matmul(x, self[f"{prefix}.weight"]) + self[f"{prefix}.bias"]

    def _split_heads(self, x: Tensor, batch_dims: int) -> Tensor:
        heads, size = self.config.num_heads, self.config.head_size
        split = ops.reshape(x, (*x.shape[:-1], heads, size))
        axes = [*range(batch_dims), batch_dims + 1, batch_dims, batch_dims + 2]
        return ops.transpose(split, axes)

    def _merge_heads(self, x: Tensor, batch_dims: int) -> Tensor:
        axes = [*range(batch_dims), batch_dims + 1, batch_dims, batch_dims + 2]
        merged = ops.transpose(x, axes)
        return ops.reshape(merged, (*merged.shape[:-2], self.config.hidden_size))

    def _attention(self, x: Tensor, layer: int, mask: np.ndarray | None) -> Tensor:
        prefix = f"layers.{layer}.attention"
        batch_dims = x.ndim - 2
        q = self._split_heads(self._linear(x, f"{prefix}.query"), batch_dims)
        k = self._split_heads(self._linear(x, f"{prefix}.key"), batch_dims)
        v = self._split_heads(self._linear(x, f"{prefix}.value"), batch_dims)

        scores = ops.matmul(q, ops.swap_last(k)) * (1.0 / math.sqrt(self.config.head_size))
        if mask is not None:
            scores = scores + mask
        context = ops.matmul(ops.softmax(scores), v)
        return self._linear(self._merge_heads(context, batch_dims), f"{prefix}.output")

    def layer(self, x: Tensor, layer: int, mask: np.ndarray | None = None) -> Tensor:
        """One transformer layer; returns the post-norm FFN sub-layer output."""
        prefix = f"layers.{layer}"
        x = ops.layer_norm(
            x + self._attention(x, layer, mask),
            self[f"{prefix}.attention_norm.gain"],
            self[f"{prefix}.attention_norm.bias"],
        )
        inner = ops.gelu(self._linear(x, f"{prefix}.ffn.inner"))
        return ops.layer_norm(
            x + self._linear(inner, f"{prefix}.ffn.outer"),
            self[f"{prefix}.ffn_norm.gain"],
            self[f"{prefix}.ffn_norm.bias"],
        )

    def classify(self, hidden: Tensor) -> Tensor:
        """Classifier head over the first-position hidden state."""
        pooled = ops.take(hidden, [0], axis=-2)
        logits = self._linear(pooled, "classifier")
        return ops.reshape(logits, (*hidden.shape[:-2], self.config.num_classes))


def validate_tokens(config: EncoderConfig, tokens: Sequence[int] | np.ndarray) -> np.ndarray:
    ids = np.asarray(tokens)
    if ids.ndim not in (1, 2) or ids.shape[-1] == 0:
        raise InputError(f"tokens must be [l] or [batch, l], got shape {ids.shape}")
    if not np.issubdtype(ids.dtype, np.integer):
        raise InputError(f"token ids must be integers, got dtype {ids.dtype}")
    if ids.shape[-1] > config.max_len:
        raise InputError(
            f"sequence length {ids.shape[-1]} exceeds max_len={config.max_len}"
        )
    if ids.min() < 0 or ids.max() >= config.vocab_size:
        raise InputError(
            f"token id out of range [0, {config.vocab_size}): "
            f"min={int(ids.min())} max={int(ids.max())}"
        )
    return ids.astype(np.int64)


def forward(
    model: EncoderModel,
    tokens: Sequence[int] | np.ndarray,
    inject_emb: Tensor | None = None,
) -> ForwardTrace:
    """
    Run the encoder and return the distillation taps.

    When ``inject_emb`` is given the embedding lookup is bypassed and the
    tensor feeds layer 1 directly.
    """
    ids = validate_tokens(model.config, tokens)
    expected = (*ids.shape, model.config.hidden_size)
    if inject_emb is None:
        emb = model.embed(ids)
    elif inject_emb.shape != expected:
        raise DimensionError(
            f"inject_emb has shape {inject_emb.shape}, expected {expected}"
        )
    else:
        emb = inject_emb

    pad = ids == PAD_ID
    mask = None
    if pad.any():
        # [..., 1 (heads), 1 (queries), l (keys)]
        mask = np.where(pad, _MASK_VALUE, 0.0)[..., None, None, :]

    hidden = emb
    ffn_outs: list[Tensor] = []
    for layer in range(model.config.num_layers):
        hidden = model.layer(hidden, layer, mask)
        ffn_outs.append(hidden)

    return ForwardTrace(emb_out=emb, ffn_outs=ffn_outs, logits=model.classify(hidden))


def init_params(config: EncoderConfig, seed: int) -> EncoderModel:
    """
    Deterministically initialize an encoder from ``seed``.

    Weight matrices and embedding tables are drawn from
    uniform(-0.08, 0.08) in parameter order; biases start at zero and
    layer-norm gains at one.
    """
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}
    for name, shape in parameter_shapes(config):
        if name.endswith(".gain"):
            values = np.ones(shape)
        elif name.endswith(".bias"):
            values = np.zeros(shape)
        else:
            values = rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape)
        params[name] = Tensor(values, requires_grad=True, name=name)

    logger.debug(
        "Initialized encoder layers={layers} hidden={hidden} params={count} seed={seed}",
        layers=config.num_layers,
        hidden=config.hidden_size,
        count=param_count(config),
        seed=seed,
    )
    return EncoderModel(config, params)
