"""
Neural electrodogram coder: log-envelope encoder, causal dilated TCN stack,
causal scaled dot-product attention and two M-wide heads (magnitudes and
channel-selection logits).
"""
from __future__ import annotations

import math
from collections.abc import Callable
from pathlib import Path

import numpy as np
from loguru import logger
from pydantic import ValidationError

from . import _checkpoint_format
from .ace_codec import FilterbankMap, compute_envelopes, select_maxima_matrix
from .AudioSignal import AudioSignal
from .Electrodogram import Electrodogram
from .exceptions import CheckpointFormatError, GraphError, ShapeMismatchError
from .models import Activation, AceConfig, ModelConfig, TcnLayerSpec
from .Tensor import Operand, Tensor, as_tensor, no_grad, relu, sigmoid, tanh
from .tensor_ops import bce_with_logits, conv1d, mse_loss, softmax_rows, windowed_attention
from .Types import BoolArray, FilePath, FloatArray
from .utils import write_bytes_atomic

ACTIVATIONS: dict[Activation, Callable[[Operand], Tensor]] = {
    Activation.RELU: relu,
    Activation.TANH: tanh,
    Activation.IDENTITY: as_tensor,
}


def encoder_features(signal: AudioSignal, ace_config: AceConfig, fb: FilterbankMap | None = None) -> FloatArray:
    """M x T log-compressed channel envelopes log(1 + envelope / B) on the ACE framing"""
    features: FloatArray = np.log1p(compute_envelopes(signal, ace_config, fb) / ace_config.lgf_base)
    return features


def causal_dilated_conv1d(
    x: Operand, weight: Operand, bias: Operand, dilation: int = 1, activation: Activation = Activation.IDENTITY
) -> Tensor:
    """one TCN layer: causal dilated convolution followed by its activation"""
    return ACTIVATIONS[Activation(activation)](conv1d(x, weight, bias, dilation))


def attention_weights(query: Operand, key: Operand, mask: BoolArray | None = None) -> Tensor:
    """row-softmax of Q K^T / sqrt(d_k)"""
    q_, k_ = as_tensor(query), as_tensor(key)
    if q_.ndim != 2 or k_.ndim != 2 or q_.shape[1] != k_.shape[1]:
        raise ShapeMismatchError(f"Queries {q_.shape} and keys {k_.shape} must share the inner width d_k")
    if q_.shape[1] < 1:
        raise ShapeMismatchError("d_k must be at least 1")
    return softmax_rows((q_ @ k_.T) * (1.0 / math.sqrt(q_.shape[1])), mask)


def scaled_dot_product_attention(
    query: Operand, key: Operand, value: Operand, mask: BoolArray | None = None
) -> Tensor:
    """softmax(Q K^T / sqrt(d_k)) V for Q: n x d_k, K: m x d_k, V: m x d_v"""
    v_ = as_tensor(value)
    k_ = as_tensor(key)
    if v_.ndim != 2 or v_.shape[0] != k_.shape[0]:
        raise ShapeMismatchError(f"Values {v_.shape} need one row per key ({k_.shape[0]})")
    return attention_weights(query, k_, mask) @ v_


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> FloatArray:
    bound = math.sqrt(6.0 / fan_in)
    weights: FloatArray = rng.uniform(-bound, bound, size=shape)
    return weights


def initial_parameters(config: ModelConfig, seed: int = 0) -> dict[str, FloatArray]:
    """fan-in scaled uniform weights, zero biases, drawn in a fixed order from one seeded generator"""
    rng = np.random.default_rng(seed)
    params: dict[str, FloatArray] = {}

    in_channels = config.num_channels
    for i, layer in enumerate(config.tcn_layers):
        fan_in = in_channels * layer.kernel_size
        params[f"tcn.{i}.weight"] = _uniform(rng, (layer.out_channels, in_channels, layer.kernel_size), fan_in)
        params[f"tcn.{i}.bias"] = np.zeros(layer.out_channels)
        in_channels = layer.out_channels

    attention = config.attention
    params["attention.query"] = _uniform(rng, (in_channels, attention.d_k), in_channels)
    params["attention.key"] = _uniform(rng, (in_channels, attention.d_k), in_channels)
    params["attention.value"] = _uniform(rng, (in_channels, attention.d_v), in_channels)

    for head in ("magnitude_head", "selection_head"):
        params[f"{head}.weight"] = _uniform(rng, (attention.d_v, config.num_channels), attention.d_v)
        params[f"{head}.bias"] = np.zeros(config.num_channels)

    return params


class NeuralCoder:
    """
    TCN + attention electrodogram coder holding its learnable tensors.

    `loss` records a graph, `backward` differentiates the last recorded loss.
    """

    def __init__(self, config: ModelConfig, parameters: dict[str, FloatArray] | None = None, seed: int = 0) -> None:
        self.config = config
        arrays = parameters if parameters is not None else initial_parameters(config, seed)
        expected = initial_parameters(config) if parameters is not None else arrays

        if parameters is not None:
            missing, unexpected = expected.keys() - arrays.keys(), arrays.keys() - expected.keys()
            if missing or unexpected:
                raise ShapeMismatchError(
                    f"Parameter names differ: missing {sorted(missing)}, unexpected {sorted(unexpected)}"
                )
            for name, array in arrays.items():
                if array.shape != expected[name].shape:
                    raise ShapeMismatchError(
                        f"Parameter '{name}' has shape {array.shape}, expected {expected[name].shape}"
                    )

        self.parameters: dict[str, Tensor] = {
            name: Tensor(np.array(arrays[name], dtype=np.float64), requires_grad=True, name=name) for name in expected
        }
        self._last_loss: Tensor | None = None

    def __repr__(self) -> str:
        return f"NeuralCoder({self.num_parameters} parameters, receptive field {self.config.receptive_field} frames)"

    @property
    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters.values())

    def _layer(self, index: int) -> tuple[Tensor, Tensor]:
        return self.parameters[f"tcn.{index}.weight"], self.parameters[f"tcn.{index}.bias"]

    def forward(self, features: FloatArray) -> tuple[Tensor, Tensor]:
        """M x T features to (M x T magnitudes in [0, 1], M x T selection logits)"""
        return model_forward(features, self)

    def loss(
        self, features: FloatArray, target: Electrodogram, loss_weight: float = 1.0, selected_only: bool = False
    ) -> Tensor:
        magnitudes, logits = self.forward(features)
        self._last_loss = combined_loss(magnitudes, logits, target, loss_weight, selected_only)
        return self._last_loss

    def backward(self, loss: Tensor | None = None) -> dict[str, FloatArray]:
        """gradients of the given (or last recorded) loss for every parameter"""
        loss = loss if loss is not None else self._last_loss
        if loss is None:
            raise GraphError("backward() called before any forward pass")
        self._last_loss = None
        loss.backward()
        return {name: p.grad if p.grad is not None else np.zeros_like(p.data) for name, p in self.parameters.items()}

    def zero_grad(self) -> None:
        for p in self.parameters.values():
            p.zero_grad()

    def state_dict(self) -> dict[str, FloatArray]:
        return {name: p.data.copy() for name, p in self.parameters.items()}

    def load_state_dict(self, state: dict[str, FloatArray]) -> None:
        for name, p in self.parameters.items():
            p.data[...] = state[name]

    def to_bytes(self) -> bytes:
        return _checkpoint_format.pack(self.config.plain_dict(), self.state_dict())

    @classmethod
    def from_bytes(cls, payload: bytes) -> NeuralCoder:
        config_dict, tensors = _checkpoint_format.unpack(payload)
        try:
            config = ModelConfig.parse_obj(config_dict)
        except ValidationError as e:
            raise CheckpointFormatError(f"Checkpoint holds an invalid model config: {e}") from e
        try:
            return cls(config, tensors)
        except ShapeMismatchError as e:
            raise CheckpointFormatError(f"Checkpoint tensors do not match its config: {e}") from e

    def save(self, path: FilePath) -> Path:
        path = write_bytes_atomic(path, self.to_bytes())
        logger.info(f"Checkpoint with {self.num_parameters} parameters saved to {path}")
        return path

    @classmethod
    def load(cls, path: FilePath) -> NeuralCoder:
        path = Path(path)
        try:
            coder = cls.from_bytes(path.read_bytes())
        except CheckpointFormatError as e:
            raise CheckpointFormatError(f"{path}: {e}") from e
        logger.info(f"Loaded checkpoint {path}: {coder!r}")
        return coder


def model_forward(features: FloatArray, coder: NeuralCoder) -> tuple[Tensor, Tensor]:
    """
    encoder features -> TCN stack -> causal attention (plus residual) -> heads

    every operation is causal along time, so output frame t depends on features at frames <= t only
    """
    config = coder.config
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != config.num_channels:
        raise ShapeMismatchError(f"Expected {config.num_channels} x T features, got {features.shape}")
    if not features.shape[1]:
        empty = np.zeros_like(features)
        return Tensor(empty), Tensor(empty)

    hidden = Tensor(features)
    layer: TcnLayerSpec
    for i, layer in enumerate(config.tcn_layers):
        weight, bias = coder._layer(i)
        hidden = causal_dilated_conv1d(hidden, weight, bias, layer.dilation, layer.activation)

    sequence = hidden.T
    params = coder.parameters
    query = sequence @ params["attention.query"]
    key = sequence @ params["attention.key"]
    value = sequence @ params["attention.value"]
    attended = windowed_attention(query, key, value, config.attention.context)
    if config.attention.residual:
        attended = attended + sequence

    magnitudes = sigmoid(attended @ params["magnitude_head.weight"] + params["magnitude_head.bias"]).T
    logits = (attended @ params["selection_head.weight"] + params["selection_head.bias"]).T
    return magnitudes, logits


def combined_loss(
    magnitudes: Tensor, logits: Tensor, target: Electrodogram, loss_weight: float = 1.0, selected_only: bool = False
) -> Tensor:
    """
    MSE on magnitudes plus loss_weight times BCE of the selection logits against target > 0

    with selected_only the MSE is averaged over the stimulated target channels only
    """
    target_magnitudes = target.magnitudes.astype(np.float64)
    if magnitudes.shape != target_magnitudes.shape or logits.shape != target_magnitudes.shape:
        raise ShapeMismatchError(
            f"Prediction {magnitudes.shape}/{logits.shape} does not match target {target_magnitudes.shape}"
        )
    selected = target_magnitudes > 0
    loss = mse_loss(magnitudes, target_magnitudes, selected if selected_only else None)
    if loss_weight:
        loss = loss + bce_with_logits(logits, selected.astype(np.float64)) * loss_weight
    return loss


def infer(signal: AudioSignal, coder: NeuralCoder, ace_config: AceConfig) -> Electrodogram:
    """
    predict an electrodogram keeping magnitudes only on the top-N logits of every frame,
    and of those only the ones above the selection threshold when the model sets one
    """
    features = encoder_features(signal, ace_config)
    with no_grad():
        magnitudes, logits = coder.forward(features)

    mask = select_maxima_matrix(logits.data, ace_config.num_maxima)
    threshold = coder.config.selection_threshold
    if threshold is not None:
        mask &= logits.data > threshold
    return Electrodogram(np.where(mask, np.clip(magnitudes.data, 0.0, 1.0), 0.0), ace_config.frame_rate_hz)
