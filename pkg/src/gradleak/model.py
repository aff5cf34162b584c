"""Architecture descriptions, parameter/gradient containers and their JSON forms.

An architecture is a stack of (conv, activation) blocks followed by exactly
one flatten and one dense layer. Parameters and gradients are stored per layer
index; layers without parameters hold ``None``.
"""

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import ArchitectureError, SerializationError, ShapeError
from .tensor import ACTIVATIONS, ConvGeometry, check_activation

WEIGHT_RANGE = 0.5
BIAS_RANGE = 0.1


@dataclass(frozen=True)
class Conv:
    geom: ConvGeometry
    bias: bool = False


@dataclass(frozen=True)
class Activation:
    kind: str
    alpha: Optional[float] = None


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    in_features: int
    out_features: int


LayerSpec = Union[Conv, Activation, Flatten, Dense]


@dataclass(frozen=True)
class ArchitectureSpec:
    input_shape: tuple
    layers: tuple
    shapes: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "shapes", _infer_shapes(self.input_shape, self.layers))

    @property
    def output_shape(self):
        return self.shapes[-1]

    @property
    def dense_index(self):
        return len(self.layers) - 1

    @property
    def dense(self):
        return self.layers[-1]

    @property
    def n_classes(self):
        return self.layers[-1].out_features

    def input_shape_of(self, index):
        return self.input_shape if index == 0 else self.shapes[index - 1]

    def param_indices(self):
        return [i for i, layer in enumerate(self.layers) if isinstance(layer, (Conv, Dense))]

    def conv_blocks(self):
        """(conv index, activation index) pairs, input side first."""
        return [(i, i + 1) for i, layer in enumerate(self.layers) if isinstance(layer, Conv)]

    def param_shapes(self, index):
        layer = self.layers[index]
        if isinstance(layer, Conv):
            return layer.geom.weight_shape, ((layer.geom.filters,) if layer.bias else None)
        if isinstance(layer, Dense):
            return (layer.out_features, layer.in_features), (layer.out_features,)
        raise IndexError(f"layer {index} has no parameters")

    def to_dict(self):
        c, h, w = self.input_shape
        layers = []
        for layer in self.layers:
            if isinstance(layer, Conv):
                g = layer.geom
                layers.append({"type": "conv", "filters": g.filters, "kernel": g.kernel,
                               "stride": g.stride, "padding": g.padding, "bias": layer.bias})
            elif isinstance(layer, Activation):
                layers.append({"type": "activation", "kind": layer.kind, "alpha": layer.alpha})
            elif isinstance(layer, Flatten):
                layers.append({"type": "flatten"})
            else:
                layers.append({"type": "dense", "units": layer.out_features})
        return {"input": {"channels": c, "height": h, "width": w}, "layers": layers}

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent) + "\n"

    @property
    def hash(self):
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _infer_shapes(input_shape, layers):
    if len(input_shape) != 3 or min(input_shape) < 1:
        raise ArchitectureError(f"input shape must be three positive ints, got {input_shape}")
    if input_shape[1] != input_shape[2]:
        raise ArchitectureError("only square inputs are supported")
    if not layers:
        raise ArchitectureError("architecture has no layers")
    shape = input_shape
    shapes = []
    last = len(layers) - 1
    for i, layer in enumerate(layers):
        if isinstance(layer, Conv):
            if len(shape) != 3:
                raise ArchitectureError("conv after flatten", i)
            if i == last or not isinstance(layers[i + 1], Activation):
                raise ArchitectureError("every conv must be followed by an activation", i)
            if layer.geom.input_shape != shape:
                raise ArchitectureError(
                    f"conv expects input {layer.geom.input_shape}, receives {shape}", i)
            shape = layer.geom.output_shape
        elif isinstance(layer, Activation):
            if i == 0 or not isinstance(layers[i - 1], Conv):
                raise ArchitectureError("activation must directly follow a conv", i)
            try:
                check_activation(layer.kind, layer.alpha)
            except ValueError as exc:
                raise ArchitectureError(str(exc), i) from None
        elif isinstance(layer, Flatten):
            if i != last - 1:
                raise ArchitectureError("flatten must sit immediately before the dense layer", i)
            shape = (int(np.prod(shape)),)
        elif isinstance(layer, Dense):
            if i != last:
                raise ArchitectureError("dense must be the last layer", i)
            if i == 0 or not isinstance(layers[i - 1], Flatten):
                raise ArchitectureError("dense must be preceded by flatten", i)
            if layer.in_features != shape[0]:
                raise ArchitectureError(
                    f"dense in_features {layer.in_features} != flattened size {shape[0]}", i)
            if layer.out_features < 1:
                raise ArchitectureError("dense needs at least one unit", i)
            shape = (layer.out_features,)
        else:
            raise ArchitectureError(f"unknown layer object {layer!r}", i)
        shapes.append(tuple(shape))
    return tuple(shapes)


def _require_int(obj, key, index, minimum):
    value = obj.get(key)
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ArchitectureError(f"{key!r} must be an integer >= {minimum}, got {value!r}", index)
    return value


def parse_architecture(doc):
    """Build an :class:`ArchitectureSpec` from a JSON string or an already-decoded dict."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ArchitectureError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("input"), dict) \
            or not isinstance(doc.get("layers"), list):
        raise ArchitectureError("document needs an 'input' object and a 'layers' list")
    inp = doc["input"]
    try:
        shape = tuple(_require_int(inp, k, None, 1) for k in ("channels", "height", "width"))
    except ArchitectureError as exc:
        raise ArchitectureError(f"input: {exc}") from None
    if shape[1] != shape[2]:
        raise ArchitectureError("only square inputs are supported")

    layers = []
    current = shape
    for i, entry in enumerate(doc["layers"]):
        if not isinstance(entry, dict):
            raise ArchitectureError("layer entry must be an object", i)
        kind = entry.get("type")
        if kind == "conv":
            if len(current) != 3:
                raise ArchitectureError("conv after flatten", i)
            bias = entry.get("bias", False)
            if not isinstance(bias, bool):
                raise ArchitectureError("'bias' must be a boolean", i)
            try:
                geom = ConvGeometry(
                    in_channels=current[0], in_size=current[1],
                    filters=_require_int(entry, "filters", i, 1),
                    kernel=_require_int(entry, "kernel", i, 1),
                    stride=_require_int(entry, "stride", i, 1) if "stride" in entry else 1,
                    padding=_require_int(entry, "padding", i, 0) if "padding" in entry else 0)
            except ShapeError as exc:
                raise ArchitectureError(str(exc), i) from None
            layers.append(Conv(geom, bias))
            current = geom.output_shape
        elif kind == "activation":
            act = entry.get("kind")
            if act not in ACTIVATIONS:
                raise ArchitectureError(f"unknown activation kind {act!r}", i)
            alpha = entry.get("alpha")
            if alpha is not None and (isinstance(alpha, bool) or not isinstance(alpha, (int, float))):
                raise ArchitectureError("'alpha' must be a number or null", i)
            try:
                alpha = check_activation(act, alpha)
            except ValueError as exc:
                raise ArchitectureError(str(exc), i) from None
            layers.append(Activation(act, alpha))
        elif kind == "flatten":
            layers.append(Flatten())
            current = (int(np.prod(current)),)
        elif kind == "dense":
            if len(current) != 1:
                raise ArchitectureError("dense must be preceded by flatten", i)
            layers.append(Dense(current[0], _require_int(entry, "units", i, 1)))
            current = (layers[-1].out_features,)
        else:
            raise ArchitectureError(f"unknown layer type {kind!r}", i)
    return ArchitectureSpec(shape, layers)


# --------------------------------------------------------------------------
# parameter and gradient containers
# --------------------------------------------------------------------------

@dataclass
class LayerParams:
    weights: np.ndarray
    bias: Optional[np.ndarray] = None


@dataclass
class ParameterSet:
    """Weights/biases aligned with ``arch.layers`` (``None`` for parameter-free layers)."""

    layers: list
    arch_hash: str = ""

    def __getitem__(self, index):
        return self.layers[index]

    def check(self, arch):
        _check_layers(self.layers, self.arch_hash, arch, "parameters")


@dataclass
class GradientBundle:
    """Per-layer loss gradients w.r.t. weights and biases from a single training step."""

    layers: list
    arch_hash: str = ""
    seed: Optional[int] = None
    loss: Optional[float] = None

    def __getitem__(self, index):
        return self.layers[index]

    def check(self, arch):
        _check_layers(self.layers, self.arch_hash, arch, "gradients")


def _check_layers(layers, arch_hash, arch, what):
    if arch_hash and arch_hash != arch.hash:
        raise SerializationError(f"{what} were produced for a different architecture")
    if len(layers) != len(arch.layers):
        raise SerializationError(
            f"{what} cover {len(layers)} layers, architecture has {len(arch.layers)}")
    params = set(arch.param_indices())
    for i, entry in enumerate(layers):
        if i not in params:
            if entry is not None:
                raise SerializationError(f"{what}: layer {i} has no parameters")
            continue
        if entry is None:
            raise SerializationError(f"{what}: missing entry for layer {i}")
        w_shape, b_shape = arch.param_shapes(i)
        if entry.weights.shape != w_shape:
            raise SerializationError(
                f"{what}: layer {i} weights {entry.weights.shape} != {w_shape}")
        got_b = None if entry.bias is None else entry.bias.shape
        if got_b != b_shape:
            raise SerializationError(f"{what}: layer {i} bias {got_b} != {b_shape}")
        for arr in (entry.weights, entry.bias):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise SerializationError(f"{what}: layer {i} has non-finite entries")


def init_parameters(arch, seed, fan_in=False):
    """Uniform weights in [-0.5, 0.5] and biases in [-0.1, 0.1], deterministic in ``seed``.

    With ``fan_in=True`` each layer's weight range shrinks to
    ``[-sqrt(3/fan_in), sqrt(3/fan_in)]`` (unit-variance pre-activations for
    unit-variance inputs). The fixed range saturates the softmax of deeper
    stacks such as 32x32 inputs with wide early layers, which zeroes every bias
    gradient. The draws are the same; only the scale differs.
    """
    rng = np.random.default_rng(seed)
    layers = [None] * len(arch.layers)
    for i in arch.param_indices():
        w_shape, b_shape = arch.param_shapes(i)
        weights = rng.uniform(-WEIGHT_RANGE, WEIGHT_RANGE, size=w_shape)
        if fan_in:
            weights *= np.sqrt(3.0 / int(np.prod(w_shape[1:]))) / WEIGHT_RANGE
        bias = None if b_shape is None else rng.uniform(-BIAS_RANGE, BIAS_RANGE, size=b_shape)
        layers[i] = LayerParams(weights, bias)
    return ParameterSet(layers, arch.hash)


# --------------------------------------------------------------------------
# JSON
# --------------------------------------------------------------------------

def tensor_to_dict(arr):
    arr = np.asarray(arr, dtype=np.float64)
    return {"shape": list(arr.shape), "data": arr.ravel().tolist()}


def tensor_from_dict(obj):
    if not isinstance(obj, dict) or "shape" not in obj or "data" not in obj:
        raise SerializationError("tensor needs 'shape' and 'data'")
    shape, data = obj["shape"], obj["data"]
    if not isinstance(shape, list) or not all(
            isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in shape):
        raise SerializationError(f"bad tensor shape {shape!r}")
    if not isinstance(data, list) or len(data) != int(np.prod(shape, dtype=np.int64)):
        raise SerializationError(f"tensor data length does not match shape {shape}")
    try:
        arr = np.array(data, dtype=np.float64)
    except (TypeError, ValueError):
        raise SerializationError("tensor data must be numbers") from None
    if arr.ndim != 1 and arr.size:
        raise SerializationError("tensor data must be a flat list")
    if not np.all(np.isfinite(arr)):
        raise SerializationError("tensor data contains non-finite values")
    return arr.reshape(shape)


def _dumps(obj):
    return json.dumps(obj, separators=(",", ":"), allow_nan=False) + "\n"


def _loads(text):
    if isinstance(text, dict):
        return text
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SerializationError(f"invalid JSON: {exc}") from None


def dumps_tensor(arr):
    return _dumps(tensor_to_dict(arr))


def loads_tensor(text):
    return tensor_from_dict(_loads(text))


def _layers_to_list(layers):
    out = []
    for i, entry in enumerate(layers):
        if entry is None:
            continue
        out.append({"layer": i,
                    "weights": tensor_to_dict(entry.weights),
                    "bias": None if entry.bias is None else tensor_to_dict(entry.bias)})
    return out


def _layers_from_list(entries, arch):
    if not isinstance(entries, list):
        raise SerializationError("'layers' must be a list")
    expected = arch.param_indices() if arch is not None else None
    if expected is not None and len(entries) != len(expected):
        raise SerializationError(
            f"document has {len(entries)} parameter layers, architecture has {len(expected)}")
    decoded = {}
    for pos, entry in enumerate(entries):
        if not isinstance(entry, dict) or "weights" not in entry:
            raise SerializationError(f"layer entry {pos} needs 'weights'")
        index = entry.get("layer", expected[pos] if expected is not None else pos)
        if not isinstance(index, int) or index < 0 or index in decoded:
            raise SerializationError(f"bad layer index {index!r}")
        bias = entry.get("bias")
        decoded[index] = LayerParams(tensor_from_dict(entry["weights"]),
                                     None if bias is None else tensor_from_dict(bias))
    size = len(arch.layers) if arch is not None else (max(decoded) + 1 if decoded else 0)
    if decoded and max(decoded) >= size:
        raise SerializationError(f"layer index {max(decoded)} out of range")
    return [decoded.get(i) for i in range(size)]


def dumps_parameters(params):
    return _dumps({"arch_hash": params.arch_hash, "layers": _layers_to_list(params.layers)})


def loads_parameters(text, arch=None):
    doc = _loads(text)
    if not isinstance(doc, dict):
        raise SerializationError("parameters document must be an object")
    params = ParameterSet(_layers_from_list(doc.get("layers"), arch), doc.get("arch_hash", ""))
    if arch is not None:
        params.check(arch)
    return params


def dumps_gradients(grads):
    return _dumps({"arch_hash": grads.arch_hash, "seed": grads.seed, "loss": grads.loss,
                   "layers": _layers_to_list(grads.layers)})


def loads_gradients(text, arch=None):
    doc = _loads(text)
    if not isinstance(doc, dict):
        raise SerializationError("gradients document must be an object")
    loss = doc.get("loss")
    grads = GradientBundle(_layers_from_list(doc.get("layers"), arch), doc.get("arch_hash", ""),
                           doc.get("seed"), None if loss is None else float(loss))
    if arch is not None:
        grads.check(arch)
    return grads
