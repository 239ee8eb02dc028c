"""Feed-forward ReLU networks: model types, file loaders, concrete execution.

Networks alternate affine maps with activations. Every layer except the last
must use ReLU; the last may use ReLU or be purely affine (identity). Values
are immutable after construction and safe to share between runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

RELU = "relu"
IDENTITY = "identity"


class ModelError(ValueError):
    """Malformed network file or inconsistent shapes."""


@dataclass(frozen=True)
class NeuronRef:
    """A single ReLU unit: 0-based index among ReLU layers, unit within layer."""

    layer_index: int
    unit_index: int


@dataclass(frozen=True)
class Layer:
    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str

    def __post_init__(self):
        w = np.ascontiguousarray(np.asarray(self.weights, dtype=np.float64))
        b = np.ascontiguousarray(np.asarray(self.bias, dtype=np.float64))
        if w.ndim != 2:
            raise ModelError(f"weights must be a matrix, got ndim={w.ndim}")
        if b.ndim != 1:
            raise ModelError(f"bias must be a vector, got ndim={b.ndim}")
        if b.shape[0] != w.shape[0]:
            raise ModelError(
                f"bias length {b.shape[0]} does not match weight rows {w.shape[0]}"
            )
        if self.activation not in (RELU, IDENTITY):
            raise ModelError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class Network:
    layers: tuple[Layer, ...]
    normalization: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ModelError("network needs at least one layer")
        for i, layer in enumerate(layers):
            if i > 0 and layer.in_dim != layers[i - 1].out_dim:
                raise ModelError(
                    f"layer {i} expects {layer.in_dim} inputs but layer "
                    f"{i - 1} produces {layers[i - 1].out_dim}"
                )
            if layer.activation == IDENTITY and i != len(layers) - 1:
                raise ModelError(f"layer {i}: only the final layer may be identity")
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def relu_layers(self) -> tuple[int, ...]:
        """Indices (into self.layers) of the ReLU-activated layers."""
        return tuple(i for i, l in enumerate(self.layers) if l.activation == RELU)

    @property
    def relu_count(self) -> int:
        """Total number of ReLU units (the K used to normalize node depth)."""
        return sum(self.layers[i].out_dim for i in self.relu_layers)

    def neuron_at(self, flat_index: int) -> NeuronRef:
        """Invert the layer-major global ordering of ReLU units."""
        offset = flat_index
        for li, layer_pos in enumerate(self.relu_layers):
            width = self.layers[layer_pos].out_dim
            if offset < width:
                return NeuronRef(li, offset)
            offset -= width
        raise IndexError(f"flat neuron index {flat_index} out of range")

    def flat_index(self, ref: NeuronRef) -> int:
        relut = self.relu_layers
        if not (0 <= ref.layer_index < len(relut)):
            raise IndexError(f"no ReLU layer {ref.layer_index}")
        width = self.layers[relut[ref.layer_index]].out_dim
        if not (0 <= ref.unit_index < width):
            raise IndexError(f"unit {ref.unit_index} out of range for layer width {width}")
        return sum(self.layers[relut[i]].out_dim for i in range(ref.layer_index)) + ref.unit_index


def forward(net: Network, x) -> np.ndarray:
    """Run the network on a single input vector."""
    v = _check_input(net, x)
    for layer in net.layers:
        v = layer.weights @ v + layer.bias
        if layer.activation == RELU:
            v = np.maximum(v, 0.0)
    return v


def pre_activations(net: Network, x) -> np.ndarray:
    """ReLU pre-activation values in global (layer-major) neuron order."""
    v = _check_input(net, x)
    pre = []
    for layer in net.layers:
        v = layer.weights @ v + layer.bias
        if layer.activation == RELU:
            pre.append(v.copy())
            v = np.maximum(v, 0.0)
    if pre:
        return np.concatenate(pre)
    return np.empty(0)


def _check_input(net: Network, x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (net.input_dim,):
        raise ModelError(f"input shape {v.shape} does not match input_dim {net.input_dim}")
    return v


# -- JSON format --------------------------------------------------------------

def load_json(text) -> Network:
    """Load a network from the JSON format.

    Expected shape: {"layers": [{"weights": [[...]], "bias": [...],
    "activation": "relu"|"identity"}, ...]}.
    """
    if hasattr(text, "read"):
        text = text.read()
    if isinstance(text, (str, bytes)):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as e:
            raise ModelError(f"invalid JSON: {e}") from e
    else:
        obj = text
    if not isinstance(obj, dict) or "layers" not in obj:
        raise ModelError('missing "layers" field')
    layers = []
    for i, spec in enumerate(obj["layers"]):
        for key in ("weights", "bias", "activation"):
            if key not in spec:
                raise ModelError(f'layer {i}: missing "{key}"')
        rows = spec["weights"]
        if rows and any(len(r) != len(rows[0]) for r in rows):
            raise ModelError(f"layer {i}: ragged weight matrix")
        layers.append(Layer(np.array(rows, dtype=np.float64),
                            np.array(spec["bias"], dtype=np.float64),
                            spec["activation"]))
    return Network(tuple(layers))


def serialize(net: Network) -> dict:
    """Network as a plain dict; load_json(serialize(net)) reproduces net."""
    return {
        "layers": [
            {
                "weights": layer.weights.tolist(),
                "bias": layer.bias.tolist(),
                "activation": layer.activation,
            }
            for layer in net.layers
        ]
    }


# -- NNet text format ----------------------------------------------------------

def load_nnet(text, apply_normalization: bool = False) -> Network:
    """Load an ACAS-style NNet file.

    Layout: "//" comment lines, a counts line (num_layers, input_dim,
    output_dim, ...), a layer-sizes line, an optional 5-line normalization
    block (flag, input mins, input maxes, means, ranges), then per layer the
    weight rows followed by one bias value per row. Normalization constants
    are kept as metadata; with apply_normalization=True they are folded into
    the first and last affine layers instead.
    """
    if hasattr(text, "read"):
        text = text.read()
    rows = []  # (line_number, [floats])
    for lineno, raw in enumerate(str(text).splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("//"):
            continue
        tokens = [t for t in line.split(",") if t.strip()]
        try:
            rows.append((lineno, [float(t) for t in tokens]))
        except ValueError:
            bad = next(t for t in tokens if not _is_number(t))
            raise ModelError(f"line {lineno}: non-numeric token {bad.strip()!r}")
    if len(rows) < 2:
        raise ModelError("missing header lines")

    header_line, header = rows[0]
    if len(header) < 3:
        raise ModelError(f"line {header_line}: counts line needs at least 3 values")
    num_layers, input_dim, output_dim = (int(v) for v in header[:3])
    if num_layers < 1 or input_dim < 1 or output_dim < 1:
        raise ModelError(f"line {header_line}: non-positive size in counts line")

    sizes_line, sizes_f = rows[1]
    sizes = [int(v) for v in sizes_f]
    if len(sizes) != num_layers + 1:
        raise ModelError(
            f"line {sizes_line}: expected {num_layers + 1} layer sizes, got {len(sizes)}"
        )
    if sizes[0] != input_dim or sizes[-1] != output_dim:
        raise ModelError(f"line {sizes_line}: layer sizes disagree with counts line")

    body = rows[2:]
    wb_rows = sum(2 * sizes[k + 1] for k in range(num_layers))
    if len(body) == wb_rows:
        norm = None
    elif len(body) == wb_rows + 5:
        norm = _parse_normalization(body[:5], input_dim)
        body = body[5:]
    else:
        raise ModelError(
            f"expected {wb_rows} weight/bias rows (or +5 normalization rows), "
            f"found {len(body)}"
        )

    layers = []
    pos = 0
    for k in range(num_layers):
        in_d, out_d = sizes[k], sizes[k + 1]
        W = np.empty((out_d, in_d))
        for r in range(out_d):
            lineno, vals = body[pos]
            pos += 1
            if len(vals) != in_d:
                raise ModelError(
                    f"line {lineno}: weight row has {len(vals)} values, expected {in_d}"
                )
            W[r] = vals
        b = np.empty(out_d)
        for r in range(out_d):
            lineno, vals = body[pos]
            pos += 1
            if len(vals) != 1:
                raise ModelError(f"line {lineno}: bias row must hold exactly 1 value")
            b[r] = vals[0]
        act = RELU if k < num_layers - 1 else IDENTITY
        layers.append(Layer(W, b, act))

    if norm is not None and apply_normalization:
        layers = _fold_normalization(layers, norm)
        norm = dict(norm, applied=True)
    return Network(tuple(layers), normalization=norm)


def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def _parse_normalization(block, input_dim: int) -> dict:
    (_, flag), (l1, mins), (l2, maxes), (l3, means), (l4, ranges) = block
    for lineno, vec in ((l1, mins), (l2, maxes)):
        if len(vec) != input_dim:
            raise ModelError(f"line {lineno}: normalization row needs {input_dim} values")
    for lineno, vec in ((l3, means), (l4, ranges)):
        if len(vec) not in (input_dim, input_dim + 1):
            raise ModelError(
                f"line {lineno}: normalization row needs {input_dim} or {input_dim + 1} values"
            )
    return {
        "symmetric": int(flag[0]) if flag else 0,
        "input_min": list(mins),
        "input_max": list(maxes),
        "mean": list(means),
        "range": list(ranges),
    }


def _fold_normalization(layers: list[Layer], norm: dict) -> list[Layer]:
    """Rewrite first/last affine layers so raw inputs/outputs match the
    normalized semantics ((x - mean) / range on input, y * range + mean on
    output when an output constant is present)."""
    input_dim = layers[0].in_dim
    mean = np.asarray(norm["mean"], dtype=np.float64)
    rng = np.asarray(norm["range"], dtype=np.float64)
    in_mean, in_rng = mean[:input_dim], rng[:input_dim]

    first = layers[0]
    W0 = first.weights / in_rng[None, :]
    b0 = first.bias - W0 @ in_mean
    layers = [Layer(W0, b0, first.activation)] + layers[1:]

    if len(mean) > input_dim:
        out_mean, out_rng = mean[input_dim], rng[input_dim]
        last = layers[-1]
        layers[-1] = Layer(last.weights * out_rng, last.bias * out_rng + out_mean,
                           last.activation)
    return layers
