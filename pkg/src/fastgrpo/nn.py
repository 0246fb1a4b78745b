"""Parameter storage, feed-forward graphs, Adam, and JSON checkpoints."""
from __future__ import annotations

import base64
import json
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor, as_tensor

CHECKPOINT_FORMAT_VERSION = 1
ACTIVATIONS = ("silu", "tanh")


class ShapeError(ValueError):
    """Input width does not match what a layer expects."""

    def __init__(self, layer: str, expected: int, got: int):
        super().__init__(f"layer {layer!r}: expected input width {expected}, got {got}")
        self.layer = layer
        self.expected = expected
        self.got = got


@dataclass(frozen=True)
class GraphSpec:
    """A dense MLP: ``input_width -> hidden... -> output_width``."""

    input_width: int
    hidden: tuple[int, ...]
    output_width: int
    activation: str = "silu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @property
    def widths(self) -> list[int]:
        return [self.input_width, *self.hidden, self.output_width]

    def layer_names(self) -> list[str]:
        return [f"layer{i}" for i in range(len(self.widths) - 1)]

    def to_dict(self) -> dict:
        return {
            "input_width": self.input_width,
            "hidden": list(self.hidden),
            "output_width": self.output_width,
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> GraphSpec:
        return cls(d["input_width"], tuple(d["hidden"]), d["output_width"], d.get("activation", "silu"))


class ParamStore:
    """Ordered named parameters, each a leaf tensor carrying its own grad slot."""

    def __init__(self):
        self._entries: OrderedDict[str, Tensor] = OrderedDict()

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._entries:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self._entries[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __iter__(self):
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def items(self):
        return self._entries.items()

    def value(self, name: str) -> np.ndarray:
        return self._entries[name].data

    def grad(self, name: str) -> np.ndarray:
        return self._entries[name].grad

    def zero_grad(self) -> None:
        for t in self._entries.values():
            t.grad[...] = 0.0

    def copy(self) -> ParamStore:
        out = ParamStore()
        for name, t in self._entries.items():
            out.add(name, t.data.copy())
        return out

    def load_values(self, other: ParamStore) -> None:
        for name, t in self._entries.items():
            t.data[...] = other.value(name)

    def num_parameters(self) -> int:
        return sum(t.data.size for t in self._entries.values())

    def flat_values(self) -> np.ndarray:
        return np.concatenate([t.data.ravel() for t in self._entries.values()])

    def flat_grads(self) -> np.ndarray:
        return np.concatenate([t.grad.ravel() for t in self._entries.values()])

    def set_flat_values(self, flat: np.ndarray) -> None:
        i = 0
        for t in self._entries.values():
            n = t.data.size
            t.data[...] = flat[i:i + n].reshape(t.data.shape)
            i += n


def init_params(spec: GraphSpec, seed: int, zero_output: bool = False) -> ParamStore:
    """Uniform fan-in init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)), from a Philox stream."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    store = ParamStore()
    widths = spec.widths
    names = spec.layer_names()
    for i, name in enumerate(names):
        fan_in, fan_out = widths[i], widths[i + 1]
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        b = rng.uniform(-bound, bound, size=(fan_out,))
        if zero_output and i == len(names) - 1:
            w[...] = 0.0
            b[...] = 0.0
        store.add(f"{name}.weight", w)
        store.add(f"{name}.bias", b)
    return store


def forward_graph(store: ParamStore, inputs, spec: GraphSpec) -> Tensor:
    """Apply the MLP to a ``(batch, input_width)`` array; returns a tensor node."""
    h = as_tensor(inputs)
    if h.ndim != 2:
        raise ValueError(f"inputs must be 2-D (batch, width), got shape {h.shape}")
    names = spec.layer_names()
    for i, name in enumerate(names):
        w = store[f"{name}.weight"]
        if h.shape[1] != w.shape[0]:
            raise ShapeError(name, w.shape[0], h.shape[1])
        h = h @ w + store[f"{name}.bias"]
        if i < len(names) - 1:
            h = h.silu() if spec.activation == "silu" else h.tanh()
    return h


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(store: ParamStore, state: AdamState) -> None:
    """One bias-corrected Adam update in place. Grads are left for the caller to zero."""
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, p in store.items():
        g = p.grad
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        if m.shape != p.data.shape:
            raise ShapeError(name, p.data.size, m.size)
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


# checkpoints ---------------------------------------------------------------

def _encode(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _decode(s: str, shape) -> np.ndarray:
    return np.frombuffer(base64.b64decode(s), dtype="<f8").reshape(shape).astype(np.float64)


def checkpoint_to_dict(store: ParamStore, spec: GraphSpec, extra: dict | None = None) -> dict:
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "graph_spec": spec.to_dict(),
        "parameters": {
            name: {"shape": list(t.data.shape), "data": _encode(t.data)}
            for name, t in store.items()
        },
    }
    if extra:
        doc["extra"] = extra
    return doc


def checkpoint_from_dict(doc: dict) -> tuple[ParamStore, GraphSpec, dict]:
    version = doc.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {version!r}")
    spec = GraphSpec.from_dict(doc["graph_spec"])
    store = ParamStore()
    for name, entry in doc["parameters"].items():
        store.add(name, _decode(entry["data"], entry["shape"]))
    return store, spec, doc.get("extra", {})


def save_checkpoint(path, store: ParamStore, spec: GraphSpec, extra: dict | None = None) -> None:
    path = Path(path)
    try:
        path.write_text(json.dumps(checkpoint_to_dict(store, spec, extra), indent=1))
    except OSError as exc:
        raise OSError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path) -> tuple[ParamStore, GraphSpec, dict]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise OSError(f"cannot read checkpoint {path}: {exc}") from exc
    return checkpoint_from_dict(doc)
