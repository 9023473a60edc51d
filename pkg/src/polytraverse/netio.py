"""Reading and writing networks: canonical JSON and the NNet text format.

JSON layout::

    {"input_dim": P,
     "hidden": [{"weights": [[...]], "bias": [...]}, ...],
     "output": {"weights": [[...]], "bias": [...]},
     "labels": [...],                                  # optional
     "normalization": {"mean": [...], "scale": [...]}, # optional, inputs
     "output_normalization": {"mean": [...], "scale": [...]},  # optional
     "input_bounds": {"lower": [...], "upper": [...]}} # optional, null = unbounded

NNet is the ACAS Xu distribution format: ``//`` header comments, a counts
line, layer sizes, a legacy flag, input minimums/maximums, normalisation
means/ranges (inputs then one output entry), then per layer the weight rows
followed by one bias per line.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import InvalidInputError, ParseError, UnsupportedConfigurationError
from .network import LayerSpec, Normalization, ReluNetwork

FORMATS = ("json", "nnet")


def _floats(values) -> list:
    return [float(v) for v in np.asarray(values, dtype=np.float64).reshape(-1)]


def _bound_list(values) -> list:
    return [float(v) if math.isfinite(v) else None for v in _floats(values)]


def network_to_dict(net: ReluNetwork) -> dict:
    d = {
        "input_dim": net.input_dim,
        "hidden": [{"weights": layer.weights.tolist(), "bias": layer.bias.tolist()}
                   for layer in net.hidden],
        "output": {"weights": net.output.weights.tolist(), "bias": net.output.bias.tolist()},
    }
    if net.labels is not None:
        d["labels"] = list(net.labels)
    if net.normalization is not None and not net.normalization.is_identity():
        d["normalization"] = {"mean": _floats(net.normalization.mean),
                              "scale": _floats(net.normalization.scale)}
    if net.output_normalization is not None and not net.output_normalization.is_identity():
        d["output_normalization"] = {"mean": _floats(net.output_normalization.mean),
                                     "scale": _floats(net.output_normalization.scale)}
    if net.input_bounds is not None:
        d["input_bounds"] = {"lower": _bound_list(net.input_bounds[0]),
                             "upper": _bound_list(net.input_bounds[1])}
    return d


def _layer_from(obj, where: str) -> LayerSpec:
    if not isinstance(obj, dict) or "weights" not in obj or "bias" not in obj:
        raise ParseError("layer needs 'weights' and 'bias'", field=where)
    try:
        return LayerSpec(obj["weights"], obj["bias"])
    except (InvalidInputError, ValueError, TypeError) as exc:
        raise ParseError(str(exc), field=where) from None


def _norm_from(obj, where: str) -> Optional[Normalization]:
    if obj is None:
        return None
    try:
        return Normalization(obj["mean"], obj["scale"])
    except (KeyError, InvalidInputError, ValueError, TypeError) as exc:
        raise ParseError(f"bad normalization: {exc}", field=where) from None


def network_from_dict(d: dict) -> ReluNetwork:
    if not isinstance(d, dict):
        raise ParseError("top-level JSON value must be an object")
    for key in ("hidden", "output"):
        if key not in d:
            raise ParseError("missing key", field=key)
    if not isinstance(d["hidden"], list) or not d["hidden"]:
        raise ParseError("'hidden' must be a non-empty list", field="hidden")
    hidden = tuple(_layer_from(h, f"hidden[{i}]") for i, h in enumerate(d["hidden"]))
    output = _layer_from(d["output"], "output")
    if "input_dim" in d and d["input_dim"] != hidden[0].shape[1]:
        raise ParseError(f"input_dim {d['input_dim']} but first layer takes "
                         f"{hidden[0].shape[1]} inputs", field="input_dim")
    bounds = None
    if d.get("input_bounds") is not None:
        try:
            lo = [-math.inf if v is None else float(v) for v in d["input_bounds"]["lower"]]
            hi = [math.inf if v is None else float(v) for v in d["input_bounds"]["upper"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad input bounds: {exc}", field="input_bounds") from None
        bounds = (lo, hi)
    try:
        return ReluNetwork(hidden, output,
                           normalization=_norm_from(d.get("normalization"), "normalization"),
                           labels=d.get("labels"),
                           input_bounds=bounds,
                           output_normalization=_norm_from(d.get("output_normalization"),
                                                           "output_normalization"))
    except InvalidInputError as exc:
        raise ParseError(str(exc)) from None


# ---------------------------------------------------------------------------
# NNet
# ---------------------------------------------------------------------------


class _Lines:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0
        self.comments = []
        while self.pos < len(self.lines) and self.lines[self.pos].lstrip().startswith("//"):
            self.comments.append(self.lines[self.pos].lstrip()[2:].strip())
            self.pos += 1

    def values(self, what: str, count: Optional[int] = None) -> list:
        while self.pos < len(self.lines) and not self.lines[self.pos].strip():
            self.pos += 1
        if self.pos >= len(self.lines):
            raise ParseError(f"unexpected end of file while reading {what}", line=self.pos + 1)
        lineno = self.pos + 1
        raw = [tok.strip() for tok in self.lines[self.pos].split(",")]
        self.pos += 1
        toks = [t for t in raw if t]
        try:
            vals = [float(t) for t in toks]
        except ValueError:
            raise ParseError(f"non-numeric value in {what}", line=lineno) from None
        if count is not None and len(vals) != count:
            raise ParseError(f"{what}: expected {count} values, found {len(vals)}", line=lineno)
        return vals

    def ints(self, what: str, count: Optional[int] = None) -> list:
        lineno = self.pos + 1
        vals = self.values(what, count)
        if any(v != int(v) or v < 0 for v in vals):
            raise ParseError(f"{what} must be non-negative integers", line=lineno)
        return [int(v) for v in vals]

    def rest_is_blank(self) -> bool:
        return all(not ln.strip() for ln in self.lines[self.pos:])


def _parse_nnet(text: str) -> ReluNetwork:
    src = _Lines(text)
    counts = src.ints("counts line")
    if len(counts) < 3:
        raise ParseError("counts line needs layers, inputs, outputs", line=src.pos)
    n_layers, n_in, n_out = counts[:3]
    if n_layers < 2:
        raise ParseError("NNet needs at least one hidden layer", line=src.pos)
    sizes = src.ints("layer sizes", n_layers + 1)
    if sizes[0] != n_in or sizes[-1] != n_out:
        raise ParseError(f"layer sizes {sizes} disagree with {n_in} inputs / {n_out} outputs",
                         line=src.pos)
    src.values("legacy flag line")
    mins = src.values("input minimums", n_in)
    maxs = src.values("input maximums", n_in)
    means = src.values("normalization means", n_in + 1)
    ranges = src.values("normalization ranges", n_in + 1)
    layers = []
    for k in range(n_layers):
        rows = [src.values(f"layer {k + 1} weight row {r + 1}", sizes[k]) for r in range(sizes[k + 1])]
        bias = [src.values(f"layer {k + 1} bias {r + 1}", 1)[0] for r in range(sizes[k + 1])]
        W = np.array(rows, dtype=np.float64)
        if not np.all(np.isfinite(W)) or not np.all(np.isfinite(bias)):
            raise ParseError(f"non-finite weight in layer {k + 1}", line=src.pos)
        layers.append(LayerSpec(W, np.array(bias, dtype=np.float64)))
    if not src.rest_is_blank():
        raise ParseError("trailing data after last layer (layer sizes too small?)", line=src.pos + 1)
    labels = None
    for c in src.comments:
        if c.lower().startswith("labels:"):
            labels = [s.strip() for s in c.split(":", 1)[1].split(",")]
    norm = Normalization(means[:n_in], ranges[:n_in])
    out_norm = Normalization(means[n_in:], ranges[n_in:])
    try:
        return ReluNetwork(tuple(layers[:-1]), layers[-1],
                           normalization=None if norm.is_identity() else norm,
                           labels=labels,
                           input_bounds=(mins, maxs),
                           output_normalization=None if out_norm.is_identity() else out_norm)
    except InvalidInputError as exc:
        raise ParseError(str(exc)) from None


def _row(values) -> str:
    return ",".join(repr(float(v)) for v in values) + ","


def _format_nnet(net: ReluNetwork) -> str:
    sizes = [net.input_dim, *net.widths, net.output_dim]
    P = net.input_dim
    norm = net.normalization or Normalization(np.zeros(P), np.ones(P))
    out = net.output_normalization
    if out is None:
        out_mean, out_range = 0.0, 1.0
    elif np.all(out.mean == out.mean[0]) and np.all(out.scale == out.scale[0]):
        out_mean, out_range = float(out.mean[0]), float(out.scale[0])
    else:
        raise UnsupportedConfigurationError("NNet stores a single output mean/range")
    lo, hi = net.input_bounds if net.input_bounds is not None else (
        np.full(P, -math.inf), np.full(P, math.inf))
    lines = ["// ReLU network written by polytraverse"]
    if net.labels is not None:
        lines.append("// labels: " + ",".join(net.labels))
    lines.append(f"{len(sizes) - 1},{P},{net.output_dim},{max(sizes)},")
    lines.append(",".join(str(s) for s in sizes) + ",")
    lines.append("0,")
    lines.append(_row(lo))
    lines.append(_row(hi))
    lines.append(_row([*norm.mean, out_mean]))
    lines.append(_row([*norm.scale, out_range]))
    for layer in (*net.hidden, net.output):
        lines.extend(_row(r) for r in layer.weights)
        lines.extend(_row([v]) for v in layer.bias)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------


def load_network(source: Union[bytes, str], format: str = "json") -> ReluNetwork:
    """Parse a network from bytes/text in ``json`` or ``nnet`` format."""
    if format not in FORMATS:
        raise ParseError(f"unknown network format {format!r}")
    text = source.decode("utf-8") if isinstance(source, (bytes, bytearray)) else source
    if format == "json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
        return network_from_dict(data)
    return _parse_nnet(text)


def save_network(net: ReluNetwork, format: str = "json") -> str:
    if format not in FORMATS:
        raise ParseError(f"unknown network format {format!r}")
    if format == "json":
        return json.dumps(network_to_dict(net), indent=1)
    return _format_nnet(net)


def guess_format(path: Union[str, Path]) -> str:
    return "nnet" if str(path).lower().endswith(".nnet") else "json"


def read_network(path: Union[str, Path], format: Optional[str] = None) -> ReluNetwork:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    return load_network(data, format or guess_format(path))


def write_network(net: ReluNetwork, path: Union[str, Path], format: Optional[str] = None) -> None:
    Path(path).write_text(save_network(net, format or guess_format(path)))
