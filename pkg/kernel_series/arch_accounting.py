"""Whole-network parameter accounting from an architecture descriptor and a harmonic configuration.

A descriptor is a JSON object::

    {"name": "resnet20", "reduction_basis": "total",
     "layers": [{"id": "conv1", "block_tag": "stem", "c_out": 16, "c_in": 3, "k": 3,
                 "groups": 1, "bias": false, "compressible": true}, ...]}

Normalization layers are written as k = 1 depthwise entries with bias (2·c parameters), layer
scale vectors as k = 1 depthwise entries without bias.
"""
import json
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple, TypedDict

from ._errors import ArgumentError, ConfigError
from .utilities import read_bytes

logger = logging.getLogger('kernel_series')

_LAYER_FIELDS = ("id", "block_tag", "c_out", "c_in", "k", "groups", "bias", "compressible")
_REPEAT = re.compile(r'^(\d+)\s*[x×]\s*(\d+)$', re.IGNORECASE)


class ReductionBasis(str, Enum):
    """
    Which parameter count a reduction percentage is taken against.

    * TOTAL: every parameter of the network.
    * COMPRESSIBLE: only the parameters of the compressible spatial convolutions.
    """
    TOTAL = "total"
    COMPRESSIBLE = "compressible"


@dataclass(frozen=True)
class ArchLayer:
    id: str
    block_tag: str
    c_out: int
    c_in: int
    k: int
    groups: int = 1
    bias: bool = False
    compressible: bool = False

    def __post_init__(self):
        for name in ("c_out", "c_in", "k", "groups"):
            if getattr(self, name) < 1:
                raise ConfigError(f"layer {self.id!r}: {name} must be positive, got {getattr(self, name)}")
        if self.c_in % self.groups or self.c_out % self.groups:
            raise ConfigError(f"layer {self.id!r}: channels are not divisible by groups={self.groups}")
        if self.compressible and self.k < 2:
            raise ConfigError(f"layer {self.id!r}: a {self.k}x{self.k} layer cannot be compressible")

    def params(self, n: Optional[int] = None) -> int:
        """Weights plus bias, with the kernel side replaced by ``n`` when given."""
        side = self.k if n is None else n
        return self.c_out * (self.c_in // self.groups) * side * side + (self.c_out if self.bias else 0)


@dataclass(frozen=True)
class ArchDescriptor:
    """
    :class:`ArchDescriptor <ArchDescriptor>` an ordered layer list with block tags.
    """

    name: str
    layers: Tuple[ArchLayer, ...]
    reduction_basis: ReductionBasis = ReductionBasis.TOTAL
    "Default basis of reduction_pct; ConvNeXt accounting uses the compressible subset."

    def __post_init__(self):
        if not self.layers:
            raise ConfigError(f"descriptor {self.name!r} has no layers")
        seen = set()
        for layer in self.layers:
            if layer.id in seen:
                raise ConfigError(f"descriptor {self.name!r}: duplicate layer id {layer.id!r}")
            seen.add(layer.id)

    @property
    def blocks(self) -> List[str]:
        """Block tags of the compressible layers, in order of first appearance."""
        tags: List[str] = []
        for layer in self.compressible_layers:
            if layer.block_tag not in tags:
                tags.append(layer.block_tag)
        return tags

    @property
    def compressible_layers(self) -> List[ArchLayer]:
        return [layer for layer in self.layers if layer.compressible]


@dataclass(frozen=True)
class HarmonicConfig:
    """
    :class:`HarmonicConfig <HarmonicConfig>` harmonic count per compressible layer.
    """

    per_layer: Dict[str, int]
    "Layer id → n for every compressible layer."

    text: str = ""
    "The string the configuration was parsed from."

    per_block: Optional[Dict[str, int]] = field(default=None)
    "Block tag → n when the configuration was a comma list, None in repeat notation."


class LayerRow(TypedDict):
    id: str
    block_tag: str
    k: int
    n: Optional[int]
    original: int
    compressed: int


class ParamTotals(TypedDict):
    total: int
    compressible: int
    baseline_total: int
    baseline_compressible: int
    reduction_pct: float
    retained_pct: float
    basis: str
    layers: List[LayerRow]


def _layer_from_dict(entry, index: int, source: str) -> ArchLayer:
    if not isinstance(entry, dict):
        raise ConfigError(f"{source}: layer #{index} is not an object")
    missing = [f for f in _LAYER_FIELDS if f not in entry]
    if missing:
        raise ConfigError(f"{source}: layer #{index} lacks field(s) {', '.join(missing)}")
    unknown = sorted(set(entry) - set(_LAYER_FIELDS))
    if unknown:
        raise ConfigError(f"{source}: layer #{index} has unknown field(s) {', '.join(unknown)}")
    for name in ("c_out", "c_in", "k", "groups"):
        if not isinstance(entry[name], int) or isinstance(entry[name], bool):
            raise ConfigError(f"{source}: layer #{index} field {name} must be an integer")
    for name in ("bias", "compressible"):
        if not isinstance(entry[name], bool):
            raise ConfigError(f"{source}: layer #{index} field {name} must be true or false")
    return ArchLayer(id=str(entry["id"]), block_tag=str(entry["block_tag"]),
                     c_out=entry["c_out"], c_in=entry["c_in"], k=entry["k"], groups=entry["groups"],
                     bias=entry["bias"], compressible=entry["compressible"])


def descriptor_from_dict(data, source: str = "<descriptor>") -> ArchDescriptor:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be an object")
    layers = data.get("layers")
    if not isinstance(layers, list):
        raise ConfigError(f"{source}: field 'layers' must be a list")
    try:
        basis = ReductionBasis(data.get("reduction_basis", ReductionBasis.TOTAL.value))
    except ValueError:
        raise ConfigError(f"{source}: reduction_basis must be 'total' or 'compressible', "
                          f"got {data.get('reduction_basis')!r}") from None
    return ArchDescriptor(
        name=str(data.get("name", source)),
        layers=tuple(_layer_from_dict(entry, idx, source) for idx, entry in enumerate(layers)),
        reduction_basis=basis,
    )


def load_descriptor(path) -> ArchDescriptor:
    """
    Read an architecture descriptor.
    :param path: A JSON descriptor file.
    :return: The validated descriptor.
    :raises ConfigError: if the file is not valid JSON or a field is missing or malformed.
    """
    try:
        data = json.loads(read_bytes(path).decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"{path}: not a JSON descriptor ({e})") from e
    arch = descriptor_from_dict(data, source=str(path))
    logger.debug("Loaded descriptor %s with %d layers", arch.name, len(arch.layers))
    return arch


def _parse_count(token: str) -> int:
    try:
        n = int(token)
    except ValueError:
        raise ConfigError(f"bad harmonic count {token!r}") from None
    if n < 1:
        raise ConfigError(f"harmonic count must be at least 1, got {token!r}")
    return n


def _expand_repeats(tokens: List[str]) -> List[Tuple[int, int]]:
    """One (count, token index) pair per layer the tokens cover."""
    counts: List[Tuple[int, int]] = []
    for idx, token in enumerate(tokens):
        match = _REPEAT.match(token)
        if match:
            n, times = _parse_count(match.group(1)), int(match.group(2))
            if times < 1:
                raise ConfigError(f"repeat count must be at least 1 in {token!r}")
            counts.extend([(n, idx)] * times)
        else:
            counts.append((_parse_count(token), idx))
    return counts


def parse_config(text: str, arch: ArchDescriptor) -> HarmonicConfig:
    """
    Parse a harmonic configuration string against a descriptor.

    ``"6,3,3,3,2"`` gives one count per block. ``"7x3,7x3,7x9,6x3"`` gives counts to consecutive
    compressible layers, each token covering as many layers as its repeat count (1 when absent).
    Empty tokens are ignored.

    :raises ConfigError: on a malformed token, a count mismatch, or n > k for some layer.
    """
    tokens = [t.strip() for t in text.split(',')]
    tokens = [t for t in tokens if t]
    if not tokens:
        raise ConfigError("empty harmonic configuration")
    layers = arch.compressible_layers
    per_block: Optional[Dict[str, int]] = None

    if any('x' in t.lower() or '×' in t for t in tokens):
        counts = _expand_repeats(tokens)
        if len(counts) != len(layers):
            raise ConfigError(f"{text!r} expands to {len(counts)} layers, "
                              f"{arch.name} has {len(layers)} compressible layers")
        per_layer = {layer.id: n for layer, (n, _) in zip(layers, counts)}
        source = {layer.id: idx for layer, (_, idx) in zip(layers, counts)}
    else:
        blocks = arch.blocks
        if len(tokens) != len(blocks):
            raise ConfigError(f"{text!r} has {len(tokens)} values, "
                              f"{arch.name} has {len(blocks)} blocks ({', '.join(blocks)})")
        per_block = {tag: _parse_count(token) for tag, token in zip(blocks, tokens)}
        per_layer = {layer.id: per_block[layer.block_tag] for layer in layers}
        source = {layer.id: blocks.index(layer.block_tag) for layer in layers}

    for layer in layers:
        if per_layer[layer.id] > layer.k:
            idx = source[layer.id]
            raise ConfigError(f"n={per_layer[layer.id]} exceeds k={layer.k} for layer {layer.id!r} "
                              f"(token {tokens[idx]!r} at position {idx + 1})")
    return HarmonicConfig(per_layer=per_layer, text=text, per_block=per_block)


def _percent(part: int, whole: int) -> float:
    return 100.0 * part / whole if whole else 100.0


def total_params(arch: ArchDescriptor, config: Optional[HarmonicConfig] = None,
                 compressible_only: Optional[bool] = None) -> ParamTotals:
    """
    Baseline and compressed parameter counts of a network.
    :param arch: The descriptor.
    :param config: Harmonic counts; None reports the baseline.
    :param compressible_only: Take percentages against the compressible subset rather than the total.
        None uses the descriptor's own ``reduction_basis``.
    :return: Totals, percentages and a per-layer table.
    :raises ArgumentError: if a compressible layer is not covered or its n exceeds its k.
    """
    if compressible_only is None:
        compressible_only = arch.reduction_basis is ReductionBasis.COMPRESSIBLE
    rows: List[LayerRow] = []
    totals = {"total": 0, "compressible": 0, "baseline_total": 0, "baseline_compressible": 0}
    for layer in arch.layers:
        n: Optional[int] = None
        if layer.compressible and config is not None:
            if layer.id not in config.per_layer:
                raise ArgumentError(f"configuration does not cover layer {layer.id!r}")
            n = config.per_layer[layer.id]
            if not 1 <= n <= layer.k:
                raise ArgumentError(f"n={n} is outside 1..{layer.k} for layer {layer.id!r}")
        original, compressed = layer.params(), layer.params(n)
        rows.append({"id": layer.id, "block_tag": layer.block_tag, "k": layer.k, "n": n,
                     "original": original, "compressed": compressed})
        totals["baseline_total"] += original
        totals["total"] += compressed
        if layer.compressible:
            totals["baseline_compressible"] += original
            totals["compressible"] += compressed

    if compressible_only:
        kept, base = totals["compressible"], totals["baseline_compressible"]
    else:
        kept, base = totals["total"], totals["baseline_total"]
    retained = _percent(kept, base)
    return {
        **totals,
        "reduction_pct": 100.0 - retained,
        "retained_pct": retained,
        "basis": (ReductionBasis.COMPRESSIBLE if compressible_only else ReductionBasis.TOTAL).value,
        "layers": rows,
    }
