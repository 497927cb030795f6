"""Einsum-based model specification language.

A model is an ordered list of ops, each either a two-operand einsum
contraction ("bsm,mf->bsf"), a single-input broadcast/scatter
("bsm->bsmA"), or the reserved ``attention`` opcode carrying sub-equations.
Ops may be annotated with a sharded dimension (``parallel``), a
context-parallel dimension (``cp_dim``), and overlap settings.

Symbols are single characters. Dimension sizes are supplied separately via
:class:`DimensionBindings` so one spec covers many model scales.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .errors import SpecError, ValidationError

ATTENTION_OPCODE = "attention"

# Degree kinds for annotated symbols: expert-side symbols shard over the
# expert-parallel group, everything else over the tensor-parallel group.
EXPERT_SYMBOLS = frozenset({"E", "A"})


def degree_kind(symbol: str) -> str:
    return "ep" if symbol in EXPERT_SYMBOLS else "tp"


@dataclass(frozen=True)
class EinsumEquation:
    """A parsed einsum equation with derived symbol classes."""

    input_operands: tuple[str, ...]
    output_operand: str
    summation_symbols: frozenset[str]
    group_symbols: frozenset[str]

    @property
    def is_single_input(self) -> bool:
        return len(self.input_operands) == 1

    def all_symbols(self) -> frozenset[str]:
        syms = set(self.output_operand)
        for op in self.input_operands:
            syms.update(op)
        return frozenset(syms)

    def to_text(self) -> str:
        return ",".join(self.input_operands) + "->" + self.output_operand


def parse_equation(text: str) -> EinsumEquation:
    """Parse ``"bsm,mf->bsf"`` into an :class:`EinsumEquation`.

    Raises :class:`SpecError` on malformed arrow/comma structure, repeated
    symbols within one operand, or (for multi-input equations) output
    symbols absent from every input. Single-input equations must be
    broadcast/scatter forms: the output symbol set is a superset of the
    input's.
    """
    if not isinstance(text, str):
        raise SpecError(f"equation must be a string, got {type(text).__name__}")
    if text.count("->") != 1:
        raise SpecError(f"equation {text!r} must contain exactly one '->'")
    lhs, output = text.split("->")
    inputs = lhs.split(",")
    if not output or any(not op for op in inputs):
        raise SpecError(f"equation {text!r} has an empty operand")
    for operand in list(inputs) + [output]:
        if not all(ch.isalnum() for ch in operand):
            raise SpecError(f"operand {operand!r} contains non-symbol characters")
        if len(set(operand)) != len(operand):
            raise SpecError(f"operand {operand!r} repeats a symbol")

    input_syms = set().union(*(set(op) for op in inputs))
    out_syms = set(output)
    if len(inputs) == 1:
        if not out_syms >= set(inputs[0]):
            raise SpecError(
                f"single-input equation {text!r} must be a broadcast "
                "(output symbols must include all input symbols)"
            )
    else:
        missing = out_syms - input_syms
        if missing:
            raise SpecError(
                f"output symbols {sorted(missing)} of {text!r} appear in no input"
            )

    summation = frozenset(input_syms - out_syms)
    groups = frozenset(
        s for s in out_syms if all(s in op for op in inputs)
    ) if len(inputs) > 1 else frozenset()
    return EinsumEquation(tuple(inputs), output, summation, groups)


@dataclass(frozen=True)
class OpSpec:
    """One operation of a model spec, with parallelism/overlap annotations."""

    equation: Optional[EinsumEquation]  # None for the attention opcode
    label: str
    parallel: Optional[str] = None
    cp_dim: Optional[str] = None
    overlap_stage: Optional[int] = None
    overlap_sm: Optional[int] = None
    overlap_dim: Optional[str] = None
    attn_eqs: tuple["OpSpec", ...] = ()

    @property
    def is_attention(self) -> bool:
        return self.equation is None

    def validate(self) -> None:
        overlap_fields = (self.overlap_stage, self.overlap_sm, self.overlap_dim)
        n_set = sum(f is not None for f in overlap_fields)
        if n_set not in (0, 3):
            raise SpecError(
                f"op {self.label!r}: overlap_stage/overlap_sm/overlap must be "
                "all present or all absent"
            )
        if self.is_attention:
            if not self.attn_eqs:
                raise SpecError(f"op {self.label!r}: attention opcode requires attn_eqs")
            for sub in self.attn_eqs:
                sub.validate()
        else:
            if self.attn_eqs:
                raise SpecError(f"op {self.label!r}: attn_eqs only valid with 'attention'")
            syms = self.equation.all_symbols()
            for name, sym in (("parallel", self.parallel),
                              ("cp_dim", self.cp_dim),
                              ("overlap", self.overlap_dim)):
                if sym is not None and sym not in syms:
                    raise SpecError(
                        f"op {self.label!r}: {name} symbol {sym!r} not in equation "
                        f"{self.equation.to_text()!r}"
                    )
        if n_set == 3:
            if self.overlap_stage < 1:
                raise SpecError(f"op {self.label!r}: overlap_stage must be >= 1")
            if self.overlap_sm < 1:
                raise SpecError(f"op {self.label!r}: overlap_sm must be >= 1")
            if self.parallel is None:
                raise SpecError(f"op {self.label!r}: overlap requires a parallel symbol")
            if not self.is_attention and self.parallel not in self.equation.summation_symbols:
                raise SpecError(
                    f"op {self.label!r}: overlap requires the parallel symbol to be "
                    "summed (no collective to hide otherwise)"
                )

    def to_dict(self) -> dict:
        d: dict = {"eq": ATTENTION_OPCODE if self.is_attention else self.equation.to_text(),
                   "label": self.label}
        if self.parallel is not None:
            d["parallel"] = self.parallel
        if self.cp_dim is not None:
            d["cp_dim"] = self.cp_dim
        if self.overlap_stage is not None:
            d["overlap_stage"] = self.overlap_stage
            d["overlap_sm"] = self.overlap_sm
            d["overlap"] = self.overlap_dim
        if self.attn_eqs:
            d["attn_eqs"] = [sub.to_dict() for sub in self.attn_eqs]
        return d


_OP_KEYS = {"eq", "parallel", "cp_dim", "overlap_stage", "overlap_sm",
            "overlap", "label", "attn_eqs"}


def _parse_op(obj: dict, index: int) -> OpSpec:
    unknown = set(obj) - _OP_KEYS
    if unknown:
        raise SpecError(f"op #{index}: unknown field(s) {sorted(unknown)}")
    if "eq" not in obj:
        raise SpecError(f"op #{index}: missing 'eq'")
    eq_text = obj["eq"]
    label = obj.get("label", f"op{index}")
    attn_eqs = tuple(
        _parse_op(sub, i) for i, sub in enumerate(obj.get("attn_eqs", []))
    )
    equation = None if eq_text == ATTENTION_OPCODE else parse_equation(eq_text)
    op = OpSpec(
        equation=equation,
        label=label,
        parallel=obj.get("parallel"),
        cp_dim=obj.get("cp_dim"),
        overlap_stage=obj.get("overlap_stage"),
        overlap_sm=obj.get("overlap_sm"),
        overlap_dim=obj.get("overlap"),
        attn_eqs=attn_eqs,
    )
    op.validate()
    return op


@dataclass(frozen=True)
class ModelSpec:
    """An ordered op list describing one transformer layer, repeated ``layers`` times."""

    ops: tuple[OpSpec, ...]
    layers: int = 1

    def validate(self) -> None:
        if not self.ops:
            raise SpecError("model spec has no ops")
        if self.layers < 1:
            raise SpecError("layers must be >= 1")
        for op in self.ops:
            op.validate()

    def symbols(self) -> frozenset[str]:
        syms: set[str] = set()
        stack = list(self.ops)
        while stack:
            op = stack.pop()
            if op.is_attention:
                stack.extend(op.attn_eqs)
            else:
                syms |= op.equation.all_symbols()
        return frozenset(syms)

    def to_dict(self) -> dict:
        return {"layers": self.layers, "ops": [op.to_dict() for op in self.ops]}


def parse_model_spec(document: str | dict) -> ModelSpec:
    """Parse a model-spec document (JSON text or an already-decoded dict)."""
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SpecError(f"model spec is not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise SpecError("model spec must be a JSON object")
    unknown = set(document) - {"layers", "ops", "format_version"}
    if unknown:
        raise SpecError(f"model spec: unknown field(s) {sorted(unknown)}")
    ops_raw = document.get("ops")
    if not isinstance(ops_raw, list) or not ops_raw:
        raise SpecError("model spec needs a nonempty 'ops' array")
    spec = ModelSpec(
        ops=tuple(_parse_op(op, i) for i, op in enumerate(ops_raw)),
        layers=int(document.get("layers", 1)),
    )
    spec.validate()
    return spec


def load_model_spec(path) -> ModelSpec:
    with open(path) as fh:
        return parse_model_spec(fh.read())


# Appendix-style derived-symbol relations, checked when all parts are bound:
# i = 2 + r (fused QKV), F = 2*f (fused gate&up), H = r*K (GQA).
_DERIVED = (
    ("i", lambda d: 2 + d["r"], ("r",), "i = 2 + r"),
    ("F", lambda d: 2 * d["f"], ("f",), "F = 2*f"),
    ("H", lambda d: d["r"] * d["K"], ("r", "K"), "H = r*K"),
)


@dataclass(frozen=True)
class DimensionBindings:
    """Symbol -> size map plus the data type width in bytes."""

    sizes: dict[str, int] = field(default_factory=dict)
    dtype_bytes: int = 2
    layers: Optional[int] = None

    def __post_init__(self):
        if self.dtype_bytes < 1:
            raise ValidationError("dtype_bytes must be a positive integer")
        for sym, size in self.sizes.items():
            if len(sym) != 1:
                raise ValidationError(f"symbol {sym!r} is not a single character")
            if size <= 0:
                raise ValidationError(f"symbol {sym!r} has non-positive size {size}")

    def check_derived(self) -> None:
        for sym, fn, deps, rule in _DERIVED:
            if sym in self.sizes and all(d in self.sizes for d in deps):
                expected = fn(self.sizes)
                if self.sizes[sym] != expected:
                    raise ValidationError(
                        f"inconsistent bindings: {rule} requires {sym}={expected}, "
                        f"got {self.sizes[sym]}"
                    )

    def with_sizes(self, **extra) -> "DimensionBindings":
        merged = dict(self.sizes)
        merged.update(extra)
        return DimensionBindings(merged, self.dtype_bytes, self.layers)

    def size(self, symbol: str):
        try:
            return self.sizes[symbol]
        except KeyError:
            raise ValidationError(f"unbound symbol {symbol!r}") from None


# Dims-file keys that are not single-character einsum symbols.
_DIMS_ALIASES = {"num_experts": "E", "top_k": "A"}
_DIMS_META = {"dtype_bytes", "layers", "format_version"}


def load_bindings(path) -> DimensionBindings:
    """Load a flat key->integer dims file (symbols plus dtype_bytes/layers aliases)."""
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: dims file must be a JSON object")
    sizes: dict[str, int] = {}
    for key, value in raw.items():
        if key in _DIMS_META:
            continue
        sym = _DIMS_ALIASES.get(key, key)
        if len(sym) != 1:
            raise ValidationError(f"{path}: unknown dims key {key!r}")
        sizes[sym] = int(value)
    dims = DimensionBindings(
        sizes,
        dtype_bytes=int(raw.get("dtype_bytes", 2)),
        layers=int(raw["layers"]) if "layers" in raw else None,
    )
    dims.check_derived()
    return dims


@dataclass(frozen=True)
class EvalContextInfo:
    """Result of cross-checking a spec against bindings and parallel degrees."""

    spec: ModelSpec
    dims: DimensionBindings
    degrees: dict[str, int]  # {"tp": n, "ep": n, "cp": n}
    sharded_sizes: dict[str, int]  # per-GPU size of each annotated symbol


# Symbols bound per phase at evaluation time, not from the dims file.
_RUNTIME_SYMBOLS = frozenset({"b", "s", "z", "T"})


def validate_bindings(spec: ModelSpec, dims: DimensionBindings,
                      degrees: dict[str, int]) -> EvalContextInfo:
    """Check that every spec symbol is bound and every annotated dimension shards evenly."""
    spec.validate()
    dims.check_derived()
    full_degrees = {"tp": 1, "ep": 1, "cp": 1}
    for kind, deg in degrees.items():
        if kind not in full_degrees:
            raise ValidationError(f"unknown parallelism kind {kind!r}")
        if deg < 1:
            raise ValidationError(f"{kind} degree must be >= 1, got {deg}")
        full_degrees[kind] = int(deg)

    unbound = spec.symbols() - set(dims.sizes) - _RUNTIME_SYMBOLS
    if unbound:
        raise ValidationError(f"unbound symbol(s) {sorted(unbound)}")

    sharded: dict[str, int] = {}

    def check_op(op: OpSpec) -> None:
        for sym, kind in ((op.parallel, None), (op.cp_dim, "cp")):
            if sym is None or sym in _RUNTIME_SYMBOLS:
                continue
            deg = full_degrees[kind or degree_kind(sym)]
            size = dims.size(sym)
            if size % deg:
                raise ValidationError(
                    f"op {op.label!r}: symbol {sym!r} size {size} not divisible "
                    f"by degree {deg}"
                )
            sharded[sym] = size // deg
        for sub in op.attn_eqs:
            check_op(sub)

    for op in spec.ops:
        check_op(op)
    return EvalContextInfo(spec, dims, full_degrees, sharded)
