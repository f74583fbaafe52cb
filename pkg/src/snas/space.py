"""Fixed-topology cell spaces: encodings, genetic operators, tabular benchmarks."""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

NB201_OPS = ("zeroize", "skip_connect", "conv_3x3", "conv_1x1", "avg_pool_3x3")
DEFAULT_ENUM_CAP = 10**7
SEP = "|"


class ParseError(ValueError):
    def __init__(self, message: str, position: int | None = None):
        super().__init__(message)
        self.position = position


class SchemaError(ValueError):
    pass


class SpaceTooLargeError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpaceSpec:
    num_nodes: int
    ops: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        if self.num_nodes < 2:
            raise ValueError("num_nodes must be >= 2")
        if len(self.ops) < 1:
            raise ValueError("need at least one operation")
        if len(set(self.ops)) != len(self.ops):
            raise ValueError("duplicate operation tags")
        for op in self.ops:
            if not op or SEP in op or "," in op:
                raise ValueError(f"invalid operation tag {op!r}")

    @property
    def num_edges(self) -> int:
        return self.num_nodes * (self.num_nodes - 1) // 2

    @property
    def size(self) -> int:
        return len(self.ops) ** self.num_edges

    def edges(self) -> list[tuple[int, int]]:
        """Edges in target-node-major order: (0,1),(0,2),(1,2),(0,3),..."""
        return [(src, dst) for dst in range(1, self.num_nodes) for src in range(dst)]

    @classmethod
    def nb201(cls) -> "SpaceSpec":
        return cls(4, NB201_OPS)


@dataclass(frozen=True, order=True)
class CellEncoding:
    """Operation index per edge; ``spec`` is carried for validation."""

    genes: tuple[int, ...]
    spec: SpaceSpec = field(compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "genes", tuple(int(g) for g in self.genes))
        if len(self.genes) != self.spec.num_edges:
            raise ValueError(f"expected {self.spec.num_edges} genes, got {len(self.genes)}")
        k = len(self.spec.ops)
        if any(g < 0 or g >= k for g in self.genes):
            raise ValueError(f"gene out of range for {k} ops: {self.genes}")

    def __hash__(self):
        return hash(self.genes)

    def __eq__(self, other):
        if not isinstance(other, CellEncoding):
            return NotImplemented
        return self.genes == other.genes and self.spec == other.spec

    @property
    def ops(self) -> tuple[str, ...]:
        return tuple(self.spec.ops[g] for g in self.genes)

    def __str__(self):
        return canonical_string(self)


def canonical_string(enc: CellEncoding) -> str:
    return SEP.join(enc.ops)


def parse_encoding(text: str, spec: SpaceSpec) -> CellEncoding:
    fields = text.strip().split(SEP)
    if len(fields) != spec.num_edges:
        raise ParseError(
            f"expected {spec.num_edges} operations, got {len(fields)} in {text!r}")
    index = {op: i for i, op in enumerate(spec.ops)}
    genes = []
    for pos, tag in enumerate(fields, start=1):
        if tag not in index:
            raise ParseError(f"unknown operation {tag!r} at position {pos}", position=pos)
        genes.append(index[tag])
    return CellEncoding(tuple(genes), spec)


def enumerate_space(spec: SpaceSpec, cap: int = DEFAULT_ENUM_CAP) -> Iterator[CellEncoding]:
    if spec.size > cap:
        raise SpaceTooLargeError(f"space has {spec.size} architectures, cap is {cap}")
    for genes in itertools.product(range(len(spec.ops)), repeat=spec.num_edges):
        yield CellEncoding(genes, spec)


def sample_uniform(spec: SpaceSpec, rng: np.random.Generator) -> CellEncoding:
    genes = rng.integers(0, len(spec.ops), size=spec.num_edges)
    return CellEncoding(tuple(genes.tolist()), spec)


def mutate(enc: CellEncoding, rng: np.random.Generator) -> CellEncoding:
    """Replace the op on one uniformly chosen edge with a different op."""
    k = len(enc.spec.ops)
    if k < 2:
        raise ValueError("mutation needs at least two operations")
    edge = int(rng.integers(enc.spec.num_edges))
    shift = int(rng.integers(1, k))
    genes = list(enc.genes)
    genes[edge] = (genes[edge] + shift) % k
    return CellEncoding(tuple(genes), enc.spec)


def mutations_all(enc: CellEncoding) -> list[CellEncoding]:
    out = []
    for edge, current in enumerate(enc.genes):
        for op in range(len(enc.spec.ops)):
            if op == current:
                continue
            genes = list(enc.genes)
            genes[edge] = op
            out.append(CellEncoding(tuple(genes), enc.spec))
    return out


def crossover(a: CellEncoding, b: CellEncoding, rng: np.random.Generator,
              kind: str = "uniform") -> CellEncoding:
    if a.spec != b.spec:
        raise ValueError("parents belong to different spaces")
    n = a.spec.num_edges
    if kind == "uniform":
        take_a = rng.random(n) < 0.5
    elif kind == "one_point":
        cut = int(rng.integers(0, n + 1))
        take_a = np.arange(n) < cut
    else:
        raise ValueError(f"unknown crossover kind {kind!r}")
    genes = tuple(ga if t else gb for ga, gb, t in zip(a.genes, b.genes, take_a))
    return CellEncoding(genes, a.spec)


def hamming(a: CellEncoding, b: CellEncoding) -> int:
    return sum(x != y for x, y in zip(a.genes, b.genes))


@dataclass
class TabularBenchmark:
    spec: SpaceSpec
    accuracy: dict[CellEncoding, float]
    dataset: str = "synthetic"
    strict: bool = True

    def __len__(self):
        return len(self.accuracy)

    def __getitem__(self, enc: CellEncoding) -> float:
        try:
            return self.accuracy[enc]
        except KeyError:
            raise KeyError(f"architecture {canonical_string(enc)} not in benchmark") from None

    def __contains__(self, enc) -> bool:
        return enc in self.accuracy

    def encodings(self) -> list[CellEncoding]:
        return list(self.accuracy)

    def best(self) -> tuple[CellEncoding, float]:
        enc = max(self.accuracy, key=self.accuracy.__getitem__)
        return enc, self.accuracy[enc]


def load_tabular(path: str | Path, spec: SpaceSpec, strict: bool = True,
                 dataset: str | None = None) -> TabularBenchmark:
    """Read an ``encoding,accuracy`` CSV. Row numbers in errors are 1-based file lines."""
    path = Path(path)
    acc: dict[CellEncoding, float] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["encoding", "accuracy"]:
            raise SchemaError(f"{path}: line 1: header must be 'encoding,accuracy', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise SchemaError(f"{path}: line {lineno}: expected 2 fields, got {len(row)}")
            try:
                enc = parse_encoding(row[0], spec)
            except ParseError as exc:
                raise SchemaError(f"{path}: line {lineno}: {exc}") from exc
            try:
                value = float(row[1])
            except ValueError:
                raise SchemaError(f"{path}: line {lineno}: bad accuracy {row[1]!r}") from None
            if not math.isfinite(value) or not 0.0 <= value <= 100.0:
                raise SchemaError(f"{path}: line {lineno}: accuracy {value} outside [0, 100]")
            if enc in acc:
                raise SchemaError(f"{path}: line {lineno}: duplicate encoding {row[0]}")
            acc[enc] = value
    if strict and len(acc) != spec.size:
        raise SchemaError(
            f"{path}: strict mode expects {spec.size} architectures, found {len(acc)}")
    return TabularBenchmark(spec, acc, dataset or path.stem, strict)


def write_tabular(bench: TabularBenchmark, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["encoding", "accuracy"])
        for enc in sorted(bench.accuracy):
            w.writerow([canonical_string(enc), repr(float(bench.accuracy[enc]))])


def infer_spec(encodings: Sequence[str], ops: Sequence[str] = NB201_OPS) -> SpaceSpec:
    """Node count from encoding arity; raises if the arity is not triangular."""
    if not encodings:
        raise SchemaError("no encodings to infer a space from")
    arity = len(encodings[0].split(SEP))
    nodes = (1 + math.isqrt(1 + 8 * arity)) // 2
    if nodes * (nodes - 1) // 2 != arity:
        raise SchemaError(f"{arity} edges does not match any complete cell DAG")
    return SpaceSpec(nodes, tuple(ops))
