"""Synthetic tabular benchmarks for desk-scale experiments.

Accuracy is a rank transform of an additive latent quality (per-op effects,
per-(edge, op) effects, pairwise edge interactions, idiosyncratic noise), so
neighbouring genomes have related accuracies as in real cell benchmarks. Ranks
are mapped onto a skewed Beta quantile scale inside [low, high].
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from scipy.stats import beta as _beta

from .space import DEFAULT_ENUM_CAP, SpaceSpec, TabularBenchmark, enumerate_space


@dataclass(frozen=True)
class AccuracyModel:
    low: float = 10.0
    high: float = 94.5
    beta_a: float = 5.0
    beta_b: float = 1.5
    op_scale: float = 1.0
    edge_scale: float = 0.5
    interaction_scale: float = 0.25
    noise_scale: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.low < self.high <= 100.0:
            raise ValueError("need 0 <= low < high <= 100")
        if self.beta_a <= 0 or self.beta_b <= 0:
            raise ValueError("beta parameters must be positive")


def load_accuracy_model(path: str | Path) -> AccuracyModel:
    known = {f.name for f in fields(AccuracyModel)}
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":"
        if sep not in line:
            raise ValueError(f"{path}: line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split(sep, 1))
        if key not in known:
            raise ValueError(f"{path}: line {lineno}: unknown key {key!r}")
        values[key] = float(value)
    return AccuracyModel(**values)


def accuracy_model_text(model: AccuracyModel) -> str:
    return "".join(f"{k} = {v}\n" for k, v in asdict(model).items())


def generate_benchmark(spec: SpaceSpec, model: AccuracyModel | None = None, seed: int = 0,
                       cap: int = DEFAULT_ENUM_CAP, dataset: str = "synthetic") -> TabularBenchmark:
    model = model or AccuracyModel()
    archs = list(enumerate_space(spec, cap))
    rng = np.random.default_rng(seed)
    k, e = len(spec.ops), spec.num_edges
    op_effect = rng.normal(size=k) * model.op_scale
    edge_effect = rng.normal(size=(e, k)) * model.edge_scale
    inter = rng.normal(size=(e, e, k, k)) * model.interaction_scale
    genes = np.array([a.genes for a in archs], dtype=int).reshape(len(archs), e)
    latent = op_effect[genes].sum(axis=1) + edge_effect[np.arange(e), genes].sum(axis=1)
    for i in range(e):
        for j in range(i + 1, e):
            latent += inter[i, j, genes[:, i], genes[:, j]]
    latent += rng.normal(size=len(archs)) * model.noise_scale
    ranks = np.empty(len(archs))
    ranks[np.argsort(latent, kind="stable")] = np.arange(1, len(archs) + 1)
    q = _beta.ppf(ranks / (len(archs) + 1), model.beta_a, model.beta_b)
    acc = model.low + (model.high - model.low) * q
    acc = np.round(acc, 6)
    return TabularBenchmark(spec, {a: float(v) for a, v in zip(archs, acc)}, dataset, True)


BUILTIN_SPACES = {
    "nb201-shape": lambda: generate_benchmark(SpaceSpec.nb201(), seed=0, dataset="nb201-shape"),
    "tiny": lambda: generate_benchmark(SpaceSpec(3, ("zeroize", "skip_connect", "conv_3x3")),
                                       seed=0, dataset="tiny"),
}
