"""Stochastic score sources standing in for zero-shot ranking functions.

Every oracle draws ``count`` samples for an architecture via ``evaluate``.
Per-run state (draw cursors, running normalization bounds) lives on the
instance; call ``fork(stream)`` to get an independent per-run copy.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import erfcx, ndtr, ndtri

from .space import CellEncoding, TabularBenchmark, canonical_string
from .stats import coefficient_of_variation

log = logging.getLogger(__name__)

LOWER_BOUND = 1e-6
MIN_MEAN = 1e-3
MAX_STD_RATIO = 0.95
BLOCK = 64
NOISE_FAMILIES = ("normal", "lognormal")


def stable_hash(*parts) -> int:
    """64-bit hash of the string forms of ``parts``; stable across processes."""
    h = hashlib.blake2b("\x1f".join(str(p) for p in parts).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


class DegenerateBenchmarkError(ValueError):
    pass


class ReplayFormatError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseProfile:
    cv_at_worst: float
    cv_at_best: float
    signal_gamma: float = 1.0
    bias_sigma: float = 0.0
    batch_size_label: int = 64
    name: str = "custom"
    family: str = "normal"

    def __post_init__(self):
        if self.family not in NOISE_FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}; expected one of {NOISE_FAMILIES}")
        if self.cv_at_best < 0 or self.cv_at_worst < 0:
            raise ValueError("CV targets must be non-negative")
        if self.signal_gamma <= 0:
            raise ValueError("signal_gamma must be positive")
        if self.bias_sigma < 0:
            raise ValueError("bias_sigma must be non-negative")

    def check_declining(self) -> None:
        if self.cv_at_worst < self.cv_at_best:
            raise ValueError("profile requires cv_at_worst >= cv_at_best")


# low/medium/high: right-skewed noise with CV falling steeply as accuracy
# rises, so weak, noisy architectures throw outliers that can mislead a mean.
BUILTIN_PROFILES = {
    "noiseless": NoiseProfile(0.0, 0.0, 1.0, 0.0, 64, "noiseless"),
    "low": NoiseProfile(1.5, 0.15, 1.0, 0.05, 64, "low", "lognormal"),
    "medium": NoiseProfile(2.5, 0.25, 1.0, 0.05, 64, "medium", "lognormal"),
    "high": NoiseProfile(4.0, 0.4, 1.0, 0.05, 64, "high", "lognormal"),
    "constant": NoiseProfile(0.2, 0.2, 1.0, 0.0, 64, "constant"),
}


_PROFILE_KEYS = {f.name: f.type for f in fields(NoiseProfile)}


def load_profile(path: str | Path) -> NoiseProfile:
    """Flat ``key = value`` text file; ``#`` starts a comment."""
    path = Path(path)
    values: dict[str, object] = {"name": path.stem}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":"
        if sep not in line:
            raise ValueError(f"{path}: line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split(sep, 1))
        if key not in _PROFILE_KEYS:
            raise ValueError(f"{path}: line {lineno}: unknown key {key!r}")
        if key in ("name", "family"):
            values[key] = value
        elif key == "batch_size_label":
            values[key] = int(value)
        else:
            values[key] = float(value)
    missing = {"cv_at_worst", "cv_at_best"} - values.keys()
    if missing:
        raise ValueError(f"{path}: missing keys {sorted(missing)}")
    return NoiseProfile(**values)


def write_profile(profile: NoiseProfile, path: str | Path) -> None:
    lines = [f"{k} = {v}" for k, v in asdict(profile).items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def resolve_profile(ref: str) -> NoiseProfile:
    if Path(ref).is_file():
        return load_profile(ref)
    if ref in BUILTIN_PROFILES:
        return BUILTIN_PROFILES[ref]
    raise ValueError(f"no profile file or builtin profile named {ref!r}")


def _mills(alpha):
    """phi(a) / (1 - Phi(a)), stable for large positive a."""
    return math.sqrt(2.0 / math.pi) / erfcx(np.asarray(alpha) / math.sqrt(2.0))


_ALPHA_GRID = np.linspace(-8.0, 8.0, 16001)
_LAM_GRID = _mills(_ALPHA_GRID)
_RATIO_GRID = np.sqrt(1 + _ALPHA_GRID * _LAM_GRID - _LAM_GRID**2) / (_LAM_GRID - _ALPHA_GRID)


def truncated_normal_params(mean, var, lower: float = LOWER_BOUND):
    """Parent-normal (loc, scale, alpha) whose truncation to [lower, inf)
    has the requested mean and variance.

    ``alpha`` is the standardized truncation point; ``-inf`` means truncation
    is negligible. Requested std/mean ratios above MAX_STD_RATIO are clipped,
    as no lower-truncated normal can reach a ratio of 1.
    """
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    shifted = mean - lower
    ratio = np.sqrt(var) / shifted
    clipped = ratio > MAX_STD_RATIO
    ratio = np.minimum(ratio, MAX_STD_RATIO)
    alpha = np.interp(ratio, _RATIO_GRID, _ALPHA_GRID)
    alpha = np.where(ratio < _RATIO_GRID[0], -np.inf, alpha)
    finite = np.isfinite(alpha)
    a = np.where(finite, alpha, 0.0)
    lam = np.where(finite, _mills(a), 0.0)
    scale = np.where(finite, shifted / np.where(finite, lam - a, 1.0), np.sqrt(var))
    loc = np.where(finite, lower - a * scale, mean)
    return loc, scale, alpha, clipped


class Oracle:
    kind = "base"

    def evaluate(self, arch: CellEncoding, count: int) -> np.ndarray:
        raise NotImplementedError

    def fork(self, stream: int = 0) -> "Oracle":
        raise NotImplementedError

    def present(self, samples: np.ndarray) -> np.ndarray:
        """Comparable 1-D scores from stored samples (identity for most kinds)."""
        return samples


def _check_count(count: int) -> int:
    count = int(count)
    if count < 1:
        raise ValueError("count must be >= 1")
    return count


class SyntheticOracle(Oracle):
    """Accuracy-calibrated noisy scores.

    Mean score is ``1 + a_hat**gamma + bias`` with ``a_hat`` the min-max scaled
    accuracy and ``bias`` a fixed per-architecture normal offset; the target
    variance/mean ratio falls linearly from ``cv_at_worst`` to ``cv_at_best``.
    Draw ``k`` of an architecture depends only on (seed, stream, encoding, k).

    Families: ``normal`` is a normal truncated at 1e-6 whose parent parameters
    are solved so the truncated draw keeps the target mean and variance;
    ``lognormal`` is right-skewed with the same two moments.
    """

    kind = "synthetic"

    def __init__(self, bench: TabularBenchmark, profile: NoiseProfile, seed: int = 0,
                 stream: int = 0):
        if len(bench) == 0:
            raise DegenerateBenchmarkError("benchmark is empty")
        keys = list(bench.accuracy)
        acc = np.array([bench.accuracy[k] for k in keys])
        lo, hi = acc.min(), acc.max()
        if hi == lo:
            raise DegenerateBenchmarkError("all accuracies are equal")
        self.profile = profile
        self.seed = int(seed)
        self.stream = int(stream)
        self.spec = bench.spec
        a_hat = (acc - lo) / (hi - lo)
        bias = np.array([self._bias(k) for k in keys]) * profile.bias_sigma
        mu = np.maximum(1.0 + a_hat**profile.signal_gamma + bias, MIN_MEAN)
        cv = profile.cv_at_worst + (profile.cv_at_best - profile.cv_at_worst) * a_hat
        var = np.maximum(cv, 0.0) * mu
        if profile.family == "lognormal":
            log_var = np.log1p(var / mu**2)
            loc, scale = np.log(mu) - log_var / 2, np.sqrt(log_var)
            alpha = np.full_like(mu, -np.inf)
        else:
            loc, scale, alpha, clipped = truncated_normal_params(mu, var)
            if clipped.any():
                log.warning("%d architectures request a CV beyond what a positive truncated "
                            "normal can reach; clipped", int(clipped.sum()))
        # accuracies themselves are not retained
        self._index = {k: i for i, k in enumerate(keys)}
        self._mu = mu
        self._cv = cv
        self._loc, self._scale, self._alpha = loc, scale, alpha
        self._tail = np.where(np.isfinite(alpha), ndtr(-np.where(np.isfinite(alpha), alpha, 0.0)), 1.0)
        self._cursor: dict[int, int] = {}
        self._blocks: dict[tuple[int, int], np.ndarray] = {}

    def _bias(self, enc: CellEncoding) -> float:
        u = (stable_hash(self.seed, "bias", canonical_string(enc)) + 0.5) / 2.0**64
        return float(ndtri(u))

    def _idx(self, arch: CellEncoding) -> int:
        try:
            return self._index[arch]
        except KeyError:
            raise KeyError(f"architecture {canonical_string(arch)} unknown to oracle") from None

    def expected_score(self, arch: CellEncoding) -> float:
        return float(self._mu[self._idx(arch)])

    def target_cv(self, arch: CellEncoding) -> float:
        return float(self._cv[self._idx(arch)])

    def _block(self, i: int, enc: CellEncoding, b: int) -> np.ndarray:
        key = (i, b)
        block = self._blocks.get(key)
        if block is None:
            if self._cv[i] <= 0.0:
                block = np.full(BLOCK, self._mu[i])
            else:
                rng = np.random.default_rng(
                    [self.seed, self.stream, stable_hash(canonical_string(enc)), b])
                u = 1.0 - rng.random(BLOCK)
                if np.isfinite(self._alpha[i]):
                    z = -ndtri(u * self._tail[i])
                else:
                    z = ndtri(u)
                block = self._loc[i] + self._scale[i] * z
                if self.profile.family == "lognormal":
                    block = np.exp(block)
                block = np.maximum(block, LOWER_BOUND)
            self._blocks[key] = block
        return block

    def draw(self, arch: CellEncoding, start: int, count: int) -> np.ndarray:
        """Draws ``start .. start+count-1`` without moving the cursor."""
        i = self._idx(arch)
        idx = np.arange(start, start + count)
        out = np.empty(count)
        for b in np.unique(idx // BLOCK):
            sel = idx // BLOCK == b
            out[sel] = self._block(i, arch, int(b))[idx[sel] % BLOCK]
        return out

    def evaluate(self, arch: CellEncoding, count: int) -> np.ndarray:
        count = _check_count(count)
        i = self._idx(arch)
        start = self._cursor.get(i, 0)
        out = self.draw(arch, start, count)
        self._cursor[i] = start + count
        return out

    def fork(self, stream: int = 0) -> "SyntheticOracle":
        new = object.__new__(SyntheticOracle)
        new.__dict__.update(self.__dict__)
        new.stream = int(stream)
        new._cursor = {}
        new._blocks = {}
        return new


def synthetic_oracle(bench: TabularBenchmark, profile: NoiseProfile, seed: int = 0) -> SyntheticOracle:
    return SyntheticOracle(bench, profile, seed)


class ReplayOracle(Oracle):
    """Replays exported ranking-function samples in file order, cycling when exhausted."""

    kind = "replay"

    def __init__(self, records: dict[str, list[float]], meta: dict[str, dict] | None = None,
                 source: str = "<memory>"):
        self.records = {k: np.asarray(v, dtype=float) for k, v in records.items()}
        self.meta = meta or {}
        self.source = source
        self._cursor: dict[str, int] = {}

    @classmethod
    def from_file(cls, path: str | Path) -> "ReplayOracle":
        path = Path(path)
        records: dict[str, list[float]] = {}
        meta: dict[str, dict] = {}
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ReplayFormatError(f"{path}: line {lineno}: {exc.msg}") from None
                if not isinstance(obj, dict) or "encoding" not in obj or "samples" not in obj:
                    raise ReplayFormatError(
                        f"{path}: line {lineno}: need 'encoding' and 'samples' fields")
                enc, samples = obj["encoding"], obj["samples"]
                if not isinstance(samples, list) or not samples:
                    raise ReplayFormatError(f"{path}: line {lineno}: 'samples' must be a non-empty list")
                if not all(isinstance(s, (int, float)) and not isinstance(s, bool)
                           and math.isfinite(s) for s in samples):
                    raise ReplayFormatError(f"{path}: line {lineno}: samples must be finite numbers")
                if enc in records:
                    raise ReplayFormatError(f"{path}: line {lineno}: duplicate encoding {enc}")
                records[enc] = samples
                meta[enc] = obj.get("meta", {})
        return cls(records, meta, str(path))

    def evaluate(self, arch: CellEncoding, count: int) -> np.ndarray:
        count = _check_count(count)
        key = canonical_string(arch)
        if key not in self.records:
            raise KeyError(f"architecture {key} not present in {self.source}")
        values = self.records[key]
        start = self._cursor.get(key, 0)
        idx = np.arange(start, start + count)
        if idx[-1] >= len(values):
            log.warning("replay samples for %s exhausted after %d draws; cycling", key, len(values))
        self._cursor[key] = start + count
        return values[idx % len(values)]

    def fork(self, stream: int = 0) -> "ReplayOracle":
        return ReplayOracle(self.records, self.meta, self.source)


def write_samples(path: str | Path, samples: dict[CellEncoding, Sequence[float]],
                  ranking_function: str = "synthetic", batch_size: int = 64) -> None:
    """Score-sample JSON Lines export readable by ``ReplayOracle.from_file``."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for enc in sorted(samples):
            vals = [float(v) for v in samples[enc]]
            rec = {"encoding": canonical_string(enc), "samples": vals,
                   "meta": {"ranking_function": ranking_function,
                            "batch_size": int(batch_size), "num_evals": len(vals)}}
            fh.write(json.dumps(rec) + "\n")


class EnsembleOracle(Oracle):
    """Sum of member scores, each MinMax-normalized over values observed in the run.

    ``normalization="running"`` normalizes each draw when it is made;
    ``"pool"`` keeps raw member columns and normalizes at comparison time
    (``present``) against everything observed so far.
    """

    kind = "ensemble"

    def __init__(self, members: Sequence[Oracle], normalization: str = "running"):
        if len(members) < 2:
            raise ValueError("an ensemble needs at least 2 members")
        if normalization not in ("running", "pool"):
            raise ValueError(f"unknown normalization {normalization!r}")
        self.members = list(members)
        self.normalization = normalization
        self._lo = [math.inf] * len(self.members)
        self._hi = [-math.inf] * len(self.members)

    def _norm(self, j: int, v):
        lo, hi = self._lo[j], self._hi[j]
        if not hi > lo:
            return np.full_like(np.asarray(v, dtype=float), 0.5)
        return (np.asarray(v, dtype=float) - lo) / (hi - lo)

    def evaluate(self, arch: CellEncoding, count: int) -> np.ndarray:
        count = _check_count(count)
        raw = np.column_stack([m.evaluate(arch, count) for m in self.members])
        if self.normalization == "pool":
            for j in range(len(self.members)):
                self._lo[j] = min(self._lo[j], float(raw[:, j].min()))
                self._hi[j] = max(self._hi[j], float(raw[:, j].max()))
            return raw
        out = np.zeros(count)
        for k in range(count):
            for j in range(len(self.members)):
                v = float(raw[k, j])
                self._lo[j] = min(self._lo[j], v)
                self._hi[j] = max(self._hi[j], v)
                out[k] += float(self._norm(j, v))
        return out

    def present(self, samples: np.ndarray) -> np.ndarray:
        if self.normalization == "running" or samples.ndim == 1:
            return samples
        return sum(self._norm(j, samples[:, j]) for j in range(samples.shape[1]))

    def fork(self, stream: int = 0) -> "EnsembleOracle":
        return EnsembleOracle([m.fork(stream) for m in self.members], self.normalization)


def ensemble_oracle(members: Sequence[Oracle], normalization: str = "running") -> EnsembleOracle:
    return EnsembleOracle(members, normalization)


class CVScore(NamedTuple):
    mean: float
    cv: float
    total: float


def cv_augmented_score(samples: Sequence[float]) -> CVScore:
    """Raw (mean, variance/mean, mean + variance/mean) of a sample set."""
    arr = np.asarray(samples, dtype=float)
    cv = coefficient_of_variation(arr)
    mean = float(arr.mean())
    return CVScore(mean, cv, mean + cv)


def evaluate(oracle: Oracle, arch: CellEncoding, count: int) -> np.ndarray:
    return oracle.evaluate(arch, count)
