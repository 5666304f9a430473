"""Disordered potential models and reproducible RNG streams.

A model describes the law of the W x W symmetric potential block V(n)
attached to layer n of a strip.  Three kinds are supported: a Schrodinger
strip (random i.i.d. diagonal plus fixed transverse hopping), a general
symmetric block with i.i.d. entries, and a deterministic repeated block.
Sampling is vectorized and driven by (master_seed, stream_id) streams so
replicated experiments never share or reorder randomness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_WIDTH = 64

SCHRODINGER_STRIP = "schrodinger_strip"
GENERAL_SYMMETRIC = "general_symmetric"
DETERMINISTIC = "deterministic"
MODEL_KINDS = (SCHRODINGER_STRIP, GENERAL_SYMMETRIC, DETERMINISTIC)


class ConfigError(ValueError):
    """Invalid configuration.  Carries the full list of problems found."""

    def __init__(self, problems):
        self.problems = tuple(problems)
        super().__init__("; ".join(self.problems))


# ---------------------------------------------------------------------------
# scalar site laws


@dataclass(frozen=True)
class UniformInterval:
    """Uniform law on [lo, hi]."""

    lo: float
    hi: float

    bounded = True

    def problems(self):
        out = []
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            out.append("uniform law bounds must be finite")
        elif self.lo > self.hi:
            out.append(f"uniform law needs lo <= hi, got [{self.lo}, {self.hi}]")
        return out

    @property
    def degenerate(self):
        return self.lo == self.hi

    def sample(self, gen, size):
        return gen.uniform(self.lo, self.hi, size)


@dataclass(frozen=True)
class Bernoulli:
    """Two-point law: value a with probability p, value b otherwise."""

    a: float
    b: float
    p: float

    bounded = True

    def problems(self):
        out = []
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            out.append("bernoulli law values must be finite")
        if not (0.0 <= self.p <= 1.0):
            out.append(f"bernoulli law needs p in [0, 1], got {self.p}")
        return out

    @property
    def degenerate(self):
        return self.a == self.b or self.p in (0.0, 1.0)

    def sample(self, gen, size):
        return np.where(gen.random(size) < self.p, self.a, self.b)


@dataclass(frozen=True)
class PointMass:
    """Degenerate law concentrated at a single value."""

    value: float

    bounded = True

    def problems(self):
        return [] if np.isfinite(self.value) else ["point mass value must be finite"]

    @property
    def degenerate(self):
        return True

    def sample(self, gen, size):
        return np.full(size, float(self.value))


@dataclass(frozen=True)
class Gaussian:
    """Normal law.  Unbounded support: rejected unless explicitly allowed."""

    mean: float
    sd: float

    bounded = False

    def problems(self):
        out = []
        if not (np.isfinite(self.mean) and np.isfinite(self.sd)):
            out.append("gaussian law parameters must be finite")
        elif self.sd < 0:
            out.append(f"gaussian law needs sd >= 0, got {self.sd}")
        return out

    @property
    def degenerate(self):
        return self.sd == 0.0

    def sample(self, gen, size):
        return gen.normal(self.mean, self.sd, size)


SiteLaw = UniformInterval | Bernoulli | PointMass | Gaussian


# ---------------------------------------------------------------------------
# RNG streams


@dataclass(frozen=True)
class RngStream:
    """Named substream of a master seed.

    Streams with distinct (stream_id, spawn_path) are statistically
    independent and fully reproducible: the generator is rebuilt from the
    integers alone, so results cannot depend on worker count or call order.
    """

    master_seed: int
    stream_id: int
    spawn_path: tuple = ()

    def __post_init__(self):
        problems = []
        if not isinstance(self.master_seed, (int, np.integer)) or self.master_seed < 0:
            problems.append(f"master_seed must be a nonnegative integer, got {self.master_seed!r}")
        if not isinstance(self.stream_id, (int, np.integer)) or self.stream_id < 0:
            problems.append(f"stream_id must be a nonnegative integer, got {self.stream_id!r}")
        if any((not isinstance(k, (int, np.integer))) or k < 0 for k in self.spawn_path):
            problems.append(f"spawn_path must hold nonnegative integers, got {self.spawn_path!r}")
        if problems:
            raise ConfigError(problems)

    def generator(self) -> np.random.Generator:
        key = (int(self.stream_id),) + tuple(int(k) for k in self.spawn_path)
        return np.random.default_rng(np.random.SeedSequence(entropy=int(self.master_seed), spawn_key=key))

    def child(self, k: int) -> "RngStream":
        """Derived stream k; children of distinct k are independent."""
        return RngStream(self.master_seed, self.stream_id, self.spawn_path + (int(k),))


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise ConfigError([f"rng must be an RngStream or numpy Generator, got {type(rng).__name__}"])


# ---------------------------------------------------------------------------
# potential models


@dataclass(frozen=True)
class PotentialModel:
    """Law of the layer potential blocks V(n) for a strip of given width."""

    width: int
    kind: str
    site_law: SiteLaw | None = None
    entry_law: SiteLaw | None = None
    fixed_block: np.ndarray | None = field(default=None, repr=False)
    allow_unbounded: bool = False

    def __post_init__(self):
        problems = []
        if not isinstance(self.width, (int, np.integer)) or not (1 <= self.width <= MAX_WIDTH):
            problems.append(f"width must be an integer in [1, {MAX_WIDTH}], got {self.width!r}")
        if self.kind not in MODEL_KINDS:
            problems.append(f"kind must be one of {MODEL_KINDS}, got {self.kind!r}")
        elif self.kind == SCHRODINGER_STRIP:
            problems += self._check_law("site_law", self.site_law)
            if self.entry_law is not None or self.fixed_block is not None:
                problems.append("schrodinger_strip takes only site_law")
        elif self.kind == GENERAL_SYMMETRIC:
            problems += self._check_law("entry_law", self.entry_law)
            if self.site_law is not None or self.fixed_block is not None:
                problems.append("general_symmetric takes only entry_law")
        elif self.kind == DETERMINISTIC:
            if self.site_law is not None or self.entry_law is not None:
                problems.append("deterministic takes only fixed_block")
            if self.fixed_block is None:
                problems.append("deterministic model needs fixed_block")
            else:
                blk = np.asarray(self.fixed_block, dtype=float)
                if blk.shape != (self.width, self.width):
                    problems.append(
                        f"fixed_block must have shape ({self.width}, {self.width}), got {blk.shape}"
                    )
                elif not np.isfinite(blk).all():
                    problems.append("fixed_block must be finite")
                elif not np.array_equal(blk, blk.T):
                    problems.append("fixed_block must be symmetric")
                else:
                    object.__setattr__(self, "fixed_block", blk)
        if problems:
            raise ConfigError(problems)

    def _check_law(self, name, law):
        if law is None:
            return [f"{self.kind} model needs {name}"]
        if not isinstance(law, (UniformInterval, Bernoulli, PointMass, Gaussian)):
            return [f"{name} must be a site law, got {type(law).__name__}"]
        problems = [f"{name}: {p}" for p in law.problems()]
        if not law.bounded and not self.allow_unbounded:
            problems.append(
                f"{name} has unbounded support; compact support is required "
                "unless allow_unbounded is set"
            )
        return problems


def schrodinger_strip(width, site_law, allow_unbounded=False) -> PotentialModel:
    return PotentialModel(width, SCHRODINGER_STRIP, site_law=site_law, allow_unbounded=allow_unbounded)


def general_symmetric(width, entry_law, allow_unbounded=False) -> PotentialModel:
    return PotentialModel(width, GENERAL_SYMMETRIC, entry_law=entry_law, allow_unbounded=allow_unbounded)


def deterministic(fixed_block) -> PotentialModel:
    blk = np.asarray(fixed_block, dtype=float)
    return PotentialModel(blk.shape[0] if blk.ndim == 2 else 0, DETERMINISTIC, fixed_block=blk)


def transverse_block(width) -> np.ndarray:
    """Fixed transverse hopping block: ones on |i - j| = 1."""
    blk = np.zeros((width, width))
    idx = np.arange(width - 1)
    blk[idx, idx + 1] = 1.0
    blk[idx + 1, idx] = 1.0
    return blk


def sample_potential(model: PotentialModel, n: int, rng) -> np.ndarray:
    """Draw n layer blocks V(0), ..., V(n-1) as an (n, W, W) array.

    Every block is exactly symmetric (bit for bit).  `rng` is an RngStream
    or a numpy Generator; deterministic models consume no randomness.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ConfigError([f"n must be a positive integer, got {n!r}"])
    W = model.width
    if model.kind == DETERMINISTIC:
        return np.broadcast_to(model.fixed_block, (n, W, W)).copy()
    gen = _as_generator(rng)
    if model.kind == SCHRODINGER_STRIP:
        blocks = np.broadcast_to(transverse_block(W), (n, W, W)).copy()
        idx = np.arange(W)
        blocks[:, idx, idx] = model.site_law.sample(gen, (n, W))
        return blocks
    # general symmetric: sample the upper triangle, mirror it down
    raw = model.entry_law.sample(gen, (n, W, W))
    upper = np.triu(raw)
    return upper + np.triu(raw, 1).transpose(0, 2, 1)


# ---------------------------------------------------------------------------
# richness check


@dataclass(frozen=True)
class RichnessReport:
    """Outcome of the static nondegeneracy check for a model class."""

    status: str  # "certified" | "user_asserted" | "degenerate"
    notes: tuple

    @property
    def certified(self):
        return self.status == "certified"


def validate_richness(model: PotentialModel) -> RichnessReport:
    """Classify whether the model class is known to have a rich enough law.

    Report-only: callers decide what to do with a non-certified model.
    A Schrodinger strip with a nondegenerate site law is certified; a
    general symmetric model is the user's own assertion; anything driven
    by a degenerate law (or no law at all) is flagged degenerate.
    """
    if model.kind == DETERMINISTIC:
        return RichnessReport("degenerate", ("deterministic block: no randomness at all",))
    law = model.site_law if model.kind == SCHRODINGER_STRIP else model.entry_law
    if law.degenerate:
        return RichnessReport("degenerate", (f"{type(law).__name__} law is a point mass",))
    if model.kind == SCHRODINGER_STRIP:
        return RichnessReport(
            "certified",
            ("i.i.d. nondegenerate diagonal with fixed transverse hopping",),
        )
    return RichnessReport(
        "user_asserted",
        ("general symmetric blocks: nondegeneracy of the joint law is not checked here",),
    )
