"""Array-backed sample containers and design-matrix construction.

An AnalyticSample holds the complete-case records (treatment, outcome, both
mediators observed; vaccine-accepting) as aligned numpy arrays plus the
categorical covariate codes used for model designs, subgrouping, and trees.
An AcceptingSample is the wider universe that keeps incomplete records and
their response flags; its ``complete()`` view is the AnalyticSample.

Instances are frozen after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

M1_STAR_DEFAULT = 2   # top-two ordinal levels count as the dichotomized event
M2_STAR_DEFAULT = 3   # only the top level counts
N_MEDIATOR_LEVELS = 4
N_JOINT_CELLS = 16


def encode_joint_mediator(m1, m2):
    """16-level joint code; bijective over {0..3} x {0..3}."""
    return N_MEDIATOR_LEVELS * np.asarray(m1) + np.asarray(m2)


def decode_joint_mediator(m):
    m = np.asarray(m)
    return m // N_MEDIATOR_LEVELS, m % N_MEDIATOR_LEVELS


@dataclass(frozen=True)
class CategoricalColumn:
    levels: tuple[str, ...]
    codes: np.ndarray  # (n,) int indices into levels

    def __post_init__(self):
        if len(self.codes) and (self.codes.min() < 0 or self.codes.max() >= len(self.levels)):
            raise DataError("covariate codes outside level range")


@dataclass(frozen=True)
class AnalyticSample:
    y: np.ndarray
    a: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    covariates: dict[str, CategoricalColumn]
    weight: np.ndarray
    m1_threshold: int = M1_STAR_DEFAULT
    m2_threshold: int = M2_STAR_DEFAULT
    split: str = "main"

    def __post_init__(self):
        n = len(self.y)
        for name, arr in (("a", self.a), ("m1", self.m1), ("m2", self.m2),
                          ("weight", self.weight)):
            if len(arr) != n:
                raise DataError(f"column {name} has length {len(arr)} != {n}")
        for name, col in self.covariates.items():
            if len(col.codes) != n:
                raise DataError(f"covariate {name} misaligned")
        if n == 0:
            raise DataError("empty analytic sample")

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def m(self) -> np.ndarray:
        return encode_joint_mediator(self.m1, self.m2)

    @property
    def m1_star(self) -> np.ndarray:
        return (self.m1 >= self.m1_threshold).astype(float)

    @property
    def m2_star(self) -> np.ndarray:
        return (self.m2 >= self.m2_threshold).astype(float)

    def outcome(self, name: str) -> np.ndarray:
        if name in ("y", "outcome"):
            return np.asarray(self.y, dtype=float)
        if name == "m1_star":
            return self.m1_star
        if name == "m2_star":
            return self.m2_star
        raise ConfigError(f"unknown outcome {name!r}")

    def subset(self, mask: np.ndarray) -> "AnalyticSample":
        covs = {k: CategoricalColumn(c.levels, c.codes[mask])
                for k, c in self.covariates.items()}
        return AnalyticSample(self.y[mask], self.a[mask], self.m1[mask],
                              self.m2[mask], covs, self.weight[mask],
                              self.m1_threshold, self.m2_threshold, self.split)


@dataclass(frozen=True)
class AcceptingSample:
    """All vaccine-accepting records, incomplete cases included.

    Missing outcome / treatment / mediator values are stored as -1 and must
    be gated by the response flags.
    """

    y: np.ndarray
    a: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    r_y: np.ndarray
    r_a: np.ndarray
    r_m1: np.ndarray
    r_m2: np.ndarray
    covariates: dict[str, CategoricalColumn]
    weight: np.ndarray
    m1_threshold: int = M1_STAR_DEFAULT
    m2_threshold: int = M2_STAR_DEFAULT

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def r(self) -> np.ndarray:
        return self.r_y & self.r_a & self.r_m1 & self.r_m2

    @property
    def p_r(self) -> float:
        return float(np.mean(self.r))

    def complete(self) -> AnalyticSample:
        mask = self.r
        covs = {k: CategoricalColumn(c.levels, c.codes[mask])
                for k, c in self.covariates.items()}
        return AnalyticSample(self.y[mask].astype(float), self.a[mask],
                              self.m1[mask], self.m2[mask], covs,
                              self.weight[mask], self.m1_threshold,
                              self.m2_threshold)


@dataclass(frozen=True)
class DesignInfo:
    """Level-to-column map for a dummy design with intercept.

    Reference levels (the first level of each covariate) map to None: they
    are absorbed by the intercept. Column 0 is the intercept.
    """

    covariates: tuple[str, ...]
    level_map: dict[str, dict[str, int | None]]
    n_columns: int

    def column_names(self) -> list[str]:
        names = ["(intercept)"] * self.n_columns
        for cov, levels in self.level_map.items():
            for level, col in levels.items():
                if col is not None:
                    names[col] = f"{cov}={level}"
        return names


def build_design(sample, names=None):
    """Intercept + drop-first dummy design over the requested covariates.

    ``names=[]`` yields the intercept-only design (used by the no-covariate
    sensitivity comparator and the deliberately-misspecified nuisance runs).
    """
    covs = sample.covariates
    if names is None:
        names = list(covs.keys())
    for name in names:
        if name not in covs:
            raise ConfigError(f"unknown covariate {name!r}")
    n = sample.n
    columns = [np.ones(n)]
    level_map: dict[str, dict[str, int | None]] = {}
    col_idx = 1
    for name in names:
        col = covs[name]
        level_map[name] = {}
        for code, level in enumerate(col.levels):
            if code == 0:
                level_map[name][level] = None
                continue
            columns.append((col.codes == code).astype(float))
            level_map[name][level] = col_idx
            col_idx += 1
    design = np.column_stack(columns)
    return design, DesignInfo(tuple(names), level_map, design.shape[1])
