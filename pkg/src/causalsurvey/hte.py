"""Data-driven subgroup discovery via DR-learner pseudo-outcomes.

Pseudo-outcomes (per-record treated-minus-untreated influence values) are
regressed on covariates with a depth-limited variance-reduction tree on an
auxiliary split; surviving leaves become candidate subgroups that must be
approved in config before confirmation on the main split. Discovery and
confirmation never share records, which is enforced by split tags on the
samples and bundles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .data import AnalyticSample
from .effects import (InfluenceEstimate, SubgroupEstimate, difference_test,
                      from_if_values, phi1_values, subgroup_effects,
                      _uniform_weights)
from .errors import ConfigError, DataError
from .nuisance import NuisanceBundle

MAX_DEPTH = 4
MIN_LEAF_DISCOVERY = 500
GAIN_FRACTION = 0.001   # splits must recover this share of root variance
MIN_CONFIRM_N = 50


@dataclass(frozen=True)
class PseudoOutcomeSet:
    values: np.ndarray
    split: str
    weights: np.ndarray | None = None

    @property
    def mean(self) -> float:
        if self.weights is None:
            return float(self.values.mean())
        return float(np.average(self.values, weights=self.weights))


def pseudo_outcomes(sample: AnalyticSample, bundle: NuisanceBundle) -> PseudoOutcomeSet:
    """Per-record risk-difference influence values, the DR-learner target."""
    if bundle.split != sample.split:
        raise DataError(f"split leakage: bundle was fit on {bundle.split!r} "
                        f"but the sample is {sample.split!r}")
    values = phi1_values(sample, bundle, 1) - phi1_values(sample, bundle, 0)
    return PseudoOutcomeSet(values, sample.split, _uniform_weights(sample))


@dataclass
class TreeNode:
    n: int
    mean: float
    covariate: str | None = None
    left_levels: tuple[str, ...] = ()
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.covariate is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"leaf": True, "n": self.n, "mean": self.mean}
        return {"leaf": False, "n": self.n, "mean": self.mean,
                "covariate": self.covariate,
                "left_levels": list(self.left_levels),
                "left": self.left.to_dict(), "right": self.right.to_dict()}


@dataclass(frozen=True)
class CandidateSubgroup:
    predicate: tuple[tuple[str, tuple[str, ...]], ...]
    leaf_mean: float
    leaf_n: int
    approved: bool = False

    @property
    def label(self) -> str:
        if not self.predicate:
            return "(all)"
        return " & ".join(f"{cov} in {{{','.join(levels)}}}"
                          for cov, levels in self.predicate)

    def to_dict(self) -> dict:
        return {"predicate": [[cov, list(levels)] for cov, levels in self.predicate],
                "leaf_mean": self.leaf_mean, "leaf_n": self.leaf_n,
                "approved": self.approved}

    @classmethod
    def from_dict(cls, payload: dict) -> "CandidateSubgroup":
        pred = tuple((cov, tuple(levels)) for cov, levels in payload["predicate"])
        return cls(pred, payload["leaf_mean"], payload["leaf_n"],
                   payload.get("approved", False))


@dataclass
class HteTree:
    root: TreeNode
    covariates: tuple[str, ...]
    depth: int
    min_leaf: int
    gain_fraction: float
    candidates: list[CandidateSubgroup] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"format": "hte-tree/1", "covariates": list(self.covariates),
                "depth": self.depth, "min_leaf": self.min_leaf,
                "gain_fraction": self.gain_fraction,
                "tree": self.root.to_dict(),
                "candidates": [c.to_dict() for c in self.candidates]}

    def render_text(self) -> str:
        lines: list[str] = []

        def walk(node: TreeNode, prefix: str, indent: int):
            pad = "  " * indent
            if node.is_leaf:
                lines.append(f"{pad}{prefix}leaf: n={node.n} mean={node.mean:+.4f}")
                return
            lines.append(f"{pad}{prefix}split on {node.covariate} "
                         f"(n={node.n} mean={node.mean:+.4f})")
            walk(node.left, f"[{node.covariate} in "
                 f"{{{','.join(node.left_levels)}}}] ", indent + 1)
            walk(node.right, f"[{node.covariate} not in "
                 f"{{{','.join(node.left_levels)}}}] ", indent + 1)

        walk(self.root, "", 0)
        return "\n".join(lines)


def _best_split(values, weights, codes, levels, min_leaf):
    """Best mean-ordered prefix split for one categorical covariate.

    Returns (gain_sse, left_level_codes) or None. Ordering levels by their
    mean makes the prefix scan optimal for squared error among binary
    level-subset partitions.
    """
    total_w = weights.sum()
    total_s = float(np.dot(weights, values))
    counts = np.bincount(codes, weights=weights, minlength=len(levels))
    sums = np.bincount(codes, weights=weights * values, minlength=len(levels))
    ns = np.bincount(codes, minlength=len(levels))
    present = np.flatnonzero(ns > 0)
    if len(present) < 2:
        return None
    means = sums[present] / counts[present]
    order = present[np.argsort(means, kind="stable")]
    best = None
    acc_w = acc_s = acc_n = 0.0
    n_total = ns.sum()
    for j in range(len(order) - 1):
        lev = order[j]
        acc_w += counts[lev]
        acc_s += sums[lev]
        acc_n += ns[lev]
        if acc_n < min_leaf or n_total - acc_n < min_leaf:
            continue
        rest_w = total_w - acc_w
        diff = acc_s / acc_w - (total_s - acc_s) / rest_w
        gain = acc_w * rest_w / total_w * diff * diff
        if best is None or gain > best[0]:
            best = (gain, tuple(order[:j + 1].tolist()))
    return best


def fit_tree(pseudo: PseudoOutcomeSet, sample: AnalyticSample,
             covariates=None, depth: int = MAX_DEPTH,
             min_leaf: int = MIN_LEAF_DISCOVERY,
             gain_fraction: float = GAIN_FRACTION) -> HteTree:
    """Variance-reduction CART on the pseudo-outcomes, leaves as candidates.

    A split must recover at least ``gain_fraction`` of the root variance per
    record; when nothing qualifies the root is returned as a single leaf,
    which is a valid (null) discovery.
    """
    if pseudo.split != sample.split:
        raise DataError("pseudo-outcomes and sample come from different splits")
    if depth < 0:
        raise ConfigError("depth must be >= 0")
    values = pseudo.values
    weights = (np.ones(sample.n) if pseudo.weights is None
               else np.asarray(pseudo.weights, dtype=float))
    names = tuple(covariates) if covariates is not None else tuple(sample.covariates)
    for name in names:
        if name not in sample.covariates:
            raise ConfigError(f"unknown covariate {name!r}")
    root_var = float(np.average((values - np.average(values, weights=weights)) ** 2,
                                weights=weights))
    min_gain = gain_fraction * root_var * len(values)

    candidates: list[CandidateSubgroup] = []

    def grow(mask, level, predicate):
        w = weights[mask]
        v = values[mask]
        node = TreeNode(n=int(mask.sum()), mean=float(np.average(v, weights=w)))
        if level < depth and node.n >= 2 * min_leaf:
            best = None
            for name in names:
                col = sample.covariates[name]
                found = _best_split(v, w, col.codes[mask], col.levels, min_leaf)
                if found is not None and (best is None or found[0] > best[0]):
                    best = (found[0], name, found[1])
            if best is not None and best[0] >= min_gain:
                _, name, left_codes = best
                col = sample.covariates[name]
                node.covariate = name
                node.left_levels = tuple(sorted(col.levels[c] for c in left_codes))
                left_mask = mask & np.isin(col.codes, list(left_codes))
                right_levels = tuple(sorted(set(col.levels) - set(node.left_levels)))
                node.left = grow(left_mask, level + 1,
                                 predicate + ((name, node.left_levels),))
                node.right = grow(mask & ~left_mask, level + 1,
                                  predicate + ((name, right_levels),))
                return node
        candidates.append(CandidateSubgroup(predicate, node.mean, node.n))
        return node

    root = grow(np.ones(sample.n, dtype=bool), 0, ())
    return HteTree(root, names, depth, min_leaf, gain_fraction, candidates)


def approve(candidates, selected) -> list[CandidateSubgroup]:
    """Flag the selected candidate indices or labels as approved."""
    keys = set(selected)
    out = []
    for i, cand in enumerate(candidates):
        flag = i in keys or cand.label in keys
        out.append(replace(cand, approved=flag) if flag != cand.approved else cand)
    return out


def confirm(candidates, main_sample: AnalyticSample, main_bundle: NuisanceBundle,
            min_n: int = MIN_CONFIRM_N, alpha: float = 0.05,
            approved_only: bool = True):
    """Estimate approved candidates on the main split, with pairwise tests.

    Returns (subgroup estimates, pairwise tests); candidates matching fewer
    than ``min_n`` main-split records come back suppressed.
    """
    selected = [c for c in candidates if c.approved or not approved_only]
    if not selected:
        raise ConfigError("no approved candidates to confirm")
    pseudo = pseudo_outcomes(main_sample, main_bundle)
    parent = from_if_values("risk_difference", pseudo.values, pseudo.weights,
                            alpha, scale="risk-difference")
    estimates = subgroup_effects(parent, main_sample,
                                 [c.predicate for c in selected], min_n, alpha)
    tests = []
    for i in range(len(estimates)):
        for j in range(i + 1, len(estimates)):
            if estimates[i].suppressed or estimates[j].suppressed:
                continue
            z, p = difference_test(estimates[i], estimates[j])
            tests.append({"group_a": estimates[i].label,
                          "group_b": estimates[j].label, "z": z, "p": p})
    return estimates, tests


def candidates_to_json(candidates) -> str:
    return json.dumps({"format": "hte-candidates/1",
                       "candidates": [c.to_dict() for c in candidates]},
                      indent=2, sort_keys=True)


def candidates_from_json(payload: str) -> list[CandidateSubgroup]:
    data = json.loads(payload)
    if data.get("format") != "hte-candidates/1":
        raise ConfigError("unsupported candidates file format")
    return [CandidateSubgroup.from_dict(c) for c in data["candidates"]]
