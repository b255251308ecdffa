"""Synthetic survey data-generating processes with exactly enumerable truth.

A DgpSpec is a fully discrete causal law factorized as
X -> V -> A -> (M1, M2) -> Y with item nonresponse applied last, so every
estimand targeted elsewhere in the package can be computed by exact
summation over the (x, a, m1, m2, y) support. ``enumerate_truth`` is that
brute-force oracle; ``exhaustive_sample`` materializes one weighted record
per support cell so that averaging any influence function against the true
nuisances integrates it exactly; ``true_bundle`` injects the true nuisance
values for a concrete sample.

Estimands are defined conditional on membership in the analytic sample
(vaccine acceptance reported and affirmative, all items complete), so the
oracle reweights the covariate law and the propensity accordingly when the
spec includes nonresponse.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import (AcceptingSample, AnalyticSample, CategoricalColumn,
                   N_JOINT_CELLS, decode_joint_mediator)
from .errors import ConfigError
from .incremental import default_delta_grid
from .nuisance import NuisanceBundle
from .rng import BLOCK_SIZE, block_count, substreams

MAX_CELLS = 64
_ATOL = 1e-12


@dataclass(frozen=True)
class DgpSpec:
    name: str
    covariates: tuple[tuple[str, int], ...]       # (name, n_levels)
    x_prob: np.ndarray                            # (K,)
    pi1: np.ndarray                               # (K,) P(A=1 | x, accepting)
    y_prob: np.ndarray                            # (K, 2, 16) P(Y=1 | x, a, m)
    pmed: np.ndarray | None = None                # (K, 2, 16) joint mediator law
    v_prob: np.ndarray | None = None              # (K,) P(accepting | x)
    r_v: np.ndarray | None = None                 # (K,) acceptance item response
    r_y: np.ndarray | None = None                 # (K, 2) outcome response
    r_a: np.ndarray | None = None
    r_m1: np.ndarray | None = None
    r_m2: np.ndarray | None = None
    hesitant_pi1: np.ndarray | None = None        # treatment law on V=0
    hesitant_y: np.ndarray | None = None          # (K, 2) outcome law on V=0
    noise_covariates: tuple[str, ...] = ()        # continuous N(0,1) columns
    default_seed: int = 0

    @property
    def n_cells(self) -> int:
        return int(np.prod([n for _, n in self.covariates]))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(n for _, n in self.covariates)

    @property
    def has_mediators(self) -> bool:
        return self.pmed is not None

    def _ones(self, shape):
        return np.ones(shape)

    def filled(self) -> "DgpSpec":
        """Copy with every optional table materialized at its neutral value."""
        k = self.n_cells
        kw = {}
        kw["v_prob"] = self.v_prob if self.v_prob is not None else np.ones(k)
        kw["r_v"] = self.r_v if self.r_v is not None else np.ones(k)
        for name in ("r_y", "r_a", "r_m1", "r_m2"):
            val = getattr(self, name)
            kw[name] = val if val is not None else np.ones((k, 2))
        kw["hesitant_pi1"] = (self.hesitant_pi1 if self.hesitant_pi1 is not None
                              else self.pi1)
        kw["hesitant_y"] = (self.hesitant_y if self.hesitant_y is not None
                            else self.y_prob[:, :, 0])
        return DgpSpec(self.name, self.covariates, self.x_prob, self.pi1,
                       self.y_prob, self.pmed, noise_covariates=self.noise_covariates,
                       default_seed=self.default_seed, **kw)

    def validate(self) -> None:
        k = self.n_cells
        if k > MAX_CELLS:
            raise ConfigError(f"covariate support has {k} cells > {MAX_CELLS}")
        if self.x_prob.shape != (k,) or abs(self.x_prob.sum() - 1) > _ATOL:
            raise ConfigError("x_prob must be a (K,) distribution summing to 1")
        for label, table in (("pi1", self.pi1), ("y_prob", self.y_prob)):
            if np.any(table < 0) or np.any(table > 1):
                raise ConfigError(f"{label} has entries outside [0, 1]")
        if self.y_prob.shape != (k, 2, N_JOINT_CELLS):
            raise ConfigError(f"y_prob must have shape ({k}, 2, 16)")
        if self.pmed is not None:
            if self.pmed.shape != (k, 2, N_JOINT_CELLS):
                raise ConfigError(f"pmed must have shape ({k}, 2, 16)")
            if np.any(self.pmed < 0):
                raise ConfigError("pmed has negative entries")
            sums = self.pmed.sum(axis=2)
            if np.max(np.abs(sums - 1)) > _ATOL:
                raise ConfigError("pmed rows must sum to 1")

    def to_dict(self) -> dict:
        def opt(arr):
            return None if arr is None else np.asarray(arr).tolist()
        return {"format": "dgp-spec/1", "name": self.name,
                "covariates": [list(c) for c in self.covariates],
                "x_prob": self.x_prob.tolist(), "pi1": self.pi1.tolist(),
                "y_prob": self.y_prob.tolist(), "pmed": opt(self.pmed),
                "v_prob": opt(self.v_prob), "r_v": opt(self.r_v),
                "r_y": opt(self.r_y), "r_a": opt(self.r_a),
                "r_m1": opt(self.r_m1), "r_m2": opt(self.r_m2),
                "hesitant_pi1": opt(self.hesitant_pi1),
                "hesitant_y": opt(self.hesitant_y),
                "noise_covariates": list(self.noise_covariates),
                "default_seed": self.default_seed}

    @classmethod
    def from_dict(cls, payload: dict) -> "DgpSpec":
        if payload.get("format") != "dgp-spec/1":
            raise ConfigError(f"unsupported dgp format {payload.get('format')!r}")
        def opt(key):
            val = payload.get(key)
            return None if val is None else np.asarray(val, dtype=float)
        spec = cls(payload["name"],
                   tuple((str(n), int(k)) for n, k in payload["covariates"]),
                   np.asarray(payload["x_prob"], dtype=float),
                   np.asarray(payload["pi1"], dtype=float),
                   np.asarray(payload["y_prob"], dtype=float),
                   opt("pmed"), opt("v_prob"), opt("r_v"), opt("r_y"),
                   opt("r_a"), opt("r_m1"), opt("r_m2"), opt("hesitant_pi1"),
                   opt("hesitant_y"),
                   tuple(payload.get("noise_covariates", ())),
                   int(payload.get("default_seed", 0)))
        spec.validate()
        return spec


def cell_codes(spec: DgpSpec, cells: np.ndarray) -> np.ndarray:
    """(n, n_covariates) level codes for the given flat cell indices."""
    return np.stack(np.unravel_index(cells, spec.shape), axis=1)


def sample_cells(spec: DgpSpec, sample) -> np.ndarray:
    """Flat support cell of every record in a sample generated from ``spec``."""
    codes = []
    for name, n_levels in spec.covariates:
        col = sample.covariates.get(name)
        if col is None:
            raise ConfigError(f"sample lacks covariate {name!r} from the spec")
        level_to_code = {lev: int(lev) for lev in col.levels}
        lut = np.array([level_to_code[lev] for lev in col.levels])
        codes.append(lut[col.codes])
    return np.ravel_multi_index(tuple(codes), spec.shape)


# ---------------------------------------------------------------------------
# generation


def _draw(spec: DgpSpec, n: int, seed: int) -> dict[str, np.ndarray]:
    spec.validate()
    full = spec.filled()
    k = spec.n_cells
    out = {name: np.empty(n, dtype=np.int64)
           for name in ("x", "a", "m1", "m2", "y")}
    for name in ("v", "v_obs", "ry", "ra", "rm1", "rm2"):
        out[name] = np.empty(n, dtype=bool)
    noise = {name: np.empty(n) for name in spec.noise_covariates}

    streams = substreams(seed, block_count(n))
    for b, rng in enumerate(streams):
        lo = b * BLOCK_SIZE
        hi = min(n, lo + BLOCK_SIZE)
        if lo >= hi:
            break
        m = hi - lo
        x = rng.choice(k, size=m, p=full.x_prob)
        v = rng.random(m) < full.v_prob[x]
        v_obs = rng.random(m) < full.r_v[x]
        pa = np.where(v, full.pi1[x], full.hesitant_pi1[x])
        a = (rng.random(m) < pa).astype(np.int64)
        if full.has_mediators:
            joint = full.pmed[x, a]
            cum = np.cumsum(joint, axis=1)
            mcode = np.minimum((rng.random(m)[:, None] > cum).sum(axis=1),
                               N_JOINT_CELLS - 1)
        else:
            mcode = np.zeros(m, dtype=np.int64)
        m1, m2 = decode_joint_mediator(mcode)
        py = np.where(v, full.y_prob[x, a, mcode], full.hesitant_y[x, a])
        y = (rng.random(m) < py).astype(np.int64)
        out["x"][lo:hi] = x
        out["v"][lo:hi] = v
        out["v_obs"][lo:hi] = v_obs
        out["a"][lo:hi] = a
        out["m1"][lo:hi] = m1
        out["m2"][lo:hi] = m2
        out["y"][lo:hi] = y
        out["ry"][lo:hi] = rng.random(m) < full.r_y[x, a]
        out["ra"][lo:hi] = rng.random(m) < full.r_a[x, a]
        out["rm1"][lo:hi] = rng.random(m) < full.r_m1[x, a]
        out["rm2"][lo:hi] = rng.random(m) < full.r_m2[x, a]
        for name in spec.noise_covariates:
            noise[name][lo:hi] = rng.standard_normal(m)
    out.update(noise)
    return out


def _covariate_columns(spec: DgpSpec, cells: np.ndarray) -> dict[str, CategoricalColumn]:
    codes = cell_codes(spec, cells)
    return {name: CategoricalColumn(tuple(str(c) for c in range(n_levels)),
                                    codes[:, i].copy())
            for i, (name, n_levels) in enumerate(spec.covariates)}


def generate_accepting(spec: DgpSpec, n: int, seed: int | None = None) -> AcceptingSample:
    """Vaccine-accepting records (acceptance observed) with response flags."""
    if spec.noise_covariates:
        raise ConfigError("continuous noise covariates require the record "
                          "path plus binning; the array fast path is discrete-only")
    seed = spec.default_seed if seed is None else seed
    d = _draw(spec, n, seed)
    keep = d["v"] & d["v_obs"]
    def miss(values, flag):
        return np.where(flag[keep], values[keep], -1)
    return AcceptingSample(
        y=miss(d["y"], d["ry"]), a=miss(d["a"], d["ra"]),
        m1=miss(d["m1"], d["rm1"]), m2=miss(d["m2"], d["rm2"]),
        r_y=d["ry"][keep], r_a=d["ra"][keep], r_m1=d["rm1"][keep],
        r_m2=d["rm2"][keep],
        covariates=_covariate_columns(spec, d["x"][keep]),
        weight=np.ones(int(keep.sum())))


def generate_sample(spec: DgpSpec, n: int, seed: int | None = None,
                    split: str = "main") -> AnalyticSample:
    """Complete-case analytic sample; the common fast path for experiments."""
    sample = generate_accepting(spec, n, seed).complete()
    if split != "main":
        sample = AnalyticSample(sample.y, sample.a, sample.m1, sample.m2,
                                sample.covariates, sample.weight,
                                sample.m1_threshold, sample.m2_threshold, split)
    return sample


def generate_records(spec: DgpSpec, n: int, seed: int | None = None):
    """All drawn survey rows (hesitant and nonresponding included) as records."""
    from .ingest import SurveyRecord
    seed = spec.default_seed if seed is None else seed
    d = _draw(spec, n, seed)
    codes = cell_codes(spec, d["x"])
    records = []
    for i in range(n):
        covs: dict = {name: str(codes[i, j])
                      for j, (name, _) in enumerate(spec.covariates)}
        for name in spec.noise_covariates:
            covs[name] = float(d[name][i])
        records.append(SurveyRecord(
            outcome=int(d["y"][i]) if d["ry"][i] else None,
            treatment=int(d["a"][i]) if d["ra"][i] else None,
            mediator1=int(d["m1"][i]) if d["rm1"][i] else None,
            mediator2=int(d["m2"][i]) if d["rm2"][i] else None,
            acceptance=int(d["v"][i]) if d["v_obs"][i] else None,
            covariates=covs))
    return records


# ---------------------------------------------------------------------------
# exact truth


@dataclass(frozen=True)
class DecompositionTruth:
    total: float
    ide: float
    iie_m1: float
    iie_m2: float
    cov: float

    def to_dict(self) -> dict:
        return {"total": self.total, "ide": self.ide, "iie_m1": self.iie_m1,
                "iie_m2": self.iie_m2, "cov": self.cov}


@dataclass(frozen=True)
class OracleTruth:
    mpo0: float
    mpo1: float
    rd: float
    rr: float
    decomposition: dict[int, DecompositionTruth]
    deltas: np.ndarray
    incremental: np.ndarray
    psi_obs: float
    p_r: float
    cell_effects: np.ndarray
    x_weights: np.ndarray
    pi_z: np.ndarray

    def incremental_at(self, delta: float) -> float:
        j = np.flatnonzero(np.isclose(self.deltas, delta))
        if not len(j):
            raise ConfigError(f"delta {delta} not on the truth grid")
        return float(self.incremental[j[0]])

    def to_dict(self) -> dict:
        return {"mpo0": self.mpo0, "mpo1": self.mpo1, "rd": self.rd,
                "rr": self.rr,
                "decomposition": {str(r): d.to_dict()
                                  for r, d in self.decomposition.items()},
                "deltas": self.deltas.tolist(),
                "incremental": self.incremental.tolist(),
                "psi_obs": self.psi_obs, "p_r": self.p_r,
                "cell_effects": self.cell_effects.tolist()}


class _TrueLaw:
    """Analytic-sample-conditional functions of a filled spec."""

    def __init__(self, spec: DgpSpec):
        if spec.noise_covariates:
            raise ConfigError("exact enumeration requires a discrete support; "
                              "continuous covariates present")
        spec.validate()
        full = spec.filled()
        self.spec = full
        self.has_mediators = spec.has_mediators
        r_tot = full.r_y * full.r_a * full.r_m1 * full.r_m2     # (K, 2)
        pi = np.stack([1 - full.pi1, full.pi1], axis=1)          # (K, 2)
        eta = np.sum(pi * r_tot, axis=1)                         # complete-case prob
        accept_w = full.x_prob * full.v_prob * full.r_v
        z_w = accept_w * eta
        if z_w.sum() <= 0:
            raise ConfigError("analytic sample has probability zero under the spec")
        self.x_weights = z_w / z_w.sum()
        arm_w = pi * r_tot
        self.pi_z = arm_w[:, 1] / arm_w.sum(axis=1)
        self.eta = eta
        self.p_r = float(z_w.sum() / accept_w.sum())
        if self.has_mediators:
            self.pm = full.pmed                                   # (K, 2, 16)
        else:
            self.pm = np.zeros((spec.n_cells, 2, N_JOINT_CELLS))
            self.pm[:, :, 0] = 1.0
        self.mu_am = full.y_prob                                  # (K, 2, 16)
        self.mu_a = np.sum(self.mu_am * self.pm, axis=2)          # (K, 2)

    def average(self, values, x_weights=None):
        w = self.x_weights if x_weights is None else x_weights
        return float(np.sum(w * values))

    def lambda_joint(self, arm, med):
        return np.sum(self.mu_am[:, arm] * self.pm[:, med], axis=1)

    def lambda_product(self, arm, med1, med2):
        mu = self.mu_am[:, arm].reshape(-1, 4, 4)
        q1 = self.pm[:, med1].reshape(-1, 4, 4).sum(axis=2)
        q2 = self.pm[:, med2].reshape(-1, 4, 4).sum(axis=1)
        return np.einsum("kij,ki,kj->k", mu, q1, q2)


def enumerate_truth(spec: DgpSpec, deltas=None, x_weights=None) -> OracleTruth:
    """Exact values of every targeted estimand by summation over the support.

    ``x_weights`` overrides the analytic-sample covariate law (e.g. with an
    empirical distribution); everything else stays at the true law.
    """
    law = _TrueLaw(spec)
    if deltas is None:
        deltas = default_delta_grid()
    deltas = np.unique(np.concatenate([np.asarray(deltas, dtype=float), [0.0, 1.0]]))
    w = law.x_weights if x_weights is None else np.asarray(x_weights, dtype=float)

    mpo0 = law.average(law.mu_a[:, 0], w)
    mpo1 = law.average(law.mu_a[:, 1], w)
    cell_effects = law.mu_a[:, 1] - law.mu_a[:, 0]

    lj = {(a, s): law.average(law.lambda_joint(a, s), w)
          for a in (0, 1) for s in (0, 1)}
    lp = {(a, s1, s2): law.average(law.lambda_product(a, s1, s2), w)
          for a in (0, 1) for s1 in (0, 1) for s2 in (0, 1)}
    total = lj[(1, 1)] - lj[(0, 0)]
    dec = {}
    ide0 = lj[(1, 0)] - lj[(0, 0)]
    m1_0 = lp[(1, 1, 0)] - lp[(1, 0, 0)]
    m2_0 = lp[(1, 1, 1)] - lp[(1, 1, 0)]
    dec[0] = DecompositionTruth(total, ide0, m1_0, m2_0,
                                total - ide0 - m1_0 - m2_0)
    ide1 = lj[(1, 1)] - lj[(0, 1)]
    m1_1 = lp[(0, 1, 1)] - lp[(0, 0, 1)]
    m2_1 = lp[(0, 0, 1)] - lp[(0, 0, 0)]
    dec[1] = DecompositionTruth(total, ide1, m1_1, m2_1,
                                total - ide1 - m1_1 - m2_1)

    pi_z = law.pi_z
    curve = np.array([
        float(np.sum(w * (d * pi_z * law.mu_a[:, 1] + (1 - pi_z) * law.mu_a[:, 0])
                     / (d * pi_z + 1 - pi_z)))
        for d in deltas])
    psi_obs = curve[np.flatnonzero(np.isclose(deltas, 1.0))[0]] - mpo0

    return OracleTruth(mpo0=mpo0, mpo1=mpo1, rd=mpo1 - mpo0, rr=mpo1 / mpo0,
                       decomposition=dec, deltas=deltas, incremental=curve,
                       psi_obs=float(psi_obs), p_r=law.p_r,
                       cell_effects=cell_effects, x_weights=law.x_weights,
                       pi_z=pi_z)


def exhaustive_sample(spec: DgpSpec) -> AnalyticSample:
    """One weighted record per (x, a, m1, m2, y) support cell.

    Weights are the exact analytic-sample joint probabilities, so averaging
    any correctly-implemented influence function over this sample with the
    true nuisances reproduces its estimand exactly.
    """
    law = _TrueLaw(spec)
    k = spec.n_cells
    rows_cell, rows_a, rows_m, rows_y, rows_w = [], [], [], [], []
    m_support = range(N_JOINT_CELLS) if spec.has_mediators else (0,)
    for cell in range(k):
        wx = law.x_weights[cell]
        if wx == 0:
            continue
        for arm in (0, 1):
            pa = law.pi_z[cell] if arm == 1 else 1 - law.pi_z[cell]
            if pa == 0:
                continue
            for mcode in m_support:
                pm = law.pm[cell, arm, mcode]
                if pm == 0:
                    continue
                py1 = law.mu_am[cell, arm, mcode]
                for yval, py in ((0, 1 - py1), (1, py1)):
                    if py == 0:
                        continue
                    rows_cell.append(cell)
                    rows_a.append(arm)
                    rows_m.append(mcode)
                    rows_y.append(yval)
                    rows_w.append(wx * pa * pm * py)
    cells = np.asarray(rows_cell)
    mcode = np.asarray(rows_m)
    m1, m2 = decode_joint_mediator(mcode)
    return AnalyticSample(
        y=np.asarray(rows_y, dtype=float), a=np.asarray(rows_a),
        m1=m1, m2=m2, covariates=_covariate_columns(spec, cells),
        weight=np.asarray(rows_w))


def true_bundle(spec: DgpSpec, sample, outcome: str = "y") -> NuisanceBundle:
    """Bundle holding the exact nuisance values at each record's support cell."""
    law = _TrueLaw(spec)
    cells = sample_cells(spec, sample)
    if outcome == "y":
        mu_am = law.mu_am
    elif outcome in ("m1_star", "m2_star"):
        m1, m2 = decode_joint_mediator(np.arange(N_JOINT_CELLS))
        thr_val = (m1 >= sample.m1_threshold if outcome == "m1_star"
                   else m2 >= sample.m2_threshold).astype(float)
        mu_am = np.broadcast_to(thr_val, (spec.n_cells, 2, N_JOINT_CELLS))
    else:
        raise ConfigError(f"unknown outcome {outcome!r}")
    mu_a = np.sum(mu_am * law.pm, axis=2)
    is_accepting = isinstance(sample, AcceptingSample)
    bundle = NuisanceBundle(
        outcome=outcome,
        pi1=law.pi_z[cells],
        mu0=mu_a[cells, 0],
        mu1=mu_a[cells, 1],
        folds=np.zeros(sample.n, dtype=int),
        clip_eps=0.0,
        mu_m=mu_am[cells] if spec.has_mediators else None,
        pmed=law.pm[cells] if spec.has_mediators else None,
        eta=law.eta[cells] if is_accepting else None,
        mode="full-sample" if is_accepting else "complete-case",
        split=getattr(sample, "split", "main"),
        metadata={"source": "true-nuisances", "dgp": spec.name},
    )
    return bundle


# ---------------------------------------------------------------------------
# presets


def mediator_free_y(mu0, mu1):
    k = len(mu0)
    y = np.zeros((k, 2, N_JOINT_CELLS))
    y[:, 0, :] = np.asarray(mu0)[:, None]
    y[:, 1, :] = np.asarray(mu1)[:, None]
    return y


def dgp1() -> DgpSpec:
    return DgpSpec(
        name="dgp1",
        covariates=(("x1", 2),),
        x_prob=np.array([0.5, 0.5]),
        pi1=np.array([0.3, 0.7]),
        y_prob=mediator_free_y([0.1, 0.3], [0.2, 0.5]),
    )


def dgp1_mcar(rate: float = 0.2) -> DgpSpec:
    base = dgp1()
    return DgpSpec(name="dgp1-mcar", covariates=base.covariates,
                   x_prob=base.x_prob, pi1=base.pi1, y_prob=base.y_prob,
                   r_y=np.full((2, 2), 1 - rate))


def dgp1_mar() -> DgpSpec:
    """Homogeneous effect with covariate-dependent outcome nonresponse."""
    return DgpSpec(
        name="dgp1-mar",
        covariates=(("x1", 2),),
        x_prob=np.array([0.5, 0.5]),
        pi1=np.array([0.3, 0.7]),
        y_prob=mediator_free_y([0.10, 0.30], [0.25, 0.45]),
        r_y=np.array([[0.9, 0.9], [0.6, 0.6]]),
    )


MEDIATOR_SCORES = (np.arange(N_JOINT_CELLS // 4) - 1.5) / 1.5


def tilted_joint(coef1, coef2, rho):
    q1 = np.exp(MEDIATOR_SCORES * coef1)
    q2 = np.exp(MEDIATOR_SCORES * coef2)
    joint = np.outer(q1, q2) * np.exp(rho * np.outer(MEDIATOR_SCORES, MEDIATOR_SCORES))
    return (joint / joint.sum()).ravel()


def dgp2(rho: float = 0.3) -> DgpSpec:
    """Two-mediator process; rho tilts the joint law away from independence."""
    k = 2
    pmed = np.zeros((k, 2, N_JOINT_CELLS))
    y_prob = np.zeros((k, 2, N_JOINT_CELLS))
    s1 = np.repeat(MEDIATOR_SCORES, 4)
    s2 = np.tile(MEDIATOR_SCORES, 4)
    for x in range(k):
        for a in (0, 1):
            pmed[x, a] = tilted_joint(0.35 * a - 0.25 * x + 0.15,
                                       0.45 * a + 0.2 * x - 0.15, rho)
            logits = -1.4 + 0.6 * a + 0.3 * s1 + 0.45 * s2 + 0.4 * x
            y_prob[x, a] = 1.0 / (1.0 + np.exp(-logits))
    return DgpSpec(
        name=f"dgp2(rho={rho:g})",
        covariates=(("x1", 2),),
        x_prob=np.array([0.5, 0.5]),
        pi1=np.array([0.4, 0.6]),
        y_prob=y_prob,
        pmed=pmed,
    )


def _hte_spec(planted: bool) -> DgpSpec:
    covs = (("x1", 2), ("x2", 4), ("x3", 2), ("x4", 3))
    shape = tuple(n for _, n in covs)
    k = int(np.prod(shape))
    x_prob = np.full(k, 1.0 / k)
    pi1 = np.empty(k)
    mu0 = np.empty(k)
    mu1 = np.empty(k)
    for cell in range(k):
        x1, x2, x3, x4 = np.unravel_index(cell, shape)
        logit_pi = -0.4 + 0.3 * (x2 >= 2) + 0.25 * (x4 == 1)
        pi1[cell] = 1.0 / (1.0 + np.exp(-logit_pi))
        mu0[cell] = 0.25 + 0.05 * (x3 == 1)
        tau = 0.1 + 0.1 * (x1 == 1) if planted else 0.15
        mu1[cell] = mu0[cell] + tau
    return DgpSpec(name="hte-planted" if planted else "hte-null",
                   covariates=covs, x_prob=x_prob, pi1=pi1,
                   y_prob=mediator_free_y(mu0, mu1))


def dgp_hte_planted() -> DgpSpec:
    return _hte_spec(planted=True)


def dgp_hte_null() -> DgpSpec:
    return _hte_spec(planted=False)


def dgp_twostratum() -> DgpSpec:
    """DGP-1 plus a vaccine-hesitant stratum with exactly zero effect."""
    base = dgp1()
    return DgpSpec(name="twostratum", covariates=base.covariates,
                   x_prob=base.x_prob, pi1=base.pi1, y_prob=base.y_prob,
                   v_prob=np.array([0.7, 0.7]),
                   hesitant_pi1=np.array([0.3, 0.7]),
                   hesitant_y=np.array([[0.15, 0.15], [0.35, 0.35]]))


PRESETS = {
    "dgp1": dgp1,
    "dgp1-mcar": dgp1_mcar,
    "dgp1-mar": dgp1_mar,
    "dgp2": dgp2,
    "dgp2-rho0": lambda: dgp2(rho=0.0),
    "hte-planted": dgp_hte_planted,
    "hte-null": dgp_hte_null,
    "twostratum": dgp_twostratum,
}


def preset(name: str) -> DgpSpec:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    return factory()
