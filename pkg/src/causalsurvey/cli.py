"""Batch command-line front end for the estimation pipeline.

Commands: simulate, fit, ate, mediate, incremental, sensitivity, subgroups,
diagnose, rerun. Every command writes JSON and CSV artifacts into --out; each
artifact embeds the config hash, seed, and package version, while wall-clock
timestamps go to a .meta.json sidecar so artifact bytes are reproducible.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure,
with a one-line machine-parseable reason on stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__, effects, hte, incremental, mediation, sensitivity, sim
from .data import AnalyticSample
from .errors import CausalSurveyError, ConfigError, DataError, NumericalError
from .ingest import (FilterConfig, SchemaConfig, apply_range_rules,
                     bin_numeric, build_analytic_sample, join_auxiliary,
                     load_survey, recode_missing_as_category, write_records)
from .learners import GbtParams
from .nuisance import NuisanceBundle, NuisanceSpec, crossfit, diagnostics
from .rng import root_stream

THREADS_ENV = "CAUSALSURVEY_THREADS"

_TOP_KEYS = {"schema", "filters", "bins", "value_maps", "nuisance",
             "aux_join", "bad_controls", "suspicious_rules", "estimation"}
_NUISANCE_KEYS = {"learner", "folds", "clip", "covariates", "pi_covariates",
                  "mu_covariates", "outcome", "mediators", "seed", "gbt",
                  "gbt_grid_size"}
_ESTIMATION_KEYS = {"alpha", "min_subgroup_n"}

RERUN_VARIANTS = ("baseline", "hesitant-included", "bad-controls-dropped",
                  "suspicious-excluded", "hesitancy-nonresponse-included")

_ESTIMATE_SCHEMA = {
    "type": "object",
    "required": ["label", "point", "se", "lo", "hi", "n", "scale"],
}
_PROVENANCE_SCHEMA = {
    "type": "object",
    "required": ["command", "config_hash", "seed", "version"],
}

# published shapes of the JSON artifacts; tests validate emitted files
ARTIFACT_SCHEMAS = {
    "ate.json": {
        "type": "object",
        "required": ["provenance", "estimates", "pandemic_bound", "p_r",
                     "ledger"],
        "properties": {
            "provenance": _PROVENANCE_SCHEMA,
            "estimates": {"type": "array", "items": _ESTIMATE_SCHEMA},
            "p_r": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        },
    },
    "mediate.json": {
        "type": "object",
        "required": ["provenance", "decomposition", "proportions",
                     "equality_test"],
        "properties": {
            "decomposition": {
                "type": "object",
                "required": ["reference", "total", "ide", "iie_m1", "iie_m2",
                             "cov"],
            },
            "equality_test": {"type": "object", "required": ["z", "p"]},
        },
    },
    "incremental.json": {
        "type": "object",
        "required": ["provenance", "observed_effect", "endpoint_infinity",
                     "band_quantile", "band_reps"],
    },
    "sensitivity.json": {
        "type": "object",
        "required": ["provenance", "prop1", "prop2"],
        "properties": {
            "prop1": {"type": "object", "required": ["tau_star", "base"]},
            "prop2": {"type": "object", "required": ["tau_star", "base"]},
        },
    },
    "bundle.json": {
        "type": "object",
        "required": ["provenance", "format", "outcome", "mode", "pi1", "mu0",
                     "mu1", "folds", "clip_eps"],
        "properties": {"format": {"const": "nuisance-bundle/1"}},
    },
    "truth.json": {
        "type": "object",
        "required": ["provenance", "truth"],
        "properties": {
            "truth": {
                "type": "object",
                "required": ["rd", "rr", "mpo0", "mpo1", "decomposition",
                             "incremental", "psi_obs", "p_r"],
            },
        },
    },
    "ledger.json": {"type": "object", "required": ["provenance", "ledger"]},
    "diagnostics.json": {
        "type": "object",
        "required": ["provenance", "curves", "weight_quantiles"],
    },
    "rerun.json": {"type": "object", "required": ["provenance", "variants"]},
}


@dataclass(frozen=True)
class PipelineConfig:
    raw: dict
    schema: SchemaConfig
    filters: FilterConfig
    bins: dict
    value_maps: dict
    nuisance: dict
    aux_join: dict | None
    bad_controls: tuple[str, ...]
    suspicious_rules: dict | None
    alpha: float
    min_subgroup_n: int

    @property
    def hash(self) -> str:
        digest = hashlib.sha256(json.dumps(self.raw, sort_keys=True,
                                           separators=(",", ":")).encode())
        return digest.hexdigest()[:16]


def parse_config(payload: dict) -> PipelineConfig:
    unknown = set(payload) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "schema" not in payload:
        raise ConfigError("config must contain a 'schema' section")
    schema = SchemaConfig.from_dict(payload["schema"])
    filters = FilterConfig.from_dict(payload.get("filters", {}))
    nuis = dict(payload.get("nuisance", {}))
    unknown = set(nuis) - _NUISANCE_KEYS
    if unknown:
        raise ConfigError(f"unknown nuisance keys: {sorted(unknown)}")
    est = dict(payload.get("estimation", {}))
    unknown = set(est) - _ESTIMATION_KEYS
    if unknown:
        raise ConfigError(f"unknown estimation keys: {sorted(unknown)}")
    aux = payload.get("aux_join")
    if aux is not None:
        unknown = set(aux) - {"path", "key", "policy"}
        if unknown:
            raise ConfigError(f"unknown aux_join keys: {sorted(unknown)}")
    rules = payload.get("suspicious_rules")
    if rules is not None:
        rules = {k: (float(v[0]), float(v[1])) for k, v in rules.items()}
    return PipelineConfig(
        raw=payload, schema=schema, filters=filters,
        bins=dict(payload.get("bins", {})),
        value_maps=dict(payload.get("value_maps", {})),
        nuisance=nuis, aux_join=aux,
        bad_controls=tuple(payload.get("bad_controls", ())),
        suspicious_rules=rules,
        alpha=float(est.get("alpha", 0.05)),
        min_subgroup_n=int(est.get("min_subgroup_n", 50)),
    )


def load_config(path: str) -> PipelineConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as handle:
        payload = json.load(handle)
    payload.pop("provenance", None)   # artifact stamp, not configuration
    return parse_config(payload)


def nuisance_spec(cfg: PipelineConfig, args=None, **overrides) -> NuisanceSpec:
    kwargs = dict(cfg.nuisance)
    if args is not None:
        for key in ("learner", "folds", "clip", "outcome", "seed"):
            val = getattr(args, key, None)
            if val is not None:
                kwargs[key] = val
        if getattr(args, "mediators", False):
            kwargs["mediators"] = True
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    for key in ("covariates", "pi_covariates", "mu_covariates"):
        if kwargs.get(key) is not None:
            kwargs[key] = tuple(kwargs[key])
    if "gbt" in kwargs and isinstance(kwargs["gbt"], dict):
        kwargs["gbt"] = GbtParams(**kwargs["gbt"])
    return NuisanceSpec(**kwargs)


# ---------------------------------------------------------------------------
# data plumbing


def read_sample(cfg: PipelineConfig, data_path: str, filters=None,
                suspicious: bool = False):
    if not os.path.exists(data_path):
        raise DataError(f"data file not found: {data_path}")
    records, report = load_survey(data_path, cfg.schema, cfg.value_maps)
    if cfg.aux_join:
        records = join_auxiliary(records, cfg.aux_join["path"],
                                 cfg.aux_join["key"],
                                 cfg.aux_join.get("policy", "drop"))
    n_suspicious = 0
    if suspicious:
        records, n_suspicious = apply_range_rules(records, cfg.suspicious_rules)
    for name, n_bins in cfg.bins.items():
        records = bin_numeric(records, name, n_bins)
    categorical = sorted({name for rec in records for name in rec.covariates})
    records = recode_missing_as_category(records, categorical)
    sample, ledger = build_analytic_sample(records, filters or cfg.filters,
                                           cfg.schema.m1_threshold,
                                           cfg.schema.m2_threshold)
    extras = {"row_errors": len(report.row_errors),
              "suspicious_excluded": n_suspicious}
    return sample, ledger, extras


def load_bundle(path: str | None, fit_flag: bool, sample, cfg, args) -> NuisanceBundle:
    if path is None and not fit_flag:
        raise ConfigError("no nuisance bundle: pass --bundle PATH or --fit")
    if fit_flag and path is None:
        return crossfit(sample, nuisance_spec(cfg, args))
    if not os.path.exists(path):
        raise ConfigError(f"nuisance bundle not found: {path}")
    with open(path, encoding="utf-8") as handle:
        bundle = NuisanceBundle.from_dict(json.load(handle))
    bundle.require_n(sample.n)
    return bundle


# ---------------------------------------------------------------------------
# artifacts


class _Out:
    def __init__(self, directory: str, stamp: dict):
        self.dir = directory
        self.stamp = stamp
        os.makedirs(directory, exist_ok=True)
        self.written: list[str] = []

    def json(self, name: str, payload: dict) -> str:
        path = os.path.join(self.dir, name)
        body = {"provenance": self.stamp}
        body.update(payload)
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(body, handle, indent=2, sort_keys=True)
            handle.write("\n")
        self._sidecar(path)
        self.written.append(path)
        return path

    def csv(self, name: str, rows: list[dict], fieldnames=None) -> str:
        path = os.path.join(self.dir, name)
        if fieldnames is None:
            fieldnames = list(rows[0]) if rows else ["empty"]
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=fieldnames)
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
        self._sidecar(path)
        self.written.append(path)
        return path

    def text(self, name: str, body: str) -> str:
        path = os.path.join(self.dir, name)
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(body)
            if not body.endswith("\n"):
                handle.write("\n")
        self._sidecar(path)
        self.written.append(path)
        return path

    def _sidecar(self, path: str) -> None:
        with open(path + ".meta.json", "w", encoding="utf-8") as handle:
            json.dump({"written_at": time.time()}, handle)
            handle.write("\n")


def _estimate_row(est: effects.InfluenceEstimate) -> dict:
    return {"label": est.label, "point": est.point, "se": est.se,
            "lo": est.ci[0], "hi": est.ci[1], "n": est.n, "scale": est.scale}


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    spec = sim.preset(args.preset)
    seed = args.seed if args.seed is not None else spec.default_seed
    records = sim.generate_records(spec, args.n, seed)
    cov_names = [name for name, _ in spec.covariates]
    schema = SchemaConfig(outcome="y", treatment="a", mediator1="m1",
                          mediator2="m2", acceptance="v",
                          covariates=tuple(cov_names),
                          numeric_covariates=tuple(spec.noise_covariates))
    config_payload = {
        "schema": {"outcome": "y", "treatment": "a", "mediator1": "m1",
                   "mediator2": "m2", "acceptance": "v",
                   "covariates": cov_names,
                   "numeric_covariates": list(spec.noise_covariates)},
        "filters": {},
    }
    cfg = parse_config(config_payload)
    out = _Out(args.out, {"command": "simulate", "config_hash": cfg.hash,
                          "seed": seed, "version": __version__,
                          "preset": args.preset, "n": args.n})
    data_path = os.path.join(args.out, "data.csv")
    write_records(records, data_path, schema)
    out.written.append(data_path)
    truth = sim.enumerate_truth(spec)
    out.json("truth.json", {"truth": truth.to_dict()})
    out.json("dgp.json", {"dgp": spec.to_dict()})
    out.json("config.json", config_payload)
    print(f"simulate: wrote {args.n} records to {data_path}")
    return 0


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    sample, ledger, extras = read_sample(cfg, args.data)
    spec = nuisance_spec(cfg, args)
    bundle = crossfit(sample, spec)
    seed = spec.seed
    out = _Out(args.out, {"command": "fit", "config_hash": cfg.hash,
                          "seed": seed, "version": __version__})
    bundle.metadata["config_hash"] = cfg.hash
    out.json("bundle.json", bundle.to_dict())
    out.json("ledger.json", {"ledger": ledger.to_dict(), **extras})
    print(f"fit: n={sample.n} learner={spec.learner} folds={spec.resolved_folds()}")
    return 0


def _estimation_context(args):
    cfg = load_config(args.config)
    sample, ledger, extras = read_sample(cfg, args.data)
    bundle = load_bundle(args.bundle, getattr(args, "fit", False), sample,
                         cfg, args)
    return cfg, sample, ledger, bundle


def cmd_ate(args) -> int:
    cfg, sample, ledger, bundle = _estimation_context(args)
    alpha = cfg.alpha
    rows = []
    rd = effects.risk_difference(sample, bundle, alpha)
    rr = effects.risk_ratio(sample, bundle, alpha)
    rows.append(_estimate_row(effects.phi1(sample, bundle, 0, alpha)))
    rows.append(_estimate_row(effects.phi1(sample, bundle, 1, alpha)))
    rows.append(_estimate_row(rd))
    rows.append(_estimate_row(rr))
    rows.append(_estimate_row(effects.pr_scaled_bound(rd, ledger.p_r)))
    bound = effects.pandemic_bound(rd, rr)
    out = _Out(args.out, {"command": "ate", "config_hash": cfg.hash,
                          "seed": args.seed or 0, "version": __version__})
    out.json("ate.json", {"estimates": rows, "pandemic_bound": bound.to_dict(),
                          "p_r": ledger.p_r, "ledger": ledger.to_dict()})
    out.csv("ate.csv", rows)
    print(f"ate: rd={rd.point:+.4f} ({rd.ci[0]:+.4f}, {rd.ci[1]:+.4f}) "
          f"rr={rr.point:.4f}")
    return 0


def cmd_mediate(args) -> int:
    cfg, sample, ledger, bundle = _estimation_context(args)
    dec = mediation.interventional_decomposition(sample, bundle,
                                                 args.reference, cfg.alpha)
    props = mediation.proportion_mediated(dec, cfg.alpha)
    z, p = mediation.mediator_equality_test(dec)
    rows = [_estimate_row(dec.total)]
    rows += [_estimate_row(est) for est in dec.components().values()]
    out = _Out(args.out, {"command": "mediate", "config_hash": cfg.hash,
                          "seed": args.seed or 0, "version": __version__})
    out.json("mediate.json", {"decomposition": dec.to_dict(),
                              "proportions": [pr.to_dict() for pr in props],
                              "equality_test": {"z": z, "p": p}})
    out.csv("mediate.csv", rows)
    print(f"mediate: total={dec.total.point:+.4f} ide={dec.ide.point:+.4f} "
          f"equality p={p:.2e}")
    return 0


def cmd_incremental(args) -> int:
    cfg, sample, ledger, bundle = _estimation_context(args)
    deltas = np.geomspace(args.delta_min, args.delta_max, args.delta_points)
    curve = incremental.incremental_curve(sample, bundle, deltas,
                                          band_reps=args.band_reps,
                                          seed=args.seed or 0, alpha=cfg.alpha)
    obs = incremental.observed_effect(curve)
    out = _Out(args.out, {"command": "incremental", "config_hash": cfg.hash,
                          "seed": args.seed or 0, "version": __version__})
    out.csv("incremental.csv", curve.csv_rows())
    out.json("incremental.json", {
        "observed_effect": obs.to_dict(),
        "endpoint_infinity": curve.endpoint_infinity.to_dict(),
        "band_quantile": curve.band_quantile,
        "band_reps": curve.band_reps,
        "warnings": list(curve.warnings)})
    print(f"incremental: observed={obs.point:+.4f} "
          f"({obs.ci[0]:+.4f}, {obs.ci[1]:+.4f})")
    return 0


def cmd_sensitivity(args) -> int:
    cfg, sample, ledger, bundle = _estimation_context(args)
    taus = sensitivity.default_tau_grid(args.tau_max, args.tau_step)
    payload = {}
    out = _Out(args.out, {"command": "sensitivity", "config_hash": cfg.hash,
                          "seed": args.seed or 0, "version": __version__})
    results = {}
    for variant, fn in (("prop1", sensitivity.prop1_bounds),
                        ("prop2", sensitivity.prop2_bounds)):
        result = fn(sample, bundle, taus, cfg.alpha)
        results[variant] = result
        report = sensitivity.explain_away(result)
        payload[variant] = {"tau_star": report.to_dict(),
                            "base": result.base.to_dict()}
        out.csv(f"sensitivity_{variant}.csv", result.csv_rows())
    if args.comparator:
        plain_spec = nuisance_spec(cfg, args, covariates=(),
                                   pi_covariates=(), mu_covariates=())
        plain = crossfit(sample, plain_spec)
        unadj = sensitivity.prop1_bounds(sample, plain, taus, cfg.alpha)
        payload["comparator_tau"] = sensitivity.comparator_tau(
            unadj, results["prop1"].base.point)
    out.json("sensitivity.json", payload)
    print(f"sensitivity: prop1 tau*={payload['prop1']['tau_star']['tau_star_ci']}")
    return 0


def _split_sample(sample: AnalyticSample, seed: int):
    pick = root_stream(seed).random(sample.n) < 0.5
    aux = sample.subset(pick)
    main = sample.subset(~pick)
    aux = AnalyticSample(aux.y, aux.a, aux.m1, aux.m2, aux.covariates,
                         aux.weight, aux.m1_threshold, aux.m2_threshold,
                         split="auxiliary")
    return aux, main


def cmd_subgroups(args) -> int:
    cfg = load_config(args.config)
    sample, ledger, extras = read_sample(cfg, args.data)
    out = _Out(args.out, {"command": "subgroups", "config_hash": cfg.hash,
                          "seed": args.seed or 0, "version": __version__})
    if args.grouping:
        bundle = load_bundle(args.bundle, args.fit, sample, cfg, args)
        rd = effects.risk_difference(sample, bundle, cfg.alpha)
        groups = effects.subgroup_effects(rd, sample, args.grouping,
                                          cfg.min_subgroup_n)
        rows = [{"group": g.label, "suppressed": g.suppressed,
                 **_estimate_row(g.estimate)} for g in groups]
        out.json("subgroups.json", {"grouping": args.grouping, "groups": rows})
        out.csv("subgroups.csv", rows)
        print(f"subgroups: {len(rows)} groups over {args.grouping}")
        return 0
    if args.discover:
        seed = args.seed or 0
        if args.aux_data:
            aux_sample, _, _ = read_sample(cfg, args.aux_data)
            aux_sample = AnalyticSample(aux_sample.y, aux_sample.a,
                                        aux_sample.m1, aux_sample.m2,
                                        aux_sample.covariates, aux_sample.weight,
                                        aux_sample.m1_threshold,
                                        aux_sample.m2_threshold, "auxiliary")
        else:
            aux_sample, _ = _split_sample(sample, seed)
        spec = nuisance_spec(cfg, args)
        aux_bundle = crossfit(aux_sample, spec)
        aux_bundle.split = "auxiliary"
        pseudo = hte.pseudo_outcomes(aux_sample, aux_bundle)
        tree = hte.fit_tree(pseudo, aux_sample,
                            covariates=args.tree_covariates,
                            depth=args.depth, min_leaf=args.min_leaf,
                            gain_fraction=args.gain_fraction)
        out.json("tree.json", tree.to_dict())
        out.text("tree.txt", tree.render_text())
        out.text("candidates.json", hte.candidates_to_json(tree.candidates))
        print(f"subgroups: discovered {len(tree.candidates)} candidates "
              f"(edit approved flags in candidates.json)")
        return 0
    if args.confirm:
        if not args.candidates or not os.path.exists(args.candidates):
            raise ConfigError(f"candidates file not found: {args.candidates}")
        with open(args.candidates, encoding="utf-8") as handle:
            candidates = hte.candidates_from_json(handle.read())
        if args.approve_all:
            candidates = hte.approve(candidates, range(len(candidates)))
        seed = args.seed or 0
        main_sample = sample if args.aux_data else _split_sample(sample, seed)[1]
        spec = nuisance_spec(cfg, args)
        main_bundle = crossfit(main_sample, spec)
        estimates, tests = hte.confirm(candidates, main_sample, main_bundle,
                                       cfg.min_subgroup_n, cfg.alpha)
        rows = [{"group": g.label, "suppressed": g.suppressed,
                 **_estimate_row(g.estimate)} for g in estimates]
        out.json("confirmed.json", {"groups": rows, "pairwise_tests": tests})
        out.csv("confirmed.csv", rows)
        print(f"subgroups: confirmed {len(rows)} groups, {len(tests)} tests")
        return 0
    raise ConfigError("subgroups needs one of --grouping, --discover, --confirm")


def cmd_diagnose(args) -> int:
    cfg, sample, ledger, bundle = _estimation_context(args)
    report = diagnostics(bundle, sample)
    out = _Out(args.out, {"command": "diagnose", "config_hash": cfg.hash,
                          "seed": args.seed or 0, "version": __version__})
    out.json("diagnostics.json", report.to_dict())
    out.csv("calibration.csv", report.csv_rows())
    print(f"diagnose: {len(report.curves)} calibration curves")
    return 0


def cmd_rerun(args) -> int:
    cfg = load_config(args.config)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    if not variants:
        variants = ["baseline"]
    for v in variants:
        if v not in RERUN_VARIANTS:
            raise ConfigError(f"unknown rerun variant {v!r}; "
                              f"known: {list(RERUN_VARIANTS)}")
    rows = []
    for variant in variants:
        filters = cfg.filters
        suspicious = False
        covariates = cfg.nuisance.get("covariates")
        if variant == "hesitant-included":
            filters = FilterConfig(True, filters.include_hesitancy_nonresponse,
                                   filters.require_region, filters.row_filters)
        elif variant == "hesitancy-nonresponse-included":
            filters = FilterConfig(filters.include_hesitant, True,
                                   filters.require_region, filters.row_filters)
        elif variant == "suspicious-excluded":
            suspicious = True
        elif variant == "bad-controls-dropped":
            sample_probe, _, _ = read_sample(cfg, args.data, filters)
            keep = [name for name in sample_probe.covariates
                    if name not in cfg.bad_controls]
            covariates = keep
        sample, ledger, extras = read_sample(cfg, args.data, filters,
                                             suspicious)
        spec = nuisance_spec(cfg, args, covariates=covariates)
        bundle = crossfit(sample, spec)
        rd = effects.risk_difference(sample, bundle, cfg.alpha)
        rows.append({"variant": variant, "n": sample.n, "point": rd.point,
                     "se": rd.se, "lo": rd.ci[0], "hi": rd.ci[1],
                     "excluded_suspicious": extras["suspicious_excluded"]})
    out = _Out(args.out, {"command": "rerun", "config_hash": cfg.hash,
                          "seed": args.seed or 0, "version": __version__})
    out.csv("comparison.csv", rows)
    out.json("rerun.json", {"variants": rows})
    print(f"rerun: {len(rows)} variants")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_common(sub, bundle=True):
    sub.add_argument("--config", help="pipeline config JSON")
    sub.add_argument("--data", help="survey data file")
    sub.add_argument("--out", required=True, help="output directory")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--threads", type=int, default=None)
    if bundle:
        sub.add_argument("--bundle", help="nuisance bundle JSON from `fit`")
        sub.add_argument("--fit", action="store_true",
                         help="fit nuisances inline instead of loading a bundle")
        sub.add_argument("--learner", choices=["glm", "gbt", "gbt-stack"])
        sub.add_argument("--folds", type=int)
        sub.add_argument("--clip", type=float)
        sub.add_argument("--outcome", choices=["y", "m1_star", "m2_star"])


def build_parser() -> _Parser:
    parser = _Parser(prog="causalsurvey",
                     description="influence-function estimation pipeline")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("simulate", help="generate synthetic data plus truth")
    p.add_argument("--preset", required=True, choices=sorted(sim.PRESETS))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = subs.add_parser("fit", help="fit and save a nuisance bundle")
    _add_common(p, bundle=False)
    p.add_argument("--learner", choices=["glm", "gbt", "gbt-stack"])
    p.add_argument("--folds", type=int)
    p.add_argument("--clip", type=float)
    p.add_argument("--outcome", choices=["y", "m1_star", "m2_star"])
    p.add_argument("--mediators", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = subs.add_parser("ate", help="risk difference / ratio and bounds")
    _add_common(p)
    p.set_defaults(func=cmd_ate)

    p = subs.add_parser("mediate", help="interventional decomposition")
    _add_common(p)
    p.add_argument("--reference", type=int, choices=[0, 1], default=0)
    p.add_argument("--mediators", action="store_true", default=True,
                   help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_mediate)

    p = subs.add_parser("incremental", help="odds-multiplier intervention curve")
    _add_common(p)
    p.add_argument("--delta-min", type=float, default=incremental.DELTA_GRID_MIN)
    p.add_argument("--delta-max", type=float, default=incremental.DELTA_GRID_MAX)
    p.add_argument("--delta-points", type=int,
                   default=incremental.DELTA_GRID_POINTS)
    p.add_argument("--band-reps", type=int, default=1000)
    p.set_defaults(func=cmd_incremental)

    p = subs.add_parser("sensitivity", help="tau-indexed confounding bounds")
    _add_common(p)
    p.add_argument("--tau-max", type=float, default=sensitivity.TAU_GRID_MAX)
    p.add_argument("--tau-step", type=float, default=sensitivity.TAU_GRID_STEP)
    p.add_argument("--comparator", action="store_true",
                   help="also compute the no-covariate comparator tau")
    p.set_defaults(func=cmd_sensitivity)

    p = subs.add_parser("subgroups", help="pre-specified or discovered subgroups")
    _add_common(p)
    p.add_argument("--grouping", help="covariate whose levels define groups")
    p.add_argument("--discover", action="store_true")
    p.add_argument("--confirm", action="store_true")
    p.add_argument("--aux-data", help="separate discovery-split file")
    p.add_argument("--candidates", help="candidates JSON for --confirm")
    p.add_argument("--approve-all", action="store_true")
    p.add_argument("--tree-covariates", nargs="*", default=None)
    p.add_argument("--depth", type=int, default=hte.MAX_DEPTH)
    p.add_argument("--min-leaf", type=int, default=hte.MIN_LEAF_DISCOVERY)
    p.add_argument("--gain-fraction", type=float, default=hte.GAIN_FRACTION)
    p.set_defaults(func=cmd_subgroups)

    p = subs.add_parser("diagnose", help="calibration and weight diagnostics")
    _add_common(p)
    p.set_defaults(func=cmd_diagnose)

    p = subs.add_parser("rerun", help="robustness-variant comparison table")
    _add_common(p, bundle=False)
    p.add_argument("--learner", choices=["glm", "gbt", "gbt-stack"])
    p.add_argument("--folds", type=int)
    p.add_argument("--variants", default="baseline",
                   help=f"comma list from {', '.join(RERUN_VARIANTS)}")
    p.set_defaults(func=cmd_rerun)
    return parser


def _apply_threads(args) -> None:
    threads = getattr(args, "threads", None)
    if threads is None:
        threads = os.environ.get(THREADS_ENV)
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _apply_threads(args)
        for req in ("config", "data"):
            if hasattr(args, req) and getattr(args, req) is None \
                    and args.command not in ("simulate",):
                raise ConfigError(f"--{req} is required for {args.command}")
        return args.func(args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return 4
    except CausalSurveyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
