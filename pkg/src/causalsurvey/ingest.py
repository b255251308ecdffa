"""Survey ingestion: delimited-file parsing, missingness recoding, auxiliary
joins, quantile binning, and construction of the analytic sample.

The analytic sample keeps exactly the records that report acceptance
affirmatively and have outcome, treatment, and both mediators observed;
every exclusion on the way is counted in a telescoping ledger.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .data import AnalyticSample, CategoricalColumn, M1_STAR_DEFAULT, M2_STAR_DEFAULT
from .errors import ConfigError, DataError

MISSING_LEVEL = "missing"
DEFAULT_SENTINELS = ("", "NA")

# plausibility ranges for free-numeric survey answers; values outside are
# treated as suspicious when the corresponding exclusion toggle is on
DEFAULT_SUSPICIOUS_RULES = {
    "household_size": (0.0, 30.0),
    "sick_in_household": (0.0, 30.0),
    "work_contacts": (0.0, 100.0),
    "shopping_contacts": (0.0, 100.0),
    "social_contacts": (0.0, 100.0),
    "other_contacts": (0.0, 100.0),
}

N_ORDINAL_LEVELS = 4


@dataclass(frozen=True)
class SurveyRecord:
    """One respondent; absent values are None and drive the response flags."""

    outcome: int | None = None
    treatment: int | None = None
    mediator1: int | None = None
    mediator2: int | None = None
    acceptance: int | None = None
    covariates: dict = field(default_factory=dict)
    region: str | None = None
    weight: float = 1.0

    @property
    def r_outcome(self) -> bool:
        return self.outcome is not None

    @property
    def r_treatment(self) -> bool:
        return self.treatment is not None

    @property
    def r_mediator1(self) -> bool:
        return self.mediator1 is not None

    @property
    def r_mediator2(self) -> bool:
        return self.mediator2 is not None

    @property
    def complete(self) -> bool:
        return (self.r_outcome and self.r_treatment and self.r_mediator1
                and self.r_mediator2)


@dataclass(frozen=True)
class SchemaConfig:
    outcome: str
    treatment: str
    mediator1: str
    mediator2: str
    acceptance: str
    covariates: tuple[str, ...] = ()
    numeric_covariates: tuple[str, ...] = ()
    region: str | None = None
    weight: str | None = None
    delimiter: str = ","
    missing_sentinels: tuple[str, ...] = DEFAULT_SENTINELS
    m1_threshold: int = M1_STAR_DEFAULT
    m2_threshold: int = M2_STAR_DEFAULT
    drop_bad_rows: bool = False

    _KEYS = ("outcome", "treatment", "mediator1", "mediator2", "acceptance",
             "covariates", "numeric_covariates", "region", "weight",
             "delimiter", "missing_sentinels", "m1_threshold", "m2_threshold",
             "drop_bad_rows")

    @classmethod
    def from_dict(cls, payload: dict) -> "SchemaConfig":
        unknown = set(payload) - set(cls._KEYS)
        if unknown:
            raise ConfigError(f"unknown schema keys: {sorted(unknown)}")
        kwargs = dict(payload)
        for key in ("covariates", "numeric_covariates", "missing_sentinels"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    def required_columns(self) -> list[str]:
        cols = [self.outcome, self.treatment, self.mediator1, self.mediator2,
                self.acceptance]
        cols += list(self.covariates) + list(self.numeric_covariates)
        if self.region:
            cols.append(self.region)
        if self.weight:
            cols.append(self.weight)
        return cols


@dataclass(frozen=True)
class FilterConfig:
    include_hesitant: bool = False
    include_hesitancy_nonresponse: bool = False
    require_region: bool = False
    row_filters: tuple[dict, ...] = ()

    @classmethod
    def from_dict(cls, payload: dict) -> "FilterConfig":
        unknown = set(payload) - {"include_hesitant",
                                  "include_hesitancy_nonresponse",
                                  "require_region", "row_filters"}
        if unknown:
            raise ConfigError(f"unknown filter keys: {sorted(unknown)}")
        return cls(
            include_hesitant=payload.get("include_hesitant", False),
            include_hesitancy_nonresponse=payload.get(
                "include_hesitancy_nonresponse", False),
            require_region=payload.get("require_region", False),
            row_filters=tuple(payload.get("row_filters", ())),
        )


@dataclass
class ParseReport:
    row_errors: list[tuple[int, str, str]] = field(default_factory=list)
    rows_dropped: int = 0

    def add(self, row: int, column: str, message: str) -> None:
        self.row_errors.append((row, column, message))


@dataclass(frozen=True)
class ExclusionLedger:
    """Remaining record counts after each exclusion step (telescoping)."""

    total: int
    after_row_filters: int
    after_region: int
    after_hesitant: int
    after_hesitancy_nonresponse: int
    final: int
    p_r: float

    def __post_init__(self):
        steps = self.steps()
        for (_, a), (_, b) in zip(steps, steps[1:]):
            if b > a:
                raise DataError("exclusion ledger is not telescoping")
        if not 0 < self.p_r <= 1:
            raise DataError(f"p_r must be in (0, 1], got {self.p_r}")

    def steps(self) -> list[tuple[str, int]]:
        return [("total", self.total),
                ("after_row_filters", self.after_row_filters),
                ("after_region", self.after_region),
                ("after_hesitant", self.after_hesitant),
                ("after_hesitancy_nonresponse", self.after_hesitancy_nonresponse),
                ("final", self.final)]

    def to_dict(self) -> dict:
        out = dict(self.steps())
        out["p_r"] = self.p_r
        return out


def _parse_binary(raw, value_map, sentinels):
    if raw in sentinels:
        return None
    if value_map is not None:
        if raw not in value_map:
            raise ValueError(f"value {raw!r} not in value map")
        mapped = value_map[raw]
        if mapped in (None, ""):
            return None
        return int(mapped)
    val = int(raw)
    if val not in (0, 1):
        raise ValueError(f"binary value out of range: {raw!r}")
    return val


def _parse_ordinal(raw, sentinels):
    if raw in sentinels:
        return None
    val = int(raw)
    if not 0 <= val < N_ORDINAL_LEVELS:
        raise ValueError(f"ordinal level out of range: {raw!r}")
    return val


def load_survey(path, schema: SchemaConfig, value_maps: dict | None = None):
    """Parse a delimited survey extract into records plus a row-error report.

    Missing schema-required columns raise immediately; cell-level parse
    failures are collected into the report and either null the cell or drop
    the row, per ``schema.drop_bad_rows``.
    """
    value_maps = value_maps or {}
    sentinels = set(schema.missing_sentinels)
    records: list[SurveyRecord] = []
    report = ParseReport()
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle, delimiter=schema.delimiter)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file, header required")
        missing_cols = [c for c in schema.required_columns()
                        if c not in reader.fieldnames]
        if missing_cols:
            raise ConfigError(f"schema columns missing from {path}: {missing_cols}")
        for i, row in enumerate(reader):
            bad = False
            fields = {}
            for attr, col, parser in (
                    ("outcome", schema.outcome, _parse_binary),
                    ("treatment", schema.treatment, _parse_binary),
                    ("acceptance", schema.acceptance, _parse_binary)):
                try:
                    fields[attr] = parser(row[col].strip(),
                                          value_maps.get(col), sentinels)
                except ValueError as exc:
                    report.add(i, col, str(exc))
                    fields[attr] = None
                    bad = True
            for attr, col in (("mediator1", schema.mediator1),
                              ("mediator2", schema.mediator2)):
                try:
                    fields[attr] = _parse_ordinal(row[col].strip(), sentinels)
                except ValueError as exc:
                    report.add(i, col, str(exc))
                    fields[attr] = None
                    bad = True
            covs = {}
            for name in schema.covariates:
                raw = row[name].strip()
                covs[name] = None if raw in sentinels else raw
            for name in schema.numeric_covariates:
                raw = row[name].strip()
                if raw in sentinels:
                    covs[name] = None
                    continue
                try:
                    covs[name] = float(raw)
                except ValueError as exc:
                    report.add(i, name, str(exc))
                    covs[name] = None
                    bad = True
            region = None
            if schema.region:
                raw = row[schema.region].strip()
                region = None if raw in sentinels else raw
            weight = 1.0
            if schema.weight:
                raw = row[schema.weight].strip()
                if raw not in sentinels:
                    weight = float(raw)
                    if weight < 0:
                        report.add(i, schema.weight, "negative weight")
                        bad = True
            if bad and schema.drop_bad_rows:
                report.rows_dropped += 1
                continue
            records.append(SurveyRecord(region=region, weight=weight,
                                        covariates=covs, **fields))
    return records, report


def recode_missing_as_category(records, covariate_names,
                               level: str = MISSING_LEVEL):
    """Replace absent categorical covariate values with a distinguished level."""
    covariate_names = list(covariate_names)
    for rec in records:
        for name in covariate_names:
            if isinstance(rec.covariates.get(name), float):
                raise ConfigError(f"covariate {name!r} is numeric; bin it "
                                  "before recoding missingness")
    out = []
    for rec in records:
        covs = dict(rec.covariates)
        changed = False
        for name in covariate_names:
            if covs.get(name) is None:
                covs[name] = level
                changed = True
        out.append(replace(rec, covariates=covs) if changed else rec)
    return out


def bin_numeric(records, name: str, n_bins: int = 5):
    """Rank-based quantile binning of a numeric covariate into q1..qk levels.

    Bin sizes differ by at most one record (exact ties aside); missing values
    stay absent so they can be recoded as their own category afterwards.
    """
    if n_bins < 2:
        raise ConfigError("binning needs at least 2 bins")
    values, idx = [], []
    for i, rec in enumerate(records):
        val = rec.covariates.get(name)
        if val is None:
            continue
        if not isinstance(val, (int, float)):
            try:
                val = float(val)
            except (TypeError, ValueError):
                raise ConfigError(f"covariate {name!r} has non-numeric value {val!r}")
        values.append(float(val))
        idx.append(i)
    if not values:
        return list(records)
    order = np.argsort(np.asarray(values), kind="stable")
    n = len(order)
    labels = [""] * n
    # contiguous rank chunks of near-equal size
    bounds = [round(j * n / n_bins) for j in range(n_bins + 1)]
    for b in range(n_bins):
        for pos in range(bounds[b], bounds[b + 1]):
            labels[order[pos]] = f"q{b + 1}"
    out = list(records)
    for j, i in enumerate(idx):
        covs = dict(out[i].covariates)
        covs[name] = labels[j]
        out[i] = replace(out[i], covariates=covs)
    return out


def join_auxiliary(records, aux_path, key_column: str, policy: str = "drop",
                   delimiter: str = ",",
                   sentinels: tuple[str, ...] = DEFAULT_SENTINELS):
    """Append region-keyed auxiliary columns as covariates.

    Records with no matching key are dropped (default) or keep absent values
    for the new covariates, per ``policy``.
    """
    if policy not in ("drop", "missing"):
        raise ConfigError(f"unknown join policy {policy!r}")
    table: dict[str, dict] = {}
    with open(aux_path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle, delimiter=delimiter)
        if reader.fieldnames is None or key_column not in reader.fieldnames:
            raise DataError(f"{aux_path}: key column {key_column!r} not found")
        aux_cols = [c for c in reader.fieldnames if c != key_column]
        duplicates = []
        for row in reader:
            key = row[key_column].strip()
            if key in table:
                duplicates.append(key)
                continue
            table[key] = {c: (None if row[c].strip() in sentinels
                              else row[c].strip()) for c in aux_cols}
        if duplicates:
            raise DataError(f"duplicate auxiliary keys: {sorted(set(duplicates))}")
    out = []
    for rec in records:
        match = table.get(rec.region) if rec.region is not None else None
        if match is None:
            if policy == "drop":
                continue
            match = {c: None for c in aux_cols}
        covs = dict(rec.covariates)
        covs.update(match)
        out.append(replace(rec, covariates=covs))
    return out


def apply_range_rules(records, rules: dict | None = None):
    """Drop records whose numeric answers fall outside plausibility ranges."""
    rules = DEFAULT_SUSPICIOUS_RULES if rules is None else rules
    kept = []
    n_excluded = 0
    for rec in records:
        suspicious = False
        for name, (lo, hi) in rules.items():
            val = rec.covariates.get(name)
            if val is None:
                continue
            try:
                num = float(val)
            except (TypeError, ValueError):
                continue
            if not lo <= num <= hi:
                suspicious = True
                break
        if suspicious:
            n_excluded += 1
        else:
            kept.append(rec)
    return kept, n_excluded


def _passes_row_filters(rec, row_filters) -> bool:
    for rule in row_filters:
        column = rule.get("column")
        value = rec.covariates.get(column)
        if "keep_in" in rule and str(value) not in set(map(str, rule["keep_in"])):
            return False
        if "drop_in" in rule and str(value) in set(map(str, rule["drop_in"])):
            return False
        if rule.get("require_present") and value is None:
            return False
    return True


def sample_from_records(records, m1_threshold=M1_STAR_DEFAULT,
                        m2_threshold=M2_STAR_DEFAULT,
                        split: str = "main") -> AnalyticSample:
    """Array the complete, accepting records; covariate levels sorted per name."""
    if not records:
        raise DataError("empty resulting sample")
    names = sorted({name for rec in records for name in rec.covariates})
    level_sets: dict[str, set] = {name: set() for name in names}
    for rec in records:
        for name in names:
            val = rec.covariates.get(name)
            if val is None:
                raise DataError(f"covariate {name!r} has absent values; recode "
                                "missingness before building the sample")
            if isinstance(val, float):
                raise ConfigError(f"covariate {name!r} is numeric; bin it first")
            level_sets[name].add(str(val))
    levels = {name: tuple(sorted(level_sets[name])) for name in names}
    index = {name: {lev: i for i, lev in enumerate(levels[name])}
             for name in names}
    n = len(records)
    y = np.empty(n)
    a = np.empty(n, dtype=int)
    m1 = np.empty(n, dtype=int)
    m2 = np.empty(n, dtype=int)
    weight = np.empty(n)
    codes = {name: np.empty(n, dtype=int) for name in names}
    for i, rec in enumerate(records):
        if not rec.complete or rec.acceptance != 1:
            raise DataError("analytic sample requires complete, accepting records")
        y[i] = rec.outcome
        a[i] = rec.treatment
        m1[i] = rec.mediator1
        m2[i] = rec.mediator2
        weight[i] = rec.weight
        for name in names:
            codes[name][i] = index[name][str(rec.covariates[name])]
    covs = {name: CategoricalColumn(levels[name], codes[name]) for name in names}
    return AnalyticSample(y, a, m1, m2, covs, weight, m1_threshold,
                          m2_threshold, split)


def build_analytic_sample(records, filters: FilterConfig | None = None,
                          m1_threshold=M1_STAR_DEFAULT,
                          m2_threshold=M2_STAR_DEFAULT):
    """Apply the exclusion cascade and return the sample plus its ledger."""
    filters = filters or FilterConfig()
    total = len(records)
    stage = [r for r in records if _passes_row_filters(r, filters.row_filters)]
    after_row_filters = len(stage)
    if filters.require_region:
        stage = [r for r in stage if r.region is not None]
    after_region = len(stage)
    if not filters.include_hesitant:
        stage = [r for r in stage if r.acceptance != 0]
    after_hesitant = len(stage)
    if not filters.include_hesitancy_nonresponse:
        stage = [r for r in stage if r.acceptance is not None]
    after_nonresponse = len(stage)
    complete = [r for r in stage if r.complete]
    if filters.include_hesitant or filters.include_hesitancy_nonresponse:
        # retained hesitant rows / nonresponders count as in-sample
        complete = [replace(r, acceptance=1) if r.acceptance != 1 else r
                    for r in complete]
    final = len(complete)
    if final == 0:
        raise DataError("empty resulting sample")
    ledger = ExclusionLedger(total, after_row_filters, after_region,
                             after_hesitant, after_nonresponse, final,
                             p_r=final / after_nonresponse)
    sample = sample_from_records(complete, m1_threshold, m2_threshold)
    return sample, ledger


def write_records(records, path, schema: SchemaConfig) -> None:
    """Emit records in the same delimited layout ``load_survey`` reads."""
    cov_names = sorted({name for rec in records for name in rec.covariates})
    declared = set(schema.covariates) | set(schema.numeric_covariates)
    extra = [c for c in cov_names if c not in declared]
    if extra:
        raise ConfigError(f"records carry covariates not in the schema: {extra}")
    header = [schema.outcome, schema.treatment, schema.mediator1,
              schema.mediator2, schema.acceptance]
    if schema.region:
        header.append(schema.region)
    if schema.weight:
        header.append(schema.weight)
    header += list(schema.covariates) + list(schema.numeric_covariates)

    def cell(value):
        if value is None:
            return ""
        if isinstance(value, float):
            return repr(value)
        return str(value)

    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, delimiter=schema.delimiter)
        writer.writerow(header)
        for rec in records:
            row = [cell(rec.outcome), cell(rec.treatment), cell(rec.mediator1),
                   cell(rec.mediator2), cell(rec.acceptance)]
            if schema.region:
                row.append(cell(rec.region))
            if schema.weight:
                row.append(repr(rec.weight))
            row += [cell(rec.covariates.get(name))
                    for name in list(schema.covariates) + list(schema.numeric_covariates)]
            writer.writerow(row)
