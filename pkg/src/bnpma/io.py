"""Dataset ingestion and deterministic table writers."""
import csv
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .partition import CohortSummary, InvalidCohort

log = logging.getLogger(__name__)

REQUIRED = ("study_id", "cohort_id", "marker", "median", "ci_lower", "ci_upper", "n")
STANDARD = REQUIRED + ("conf_level",)
MARKER_ALIASES = {
    "positive": "positive", "pos": "positive", "+": "positive",
    "negative": "negative", "neg": "negative", "-": "negative",
    "none": "none", "": "none", "na": "none",
}


class IngestError(ValueError):
    pass


def fmt(x):
    """Float to text with 17 significant digits (round-trip exact)."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isinf(x):
        return "Inf" if x > 0 else "-Inf"
    return f"{x:.17g}"


def _parse_time(text, allow_inf=False):
    t = text.strip()
    if allow_inf and t.lower() in ("inf", "+inf", "infinity"):
        return math.inf
    return float(t)


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


@dataclass
class IngestReport:
    input_rows: int = 0
    accepted: int = 0
    rejected: list = field(default_factory=list)  # (row number, cohort_id, reason)
    imputations: list = field(default_factory=list)
    covariate_columns: list = field(default_factory=list)
    encoded_columns: list = field(default_factory=list)
    baselines: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "input_rows": self.input_rows,
            "accepted": self.accepted,
            "rejected": [{"row": r, "cohort_id": c, "reason": why} for r, c, why in self.rejected],
            "imputations": self.imputations,
            "covariate_columns": self.covariate_columns,
            "encoded_columns": self.encoded_columns,
            "baselines": self.baselines,
        }


def _validate_row(row):
    """Parse one CSV row into raw fields or raise InvalidCohort with a reason."""
    for key in ("study_id", "cohort_id"):
        if not (row.get(key) or "").strip():
            raise InvalidCohort(f"missing {key}")
    marker = MARKER_ALIASES.get((row.get("marker") or "").strip().lower())
    if marker is None:
        raise InvalidCohort(f"bad marker code {row.get('marker')!r}")
    n_text = (row.get("n") or "").strip()
    if not n_text:
        raise InvalidCohort("missing n")
    try:
        n_val = float(n_text)
    except ValueError:
        raise InvalidCohort(f"non-numeric n {n_text!r}") from None
    if n_val != int(n_val):
        raise InvalidCohort("n must be an integer")
    try:
        med = _parse_time(row["median"])
        lo = _parse_time(row["ci_lower"])
        hi = _parse_time(row["ci_upper"], allow_inf=True)
    except (ValueError, TypeError, KeyError):
        raise InvalidCohort("non-numeric median or interval bound") from None
    if not (0 < lo < med < hi):
        raise InvalidCohort("interval ordering")
    conf_text = (row.get("conf_level") or "").strip()
    conf = float(conf_text) if conf_text else 0.95
    return dict(study_id=row["study_id"].strip(), cohort_id=row["cohort_id"].strip(),
                marker=marker, lower=lo, median=med, upper=hi, n=int(n_val), conf_level=conf)


def ingest(path):
    """Read and validate a cohort CSV.

    Returns ``(cohorts, report)``.  Numeric covariate columns are used as
    given; any other column is one-hot encoded with levels in lexicographic
    order and the first level dropped as baseline.
    """
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            rows = list(reader)
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    missing = [c for c in REQUIRED if c not in header]
    if missing:
        raise IngestError(f"missing required columns: {', '.join(missing)}")
    cov_cols = [c for c in header if c not in STANDARD]
    report = IngestReport(input_rows=len(rows), covariate_columns=cov_cols)

    parsed, seen = [], set()
    for rownum, row in enumerate(rows, start=2):
        try:
            fields = _validate_row(row)
            if fields["cohort_id"] in seen:
                raise InvalidCohort("duplicate cohort_id")
            raw = {c: (row.get(c) or "").strip() for c in cov_cols}
            empty = [c for c, v in raw.items() if v == ""]
            if empty:
                raise InvalidCohort(f"missing covariate {empty[0]}")
            CohortSummary(covariates=np.zeros(0), raw_covariates={}, **fields)
        except InvalidCohort as exc:
            report.rejected.append((rownum, (row.get("cohort_id") or "").strip(), str(exc)))
            continue
        seen.add(fields["cohort_id"])
        parsed.append((fields, raw))
    if not parsed:
        raise IngestError("no valid rows")

    encoders = []
    for c in cov_cols:
        values = [raw[c] for _, raw in parsed]
        if all(_is_number(v) for v in values):
            encoders.append((c, None))
            report.encoded_columns.append(c)
        else:
            levels = sorted(set(values))
            report.baselines[c] = levels[0]
            log.info("covariate %s: baseline level %r", c, levels[0])
            encoders.append((c, levels[1:]))
            report.encoded_columns.extend(f"{c}={lv}" for lv in levels[1:])

    cohorts = []
    for fields, raw in parsed:
        x = []
        typed = {}
        for c, levels in encoders:
            if levels is None:
                x.append(float(raw[c]))
                typed[c] = raw[c]
            else:
                x.extend(1.0 if raw[c] == lv else 0.0 for lv in levels)
                typed[c] = raw[c]
        if math.isinf(fields["upper"]):
            report.imputations.append(
                {"cohort_id": fields["cohort_id"], "what": "upper bound not reached; "
                 "right level-2 split at the conditional centering median"})
        cohorts.append(CohortSummary(covariates=np.array(x), raw_covariates=typed, **fields))
    report.accepted = len(cohorts)
    for r, cid, why in report.rejected:
        log.warning("row %d (%s) rejected: %s", r, cid or "?", why)
    return cohorts, report


def write_cohorts(path, cohorts, covariate_columns=None):
    """Write cohorts in the input schema (raw covariate values)."""
    if covariate_columns is None:
        covariate_columns = list(cohorts[0].raw_covariates) if cohorts else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(STANDARD) + list(covariate_columns))
        for c in cohorts:
            w.writerow([c.study_id, c.cohort_id, c.marker, fmt(c.median), fmt(c.lower),
                        fmt(c.upper), c.n, fmt(c.conf_level)]
                       + [_cell(c.raw_covariates[k]) for k in covariate_columns])


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    return str(v)


def write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) if not isinstance(v, (int, np.integer)) else str(int(v))
                        for v in row])


def read_table(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o)}")
