"""CSV and JSON input/output.

Parsing uses the stdlib csv module row by row rather than a dataframe
library, so every complaint about the input can name the exact file,
row, and column; for station records assembled by hand or exported
from heterogeneous loggers this matters more than parsing speed.

Time handling: timestamps are ISO-8601 in file, UTC assumed when no
offset is given; internally everything is int64 epoch seconds and
output is always written with an explicit Z suffix.  Floats are
written with repr, the shortest form that round-trips exactly, which
is what makes byte-identical reruns possible.

CSV files may begin with comment lines starting with '#'; the writer
records provenance (seed, configuration hash) there and the readers
skip them.
"""

import csv
import dataclasses
import hashlib
import json
import logging
import math
from datetime import datetime, timezone

import numpy as np

from .model import CovariatePanel, PrecipPanel

logger = logging.getLogger("pluvia.dataio")

_MISSING_MARKERS = {"", "nan", "na"}


class DataError(ValueError):
    """A problem located in an input data file."""


class ConfigError(ValueError):
    """A problem with a configuration file or override."""


def parse_time(text):
    """ISO-8601 timestamp to epoch seconds; naive times count as UTC."""
    cleaned = text.strip()
    if cleaned.endswith(("Z", "z")):
        cleaned = cleaned[:-1] + "+00:00"
    try:
        parsed = datetime.fromisoformat(cleaned)
    except ValueError:
        raise DataError(f"unparseable timestamp {text!r}") from None
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return int(parsed.timestamp())


def format_time(epoch_seconds):
    """Epoch seconds to the ISO-8601 form written in every output."""
    moment = datetime.fromtimestamp(int(epoch_seconds), tz=timezone.utc)
    return moment.strftime("%Y-%m-%dT%H:%M:%SZ")


def now_iso():
    """Current wall-clock time, second resolution, for output metadata."""
    return datetime.now(tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclasses.dataclass(frozen=True)
class PanelSchema:
    """Column layout of the two input files.

    None for station_columns or covariate_columns means "every column
    except the time column, in file order".
    """

    time_column: str = "time"
    station_columns: tuple = None
    covariate_columns: tuple = None


def _read_rows(path):
    """All non-comment rows of a CSV file, with original line numbers."""
    rows = []
    try:
        handle = open(path, "r", newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    with handle:
        for line_no, row in enumerate(csv.reader(handle), start=1):
            if not row or (row[0].lstrip().startswith("#")):
                continue
            rows.append((line_no, row))
    if not rows:
        raise DataError(f"{path}: no rows found")
    return rows


def _parse_table(path, time_column, value_columns):
    """One file to (times, values, column names); NaN marks missing."""
    rows = _read_rows(path)
    header_line, header = rows[0]
    header = [h.strip() for h in header]
    if time_column not in header:
        raise DataError(f"{path}: missing time column {time_column!r}")
    time_idx = header.index(time_column)
    if value_columns is None:
        names = [h for h in header if h != time_column]
    else:
        names = [str(c) for c in value_columns]
        for name in names:
            if name not in header:
                raise DataError(f"{path}: missing column {name!r}")
    col_idx = [header.index(n) for n in names]
    times = []
    values = []
    for line_no, row in rows[1:]:
        if len(row) != len(header):
            raise DataError(
                f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}"
            )
        try:
            times.append(parse_time(row[time_idx]))
        except DataError as exc:
            raise DataError(f"{path}:{line_no}: {exc}") from None
        parsed = []
        for name, idx in zip(names, col_idx):
            cell = row[idx].strip()
            if cell.lower() in _MISSING_MARKERS:
                parsed.append(math.nan)
                continue
            try:
                parsed.append(float(cell))
            except ValueError:
                raise DataError(
                    f"{path}:{line_no}: column {name!r}: "
                    f"not a number: {cell!r}"
                ) from None
        values.append(parsed)
    times = np.array(times, dtype=np.int64)
    values = np.array(values, dtype=np.float64).reshape(len(times), len(names))
    order = np.argsort(times, kind="stable")
    times, values = times[order], values[order]
    dup = np.flatnonzero(np.diff(times) == 0)
    if dup.size:
        raise DataError(
            f"{path}: duplicate timestamp {format_time(times[dup[0]])}"
        )
    return times, values, tuple(names)


def _winter_mask(times):
    months = np.array(
        [datetime.fromtimestamp(int(t), tz=timezone.utc).month for t in times]
    )
    return (months == 12) | (months <= 2)


@dataclasses.dataclass(frozen=True)
class DatasetBundle:
    """Aligned precipitation and covariate panels with a fitting split.

    Rows before train_end are the fitting window, the rest the
    validation window; the split must leave at least one row on each
    side.
    """

    precip: PrecipPanel
    covariates: CovariatePanel
    train_end: int

    def __post_init__(self):
        if self.precip.n_hours != self.covariates.n_hours:
            raise ValueError("panels must have equal length")
        if not np.array_equal(self.precip.times, self.covariates.times):
            raise ValueError("panel times must agree")
        train_end = int(self.train_end)
        if not 1 < train_end < self.precip.n_hours:
            raise ValueError(
                "train_end must leave rows on both sides of the split"
            )
        object.__setattr__(self, "train_end", train_end)

    @property
    def train_precip(self):
        return self.precip.window(0, self.train_end)

    @property
    def train_covariates(self):
        return self.covariates.window(0, self.train_end)

    @property
    def validation_precip(self):
        return self.precip.window(self.train_end, self.precip.n_hours)

    @property
    def validation_covariates(self):
        return self.covariates.window(self.train_end, self.precip.n_hours)


def load_panels(precip_path, covariates_path, schema=None, train_end=None,
                winter_only=False):
    """Read, align and split the two input files.

    Rows are matched on timestamp (the intersection of the two files);
    any row with a missing value in either file is dropped from both,
    so the panels stay aligned hour for hour.  Dropped counts are
    logged.  winter_only keeps December-February rows; the row after a
    seam between winters is then conditioned on the hour before the
    seam, a few transitions per year, which is accepted rather than
    splitting the record.  train_end counts rows after all filtering
    and defaults to 80% of them.
    """
    schema = schema or PanelSchema()
    p_times, p_values, stations = _parse_table(
        precip_path, schema.time_column, schema.station_columns
    )
    c_times, c_values, names = _parse_table(
        covariates_path, schema.time_column, schema.covariate_columns
    )
    common, p_idx, c_idx = np.intersect1d(p_times, c_times, return_indices=True)
    if common.size == 0:
        raise DataError("the two files share no timestamps")
    unmatched = (p_times.size - common.size) + (c_times.size - common.size)
    if unmatched:
        logger.info("dropped %d rows with timestamps in only one file", unmatched)
    p_values = p_values[p_idx]
    c_values = c_values[c_idx]
    missing = np.isnan(p_values).any(axis=1) | np.isnan(c_values).any(axis=1)
    if missing.any():
        logger.info(
            "dropped %d rows with missing values", int(np.count_nonzero(missing))
        )
        keep = ~missing
        common, p_values, c_values = common[keep], p_values[keep], c_values[keep]
    if winter_only:
        keep = _winter_mask(common)
        logger.info(
            "winter filter kept %d of %d rows",
            int(np.count_nonzero(keep)),
            common.size,
        )
        common, p_values, c_values = common[keep], p_values[keep], c_values[keep]
    bad = np.argwhere(p_values < 0.0)
    if bad.size:
        row, col = bad[0]
        raise DataError(
            f"negative precipitation at {format_time(common[row])} "
            f"station {stations[col]!r}"
        )
    if common.size < 3:
        raise DataError("fewer than three usable rows after filtering")
    precip = PrecipPanel(values=p_values, times=common, stations=stations)
    covariates = CovariatePanel(values=c_values, times=common, names=names)
    if train_end is None:
        train_end = max(2, int(0.8 * common.size))
    return DatasetBundle(precip=precip, covariates=covariates, train_end=train_end)


def load_covariates_csv(path, schema=None):
    """Read a covariate file on its own (no precipitation alignment).

    Rows with missing values are dropped and counted; used by
    simulation, which only needs the forcing series.
    """
    schema = schema or PanelSchema()
    times, values, names = _parse_table(
        path, schema.time_column, schema.covariate_columns
    )
    missing = np.isnan(values).any(axis=1)
    if missing.any():
        logger.info(
            "dropped %d covariate rows with missing values",
            int(np.count_nonzero(missing)),
        )
        times, values = times[~missing], values[~missing]
    if times.size == 0:
        raise DataError(f"{path}: no usable rows")
    return CovariatePanel(values=values, times=times, names=names)


def preprocess_small_values(panel, threshold, mode="mask"):
    """Handle observed values strictly between 0 and the threshold.

    mode "mask" leaves the panel alone and returns the boolean mask of
    those cells (the likelihood excludes them); mode "zero" rewrites
    them to 0, treating trace amounts as dry, and returns an all-false
    mask.  Either way the count is logged.
    """
    small = (panel.values > 0.0) & (panel.values < float(threshold))
    count = int(np.count_nonzero(small))
    if mode == "mask":
        logger.info("masking %d sub-threshold values", count)
        return panel, small
    if mode == "zero":
        logger.info("zeroing %d sub-threshold values", count)
        values = panel.values.copy()
        values[small] = 0.0
        cleaned = PrecipPanel(
            values=values, times=panel.times, stations=panel.stations
        )
        return cleaned, np.zeros_like(small)
    raise ValueError(f"unknown mode {mode!r}")


def spatial_average(panels):
    """Average several aligned covariate panels entrywise.

    All panels must share times and covariate names; the result is the
    per-hour, per-covariate mean, the usual way station-level fields
    become one regional forcing series.
    """
    panels = list(panels)
    if not panels:
        raise ValueError("need at least one panel")
    first = panels[0]
    for panel in panels[1:]:
        if panel.names != first.names:
            raise ValueError("covariate names differ across panels")
        if not np.array_equal(panel.times, first.times):
            raise ValueError("times differ across panels")
    stacked = np.stack([p.values for p in panels])
    return CovariatePanel(
        values=stacked.mean(axis=0), times=first.times, names=first.names
    )


def save_panel(panel, path, meta=None):
    """Write a precipitation panel as CSV.

    meta entries become '# key=value' comment lines before the header,
    which is where simulation outputs carry their seed and
    configuration hash.
    """
    with open(path, "w", newline="", encoding="utf-8") as handle:
        for key in sorted(meta or {}):
            handle.write(f"# {key}={meta[key]}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["time", *panel.stations])
        for t, row in zip(panel.times, panel.values):
            writer.writerow([format_time(t), *[repr(float(v)) for v in row]])


def load_config(path):
    """Read a JSON configuration file into a dict."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            config = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(config, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return config


def apply_overrides(config, assignments):
    """Apply key=value overrides with dotted paths to a config copy.

    Values parse as JSON when possible ("0.7", "[1,2]", "true"),
    otherwise they stay strings, so paths and names need no quoting.
    """
    result = json.loads(json.dumps(config))
    for assignment in assignments:
        key, sep, raw = assignment.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {assignment!r} is not key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        target = result
        parts = key.split(".")
        for part in parts[:-1]:
            node = target.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(
                    f"override {key!r} descends through non-object {part!r}"
                )
            target = node
        target[parts[-1]] = value
    return result


def canonical_json(obj):
    """Canonical encoding used for hashing: sorted keys, no spaces."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config):
    """sha256 of the canonical encoding of a resolved configuration."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


def write_json(path, obj):
    """Pretty, key-sorted JSON with a trailing newline."""
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(obj, handle, sort_keys=True, indent=2)
        handle.write("\n")
