"""Disaster-event data layer: ingestion, imputation, splits, scenario packs.

Ingestion accepts header-equipped CSV files (FEMA- or NOAA-shaped) through an
explicit per-source column mapping and normalizes everything to one event
schema: UTC epoch seconds, decimal-degree coordinates, the four hazard
categories. Missing feature values are filled by chained-equation imputation
(per-column least-squares regression, mean-initialized, cycled to a fixed
point). The generator produces fully seeded synthetic scenario packs used by
the simulator and the benchmark.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from enum import Enum

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_array

__all__ = [
    "Category",
    "DisasterEvent",
    "FeatureVector",
    "TweetRecord",
    "SensorReading",
    "GroundTruth",
    "ScenarioPack",
    "SplitSpec",
    "ColumnMapping",
    "IngestResult",
    "MiceConfig",
    "GeneratorConfig",
    "SchemaError",
    "EmptyInputError",
    "UnimputableColumnError",
    "FEMA_MAPPING",
    "NOAA_MAPPING",
    "REGION_CENTROIDS",
    "ingest_events",
    "mice_impute",
    "MiceImputer",
    "make_splits",
    "generate_pack",
    "generate_tweets",
    "save_pack",
    "load_pack",
]


class SchemaError(ValueError):
    """A mandatory column is missing from the source file."""


class EmptyInputError(ValueError):
    """The source file has no data rows."""


class UnimputableColumnError(ValueError):
    """A column has zero observed entries and cannot be imputed."""


class Category(str, Enum):
    WILDFIRE = "Wildfire"
    SEVERE_STORM = "SevereStorm"
    HURRICANE = "Hurricane"
    FLOOD = "Flood"
    NONE = "None"


# the four hazard classes events may carry; NONE is only a tweet/noise label
EVENT_CATEGORIES = (Category.WILDFIRE, Category.SEVERE_STORM,
                    Category.HURRICANE, Category.FLOOD)


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[float, ...]
    mask: tuple[bool, ...]

    def __post_init__(self):
        if len(self.values) != len(self.mask):
            raise ValueError("values and mask lengths differ")


@dataclass(frozen=True)
class DisasterEvent:
    event_id: str
    onset_time: int
    end_time: int | None
    category: Category
    severity: float
    lat: float
    lon: float
    region_code: str
    features: FeatureVector = FeatureVector((), ())
    texts: tuple[str, ...] = ()

    def __post_init__(self):
        if self.end_time is not None and self.end_time < self.onset_time:
            raise ValueError(f"event {self.event_id}: end_time before onset_time")
        if not (0.0 <= self.severity <= 10.0):
            raise ValueError(f"event {self.event_id}: severity {self.severity} out of [0,10]")
        if not (-90.0 <= self.lat <= 90.0 and -180.0 <= self.lon <= 180.0):
            raise ValueError(f"event {self.event_id}: coordinates out of range")
        if self.category not in EVENT_CATEGORIES:
            raise ValueError(f"event {self.event_id}: bad category {self.category}")

    def onset_year(self) -> int:
        return datetime.fromtimestamp(self.onset_time, tz=timezone.utc).year


@dataclass(frozen=True)
class TweetRecord:
    tweet_id: str
    time: int
    text: str
    label: Category

    def __post_init__(self):
        if not self.text:
            raise ValueError("tweet text must be nonempty")


@dataclass(frozen=True)
class SensorReading:
    reading_id: str
    time_s: float
    source_node: str
    region_code: str
    lat: float
    lon: float
    kind: str
    severity_obs: float
    text: str


@dataclass(frozen=True)
class GroundTruth:
    """Per-event truth used only for scoring, never by the agents."""

    event_id: str
    category: Category
    onset_s: float
    end_s: float
    severity_path: tuple[tuple[float, float], ...]  # (time_s, severity)
    demands: tuple[int, int, int, int]              # per resource type
    reading_ids: tuple[str, ...]

    def severity_at(self, t_s: float) -> float:
        """True severity at time t (step function over the recorded path)."""
        sev = self.severity_path[0][1]
        for ts, s in self.severity_path:
            if ts <= t_s:
                sev = s
            else:
                break
        return sev


@dataclass(frozen=True)
class ScenarioPack:
    pack_id: str
    events: tuple[DisasterEvent, ...]
    sensor_streams: tuple[SensorReading, ...]
    ground_truth: dict[str, GroundTruth]
    false_reading_ids: tuple[str, ...]
    duration_s: float
    seed: int

    def __post_init__(self):
        onsets = [e.onset_time for e in self.events]
        if onsets != sorted(onsets):
            raise ValueError("pack events must be sorted by onset_time")


@dataclass(frozen=True)
class SplitSpec:
    train_range: tuple[int, int] = (1953, 2010)
    val_range: tuple[int, int] = (2011, 2018)
    test_range: tuple[int, int] = (2019, 2023)

    def __post_init__(self):
        for lo, hi in (self.train_range, self.val_range, self.test_range):
            if lo > hi:
                raise ValueError(f"bad year range ({lo}, {hi})")


@dataclass(frozen=True)
class SplitResult:
    train: list[DisasterEvent]
    val: list[DisasterEvent]
    test: list[DisasterEvent]
    dropped: int


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnMapping:
    """Tells the ingester which source columns feed each event field.

    ``category_values`` translates source category strings to the unified
    classes; rows whose category translates to None are rejected.
    ``time_format`` is a strptime pattern; source timestamps are interpreted
    as UTC.
    """

    event_id: str
    begin_time: str
    time_format: str
    category: str
    category_values: dict[str, Category]
    end_time: str | None = None
    severity: str | None = None
    lat: str | None = None
    lon: str | None = None
    region: str | None = None
    feature_columns: tuple[str, ...] = ()

    def mandatory_columns(self) -> list[str]:
        return [self.event_id, self.begin_time, self.category]

    @staticmethod
    def from_dict(d: dict) -> "ColumnMapping":
        cv = {k: Category(v) for k, v in d["category_values"].items()}
        return ColumnMapping(
            event_id=d["event_id"],
            begin_time=d["begin_time"],
            time_format=d["time_format"],
            category=d["category"],
            category_values=cv,
            end_time=d.get("end_time"),
            severity=d.get("severity"),
            lat=d.get("lat"),
            lon=d.get("lon"),
            region=d.get("region"),
            feature_columns=tuple(d.get("feature_columns", ())),
        )


FEMA_MAPPING = ColumnMapping(
    event_id="disasterNumber",
    begin_time="declarationDate",
    time_format="%Y-%m-%d",
    category="incidentType",
    category_values={
        "Fire": Category.WILDFIRE,
        "Severe Storm": Category.SEVERE_STORM,
        "Hurricane": Category.HURRICANE,
        "Flood": Category.FLOOD,
    },
    end_time="incidentEndDate",
    severity="severityIndex",
    lat="latitude",
    lon="longitude",
    region="state",
)

NOAA_MAPPING = ColumnMapping(
    event_id="EVENT_ID",
    begin_time="BEGIN_DATE_TIME",
    time_format="%d-%b-%y %H:%M:%S",
    category="EVENT_TYPE",
    category_values={
        "Wildfire": Category.WILDFIRE,
        "Thunderstorm Wind": Category.SEVERE_STORM,
        "Hurricane": Category.HURRICANE,
        "Flash Flood": Category.FLOOD,
        "Flood": Category.FLOOD,
    },
    end_time="END_DATE_TIME",
    severity="MAGNITUDE",
    lat="BEGIN_LAT",
    lon="BEGIN_LON",
    region="STATE",
)

# Fallback coordinates for rows that carry a region code but no lat/lon.
REGION_CENTROIDS: dict[str, tuple[float, float]] = {
    "R1": (37.8, -122.3), "R2": (34.1, -118.3), "R3": (29.8, -95.4),
    "R4": (25.8, -80.2), "R5": (40.7, -74.0), "R6": (41.9, -87.7),
    "R7": (39.7, -105.0), "R8": (33.4, -112.1), "R9": (47.6, -122.3),
    "R10": (44.9, -93.3), "R11": (39.1, -94.6), "R12": (35.1, -90.0),
    "R13": (32.8, -96.8), "R14": (36.2, -115.1), "R15": (45.5, -122.7),
    "R16": (38.6, -90.2),
    "CA": (36.8, -119.4), "TX": (31.0, -99.0), "FL": (27.7, -81.5),
    "LA": (31.0, -92.0), "NY": (42.9, -75.5), "WA": (47.4, -120.5),
}


@dataclass(frozen=True)
class RowDiagnostic:
    row_number: int
    reason: str


@dataclass(frozen=True)
class IngestResult:
    events: list[DisasterEvent]
    rejected: list[RowDiagnostic]


def _parse_time(raw: str, fmt: str) -> int:
    dt = datetime.strptime(raw.strip(), fmt).replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def ingest_events(csv_source, mapping: ColumnMapping) -> IngestResult:
    """Parse a CSV byte/str stream into unified disaster events.

    Rows with unparseable mandatory fields are rejected with a per-row
    diagnostic; the remaining rows are normalized (UTC epoch seconds,
    decimal-degree coordinates, region-centroid fallback).
    """
    if isinstance(csv_source, bytes):
        text = csv_source.decode("utf-8")
    elif isinstance(csv_source, str):
        text = csv_source
    else:
        data = csv_source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data

    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise EmptyInputError("no header row found")
    missing = [c for c in mapping.mandatory_columns() if c not in reader.fieldnames]
    if missing:
        raise SchemaError(f"missing mandatory columns: {missing}")

    events: list[DisasterEvent] = []
    rejected: list[RowDiagnostic] = []
    n_rows = 0
    for i, row in enumerate(reader, start=2):  # header is line 1
        n_rows += 1
        try:
            events.append(_row_to_event(row, mapping))
        except (ValueError, KeyError) as exc:
            rejected.append(RowDiagnostic(i, str(exc)))
    if n_rows == 0:
        raise EmptyInputError("file has a header but no data rows")
    return IngestResult(events=events, rejected=rejected)


def _row_to_event(row: dict, m: ColumnMapping) -> DisasterEvent:
    raw_cat = (row.get(m.category) or "").strip()
    cat = m.category_values.get(raw_cat)
    if cat is None:
        raise ValueError(f"unmapped category {raw_cat!r}")
    onset = _parse_time(row[m.begin_time], m.time_format)
    end = None
    if m.end_time and (row.get(m.end_time) or "").strip():
        end = _parse_time(row[m.end_time], m.time_format)

    severity = 5.0
    if m.severity and (row.get(m.severity) or "").strip():
        severity = float(row[m.severity])
        severity = min(10.0, max(0.0, severity))

    region = (row.get(m.region) or "").strip() if m.region else ""
    lat = lon = None
    if m.lat and m.lon and (row.get(m.lat) or "").strip() and (row.get(m.lon) or "").strip():
        lat, lon = float(row[m.lat]), float(row[m.lon])
    elif region in REGION_CENTROIDS:
        lat, lon = REGION_CENTROIDS[region]
    if lat is None:
        raise ValueError("no coordinates and no known region centroid")

    values, mask = [], []
    for col in m.feature_columns:
        raw = (row.get(col) or "").strip()
        if raw:
            values.append(float(raw))
            mask.append(True)
        else:
            values.append(0.0)
            mask.append(False)

    return DisasterEvent(
        event_id=str(row[m.event_id]).strip(),
        onset_time=onset,
        end_time=end,
        category=cat,
        severity=severity,
        lat=lat,
        lon=lon,
        region_code=region,
        features=FeatureVector(tuple(values), tuple(mask)),
    )


# ---------------------------------------------------------------------------
# chained-equation imputation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MiceConfig:
    max_iterations: int = 20
    tolerance: float = 1e-6


def mice_impute(rows: list[FeatureVector], config: MiceConfig = MiceConfig()
                ) -> list[FeatureVector]:
    """Impute missing entries by chained least-squares regressions.

    Columns are mean-initialized, then each incomplete column in index order
    is regressed (with intercept) on all other columns using its observed
    rows, and its missing rows replaced by the fit. Sweeps repeat until the
    largest absolute change of any imputed value drops below the tolerance or
    the iteration cap is hit. No sampling is involved, so the result is
    deterministic; observed entries are never modified.
    """
    if len(rows) < 2:
        raise ValueError("need at least 2 rows")
    x = np.array([r.values for r in rows], dtype=np.float64)
    mask = np.array([r.mask for r in rows], dtype=bool)
    if x.shape != mask.shape:
        raise ValueError("ragged feature vectors")
    n, d = x.shape

    dead = np.flatnonzero(~mask.any(axis=0))
    if dead.size:
        raise UnimputableColumnError(f"columns with no observed entries: {dead.tolist()}")
    if not mask.all(axis=0).any():
        raise ValueError("need at least one fully observed column")
    if mask.all():
        return list(rows)

    filled = x.copy()
    for j in range(d):
        obs = mask[:, j]
        filled[~obs, j] = x[obs, j].mean()

    incomplete = np.flatnonzero(~mask.all(axis=0))
    for _ in range(config.max_iterations):
        max_change = 0.0
        for j in incomplete:
            obs = mask[:, j]
            others = np.delete(np.arange(d), j)
            design = np.column_stack([filled[:, others], np.ones(n)])
            beta, *_ = np.linalg.lstsq(design[obs], filled[obs, j], rcond=None)
            pred = design[~obs] @ beta
            change = np.abs(pred - filled[~obs, j])
            if change.size:
                max_change = max(max_change, float(change.max()))
            filled[~obs, j] = pred
        if max_change < config.tolerance:
            break

    out = []
    for i in range(n):
        out.append(FeatureVector(tuple(float(v) for v in filled[i]), (True,) * d))
    return out


class MiceImputer(BaseEstimator, TransformerMixin):
    """Estimator facade over :func:`mice_impute` for NaN-marked arrays."""

    def __init__(self, max_iterations: int = 20, tolerance: float = 1e-6):
        self.max_iterations = max_iterations
        self.tolerance = tolerance

    def fit(self, X, y=None):
        check_array(X, allow_nan=True)
        self.n_features_in_ = np.asarray(X).shape[1]
        return self

    def transform(self, X):
        arr = check_array(X, allow_nan=True)
        rows = [
            FeatureVector(tuple(np.nan_to_num(r)), tuple(~np.isnan(r)))
            for r in arr
        ]
        cfg = MiceConfig(self.max_iterations, self.tolerance)
        return np.array([fv.values for fv in mice_impute(rows, cfg)])

    def fit_transform(self, X, y=None, **kwargs):
        return self.fit(X).transform(X)


# ---------------------------------------------------------------------------
# year splits
# ---------------------------------------------------------------------------

def make_splits(events: list[DisasterEvent], spec: SplitSpec = SplitSpec()) -> SplitResult:
    """Partition events by onset year into train/val/test; out-of-range drops counted."""
    train, val, test = [], [], []
    dropped = 0
    for e in events:
        y = e.onset_year()
        if spec.train_range[0] <= y <= spec.train_range[1]:
            train.append(e)
        elif spec.val_range[0] <= y <= spec.val_range[1]:
            val.append(e)
        elif spec.test_range[0] <= y <= spec.test_range[1]:
            test.append(e)
        else:
            dropped += 1
    return SplitResult(train, val, test, dropped)


# ---------------------------------------------------------------------------
# synthetic scenario generation
# ---------------------------------------------------------------------------

# resource types, fixed index order shared with the allocation layer
RESOURCE_TYPES = ("medical", "fire", "rescue", "logistics")

# per-category vocabulary for synthetic reading/tweet text
CATEGORY_VOCAB: dict[Category, tuple[str, ...]] = {
    Category.WILDFIRE: ("smoke", "blaze", "wildfire", "flames", "burning",
                        "evacuation", "ash", "firefighters", "containment", "ridge"),
    Category.SEVERE_STORM: ("thunderstorm", "hail", "lightning", "gusts",
                            "downpour", "storm", "wind", "damage", "trees", "power"),
    Category.HURRICANE: ("hurricane", "landfall", "surge", "cyclone", "eyewall",
                         "evacuate", "coastal", "gale", "category", "tracking"),
    Category.FLOOD: ("flood", "river", "overflow", "water", "rising",
                     "levee", "submerged", "rescue", "rainfall", "basin"),
}
NOISE_VOCAB = ("coffee", "match", "concert", "weekend", "traffic", "lunch",
               "movie", "sale", "birthday", "game", "recipe", "photo")

# sensor channel mixture per category: real hazards light up overlapping
# channels, which is what makes the rule-based channel->category table err
CATEGORY_SENSOR_KINDS: dict[Category, tuple[tuple[str, float], ...]] = {
    Category.WILDFIRE: (("thermal", 0.8), ("wind", 0.2)),
    Category.SEVERE_STORM: (("wind", 0.6), ("water_level", 0.4)),
    Category.HURRICANE: (("wind", 0.4), ("barometric", 0.35), ("water_level", 0.25)),
    Category.FLOOD: (("water_level", 0.75), ("wind", 0.25)),
}
SENSOR_KINDS = ("thermal", "wind", "barometric", "water_level")

# severity drift per category for the random walk
_CATEGORY_DRIFT = {
    Category.WILDFIRE: 0.08,
    Category.SEVERE_STORM: -0.02,
    Category.HURRICANE: 0.05,
    Category.FLOOD: 0.03,
}


def region_travel_minutes(region: str) -> float:
    """Deterministic dispatch travel estimate per region (depot distance proxy)."""
    idx = GENERATOR_REGIONS.index(region) if region in GENERATOR_REGIONS else 0
    return 6.0 + 2.5 * (idx % 5)

GENERATOR_REGIONS = tuple(f"R{i}" for i in range(1, 17))
REGION_EDGE_NODE = {r: f"edge{1 + i % 3}" for i, r in enumerate(GENERATOR_REGIONS)}


@dataclass(frozen=True)
class GeneratorConfig:
    """Bounds and rates for synthetic packs.

    Severity is on the 0..10 scale used throughout: the walk starts in
    ``severity_start`` and moves by a per-category drift plus Gaussian noise
    each ``severity_step_s``, clipped into [0, 10].
    """

    n_events: int = 3
    duration_s: float = 1800.0
    onset_window_frac: float = 0.3     # onsets fall in [0, frac*duration]
    event_duration_s: float = 1200.0
    severity_start: tuple[float, float] = (3.0, 8.0)
    severity_step_s: float = 300.0
    severity_noise: float = 0.4
    reading_cadence_s: float = 15.0
    false_reading_rate: float = 0.05
    demand_per_severity: float = 0.5   # units of demand per severity point, split over types
    max_units_per_type: int = 3
    categories: tuple[Category, ...] = EVENT_CATEGORIES

    def validate(self) -> None:
        if self.n_events < 1:
            raise ValueError("n_events must be >= 1")
        if self.duration_s <= 0 or self.event_duration_s <= 0:
            raise ValueError("durations must be positive")
        if not (0.0 <= self.false_reading_rate <= 1.0):
            raise ValueError("false_reading_rate must be in [0,1]")
        if self.reading_cadence_s <= 0:
            raise ValueError("reading cadence must be positive")


def _demands_for(category: Category, severity: float, cfg: GeneratorConfig,
                 rng: np.random.Generator) -> tuple[int, int, int, int]:
    total = max(1, int(round(severity * cfg.demand_per_severity)))
    # category skews which resource types are needed
    weights = {
        Category.WILDFIRE: np.array([0.2, 0.5, 0.2, 0.1]),
        Category.SEVERE_STORM: np.array([0.3, 0.2, 0.2, 0.3]),
        Category.HURRICANE: np.array([0.3, 0.1, 0.4, 0.2]),
        Category.FLOOD: np.array([0.2, 0.1, 0.5, 0.2]),
    }[category]
    demands = [0, 0, 0, 0]
    for _ in range(total):
        r = int(rng.choice(4, p=weights))
        demands[r] += 1
    return tuple(demands)


def _reading_text(category: Category | None, region: str, rng: np.random.Generator) -> str:
    vocab = NOISE_VOCAB if category is None else CATEGORY_VOCAB[category]
    words = [vocab[int(rng.integers(len(vocab)))] for _ in range(6)]
    return " ".join(words) + f" near {region.lower()}"


def generate_pack(config: GeneratorConfig, seed: int) -> ScenarioPack:
    """Build a reproducible synthetic scenario pack from (config, seed)."""
    config.validate()
    rng = np.random.default_rng(seed)
    base_epoch = 1_577_836_800  # 2020-01-01T00:00Z; keeps onset years in the test split

    events: list[DisasterEvent] = []
    truths: dict[str, GroundTruth] = {}
    readings: list[SensorReading] = []
    false_ids: list[str] = []

    onsets = np.sort(rng.uniform(0.0, config.duration_s * config.onset_window_frac,
                                 size=config.n_events))
    regions = list(GENERATOR_REGIONS)
    for k in range(config.n_events):
        cat = config.categories[int(rng.integers(len(config.categories)))]
        region = regions[k % len(regions)]
        onset_s = float(onsets[k])
        end_s = min(config.duration_s, onset_s + config.event_duration_s)
        sev0 = float(rng.uniform(*config.severity_start))

        path = [(onset_s, sev0)]
        sev = sev0
        t = onset_s + config.severity_step_s
        while t < end_s:
            sev = float(np.clip(sev + _CATEGORY_DRIFT[cat]
                                + rng.normal(0.0, config.severity_noise), 0.0, 10.0))
            path.append((t, sev))
            t += config.severity_step_s

        lat, lon = REGION_CENTROIDS[region]
        event_id = f"ev{k:03d}"
        ev = DisasterEvent(
            event_id=event_id,
            onset_time=base_epoch + int(onset_s),
            end_time=base_epoch + int(end_s),
            category=cat,
            severity=sev0,
            lat=lat,
            lon=lon,
            region_code=region,
        )
        events.append(ev)

        truth = GroundTruth(
            event_id=event_id,
            category=cat,
            onset_s=onset_s,
            end_s=end_s,
            severity_path=tuple(path),
            demands=_demands_for(cat, sev0, config, rng),
            reading_ids=(),
        )

        kinds, kind_probs = zip(*CATEGORY_SENSOR_KINDS[cat])
        kind_probs = np.array(kind_probs)
        ids = []
        # sensors notice one cadence period after onset
        t = onset_s + config.reading_cadence_s
        ridx = 0
        while t < end_s:
            rid = f"{event_id}-r{ridx:04d}"
            true_sev = truth.severity_at(t)
            readings.append(SensorReading(
                reading_id=rid,
                time_s=round(t, 3),
                source_node=REGION_EDGE_NODE[region],
                region_code=region,
                lat=lat + float(rng.normal(0.0, 0.05)),
                lon=lon + float(rng.normal(0.0, 0.05)),
                kind=str(rng.choice(kinds, p=kind_probs)),
                severity_obs=float(np.clip(true_sev + rng.normal(0.0, 0.3), 0.0, 10.0)),
                text=_reading_text(cat, region, rng),
            ))
            ids.append(rid)
            ridx += 1
            t += config.reading_cadence_s
        truths[event_id] = GroundTruth(
            event_id=truth.event_id, category=truth.category, onset_s=truth.onset_s,
            end_s=truth.end_s, severity_path=truth.severity_path,
            demands=truth.demands, reading_ids=tuple(ids),
        )

    # false readings: uniformly over the run, noise text, no backing event
    n_true = len(readings)
    n_false = int(round(n_true * config.false_reading_rate / max(1e-9, 1.0 - config.false_reading_rate)))
    for k in range(n_false):
        region = regions[int(rng.integers(len(regions)))]
        lat, lon = REGION_CENTROIDS[region]
        rid = f"false-r{k:04d}"
        readings.append(SensorReading(
            reading_id=rid,
            time_s=round(float(rng.uniform(0.0, config.duration_s)), 3),
            source_node=REGION_EDGE_NODE[region],
            region_code=region,
            lat=lat + float(rng.normal(0.0, 0.3)),
            lon=lon + float(rng.normal(0.0, 0.3)),
            kind=str(rng.choice(SENSOR_KINDS)),
            severity_obs=float(rng.uniform(0.0, 6.5)),
            text=_reading_text(None, region, rng),
        ))
        false_ids.append(rid)

    readings.sort(key=lambda r: (r.time_s, r.reading_id))
    events.sort(key=lambda e: e.onset_time)
    return ScenarioPack(
        pack_id=f"pack-{seed}",
        events=tuple(events),
        sensor_streams=tuple(readings),
        ground_truth=truths,
        false_reading_ids=tuple(false_ids),
        duration_s=config.duration_s,
        seed=seed,
    )


def generate_tweets(n: int, seed: int, none_fraction: float = 0.3) -> list[TweetRecord]:
    """Synthetic labeled tweet corpus drawn from the generator vocabulary."""
    rng = np.random.default_rng(seed)
    out = []
    cats = list(EVENT_CATEGORIES)
    for i in range(n):
        if rng.random() < none_fraction:
            label = Category.NONE
            vocab = NOISE_VOCAB
        else:
            label = cats[int(rng.integers(len(cats)))]
            vocab = CATEGORY_VOCAB[label]
        words = [vocab[int(rng.integers(len(vocab)))] for _ in range(8)]
        out.append(TweetRecord(
            tweet_id=f"t{i:05d}",
            time=1_600_000_000 + i,
            text=" ".join(words),
            label=label,
        ))
    return out


# ---------------------------------------------------------------------------
# pack serialization (one JSON record per line)
# ---------------------------------------------------------------------------

def _dump(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=True)


def save_pack(pack: ScenarioPack, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dump({"rec": "pack_meta", "pack_id": pack.pack_id,
                        "duration_s": pack.duration_s, "seed": pack.seed,
                        "false_reading_ids": list(pack.false_reading_ids)}) + "\n")
        for e in pack.events:
            d = asdict(e)
            d["category"] = e.category.value
            d["features"] = {"values": list(e.features.values), "mask": list(e.features.mask)}
            d["texts"] = list(e.texts)
            fh.write(_dump({"rec": "event", **d}) + "\n")
        for r in pack.sensor_streams:
            fh.write(_dump({"rec": "reading", **asdict(r)}) + "\n")
        for gt in pack.ground_truth.values():
            d = asdict(gt)
            d["category"] = gt.category.value
            d["severity_path"] = [list(p) for p in gt.severity_path]
            d["reading_ids"] = list(gt.reading_ids)
            d["demands"] = list(gt.demands)
            fh.write(_dump({"rec": "ground_truth", **d}) + "\n")


def load_pack(path) -> ScenarioPack:
    meta = None
    events: list[DisasterEvent] = []
    readings: list[SensorReading] = []
    truths: dict[str, GroundTruth] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            kind = rec.pop("rec")
            if kind == "pack_meta":
                meta = rec
            elif kind == "event":
                feats = rec.pop("features")
                events.append(DisasterEvent(
                    event_id=rec["event_id"], onset_time=rec["onset_time"],
                    end_time=rec["end_time"], category=Category(rec["category"]),
                    severity=rec["severity"], lat=rec["lat"], lon=rec["lon"],
                    region_code=rec["region_code"],
                    features=FeatureVector(tuple(feats["values"]), tuple(feats["mask"])),
                    texts=tuple(rec.get("texts", ())),
                ))
            elif kind == "reading":
                readings.append(SensorReading(**rec))
            elif kind == "ground_truth":
                truths[rec["event_id"]] = GroundTruth(
                    event_id=rec["event_id"], category=Category(rec["category"]),
                    onset_s=rec["onset_s"], end_s=rec["end_s"],
                    severity_path=tuple(tuple(p) for p in rec["severity_path"]),
                    demands=tuple(rec["demands"]),
                    reading_ids=tuple(rec["reading_ids"]),
                )
    if meta is None:
        raise ValueError(f"{path}: not a scenario pack (no pack_meta record)")
    return ScenarioPack(
        pack_id=meta["pack_id"],
        events=tuple(sorted(events, key=lambda e: e.onset_time)),
        sensor_streams=tuple(sorted(readings, key=lambda r: (r.time_s, r.reading_id))),
        ground_truth=truths,
        false_reading_ids=tuple(meta["false_reading_ids"]),
        duration_s=meta["duration_s"],
        seed=meta["seed"],
    )
