"""SocNav1-style dataset ingestion: parse, filter, label, and split.

The on-disk format is documented field-by-field in docs/socnav_format.md.
Scenario coordinates are meters in the robot frame: the rated robot sits at
the origin with heading 0. Appropriateness scores (0-100) become discomfort
labels via ``discomfort = 100 - score``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import (
    FeatureVector,
    GeometryError,
    Pose2D,
    RoomPolygon,
    extract_features,
)

log = logging.getLogger(__name__)

# Reference sizes of the full SocNav1 corpus, for reporting against ingests.
SOCNAV1_TOTAL_SCENARIOS = 8168
SOCNAV1_FILTERED_REFERENCE = 1300

ROBOT_POSE = Pose2D(0.0, 0.0, 0.0)

VALID_SOURCES = ("socnav", "session", "synthetic")


class DatasetFormatError(ValueError):
    """A dataset record violates the documented schema."""


@dataclass(frozen=True)
class SocNavScenario:
    scenario_id: str
    robot_id: str
    walls: RoomPolygon
    humans: tuple[Pose2D, ...]
    human_ids: tuple[int, ...]
    objects: tuple[tuple[str, Pose2D], ...]
    interactions: tuple[tuple[object, object], ...]
    score: int


@dataclass(frozen=True)
class LabeledExample:
    features: FeatureVector
    discomfort: float
    source: str = "socnav"

    def __post_init__(self):
        if not 0.0 <= self.discomfort <= 100.0:
            raise DatasetFormatError(f"discomfort {self.discomfort} outside [0, 100]")
        if self.source not in VALID_SOURCES:
            raise DatasetFormatError(f"unknown source {self.source!r}")

    def to_dict(self) -> dict:
        return {
            "features": self.features.as_array().tolist(),
            "discomfort": self.discomfort,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LabeledExample":
        return cls(
            features=FeatureVector.from_array(d["features"]),
            discomfort=float(d["discomfort"]),
            source=d.get("source", "socnav"),
        )


@dataclass
class DatasetSplit:
    train: list[LabeledExample] = field(default_factory=list)
    validation: list[LabeledExample] = field(default_factory=list)
    test: list[LabeledExample] = field(default_factory=list)
    seed: int = 0

    def __len__(self):
        return len(self.train) + len(self.validation) + len(self.test)


def _parse_record(record: dict, index: int) -> SocNavScenario:
    try:
        score = record["score"]
        if not isinstance(score, (int, float)) or isinstance(score, bool):
            raise DatasetFormatError("score must be numeric")
        if not 0 <= score <= 100:
            raise DatasetFormatError(f"score {score} outside [0, 100]")
        walls = RoomPolygon(record["walls"])
        humans = []
        human_ids = []
        for h in record["humans"]:
            humans.append(Pose2D(float(h["x"]), float(h["y"]), float(h.get("heading", 0.0))))
            human_ids.append(int(h["id"]))
        objects = tuple(
            (str(o["id"]), Pose2D(float(o["x"]), float(o["y"]), float(o.get("heading", 0.0))))
            for o in record.get("objects", [])
        )
        interactions = tuple(
            (pair[0], pair[1]) for pair in record.get("interactions", [])
        )
        return SocNavScenario(
            scenario_id=str(record["scenario_id"]),
            robot_id=str(record.get("robot_id", "")),
            walls=walls,
            humans=tuple(humans),
            human_ids=tuple(human_ids),
            objects=objects,
            interactions=interactions,
            score=int(score),
        )
    except DatasetFormatError as exc:
        raise DatasetFormatError(f"record {index}: {exc}") from None
    except (KeyError, TypeError, ValueError, GeometryError) as exc:
        raise DatasetFormatError(f"record {index}: {exc}") from exc


def parse_dataset(path) -> list[SocNavScenario]:
    """Parse a SocNav1-style file (JSON lines or a single JSON array)."""
    path = Path(path)
    text = path.read_text()
    stripped = text.lstrip()
    if not stripped:
        return []
    if stripped.startswith("["):
        try:
            records = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"invalid JSON array: {exc}") from exc
    else:
        records = []
        for i, line in enumerate(text.splitlines()):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"record {i}: invalid JSON: {exc}") from exc
    scenarios = [_parse_record(rec, i) for i, rec in enumerate(records)]
    log.info("parsed %d scenarios from %s", len(scenarios), path)
    return scenarios


def filter_single_human(scenarios) -> list[SocNavScenario]:
    """Keep scenarios with exactly one human who takes part in no interaction."""
    kept = []
    for sc in scenarios:
        if len(sc.humans) != 1:
            continue
        hid = sc.human_ids[0]
        if any(hid in pair for pair in sc.interactions):
            continue
        kept.append(sc)
    return kept


def to_labeled_example(scenario: SocNavScenario) -> LabeledExample:
    """Encode a single-human scenario; discomfort is the flipped score."""
    if len(scenario.humans) != 1:
        raise DatasetFormatError(
            f"scenario {scenario.scenario_id}: labeling requires exactly one human"
        )
    features = extract_features(scenario.walls, scenario.humans[0], ROBOT_POSE)
    return LabeledExample(features=features, discomfort=100.0 - scenario.score, source="socnav")


def label_scenarios(scenarios) -> list[LabeledExample]:
    """Label a filtered scenario list, skipping geometric degenerates with a warning."""
    out = []
    for sc in scenarios:
        try:
            out.append(to_labeled_example(sc))
        except GeometryError as exc:
            log.warning("skipping scenario %s: %s", sc.scenario_id, exc)
    return out


def split(examples, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> DatasetSplit:
    """Deterministic seeded shuffle-and-partition into train/validation/test."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three nonnegative values summing to 1, got {ratios}")
    examples = list(examples)
    n = len(examples)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    n_val = min(n_val, n - n_train)
    shuffled = [examples[i] for i in perm]
    return DatasetSplit(
        train=shuffled[:n_train],
        validation=shuffled[n_train : n_train + n_val],
        test=shuffled[n_train + n_val :],
        seed=seed,
    )


def write_examples(path, examples) -> None:
    """Write labeled examples as canonical JSONL."""
    path = Path(path)
    with path.open("w") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_dict()) + "\n")


def read_examples(path) -> list[LabeledExample]:
    """Read canonical labeled-example JSONL."""
    path = Path(path)
    out = []
    for i, line in enumerate(path.read_text().splitlines()):
        if not line.strip():
            continue
        try:
            out.append(LabeledExample.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, GeometryError, DatasetFormatError) as exc:
            raise DatasetFormatError(f"record {i}: {exc}") from exc
    return out


def examples_to_arrays(examples) -> tuple[np.ndarray, np.ndarray]:
    """Stack examples into (features NxF, discomfort N) float arrays."""
    if not examples:
        raise ValueError("empty example list")
    X = np.stack([ex.features.as_array() for ex in examples])
    y = np.array([ex.discomfort for ex in examples], dtype=np.float64)
    return X, y
