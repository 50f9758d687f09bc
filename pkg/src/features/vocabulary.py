"""
Vocabulary
One dense id space over user, source-item and target-item features.
Id 0 is reserved for features never seen while building.
"""

import logging
from typing import Dict, Iterable, List, Optional, Sequence

from pydantic import BaseModel, Field, PrivateAttr, model_validator

from errors import FeatureIndexError
from features.format import parse_line

logger = logging.getLogger(__name__)

UNKNOWN_FEATURE = "<unknown>"
UNKNOWN_ID = 0


class Vocabulary(BaseModel):
    """Feature string <-> integer id, ids dense in [0, N) in first-seen order"""
    features: List[str] = Field(default_factory=lambda: [UNKNOWN_FEATURE])

    _index: Dict[str, int] = PrivateAttr(default_factory=dict)

    @model_validator(mode="after")
    def build_index(self):
        if not self.features or self.features[0] != UNKNOWN_FEATURE:
            raise ValueError(f"id 0 must be {UNKNOWN_FEATURE!r}")
        if len(set(self.features)) != len(self.features):
            raise ValueError("vocabulary features must be unique")
        self._index = {f: i for i, f in enumerate(self.features)}
        return self

    @property
    def size(self) -> int:
        """N, the number of ids including the unknown id"""
        return len(self.features)

    def add(self, feature: str) -> int:
        existing = self._index.get(feature)
        if existing is not None:
            return existing
        self.features.append(feature)
        self._index[feature] = len(self.features) - 1
        return len(self.features) - 1

    def encode(self, feature: str) -> int:
        return self._index.get(feature, UNKNOWN_ID)

    def decode(self, feature_id: int) -> str:
        if not 0 <= feature_id < self.size:
            raise FeatureIndexError(f"feature id {feature_id} outside [0, {self.size})")
        return self.features[feature_id]

    def __contains__(self, feature: str) -> bool:
        return feature in self._index

    @classmethod
    def from_features(cls, features: Iterable[str]) -> "Vocabulary":
        vocabulary = cls()
        for feature in features:
            vocabulary.add(feature)
        return vocabulary


def build_vocabulary(raw_records: Iterable[str], start_line: int = 1) -> Vocabulary:
    """
    Build a vocabulary from a stream of instance lines.

    Args:
        raw_records: Lines in the instance file format
        start_line: Line number of the first record, for error messages

    Returns:
        Vocabulary with ids assigned in first-seen order after the unknown id
    """
    vocabulary = Vocabulary()
    n_lines = 0
    for number, line in enumerate(raw_records, start=start_line):
        if not line.strip():
            continue
        record = parse_line(line, number)
        for feature in record.all_features():
            vocabulary.add(feature)
        n_lines += 1
    logger.info(f"Built vocabulary of {vocabulary.size} features from {n_lines} records")
    return vocabulary


def unknown_rate(vocabulary: Vocabulary, features: Sequence[str]) -> Optional[float]:
    """Share of features mapped to the unknown id, None for an empty list"""
    if not features:
        return None
    return sum(1 for f in features if f not in vocabulary) / len(features)
