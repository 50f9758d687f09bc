"""
Synthetic Cross-Domain Generator
Generates news (source) and ad (target) impressions for a shared user
population with a planted link between the two domains.

Each user draws a latent affinity over news categories. Every news category
maps to one ad category, so a user's news affinity fixes how likely they are
to click each ad category. kappa scales how much of that affinity reaches
the ad click probability; at kappa = 0 ad labels carry no behavioral signal.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.special import expit, logit

from errors import ArgumentError, ParseError
from features.dataset import (
    DEFAULT_MAX_SOURCE_SEQ,
    DEFAULT_MAX_TARGET_SEQ,
    Dataset,
    Instance,
    field_position,
    records_to_dataset,
    write_records,
)
from features.format import FeatureList, RawRecord, format_record
from features.schema import Domain, FieldKind, FieldSchema, Schema, save_schema
from features.vocabulary import UNKNOWN_FEATURE, Vocabulary, build_vocabulary

logger = logging.getLogger(__name__)

SPLITS = ("train", "validation", "test")
METADATA_FILE = "metadata.txt"
SCHEMA_FILE = "schema.tsv"


class SynthConfig(BaseModel):
    """Size and signal strength of a generated dataset"""
    n_users: int = Field(default=2000, gt=0)
    n_user_segments: int = Field(default=4, gt=0)
    n_source_categories: int = Field(default=8, gt=0)
    n_target_categories: int = Field(default=8, gt=0)
    news_per_category: int = Field(default=20, gt=0)
    ads_per_category: int = Field(default=10, gt=0)
    n_tags: int = Field(default=30, gt=0)
    max_tags_per_news: int = Field(default=3, gt=0)

    # kappa range is checked by generate_synthetic so the error surfaces as an ArgumentError
    kappa: float = 0.8
    base_rate: float = Field(default=0.2, gt=0, lt=1)
    source_base_rate: float = Field(default=0.3, gt=0, lt=1)
    affinity_strength: float = Field(default=2.0, ge=0)
    short_term_bonus: float = Field(default=1.0, ge=0)
    dirichlet_alpha: float = Field(default=0.3, gt=0)

    mean_source_seq: float = Field(default=8.0, ge=0)
    mean_target_seq: float = Field(default=2.0, ge=0)
    max_source_seq: int = Field(default=DEFAULT_MAX_SOURCE_SEQ, gt=0)
    max_target_seq: int = Field(default=DEFAULT_MAX_TARGET_SEQ, gt=0)
    source_instances_per_user: int = Field(default=4, ge=0)
    target_instances_per_user: int = Field(default=6, ge=3)

    @model_validator(mode="after")
    def validate_tags(self):
        if self.max_tags_per_news > self.n_tags:
            raise ValueError("max_tags_per_news cannot exceed n_tags")
        return self


class GroundTruth(BaseModel):
    """Latent state behind a generated dataset, for oracle scoring and introspection"""
    seed: int
    kappa: float
    base_rate: float
    affinity_strength: float
    short_term_bonus: float
    n_source_categories: int
    n_target_categories: int
    category_map: List[int]
    affinities: Dict[str, List[float]]

    def target_affinity(self, user_feature: str) -> np.ndarray:
        """Affinity over ad categories; uniform for users the generator never saw"""
        source = self.affinities.get(user_feature)
        if source is None:
            return np.full(self.n_target_categories, 1.0 / self.n_target_categories)
        return map_affinity(np.asarray(source), self.category_map, self.n_target_categories)

    def click_logit(self, user_feature: str, ad_category: int, clicked_ad_categories: Sequence[int]) -> float:
        """Log-odds of an ad click, the same expression the generator samples from"""
        return click_logit(
            self.target_affinity(user_feature), ad_category, clicked_ad_categories,
            self.base_rate, self.kappa, self.affinity_strength, self.short_term_bonus,
        )


def map_affinity(source_affinity: np.ndarray, category_map: Sequence[int], n_target_categories: int) -> np.ndarray:
    target = np.zeros(n_target_categories)
    np.add.at(target, list(category_map), source_affinity)
    return target


def click_logit(
    target_affinity: np.ndarray,
    ad_category: int,
    clicked_ad_categories: Sequence[int],
    base_rate: float,
    kappa: float,
    affinity_strength: float,
    short_term_bonus: float,
) -> float:
    """
    base + kappa * strength * (n_t * affinity - 1) + kappa * bonus * (shared - E[shared])

    Both behavioral terms have zero mean over uniformly drawn ads, which
    keeps the positive rate near base_rate at every kappa.
    """
    n_target = target_affinity.size
    aligned = n_target * target_affinity[ad_category] - 1.0
    shared = float(ad_category in clicked_ad_categories)
    expected_shared = 1.0 - (1.0 - 1.0 / n_target) ** len(clicked_ad_categories)
    return float(
        logit(base_rate)
        + kappa * affinity_strength * aligned
        + kappa * short_term_bonus * (shared - expected_shared)
    )


@dataclass
class SyntheticData:
    """Generated splits with their raw records and the ground truth"""
    schema: Schema
    vocabulary: Vocabulary
    splits: Dict[str, Dataset]
    records: Dict[str, List[RawRecord]]
    ground_truth: GroundTruth

    @property
    def train(self) -> Dataset:
        return self.splits["train"]

    @property
    def validation(self) -> Dataset:
        return self.splits["validation"]

    @property
    def test(self) -> Dataset:
        return self.splits["test"]


def synthetic_schema() -> Schema:
    """User: id and segment. News: id, category and a multi-valued tag bag. Ad: id and category."""
    return Schema(fields=[
        FieldSchema(domain=Domain.USER, field_name="user_id"),
        FieldSchema(domain=Domain.USER, field_name="user_segment"),
        FieldSchema(domain=Domain.SOURCE, field_name="news_id"),
        FieldSchema(domain=Domain.SOURCE, field_name="news_category"),
        FieldSchema(domain=Domain.SOURCE, field_name="news_tags", field_kind=FieldKind.MULTI),
        FieldSchema(domain=Domain.TARGET, field_name="ad_id"),
        FieldSchema(domain=Domain.TARGET, field_name="ad_category"),
    ])


def category_feature(domain: Domain, category: int) -> str:
    prefix = "news_category" if domain == Domain.SOURCE else "ad_category"
    return f"{prefix}=c{category}"


def parse_category(feature: str) -> Optional[int]:
    """Category index from a category feature string, None for anything else"""
    _, _, value = feature.partition("=c")
    return int(value) if value.isdigit() else None


class SyntheticGenerator:
    """
    Draws one dataset from a SynthConfig.

    All randomness comes from a single numpy Generator seeded once, and
    draws happen in a fixed order, so a seed reproduces the same records.
    """

    def __init__(self, config: SynthConfig, seed: int):
        self.config = config
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.category_map = self._draw_category_map()
        self.news_catalog = self._draw_news_catalog()

    def _draw_category_map(self) -> List[int]:
        c = self.config
        permutation = self.rng.permutation(c.n_source_categories)
        return [int(p % c.n_target_categories) for p in permutation]

    def _draw_news_catalog(self) -> List[List[List[str]]]:
        """Per news category, the field values of every news item"""
        c = self.config
        catalog = []
        for category in range(c.n_source_categories):
            items = []
            for k in range(c.news_per_category):
                n_tags = int(self.rng.integers(1, c.max_tags_per_news + 1))
                tags = sorted(int(t) for t in self.rng.choice(c.n_tags, size=n_tags, replace=False))
                items.append([
                    [f"news_id=n{category}_{k}"],
                    [category_feature(Domain.SOURCE, category)],
                    [f"news_tags=t{t}" for t in tags],
                ])
            catalog.append(items)
        return catalog

    def _news_item(self, category: int) -> FeatureList:
        k = int(self.rng.integers(self.config.news_per_category))
        return [list(members) for members in self.news_catalog[category][k]]

    def _ad_item(self, category: int) -> FeatureList:
        k = int(self.rng.integers(self.config.ads_per_category))
        return [[f"ad_id=a{category}_{k}"], [category_feature(Domain.TARGET, category)]]

    def _sequence_length(self, mean: float, maximum: int) -> int:
        return min(int(self.rng.poisson(mean)), maximum)

    def _clicked_news(self, affinity: np.ndarray) -> List[FeatureList]:
        length = self._sequence_length(self.config.mean_source_seq, self.config.max_source_seq)
        categories = self.rng.choice(self.config.n_source_categories, size=length, p=affinity)
        return [self._news_item(int(cat)) for cat in categories]

    def _clicked_ads(self) -> Tuple[List[FeatureList], List[int]]:
        c = self.config
        length = self._sequence_length(c.mean_target_seq, c.max_target_seq)
        categories = [int(cat) for cat in self.rng.integers(c.n_target_categories, size=length)]
        return [self._ad_item(cat) for cat in categories], categories

    def generate(self) -> Tuple[Dict[str, List[RawRecord]], GroundTruth]:
        """
        Draw every user's impressions.

        Returns:
            Records per split and the ground truth. Each user's last ad
            impression goes to test, the one before to validation, the rest
            and all news impressions to train.
        """
        c = self.config
        affinities: Dict[str, List[float]] = {}
        splits: Dict[str, List[RawRecord]] = {name: [] for name in SPLITS}
        source_offset = logit(c.source_base_rate)

        for u in range(c.n_users):
            user_feature = f"user_id=u{u}"
            affinity = self.rng.dirichlet(np.full(c.n_source_categories, c.dirichlet_alpha))
            affinities[user_feature] = [float(a) for a in affinity]
            target_affinity = map_affinity(affinity, self.category_map, c.n_target_categories)
            segment = int(self.rng.integers(c.n_user_segments))
            user = [[user_feature], [f"user_segment=g{segment}"]]

            for _ in range(c.source_instances_per_user):
                category = int(self.rng.integers(c.n_source_categories))
                aligned = c.n_source_categories * affinity[category] - 1.0
                p = expit(source_offset + c.affinity_strength * aligned)
                label = int(self.rng.random() < p)
                splits["train"].append(RawRecord(
                    domain=Domain.SOURCE.value,
                    label=str(label),
                    user=user,
                    item=self._news_item(category),
                    clicked_source=self._clicked_news(affinity),
                    clicked_target=self._clicked_ads()[0],
                ))

            user_target = []
            for _ in range(c.target_instances_per_user):
                category = int(self.rng.integers(c.n_target_categories))
                clicked_news = self._clicked_news(affinity)
                clicked_ads, clicked_categories = self._clicked_ads()
                p = expit(click_logit(
                    target_affinity, category, clicked_categories,
                    c.base_rate, c.kappa, c.affinity_strength, c.short_term_bonus,
                ))
                label = int(self.rng.random() < p)
                user_target.append(RawRecord(
                    domain=Domain.TARGET.value,
                    label=str(label),
                    user=user,
                    item=self._ad_item(category),
                    clicked_source=clicked_news,
                    clicked_target=clicked_ads,
                ))
            splits["train"].extend(user_target[:-2])
            splits["validation"].append(user_target[-2])
            splits["test"].append(user_target[-1])

        truth = GroundTruth(
            seed=self.seed,
            kappa=c.kappa,
            base_rate=c.base_rate,
            affinity_strength=c.affinity_strength,
            short_term_bonus=c.short_term_bonus,
            n_source_categories=c.n_source_categories,
            n_target_categories=c.n_target_categories,
            category_map=self.category_map,
            affinities=affinities,
        )
        return splits, truth


def generate_synthetic(config: SynthConfig, seed: int) -> SyntheticData:
    """
    Generate train/validation/test datasets with planted cross-domain structure.

    The vocabulary is built from the training split only; validation and
    test features absent from training map to the unknown id.

    Raises:
        ArgumentError: kappa outside [0, 1]
    """
    if not 0.0 <= config.kappa <= 1.0:
        raise ArgumentError(f"kappa must be in [0, 1], got {config.kappa}")

    records, truth = SyntheticGenerator(config, seed).generate()
    schema = synthetic_schema()
    vocabulary = build_vocabulary(format_record(r) for r in records["train"])
    splits = {
        name: records_to_dataset(
            enumerate(split_records, start=1), schema, vocabulary, config.max_source_seq, config.max_target_seq
        )
        for name, split_records in records.items()
    }
    positives = sum(i.label for i in splits["train"].target_instances)
    logger.info(
        f"Generated {config.n_users} users (seed={seed}, kappa={config.kappa}): "
        f"{len(splits['train'].target_instances)} train ad impressions, {positives} clicked"
    )
    return SyntheticData(schema=schema, vocabulary=vocabulary, splits=splits, records=records, ground_truth=truth)


def metadata_lines(truth: GroundTruth) -> List[str]:
    lines = [
        f"seed={truth.seed}",
        f"kappa={truth.kappa!r}",
        f"base_rate={truth.base_rate!r}",
        f"affinity_strength={truth.affinity_strength!r}",
        f"short_term_bonus={truth.short_term_bonus!r}",
        f"n_source_categories={truth.n_source_categories}",
        f"n_target_categories={truth.n_target_categories}",
        "category_map=" + ",".join(f"{s}:{t}" for s, t in enumerate(truth.category_map)),
    ]
    for user, affinity in truth.affinities.items():
        lines.append(f"affinity.{user}=" + ",".join(repr(a) for a in affinity))
    return lines


def write_synthetic(data: SyntheticData, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """
    Write split files, the schema and the metadata sidecar.

    Returns:
        Written path per split name plus 'schema' and 'metadata'
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name in SPLITS:
        paths[name] = out_dir / f"{name}.tsv"
        write_records(data.records[name], paths[name])
    paths["schema"] = out_dir / SCHEMA_FILE
    save_schema(data.schema, paths["schema"])
    paths["metadata"] = out_dir / METADATA_FILE
    with open(paths["metadata"], "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(metadata_lines(data.ground_truth)) + "\n")
    logger.info(f"Wrote synthetic dataset to {out_dir}")
    return paths


def load_metadata(path: Union[str, Path]) -> GroundTruth:
    """Read a metadata sidecar back into a GroundTruth"""
    path = Path(path)
    values: Dict[str, str] = {}
    affinities: Dict[str, List[float]] = {}
    with open(path, "r", encoding="utf-8") as f:
        for number, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            # affinity keys embed a feature string such as user_id=u0
            if line.startswith("affinity."):
                key, sep, value = line.rpartition("=")
            else:
                key, sep, value = line.partition("=")
            if not sep:
                raise ParseError("expected key=value", number, str(path))
            if key.startswith("affinity."):
                try:
                    affinities[key[len("affinity."):]] = [float(a) for a in value.split(",")]
                except ValueError:
                    raise ParseError(f"bad affinity vector for {key}", number, str(path)) from None
            else:
                values[key] = value
    try:
        category_map = [int(pair.split(":")[1]) for pair in values.pop("category_map").split(",")]
        return GroundTruth(category_map=category_map, affinities=affinities, **values)
    except (KeyError, IndexError, ValueError) as e:
        raise ParseError(f"incomplete metadata: {e}", None, str(path)) from None


def bayes_oracle_scores(
    instances: Sequence[Instance],
    ground_truth: GroundTruth,
    vocabulary: Vocabulary,
    schema: Optional[Schema] = None,
) -> np.ndarray:
    """
    True click probabilities of target instances under the generating process.

    The recorded target sequence is the truncated one, which matches the
    generator whenever max_target_seq was not lowered after generation.
    """
    schema = schema or synthetic_schema()
    user_pos = field_position(schema, Domain.USER, "user_id")
    category_pos = field_position(schema, Domain.TARGET, "ad_category")
    scores = np.empty(len(instances))
    for i, instance in enumerate(instances):
        user = vocabulary.decode(instance.user_feature_ids[user_pos][0])
        category = parse_category(vocabulary.decode(instance.item_feature_ids[category_pos][0]))
        clicked = [parse_category(vocabulary.decode(item[category_pos][0])) for item in instance.clicked_target_items]
        if category is None or user == UNKNOWN_FEATURE:
            scores[i] = ground_truth.base_rate
            continue
        scores[i] = expit(ground_truth.click_logit(user, category, [c for c in clicked if c is not None]))
    return scores
