"""
Instances and Datasets
Typed instances for both domains, file ingestion and export, and the
clicked-category co-occurrence table used to inspect cross-domain structure.

Behavior sequences are stored oldest first; truncation keeps the tail.
"""

import logging
from collections import defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator

from errors import ParseError
from features.format import FeatureList, RawRecord, format_record, parse_line
from features.schema import Domain, FieldKind, FieldSchema, Schema
from features.vocabulary import Vocabulary, unknown_rate

logger = logging.getLogger(__name__)

DEFAULT_MAX_SOURCE_SEQ = 25
DEFAULT_MAX_TARGET_SEQ = 5

# One field value: the ids of its member features (one id for single-valued fields)
FieldIds = Tuple[int, ...]
ItemIds = Tuple[FieldIds, ...]


class Instance(BaseModel):
    """
    One labeled impression with the user's recent behavior in both domains.

    item_feature_ids is the target ad for a target-domain instance and the
    target news for a source-domain instance.
    """
    model_config = ConfigDict(frozen=True)

    domain: Domain
    label: int = Field(..., ge=0, le=1)
    user_feature_ids: ItemIds
    item_feature_ids: ItemIds
    clicked_source_items: Tuple[ItemIds, ...] = ()
    clicked_target_items: Tuple[ItemIds, ...] = ()
    instance_id: int = 0

    @field_validator("domain")
    def validate_item_domain(cls, v):
        if v == Domain.USER:
            raise ValueError("instance domain must be source or target")
        return v

    def feature_ids(self) -> List[int]:
        """Every feature id in the instance"""
        out: List[int] = []
        for group in (self.user_feature_ids, self.item_feature_ids) + self.clicked_source_items + self.clicked_target_items:
            for members in group:
                out.extend(members)
        return out


class Dataset(BaseModel):
    """Instances of both domains over one schema and vocabulary"""
    model_config = ConfigDict(frozen=True)

    schema_: Schema = Field(..., alias="schema")
    vocabulary: Vocabulary
    source_instances: List[Instance] = Field(default_factory=list)
    target_instances: List[Instance] = Field(default_factory=list)

    @property
    def schema(self) -> Schema:
        return self.schema_

    def instances(self, domain: Domain) -> List[Instance]:
        return self.source_instances if domain == Domain.SOURCE else self.target_instances

    def __len__(self) -> int:
        return len(self.source_instances) + len(self.target_instances)

    def check_invariants(self, max_source_seq: Optional[int] = None, max_target_seq: Optional[int] = None):
        """
        Verify field layout and id range of every instance.

        Raises:
            ParseError: first violating instance, identified by instance_id
        """
        for instance in self.source_instances + self.target_instances:
            problem = instance_problem(instance, self.schema, self.vocabulary.size, max_source_seq, max_target_seq)
            if problem:
                raise ParseError(f"instance {instance.instance_id}: {problem}")


def _layout_problem(groups: ItemIds, fields: List[FieldSchema], n_features: int, what: str) -> Optional[str]:
    if len(groups) != len(fields):
        return f"{what} has {len(groups)} fields, schema expects {len(fields)}"
    for members, field in zip(groups, fields):
        if not members:
            return f"{what} field {field.field_name} is empty"
        if field.field_kind == FieldKind.SINGLE and len(members) != 1:
            return f"{what} field {field.field_name} is single-valued but holds {len(members)} features"
        for feature_id in members:
            if not 0 <= feature_id < n_features:
                return f"{what} feature id {feature_id} outside [0, {n_features})"
    return None


def instance_problem(
    instance: Instance,
    schema: Schema,
    n_features: int,
    max_source_seq: Optional[int] = None,
    max_target_seq: Optional[int] = None,
) -> Optional[str]:
    """Describe the first invariant the instance breaks, or None"""
    user_fields = schema.for_domain(Domain.USER)
    source_fields = schema.for_domain(Domain.SOURCE)
    target_fields = schema.for_domain(Domain.TARGET)
    item_fields = source_fields if instance.domain == Domain.SOURCE else target_fields

    problem = _layout_problem(instance.user_feature_ids, user_fields, n_features, "user")
    problem = problem or _layout_problem(instance.item_feature_ids, item_fields, n_features, "item")
    for item in instance.clicked_source_items:
        problem = problem or _layout_problem(item, source_fields, n_features, "clicked source item")
    for item in instance.clicked_target_items:
        problem = problem or _layout_problem(item, target_fields, n_features, "clicked target item")
    if problem:
        return problem
    if max_source_seq is not None and len(instance.clicked_source_items) > max_source_seq:
        return f"{len(instance.clicked_source_items)} clicked source items exceed {max_source_seq}"
    if max_target_seq is not None and len(instance.clicked_target_items) > max_target_seq:
        return f"{len(instance.clicked_target_items)} clicked target items exceed {max_target_seq}"
    return None


def _encode(features: FeatureList, vocabulary: Vocabulary) -> ItemIds:
    return tuple(tuple(vocabulary.encode(m) for m in members) for members in features)


def record_to_instance(
    record: RawRecord,
    schema: Schema,
    vocabulary: Vocabulary,
    max_source_seq: int = DEFAULT_MAX_SOURCE_SEQ,
    max_target_seq: int = DEFAULT_MAX_TARGET_SEQ,
    instance_id: int = 0,
    line_number: Optional[int] = None,
) -> Instance:
    """
    Encode and validate one parsed record.

    Raises:
        ParseError: unknown domain, label outside {0, 1}, or field-count mismatch
    """
    try:
        domain = Domain(record.domain)
    except ValueError:
        raise ParseError(f"unknown domain {record.domain!r}", line_number) from None
    if domain == Domain.USER:
        raise ParseError("instance domain must be source or target", line_number)
    if record.label not in ("0", "1"):
        raise ParseError(f"label must be 0 or 1, got {record.label!r}", line_number)

    instance = Instance(
        domain=domain,
        label=int(record.label),
        user_feature_ids=_encode(record.user, vocabulary),
        item_feature_ids=_encode(record.item, vocabulary),
        clicked_source_items=tuple(_encode(i, vocabulary) for i in record.clicked_source[-max_source_seq:]) if max_source_seq > 0 else (),
        clicked_target_items=tuple(_encode(i, vocabulary) for i in record.clicked_target[-max_target_seq:]) if max_target_seq > 0 else (),
        instance_id=instance_id,
    )
    problem = instance_problem(instance, schema, vocabulary.size)
    if problem:
        raise ParseError(problem, line_number)
    return instance


def records_to_dataset(
    records: Iterable[Tuple[int, RawRecord]],
    schema: Schema,
    vocabulary: Vocabulary,
    max_source_seq: int = DEFAULT_MAX_SOURCE_SEQ,
    max_target_seq: int = DEFAULT_MAX_TARGET_SEQ,
) -> Dataset:
    """Encode (line_number, record) pairs into a Dataset"""
    source: List[Instance] = []
    target: List[Instance] = []
    for index, (line_number, record) in enumerate(records):
        instance = record_to_instance(
            record, schema, vocabulary, max_source_seq, max_target_seq,
            instance_id=index, line_number=line_number,
        )
        (source if instance.domain == Domain.SOURCE else target).append(instance)
    return Dataset(schema=schema, vocabulary=vocabulary, source_instances=source, target_instances=target)


def read_records(path: Union[str, Path]) -> List[Tuple[int, RawRecord]]:
    """Parse every non-blank line of an instance file"""
    path = Path(path)
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append((number, parse_line(line, number)))
            except ParseError as e:
                raise ParseError(e.message, e.line_number, str(path)) from None
    return records


def load_dataset(
    path: Union[str, Path],
    schema: Schema,
    vocabulary: Vocabulary,
    max_source_seq: int = DEFAULT_MAX_SOURCE_SEQ,
    max_target_seq: int = DEFAULT_MAX_TARGET_SEQ,
) -> Dataset:
    """
    Load an instance file.

    Args:
        path: Tab-separated instance file
        schema: Field layout the lines must follow
        vocabulary: Feature ids; unseen features map to the unknown id
        max_source_seq: Longest clicked-news sequence kept (most recent items)
        max_target_seq: Longest clicked-ad sequence kept (most recent items)

    Returns:
        Dataset satisfying every instance invariant
    """
    path = Path(path)
    records = read_records(path)
    try:
        dataset = records_to_dataset(records, schema, vocabulary, max_source_seq, max_target_seq)
    except ParseError as e:
        raise ParseError(e.message, e.line_number, str(path)) from None

    rate = unknown_rate(vocabulary, [f for _, r in records for f in r.all_features()])
    if rate:
        logger.warning(f"{path.name}: {rate:.1%} of features are not in the vocabulary and map to the unknown id")
    logger.info(
        f"Loaded {path.name}: {len(dataset.source_instances)} source, "
        f"{len(dataset.target_instances)} target instances"
    )
    return dataset


def instance_to_record(instance: Instance, vocabulary: Vocabulary) -> RawRecord:
    def decode(groups: ItemIds) -> FeatureList:
        return [[vocabulary.decode(i) for i in members] for members in groups]

    return RawRecord(
        domain=instance.domain.value,
        label=str(instance.label),
        user=decode(instance.user_feature_ids),
        item=decode(instance.item_feature_ids),
        clicked_source=[decode(i) for i in instance.clicked_source_items],
        clicked_target=[decode(i) for i in instance.clicked_target_items],
    )


def write_records(records: Iterable[RawRecord], path: Union[str, Path]) -> int:
    """Write records one per line; returns the number written"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(format_record(record) + "\n")
            count += 1
    logger.info(f"Wrote {count} records to {path}")
    return count


def field_position(schema: Schema, domain: Domain, field_name: str) -> int:
    for position, field in enumerate(schema.for_domain(domain)):
        if field.field_name == field_name:
            return position
    raise ValueError(f"no field {field_name!r} in domain {domain.value}")


def category_cooccurrence(
    dataset: Dataset,
    source_field: str,
    target_field: str,
) -> Dict[str, Dict[str, float]]:
    """
    Conditional click distribution of target categories given clicked source categories.

    For every clicked target instance, each distinct source category among
    its clicked news is paired with the target item's category. Rows are
    normalized, giving p(target category | clicked source category).

    Args:
        dataset: Dataset whose target instances are inspected
        source_field: Category field of source items (e.g. news_category)
        target_field: Category field of target items (e.g. ad_category)

    Returns:
        {source category: {target category: probability}}
    """
    source_pos = field_position(dataset.schema, Domain.SOURCE, source_field)
    target_pos = field_position(dataset.schema, Domain.TARGET, target_field)
    counts: Dict[str, Dict[str, float]] = defaultdict(lambda: defaultdict(float))
    vocabulary = dataset.vocabulary

    for instance in dataset.target_instances:
        if instance.label != 1:
            continue
        target_category = vocabulary.decode(instance.item_feature_ids[target_pos][0])
        clicked = {vocabulary.decode(item[source_pos][0]) for item in instance.clicked_source_items}
        for source_category in clicked:
            counts[source_category][target_category] += 1.0

    table: Dict[str, Dict[str, float]] = {}
    for source_category, row in counts.items():
        row_total = sum(row.values())
        table[source_category] = {k: v / row_total for k, v in sorted(row.items())}
    return table
