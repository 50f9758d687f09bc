"""
Feature Schema
Field layout shared by the source (news) and target (ad) domains.

Each domain has a fixed, ordered list of fields; user fields are common to
both domains. A field is single-valued (one feature) or multi-valued (a bag
of features mean-pooled into one embedding).
"""

import logging
from enum import Enum
from pathlib import Path
from typing import Dict, List, Union

from pydantic import BaseModel, Field, field_validator

from errors import ParseError

logger = logging.getLogger(__name__)


class Domain(str, Enum):
    """Where a field or instance lives"""
    SOURCE = "source"
    TARGET = "target"
    USER = "user"


class FieldKind(str, Enum):
    SINGLE = "single"
    MULTI = "multi"


class FieldSchema(BaseModel):
    """One attribute slot, e.g. user_id or ad_category"""
    domain: Domain
    field_name: str = Field(..., min_length=1)
    field_kind: FieldKind = FieldKind.SINGLE


class Schema(BaseModel):
    """Ordered field lists for user, source-item and target-item features"""
    fields: List[FieldSchema]

    @field_validator("fields")
    def validate_unique_names(cls, v):
        """Field names must be unique within a domain"""
        seen = set()
        for f in v:
            key = (f.domain, f.field_name)
            if key in seen:
                raise ValueError(f"duplicate field {f.field_name!r} in domain {f.domain.value}")
            seen.add(key)
        return v

    def for_domain(self, domain: Domain) -> List[FieldSchema]:
        return [f for f in self.fields if f.domain == domain]

    def field_count(self, domain: Domain) -> int:
        return len(self.for_domain(domain))

    def counts(self) -> Dict[str, int]:
        return {d.value: self.field_count(d) for d in Domain}


def parse_schema(lines: List[str], path: Union[str, Path, None] = None) -> Schema:
    """
    Parse schema lines of the form `domain<TAB>field_name<TAB>kind`.

    Blank lines and lines starting with '#' are ignored; kind defaults to single.
    """
    fields = []
    for number, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) not in (2, 3):
            raise ParseError(f"expected 2 or 3 tab-separated columns, got {len(parts)}", number, str(path) if path else None)
        try:
            fields.append(FieldSchema(
                domain=Domain(parts[0]),
                field_name=parts[1],
                field_kind=FieldKind(parts[2]) if len(parts) == 3 else FieldKind.SINGLE,
            ))
        except ValueError as e:
            raise ParseError(f"bad schema entry: {e}", number, str(path) if path else None) from None
    try:
        return Schema(fields=fields)
    except ValueError as e:
        raise ParseError(f"invalid schema: {e}", None, str(path) if path else None) from None


def load_schema(path: Union[str, Path]) -> Schema:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        schema = parse_schema(f.readlines(), path)
    logger.info(f"Loaded schema {path.name}: {schema.counts()}")
    return schema


def save_schema(schema: Schema, path: Union[str, Path]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for field in schema.fields:
            f.write(f"{field.domain.value}\t{field.field_name}\t{field.field_kind.value}\n")
