"""
Instance Line Format
String-level parsing and formatting of the tab-separated instance format:

    domain<TAB>label<TAB>user_f1,...<TAB>item_f1,...<TAB>seq_src:item|item<TAB>seq_tgt:item|item

Every `item` inside a sequence is a comma-separated feature list. A field
holding several features (multi-valued) joins them with ';'. An empty
sequence is the bare prefix (`seq_src:`).
"""

from dataclasses import dataclass
from typing import List, Optional

from errors import ParseError

SOURCE_PREFIX = "seq_src:"
TARGET_PREFIX = "seq_tgt:"
RESERVED = ("\t", ",", "|", ";")

FieldValue = List[str]
FeatureList = List[FieldValue]


@dataclass
class RawRecord:
    """One parsed line, features still as strings"""
    domain: str
    label: str
    user: FeatureList
    item: FeatureList
    clicked_source: List[FeatureList]
    clicked_target: List[FeatureList]

    def all_features(self) -> List[str]:
        """Every feature string in line order"""
        out: List[str] = []
        for group in [self.user, self.item] + self.clicked_source + self.clicked_target:
            for members in group:
                out.extend(members)
        return out


def _parse_feature_list(text: str, line_number: Optional[int]) -> FeatureList:
    if text == "":
        return []
    fields = []
    for field in text.split(","):
        members = field.split(";")
        if any(m == "" for m in members):
            raise ParseError(f"empty feature in {text!r}", line_number)
        fields.append(members)
    return fields


def _parse_sequence(text: str, prefix: str, line_number: Optional[int]) -> List[FeatureList]:
    if not text.startswith(prefix):
        raise ParseError(f"expected column starting with {prefix!r}, got {text[:20]!r}", line_number)
    body = text[len(prefix):]
    if body == "":
        return []
    return [_parse_feature_list(item, line_number) for item in body.split("|")]


def parse_line(line: str, line_number: Optional[int] = None) -> RawRecord:
    """
    Split one instance line into its string parts.

    Raises:
        ParseError: wrong column count or malformed feature lists
    """
    columns = line.rstrip("\r\n").split("\t")
    if len(columns) != 6:
        raise ParseError(f"expected 6 tab-separated columns, got {len(columns)}", line_number)
    domain, label, user, item, seq_src, seq_tgt = columns
    return RawRecord(
        domain=domain,
        label=label,
        user=_parse_feature_list(user, line_number),
        item=_parse_feature_list(item, line_number),
        clicked_source=_parse_sequence(seq_src, SOURCE_PREFIX, line_number),
        clicked_target=_parse_sequence(seq_tgt, TARGET_PREFIX, line_number),
    )


def _format_feature_list(features: FeatureList) -> str:
    return ",".join(";".join(members) for members in features)


def format_record(record: RawRecord) -> str:
    """Inverse of parse_line (without the trailing newline)"""
    seq_src = "|".join(_format_feature_list(item) for item in record.clicked_source)
    seq_tgt = "|".join(_format_feature_list(item) for item in record.clicked_target)
    return "\t".join([
        record.domain,
        record.label,
        _format_feature_list(record.user),
        _format_feature_list(record.item),
        SOURCE_PREFIX + seq_src,
        TARGET_PREFIX + seq_tgt,
    ])
