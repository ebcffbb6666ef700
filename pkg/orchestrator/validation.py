import json
import logging
import math
from typing import Any, Dict, List, Sequence

from app.core.config import PROJECT_ROOT

logger = logging.getLogger("validation")

REPORT_SCHEMA_PATH = PROJECT_ROOT / "schemas" / "report_columns.json"


def _load_report_schema() -> Dict[str, Any]:
    """Load the report column contract from file"""
    with open(REPORT_SCHEMA_PATH, "r", encoding="utf-8") as f:
        return json.load(f)


# Initialize the column contract
REPORT_SCHEMA = _load_report_schema()


def expected_columns(table: str, class_ids: Sequence[int] = ()) -> List[str]:
    """Column order of an input or output table, with the per-class columns expanded"""
    columns = []
    for column in REPORT_SCHEMA[table]["columns"]:
        if column == "{classes}":
            columns.extend(REPORT_SCHEMA["class_column"].format(class_id=c) for c in class_ids)
        else:
            columns.append(column)
    return columns


def validate_header(header: Sequence[str], table: str, class_ids: Sequence[int] = ()) -> Dict[str, Any]:
    """Check that a CSV header matches the frozen column order of `table`"""
    expected = expected_columns(table, class_ids)
    header = [h.strip() for h in header]
    if header == expected:
        return {"is_valid": True, "issues": []}
    return {"is_valid": False, "issues": [f"expected columns {expected}, got {header}"]}


def _is_number(text: str) -> bool:
    try:
        return math.isfinite(float(text))
    except ValueError:
        return False


def validate_payload(report_type: str, fields: Dict[str, str]) -> Dict[str, Any]:
    """Validate the key=value payload of one report row

    Args:
        report_type: Value of the report_type column
        fields: Parsed payload

    Returns:
        Validation result with is_valid flag and list of issues
    """
    validation_result = {"is_valid": True, "issues": []}

    rules = REPORT_SCHEMA["reports"]["report_types"].get(report_type)
    if rules is None:
        known = sorted(REPORT_SCHEMA["reports"]["report_types"])
        validation_result["is_valid"] = False
        validation_result["issues"].append(f"unknown report_type '{report_type}' (expected one of {known})")
        return validation_result

    # Check for required keys
    for key in rules.get("required", []):
        if key not in fields:
            validation_result["issues"].append(f"{report_type} report is missing '{key}'")

    # Exactly one of the alternative keys
    one_of = rules.get("one_of", [])
    if one_of and sum(key in fields for key in one_of) != 1:
        validation_result["issues"].append(f"{report_type} report needs exactly one of {one_of}")

    # Check for unexpected keys
    if not rules.get("any_field", False):
        allowed = set(rules.get("required", [])) | set(one_of) | set(rules.get("optional", []))
        for key in fields:
            if key not in allowed:
                validation_result["issues"].append(f"unexpected key '{key}' in {report_type} report")
    elif not fields:
        validation_result["issues"].append(f"{report_type} report carries no fields")

    # Check numeric values
    numeric = list(fields) if rules.get("numeric", False) else rules.get("numeric_fields", [])
    for key in numeric:
        if key in fields and not _is_number(fields[key]):
            validation_result["issues"].append(f"'{key}' must be a finite number, got '{fields[key]}'")

    validation_result["is_valid"] = not validation_result["issues"]
    return validation_result
