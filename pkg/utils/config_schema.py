from typing import List, Dict, Any, Optional
from enum import Enum
from dataclasses import dataclass, field
from utils.error_handler import ConfigError


class FieldType(str, Enum):
    """Supported config field types"""
    INT = "int"
    FLOAT = "float"
    BOOL = "bool"
    STRING = "string"
    CHOICE = "choice"


@dataclass
class FieldValidation:
    """Field validation rules"""
    min_value: Optional[float] = None
    max_value: Optional[float] = None
    exclusive_min: bool = False
    choices: List[Any] = field(default_factory=list)
    allow_none: bool = False


@dataclass
class FieldSchema:
    """Schema for one `section.field` entry of a run configuration"""
    field_name: str
    section_name: str
    field_type: FieldType
    validation: FieldValidation = None
    help_text: str = ""

    def __post_init__(self):
        if self.validation is None:
            self.validation = FieldValidation()

    @property
    def key(self) -> str:
        return f"{self.section_name}.{self.field_name}"

    def validate(self) -> List[str]:
        """Validate the schema itself"""
        errors = []
        if not self.field_name or not self.field_name.replace('_', '').isalnum():
            errors.append("Field name must contain only letters, numbers, and underscores")
        if not self.section_name:
            errors.append("Section name is required")
        if self.field_type == FieldType.CHOICE and not self.validation.choices:
            errors.append(f"Field type '{self.field_type.value}' requires choices")
        return errors

    def validate_value(self, value: Any) -> List[str]:
        """Validate a value against the schema"""
        rules = self.validation
        if value is None:
            return [] if rules.allow_none else [f"Field '{self.key}' is required"]

        if self.field_type == FieldType.BOOL:
            if not isinstance(value, bool):
                return [f"Field '{self.key}' must be a boolean"]
            return []

        if self.field_type == FieldType.STRING:
            if not isinstance(value, str):
                return [f"Field '{self.key}' must be a string"]
            return []

        if self.field_type == FieldType.CHOICE:
            if value not in rules.choices:
                return [f"Field '{self.key}' must be one of {rules.choices}, got {value!r}"]
            return []

        return self._check_number(value, self.field_type)

    def _check_number(self, value: Any, kind: FieldType) -> List[str]:
        rules = self.validation
        if isinstance(value, bool):
            return [f"Field '{self.key}' must be a number, not a boolean"]
        if kind == FieldType.INT and not isinstance(value, int):
            return [f"Field '{self.key}' must be an integer"]
        if not isinstance(value, (int, float)):
            return [f"Field '{self.key}' must be a number"]
        if value != value:
            return [f"Field '{self.key}' must not be NaN"]

        errors = []
        if rules.min_value is not None:
            if rules.exclusive_min and value <= rules.min_value:
                errors.append(f"Field '{self.key}' must be greater than {rules.min_value}")
            elif not rules.exclusive_min and value < rules.min_value:
                errors.append(f"Field '{self.key}' must be at least {rules.min_value}")
        if rules.max_value is not None and value > rules.max_value:
            errors.append(f"Field '{self.key}' must be at most {rules.max_value}")
        return errors


class ConfigSchemaManager:
    """Registry of field schemas keyed by `section.field`"""

    def __init__(self):
        self.schemas: Dict[str, FieldSchema] = {}

    def add_schema(self, schema: FieldSchema) -> None:
        errors = schema.validate()
        if errors:
            raise ConfigError(f"Invalid field schema: {'; '.join(errors)}", schema.key)
        self.schemas[schema.key] = schema

    def get_schema(self, section_name: str, field_name: str) -> Optional[FieldSchema]:
        return self.schemas.get(f"{section_name}.{field_name}")

    def validate_field_value(self, section_name: str, field_name: str, value: Any) -> List[str]:
        schema = self.get_schema(section_name, field_name)
        if not schema:
            return [f"Unknown field: {section_name}.{field_name}"]
        return schema.validate_value(value)

    def sections(self) -> List[str]:
        return sorted({schema.section_name for schema in self.schemas.values()})

    def validate_document(self, document: Dict[str, Any]) -> List[str]:
        """Validate a nested {section: {field: value}} document, rejecting unknown keys"""
        errors = []
        known_sections = set(self.sections())
        for section_name, values in document.items():
            if section_name not in known_sections:
                errors.append(f"Unknown section: {section_name}")
                continue
            if not isinstance(values, dict):
                errors.append(f"Section '{section_name}' must be an object")
                continue
            for field_name, value in values.items():
                errors.extend(self.validate_field_value(section_name, field_name, value))
        return errors
