import hashlib
from typing import Any, Callable, List, TypeVar

T = TypeVar("T")


def is_empty_or_none(value: Any) -> bool:
    return value is None or (isinstance(value, str) and value.strip() == "")


def parse_value_list(text: str, cast: Callable[[str], T], separator: str = ",") -> List[T]:
    """Splits `text` on `separator` and converts every non-empty item with `cast`."""
    if is_empty_or_none(text):
        return []
    return [cast(item.strip()) for item in text.split(separator) if item.strip()]


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()
