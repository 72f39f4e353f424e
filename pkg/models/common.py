"""
Common Model Types
Shared annotated types for numpy-backed pydantic fields.
"""

from typing import Annotated, Any

import numpy as np
from pydantic import BeforeValidator, PlainSerializer


def _as_float_array(value: Any) -> np.ndarray:
    array = np.array(value, dtype=float)
    array.setflags(write=False)
    return array


def _to_nested_list(array: np.ndarray) -> Any:
    return array.tolist()


FloatArray = Annotated[
    np.ndarray,
    BeforeValidator(_as_float_array),
    PlainSerializer(_to_nested_list, when_used="json"),
]
"""Read-only float array; serialized as nested lists in JSON mode."""
