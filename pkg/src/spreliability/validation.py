"""Input coercion shared by the estimator and the CLI."""
from __future__ import annotations

import os
from collections.abc import Mapping

import numpy as np

from .spgraph import Instance, InstanceError, check_instance_data, loads_instance, read_instance


def check_instance(obj) -> Instance:
    """Accept an Instance, a JSON string/path, or a parsed JSON mapping."""
    if isinstance(obj, Instance):
        return check_instance_data(obj)
    if isinstance(obj, Mapping):
        import json

        return loads_instance(json.dumps(obj))
    if isinstance(obj, (str, os.PathLike)):
        text = str(obj)
        if text.lstrip().startswith("{"):
            return loads_instance(text)
        return read_instance(obj)
    raise TypeError(f"expected an Instance, JSON text, path or mapping, got {type(obj).__name__}")


def check_mask(mask, m: int) -> np.ndarray:
    """Coerce a bitstring or 0/1 sequence into an int8 vector of length ``m``."""
    if isinstance(mask, str):
        text = mask.strip()
        if any(ch not in "01" for ch in text):
            raise ValueError(f"mask {mask!r} must contain only 0 and 1")
        arr = np.array([int(ch) for ch in text], dtype=np.int8)
    else:
        arr = np.asarray(mask)
        if arr.ndim != 1:
            raise ValueError(f"mask must be one-dimensional, got shape {arr.shape}")
        if arr.dtype == bool:
            arr = arr.astype(np.int8)
        elif not np.all(np.isin(arr, (0, 1))):
            raise ValueError("mask entries must be 0 or 1")
        arr = arr.astype(np.int8)
    if arr.shape[0] != m:
        raise ValueError(f"mask has length {arr.shape[0]}, instance has {m} edges")
    return arr


def check_masks(masks, m: int) -> np.ndarray:
    """Stack one or many masks into a 2-D int8 array with ``m`` columns."""
    if isinstance(masks, str):
        return check_mask(masks, m)[None, :]
    arr = np.asarray(masks, dtype=object if isinstance(masks, (list, tuple)) and masks
                     and isinstance(masks[0], str) else None)
    if arr.dtype == object:
        return np.stack([check_mask(s, m) for s in masks])
    if arr.ndim == 1:
        return check_mask(arr, m)[None, :]
    if arr.ndim != 2:
        raise ValueError(f"masks must be 1-D or 2-D, got shape {arr.shape}")
    return np.stack([check_mask(row, m) for row in arr])


def check_fixings(fixed, m: int) -> tuple:
    """Partial assignment: each entry 0, 1 or None."""
    if fixed is None:
        return (None,) * m
    fixed = list(fixed)
    if len(fixed) != m:
        raise ValueError(f"fixing has length {len(fixed)}, instance has {m} edges")
    if any(f is not None and f not in (0, 1) for f in fixed):
        raise ValueError("fixings must be 0, 1 or None")
    return tuple(None if f is None else int(f) for f in fixed)


__all__ = ["InstanceError", "check_instance", "check_mask", "check_masks", "check_fixings"]
