from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd
import yaml
from pydantic import ValidationError

from ..errors import InputError
from .mixture import GaussianMixtureSpec, TargetTransform, apply_transform


def load_mixture_spec(path: Union[str, Path]) -> GaussianMixtureSpec:
    """Read a YAML mixture document: ``components`` list plus optional ``transforms`` applied in order."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Spec file not found: {path}")
    doc = yaml.safe_load(path.read_text()) or {}
    try:
        spec = GaussianMixtureSpec.model_validate({k: v for k, v in doc.items() if k != "transforms"})
        for t in doc.get("transforms", []) or []:
            spec = apply_transform(spec, TargetTransform.model_validate(t))
    except ValidationError as e:
        raise InputError(f"invalid mixture spec {path}: {e}") from e
    return spec


def dump_mixture_spec(spec: GaussianMixtureSpec, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(spec.model_dump(mode="json"), sort_keys=False))
    return path


def export_samples_csv(points: np.ndarray, labels: np.ndarray, path: Union[str, Path]) -> Path:
    """Write x,y,component_id rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({"x": points[:, 0], "y": points[:, 1], "component_id": np.asarray(labels, dtype=int)})
    frame.to_csv(path, index=False)
    return path
