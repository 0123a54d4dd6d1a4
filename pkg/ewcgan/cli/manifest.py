import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Literal, Optional, Union

from pydantic import BaseModel, Field, ValidationError

from ..datasets import TargetTransform
from ..errors import InputError
from ..models import file_digest
from .config import Importance

Status = Literal["ok", "diverged", "failed"]

MANIFEST_NAME = "manifest.json"


class CellSpec(BaseModel):
    """One point of the adaptation grid."""

    lam: float = Field(ge=0)
    shots: int = Field(ge=1)
    transform_index: int = Field(0, ge=0)
    transform: TargetTransform = TargetTransform()
    importance: Importance = "estimated"
    seed: int = 0

    @property
    def run_id(self) -> str:
        return f"lam{self.lam:g}_k{self.shots}_t{self.transform_index}_{self.importance}_s{self.seed}"


class RunManifest(BaseModel):
    """Provenance of one command's outputs: enough to recompute and verify them."""

    run_id: str
    command: str
    config_digest: str
    config: dict[str, Any]
    cell: Optional[CellSpec] = None
    inputs: dict[str, str] = Field(default_factory=dict)
    outputs: dict[str, str] = Field(default_factory=dict)
    started_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    wall_clock_seconds: float = 0.0
    status: Status = "ok"
    error: Optional[str] = None


def digests_of(root: Path, paths: list[Path]) -> dict[str, str]:
    return {str(p.relative_to(root)): file_digest(p) for p in paths}


def write_manifest(directory: Union[str, Path], manifest: RunManifest) -> Path:
    path = Path(directory) / MANIFEST_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(path: Union[str, Path]) -> RunManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.is_file():
        raise InputError(f"Manifest not found: {path}")
    try:
        return RunManifest.model_validate_json(path.read_text())
    except ValidationError as e:
        raise InputError(f"Invalid manifest {path}: {e}") from e
