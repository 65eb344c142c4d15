"""Versioned model registry backed by a plain directory.

Each version is one JSON document (model + schema + team profiles +
metrics). The single active version is an atomic pointer file written via
temp-file-then-rename, so a crash at any point leaves either the old or
the new version active, never neither.
"""
from __future__ import annotations

import json
import os
import tempfile
import threading
import time
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional

import numpy as np

from .errors import NoActiveModel, UnknownVersion, ValidationError
from .features import FeatureSchema, TeamProfileBook
from .gbdt import Ensemble

STAGED = "staged"
ACTIVE = "active"
RETIRED = "retired"

_ACTIVE_POINTER = "ACTIVE"


@dataclass(frozen=True)
class ModelRegistryEntry:
    version: str
    path: str
    schema_version: str
    created_at: int
    status: str
    metrics: Dict[str, float]

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "schema_version": self.schema_version,
            "created_at": self.created_at,
            "status": self.status,
            "metrics": self.metrics,
        }


@dataclass
class ModelArtifact:
    """Everything needed to score a batch with one model version.

    ``reference_X`` is a (subsampled) snapshot of the encoded training
    matrix, kept as the drift reference window for this version.
    """

    version: str
    ensemble: Ensemble
    schema: FeatureSchema
    profiles: TeamProfileBook
    operating_threshold: float
    metrics: Dict[str, float]
    created_at: int
    reference_X: "np.ndarray" = None  # type: ignore[assignment]

    def to_dict(self) -> dict:
        ref = None
        if self.reference_X is not None:
            ref = [
                [None if np.isnan(v) else float(v) for v in row]
                for row in self.reference_X
            ]
        return {
            "format": "crqrisk-model-1",
            "version": self.version,
            "created_at": self.created_at,
            "ensemble": self.ensemble.to_dict(),
            "schema": self.schema.to_dict(),
            "profiles": self.profiles.to_dict(),
            "operating_threshold": self.operating_threshold,
            "metrics": self.metrics,
            "reference_X": ref,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelArtifact":
        ref = d.get("reference_X")
        reference_X = None
        if ref is not None:
            reference_X = np.array(
                [[np.nan if v is None else v for v in row] for row in ref]
            )
        return cls(
            version=d["version"],
            ensemble=Ensemble.from_dict(d["ensemble"]),
            schema=FeatureSchema.from_dict(d["schema"]),
            profiles=TeamProfileBook.from_dict(d["profiles"]),
            operating_threshold=float(d["operating_threshold"]),
            metrics={k: float(v) for k, v in d["metrics"].items()},
            created_at=int(d["created_at"]),
            reference_X=reference_X,
        )


class ModelRegistry:
    def __init__(self, root):
        self.root = str(root)
        os.makedirs(self.root, exist_ok=True)
        self._lock = threading.Lock()

    def _model_path(self, version: str) -> str:
        return os.path.join(self.root, f"model-{version}.json")

    def new_version(self) -> str:
        """Monotone timestamp-derived version string."""
        with self._lock:
            base = time.strftime("%Y%m%dT%H%M%S", time.gmtime())
            version = base
            suffix = 0
            while os.path.exists(self._model_path(version)):
                suffix += 1
                version = f"{base}-{suffix}"
            return version

    def stage(self, artifact: ModelArtifact) -> ModelRegistryEntry:
        path = self._model_path(artifact.version)
        if os.path.exists(path):
            raise ValidationError(f"version {artifact.version} already exists")
        self._atomic_write(path, json.dumps(artifact.to_dict()))
        return self._entry(artifact.version)

    def activate(self, version: str) -> ModelRegistryEntry:
        """Atomically repoint the active version."""
        if not os.path.exists(self._model_path(version)):
            raise UnknownVersion(f"no staged model with version {version}")
        with self._lock:
            self._atomic_write(os.path.join(self.root, _ACTIVE_POINTER), version)
        return self._entry(version)

    def _atomic_write(self, path: str, content: str) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(content)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)

    def active_version(self) -> Optional[str]:
        pointer = os.path.join(self.root, _ACTIVE_POINTER)
        if not os.path.exists(pointer):
            return None
        with open(pointer, "r", encoding="utf-8") as fh:
            return fh.read().strip() or None

    def load(self, version: str) -> ModelArtifact:
        path = self._model_path(version)
        if not os.path.exists(path):
            raise UnknownVersion(f"no model with version {version}")
        with open(path, "r", encoding="utf-8") as fh:
            return ModelArtifact.from_dict(json.load(fh))

    def load_active(self) -> ModelArtifact:
        version = self.active_version()
        if version is None:
            raise NoActiveModel("no active model version")
        return self.load(version)

    def _entry(self, version: str) -> ModelRegistryEntry:
        artifact = self.load(version)
        active = self.active_version()
        if version == active:
            status = ACTIVE
        elif active is not None and version < active:
            status = RETIRED  # superseded by a later activation
        else:
            status = STAGED
        return ModelRegistryEntry(
            version=version,
            path=self._model_path(version),
            schema_version=artifact.schema.version,
            created_at=artifact.created_at,
            status=status,
            metrics=artifact.metrics,
        )

    def entries(self) -> List[ModelRegistryEntry]:
        versions = sorted(
            f[len("model-"):-len(".json")]
            for f in os.listdir(self.root)
            if f.startswith("model-") and f.endswith(".json")
        )
        return [self._entry(v) for v in versions]
