"""Storage package for run artifacts."""

from .artifact_store import ArtifactStore, compute_file_sha256

__all__ = [
    "ArtifactStore",
    "compute_file_sha256",
]
