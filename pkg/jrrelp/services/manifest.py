"""Run manifests: record every artifact a command writes, verify on load."""

import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional

from jrrelp.errors import ArtifactError
from jrrelp.schemas.reports import BlobRef, RunManifest
from jrrelp.storage.artifact_store import ArtifactStore, compute_file_sha256

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def _now() -> datetime:
    return datetime.now(timezone.utc)


class RunRecorder:
    """Writes artifacts through a store and collects their references."""

    def __init__(
        self,
        store: ArtifactStore,
        command: str,
        seed: Optional[int] = None,
        config_hash: Optional[str] = None,
        vocab_hash: Optional[str] = None,
    ):
        self.store = store
        self.manifest = RunManifest(
            command=command,
            seed=seed,
            config_hash=config_hash,
            vocab_hash=vocab_hash,
            created_at=_now(),
        )

    def add(self, name: str, ref: BlobRef) -> BlobRef:
        self.manifest.artifacts[name] = ref
        return ref

    def write_json(self, name: str, obj: Any) -> BlobRef:
        return self.add(name, self.store.upload_json(name, obj))

    def write_blob(self, name: str, data: bytes) -> BlobRef:
        return self.add(name, self.store.upload_blob(name, data))

    def write_text(self, name: str, text: str) -> BlobRef:
        return self.add(name, self.store.upload_text(name, text))

    def record_file(self, name: str) -> BlobRef:
        """Reference a file some other writer already placed under the store root."""
        path = self.store.path(name)
        if not path.exists():
            raise ArtifactError(f"Artifact was not written: {name}", path=str(path))
        ref = BlobRef(uri=name, sha256=compute_file_sha256(path), size_bytes=path.stat().st_size)
        return self.add(name, ref)

    def record_input(self, name: str, path: Path) -> BlobRef:
        """Reference a file the command read, by absolute path and content hash."""
        path = Path(path)
        if not path.exists():
            raise ArtifactError(f"Input does not exist: {path}", path=str(path))
        ref = BlobRef(uri=str(path.resolve()), sha256=compute_file_sha256(path), size_bytes=path.stat().st_size)
        self.manifest.inputs[name] = ref
        return ref

    def finish(self) -> RunManifest:
        """Stamp completion and write the manifest next to the artifacts."""
        self.manifest.completed_at = _now()
        self.store.upload_json(MANIFEST_NAME, self.manifest.model_dump(mode="json"))
        logger.info(
            f"Run '{self.manifest.command}' complete: {len(self.manifest.artifacts)} artifacts "
            f"in {self.store.root}"
        )
        return self.manifest


def load_manifest(store: ArtifactStore) -> RunManifest:
    return RunManifest.model_validate(store.download_json(MANIFEST_NAME))


def verify_manifest(store: ArtifactStore, manifest: Optional[RunManifest] = None) -> RunManifest:
    """
    Recompute the hash of every listed artifact.

    Raises:
        ArtifactError: an artifact is missing or its bytes changed
    """
    manifest = manifest or load_manifest(store)
    for name, ref in sorted(manifest.artifacts.items()):
        if not store.exists(ref.uri):
            raise ArtifactError(f"Artifact listed in manifest is missing: {name}", artifact=name)
        if not store.verify(ref):
            raise ArtifactError(f"Hash mismatch for artifact: {name}", artifact=name, expected=ref.sha256)
    logger.debug(f"Verified {len(manifest.artifacts)} artifacts in {store.root}")
    return manifest
