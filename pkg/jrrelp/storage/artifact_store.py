"""Local artifact store rooted at a run's output directory."""

import json
import logging
from pathlib import Path
from typing import Any

from jrrelp.errors import ArtifactError
from jrrelp.schemas.reports import BlobRef
from jrrelp.services.hash_chain import compute_sha256

logger = logging.getLogger(__name__)


def compute_file_sha256(path: Path) -> str:
    """SHA-256 of a file's bytes."""
    try:
        return compute_sha256(Path(path).read_bytes())
    except OSError as e:
        raise ArtifactError(f"Cannot read artifact: {path}", path=str(path)) from e


def dump_json_bytes(obj: Any) -> bytes:
    """Byte-stable JSON: sorted keys, 2-space indent, UTF-8, trailing newline."""
    text = json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False)
    return (text + "\n").encode("utf-8")


class ArtifactStore:
    """Writes and reads artifacts; nothing is written outside ``root``."""

    def __init__(self, root: Path):
        self.root = Path(root)

    def path(self, object_name: str) -> Path:
        target = (self.root / object_name).resolve()
        if self.root.resolve() not in target.parents and target != self.root.resolve():
            raise ArtifactError(f"Artifact path escapes output directory: {object_name}")
        return target

    def upload_blob(self, object_name: str, data: bytes) -> BlobRef:
        """
        Write a blob under the store root.

        Args:
            object_name: Path relative to the root
            data: Binary data to write

        Returns:
            BlobRef with relative uri, sha256 and size
        """
        target = self.path(object_name)
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(data)
        except OSError as e:
            logger.error(f"Error writing artifact {target}: {e}")
            raise ArtifactError(f"Cannot write artifact: {object_name}", path=str(target)) from e

        sha256 = compute_sha256(data)
        logger.info(f"Wrote artifact: {object_name} (SHA-256: {sha256[:8]}..., {len(data)} bytes)")
        return BlobRef(uri=object_name, sha256=sha256, size_bytes=len(data))

    def upload_json(self, object_name: str, obj: Any) -> BlobRef:
        return self.upload_blob(object_name, dump_json_bytes(obj))

    def upload_text(self, object_name: str, text: str) -> BlobRef:
        return self.upload_blob(object_name, text.encode("utf-8"))

    def download_blob(self, object_name: str) -> bytes:
        target = self.path(object_name)
        try:
            return target.read_bytes()
        except OSError as e:
            raise ArtifactError(f"Artifact not found: {object_name}", path=str(target)) from e

    def download_json(self, object_name: str) -> Any:
        try:
            return json.loads(self.download_blob(object_name).decode("utf-8"))
        except json.JSONDecodeError as e:
            raise ArtifactError(f"Artifact is not valid JSON: {object_name}") from e

    def exists(self, object_name: str) -> bool:
        return self.path(object_name).exists()

    def verify(self, ref: BlobRef) -> bool:
        """True iff the stored bytes still hash to ``ref.sha256``."""
        return compute_file_sha256(self.path(ref.uri)) == ref.sha256
