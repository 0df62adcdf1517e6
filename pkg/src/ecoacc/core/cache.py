import hashlib
import json
import logging
import os
import shutil
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)


class ArtifactCache:
    """npz artifacts with a JSON sidecar, keyed by an md5 of their inputs."""

    def __init__(self, cache_dir: Optional[str] = None):
        default = os.environ.get("ECOACC_CACHE_DIR") or os.path.join(os.path.expanduser("~"), ".ecoacc_cache")
        self.cache_dir = cache_dir or default
        os.makedirs(self.cache_dir, exist_ok=True)

    @staticmethod
    def get_cache_key(kind: str, *parts: str) -> str:
        key_str = "_".join((kind,) + parts)
        return hashlib.md5(key_str.encode()).hexdigest()

    def get_cache_file_path(self, key: str) -> Path:
        return Path(self.cache_dir) / f"{key}.npz"

    def clear_cache(self) -> None:
        shutil.rmtree(self.cache_dir, ignore_errors=True)
        os.makedirs(self.cache_dir, exist_ok=True)

    def load(self, key: str) -> Optional[Tuple[Dict[str, np.ndarray], Dict[str, Any]]]:
        path = self.get_cache_file_path(key)
        if not path.exists():
            return None
        try:
            arrays, metadata = load_artifact(path)
        except (OSError, ValueError, json.JSONDecodeError) as e:
            logger.warning("Ignoring unreadable cache entry %s: %s", path.name, e)
            return None
        logger.debug("Cache hit %s", path.name)
        return arrays, metadata

    def save(self, key: str, arrays: Dict[str, np.ndarray], metadata: Dict[str, Any]) -> Path:
        path = self.get_cache_file_path(key)
        save_artifact(path, arrays, metadata)
        return path

    def entries(self) -> List[Path]:
        return sorted(Path(self.cache_dir).glob("*.npz"))


def sidecar_path(path: Path) -> Path:
    return Path(path).with_suffix(".json")


def save_artifact(path: Path, arrays: Dict[str, np.ndarray], metadata: Dict[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        np.savez_compressed(f, **arrays)
    with open(sidecar_path(path), "w", encoding="utf-8") as f:
        json.dump(metadata, f, indent=2, sort_keys=True)


def load_artifact(path: Path) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    path = Path(path)
    with np.load(path) as data:
        arrays = {name: data[name] for name in data.files}
    with open(sidecar_path(path), "r", encoding="utf-8") as f:
        metadata = json.load(f)
    return arrays, metadata
