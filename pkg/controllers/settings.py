"""
Environment-level configuration and reproducibility fingerprints.
"""

import hashlib
import json
import os

from dotenv import load_dotenv
from pydantic import BaseModel

load_dotenv()

# ============== CONFIGURATION ==============
ENV_PREFIX = "LMP"
LOG_LEVEL = os.environ.get("LMP_LOG_LEVEL", "INFO")
DEFAULT_JOBS = int(os.environ.get("LMP_JOBS", "1"))
FINGERPRINT_LENGTH = 16


def load_config_file(path: str) -> None:
    """Load a dotenv-style config file into the environment (existing values win)."""
    load_dotenv(path, override=False)


def canonical_payload(*parts) -> str:
    """Sorted-key JSON of pydantic models / plain values, stable across runs."""
    payload = []
    for part in parts:
        if isinstance(part, BaseModel):
            payload.append({type(part).__name__: part.model_dump(mode="json")})
        else:
            payload.append(part)
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def stable_fingerprint(*parts) -> str:
    digest = hashlib.sha256(canonical_payload(*parts).encode("utf-8")).hexdigest()
    return digest[:FINGERPRINT_LENGTH]
