"""Billiards with flat points: y = +-(|x|^beta + 1) closed by circular arcs."""

from __future__ import annotations

import subprocess
from importlib import metadata
from pathlib import Path

try:
    __version__ = metadata.version("artifact")
except metadata.PackageNotFoundError:  # pragma: no cover
    __version__ = "0.0.0"


def version_string() -> str:
    """Package version plus a git-describe suffix when run from a checkout."""
    root = Path(__file__).resolve().parents[2]
    try:
        out = subprocess.run(
            ["git", "-C", str(root), "describe", "--always", "--dirty", "--tags"],
            capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__
