"""Service configuration."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8077
    device: str = "cpu"
    max_request_pixels: int = 16_000_000
    # Optional neural checkpoints per role. When a path is configured it
    # must exist at startup; roles without a checkpoint run the built-in
    # deterministic classical backend.
    checkpoints: dict[str, Path] = field(default_factory=dict)

    def validate(self) -> None:
        if self.max_request_pixels <= 0:
            raise ValueError("max_request_pixels must be positive")
        for role, path in self.checkpoints.items():
            if not Path(path).exists():
                raise FileNotFoundError(f"{role} checkpoint missing: {path}")

    def model_identifiers(self) -> dict[str, str]:
        return {
            role: str(self.checkpoints.get(role, "classical-v1"))
            for role in ("segmenter", "detector", "recognizer")
        }
