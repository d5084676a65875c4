"""Regenerate the shared wire-protocol fixtures.

Run from the repository root with the service package installed:

    python3 protocol_fixtures/regenerate.py

Requests are synthetic images drawn with numpy (no fonts), so the bytes
are stable. Responses are captured from the service's deterministic
classical backend and frozen; the service conformance suite replays the
requests and requires byte-identical response payloads, while the
primary client suite parses the frozen responses expecting zero protocol
errors.
"""

import base64
import io
import json
from pathlib import Path

import numpy as np
from PIL import Image

HERE = Path(__file__).parent


def png_b64(arr: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def probe_image() -> np.ndarray:
    """Black square on white: the segmentation probe."""
    img = np.full((80, 80, 3), 255, dtype=np.uint8)
    img[20:60, 20:60] = 0
    return img


def glyph_like_image() -> np.ndarray:
    """Two dark blobs plus a detached dot above the second (dot merges
    with its stem in detection)."""
    img = np.full((60, 100, 3), 255, dtype=np.uint8)
    img[18:50, 10:34] = 40  # first blob
    img[26:50, 48:60] = 40  # second blob stem
    img[14:20, 50:57] = 40  # its dot
    return img


def build_requests() -> dict[str, dict]:
    return {
        "segment": {
            "image_b64": png_b64(probe_image()),
            "box": [15, 15, 65, 65],
            "pos_points": [[40, 40]],
            "neg_points": [[17, 17]],
        },
        "detect_chars": {"image_b64": png_b64(glyph_like_image())},
        "recognize": {"image_b64": png_b64(glyph_like_image())},
    }


def main() -> None:
    from fastapi.testclient import TestClient
    from textseg_service.app import create_app

    client = TestClient(create_app())
    for name, request in build_requests().items():
        response = client.post(f"/{name}", json=request)
        response.raise_for_status()
        (HERE / f"{name}_request.json").write_text(json.dumps(request, indent=1))
        (HERE / f"{name}_response.json").write_text(json.dumps(response.json(), indent=1))
        print(f"wrote {name} fixture pair")


if __name__ == "__main__":
    main()
