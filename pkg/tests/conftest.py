import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).resolve().parent
REPO_ROOT = TESTS_DIR.parent

# oracles.py lives beside the tests; the model generator ships in scripts/
for p in (TESTS_DIR, REPO_ROOT / "scripts"):
    if str(p) not in sys.path:
        sys.path.insert(0, str(p))


@pytest.fixture(scope="session")
def tiny_model_path(tmp_path_factory) -> Path:
    """Random-weight 64px 2-class model in the documented layout."""
    from make_tiny_model import build_random_model

    path = tmp_path_factory.mktemp("models") / "tiny64.onnx"
    path.write_bytes(build_random_model(input_size=64, num_classes=2, reg_max=16, seed=0))
    return path


# canvas-pixel boxes the fixed model always emits, with their class ids
FIXED_MODEL_BOXES = [(8.0, 12.0, 40.0, 48.0, 0), (30.0, 20.0, 60.0, 56.0, 1)]


@pytest.fixture(scope="session")
def fixed_model_path(tmp_path_factory) -> Path:
    """Constant-output 64px 2-class model emitting FIXED_MODEL_BOXES."""
    from make_tiny_model import build_fixed_model

    path = tmp_path_factory.mktemp("models") / "fixed64.onnx"
    path.write_bytes(build_fixed_model(64, 2, 16, FIXED_MODEL_BOXES))
    return path
