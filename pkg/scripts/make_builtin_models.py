"""Regenerate the built-in model files from jetmbs.catalog."""
from pathlib import Path

from jetmbs.catalog import BUILDERS
from jetmbs.models import dumps

OUT = Path(__file__).resolve().parents[1] / "src" / "jetmbs" / "models"

if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    for name, build in BUILDERS.items():
        path = OUT / f"{name}.json"
        path.write_text(dumps(build()), encoding="utf-8")
        print(f"wrote {path}")
