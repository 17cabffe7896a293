#!/usr/bin/env python3
"""Regenerate the bundled sample data under data/fixture/ (seeded)."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from threatshare.fixtures import write_fixture


def main():
    dest = Path(__file__).resolve().parents[1] / "data" / "fixture"
    paths = write_fixture(dest)
    for kind, value in paths.items():
        print(f"{kind}: {value}")


if __name__ == "__main__":
    main()
