#!/usr/bin/env python3
"""Regenerate the bundled revenue-query document at programs/q6.json."""

import pathlib
import sys

from cvm.q6 import q6_document_text

OUT = pathlib.Path(__file__).resolve().parent.parent / "programs" / "q6.json"


def main() -> int:
    OUT.parent.mkdir(exist_ok=True)
    OUT.write_text(q6_document_text())
    print(f"wrote {OUT}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
