#!/usr/bin/env python3
"""Run the full workbench pipeline with the committed defaults.

Equivalent to `quadfault --config configs/default.cfg pipeline`, kept as a
script entry point for experiment logging.
"""

import sys
from pathlib import Path

from quadfault.cli import main

if __name__ == "__main__":
    root = Path(__file__).resolve().parent.parent
    args = sys.argv[1:]
    if "--config" not in args:
        args = ["--config", str(root / "configs" / "default.cfg")] + args
    sys.exit(main(args + ["pipeline"]))
