from __future__ import annotations

import sys
from pathlib import Path

# make the tableau oracle importable as a plain module
sys.path.insert(0, str(Path(__file__).parent))
