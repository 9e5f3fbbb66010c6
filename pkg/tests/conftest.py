import sys
from pathlib import Path

# make sibling test modules importable (shared oracles and stubs)
sys.path.insert(0, str(Path(__file__).parent))
