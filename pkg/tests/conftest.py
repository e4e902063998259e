import sys
from pathlib import Path

# make scripts/ importable so tests can reuse the frozen study settings
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))
