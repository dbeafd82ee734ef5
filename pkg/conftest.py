import os
import sys

# flat module layout: make `import lifshitz` work from tests/
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
