"""Random walks in random and cooling random environments."""

import warnings

# numba probes an old system TBB, finds it unusable and falls back on its own
warnings.filterwarnings("ignore", message="The TBB threading layer")

__version__ = "0.1.0"
