"""
GPDeriv - Derivative Estimation with Plug-in Gaussian Processes
Command-line launcher
"""

import sys
import os

# Add src to path
sys.path.append(os.path.join(os.path.dirname(__file__), 'src'))

from src.cli import main


if __name__ == "__main__":
    sys.exit(main())
