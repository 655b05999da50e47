"""
支持 python -m edit_sim 方式运行
"""

import sys

from edit_sim.cli import main

if __name__ == "__main__":
    sys.exit(main())
