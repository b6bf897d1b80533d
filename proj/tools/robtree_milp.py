#!/usr/bin/env python3
"""External backend for `robtree train --backend external`: robtree_milp.py MODEL.json SOLUTION.json"""

import importlib.util
import os
import sys

_here = os.path.dirname(os.path.abspath(__file__))
_spec = importlib.util.spec_from_file_location("robtree_milp_impl",
                                               os.path.join(_here, "..", "python", "robtree", "milp.py"))
_impl = importlib.util.module_from_spec(_spec)
_spec.loader.exec_module(_impl)

if __name__ == "__main__":
    sys.exit(_impl.main(sys.argv))
