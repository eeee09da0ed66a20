#!/usr/bin/env python3
# SPDX-License-Identifier: MIT-0

import sys

from cbfe_aif.cli import main

if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
