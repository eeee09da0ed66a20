# SPDX-License-Identifier: MIT-0

__version__ = "0.1.0"
