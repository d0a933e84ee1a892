#!/usr/bin/env python3
"""
synthfid - Gerador de fidelidades sintéticas com correlação controlada.

Uso: python synthfid.py <fit|sample|bounds|bench|validate> ...
"""

import sys

from src.cli import main


if __name__ == "__main__":
    sys.exit(main())
