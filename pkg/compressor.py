#!/usr/bin/env python3
import logging
import sys
from pathlib import Path

from kernel_series.cli import main

# Ensure library logging goes to stderr so stdout stays clean for JSON
logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(asctime)s - %(levelname)s: %(message)s")


if __name__ == '__main__':
    sys.exit(main(sys.argv[1:], config_path=Path(__file__).parent / 'config.json'))
