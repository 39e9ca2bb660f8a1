#!/usr/bin/env python3
"""Diff two run reports key path by key path, ignoring wall time.

Usage: compare_reports.py OLD.json NEW.json

Exits 0 when the reports agree, 1 when they differ.
"""
import json
import sys
from pathlib import Path

from kernel_series.utilities import diff_reports


def main(argv):
    if len(argv) != 2:
        print(__doc__.strip(), file=sys.stderr)
        return 2
    old_f, new_f = (Path(a) for a in argv)
    old = json.loads(old_f.read_text(encoding='utf-8'))
    new = json.loads(new_f.read_text(encoding='utf-8'))

    out = diff_reports(old, new)
    print(json.dumps(out, indent=2, ensure_ascii=False))
    return 0 if not any(out.values()) else 1


if __name__ == '__main__':
    sys.exit(main(sys.argv[1:]))
