"""Collects one pass/fail line per acceptance criterion for the session summary."""

LINES = []


def record(name, passed, detail=""):
    LINES.append(f"[{'PASS' if passed else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))
    return passed
