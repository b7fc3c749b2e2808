"""Acceptance outcomes collected during the run and printed in the terminal summary."""

from __future__ import annotations

RESULTS: list[str] = []


def record(number: int, title: str, passed: bool, detail: str) -> str:
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    RESULTS.append(line)
    print(line)
    return line
