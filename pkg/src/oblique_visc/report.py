"""Structured audit reports shared by the solver and estimate-checking modules."""

from __future__ import annotations

from dataclasses import dataclass, field


def format_value(v) -> str:
    """Render a report value deterministically (repr-precision floats)."""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


@dataclass
class AuditReport:
    """Outcome of one estimate check, with every measured quantity attached.

    `passed` is None for purely descriptive audits (nothing to assert),
    otherwise the verdict of the check. `flags` carries qualitative notes
    such as 'inapplicable' or 'unresolved'.
    """

    kind: str
    values: dict = field(default_factory=dict)
    passed: bool | None = None
    flags: list = field(default_factory=list)

    def lines(self) -> list[str]:
        out = [f"kind={self.kind}"]
        out += [f"{k}={format_value(v)}" for k, v in self.values.items()]
        if self.passed is not None:
            out.append(f"passed={int(self.passed)}")
        if self.flags:
            out.append("flags=" + ",".join(self.flags))
        return out

    def __str__(self) -> str:
        return "\n".join(self.lines())

    def __getitem__(self, key: str):
        return self.values[key]
