"""Validation reports: flat lists of named pass/fail checks."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class CheckItem:
    name: str
    subject: str
    passed: bool
    detail: str = ""

    def __str__(self):
        mark = "PASS" if self.passed else "FAIL"
        tail = f" ({self.detail})" if self.detail else ""
        return f"[{mark}] {self.name} {self.subject}{tail}"


@dataclass
class ValidationReport:
    title: str = ""
    items: list[CheckItem] = field(default_factory=list)

    def add(self, name: str, subject: str, passed: bool, detail: str = ""):
        self.items.append(CheckItem(name, subject, bool(passed), detail))

    def merge(self, other: "ValidationReport"):
        self.items.extend(other.items)

    @property
    def ok(self) -> bool:
        return all(item.passed for item in self.items)

    def failures(self) -> list[CheckItem]:
        return [item for item in self.items if not item.passed]

    def summary(self) -> str:
        n_fail = len(self.failures())
        head = f"{self.title}: " if self.title else ""
        return f"{head}{len(self.items) - n_fail}/{len(self.items)} checks passed"

    def __str__(self):
        lines = [self.summary()]
        lines.extend(str(item) for item in self.items)
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "ok": self.ok,
            "checks": [
                {
                    "name": i.name,
                    "subject": i.subject,
                    "passed": i.passed,
                    "detail": i.detail,
                }
                for i in self.items
            ],
        }
