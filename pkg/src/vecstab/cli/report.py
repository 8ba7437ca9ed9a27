"""Report rows and their CSV serialisation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import datetime, timezone

STATISTICS = frozenset(
    {
        "relvar",
        "ratio_median",
        "ratio_p10",
        "recall_at_10",
        "c",
        "nondegeneracy_rate",
        "cov_sum",
        "rho",
        "gamma",
        "pi_hat",
        "tau",
        "X",
        "Y",
        "gap",
        "relvar_bound",
        "p_mismatch",
    }
)

HEADER = ("config_label", "dimension", "statistic", "value", "sample_size")


class InvariantError(RuntimeError):
    """An internal consistency check failed."""


@dataclass(frozen=True)
class ReportRow:
    config_label: str
    dimension: int
    statistic: str
    value: float
    sample_size: int

    def __post_init__(self):
        if self.statistic not in STATISTICS:
            raise InvariantError(f"statistic {self.statistic!r} is not in the published vocabulary")
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "dimension", int(self.dimension))
        object.__setattr__(self, "sample_size", int(self.sample_size))


def format_value(v: float) -> str:
    """Shortest round-trip decimal; ``inf``/``-inf``/``nan`` spelled out."""
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def to_csv(rows, *, deterministic: bool = True, now: datetime | None = None) -> str:
    """Serialise rows; outside deterministic mode a ``#`` timestamp line comes first."""
    buf = io.StringIO()
    if not deterministic:
        stamp = (now or datetime.now(timezone.utc)).isoformat(timespec="seconds")
        buf.write(f"# generated {stamp}\n")
    w = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(HEADER)
    for r in rows:
        w.writerow((r.config_label, r.dimension, r.statistic, format_value(r.value), r.sample_size))
    return buf.getvalue()


def read_csv(text: str) -> list[ReportRow]:
    """Parse :func:`to_csv` output (a leading ``#`` line is skipped)."""
    lines = text.split("\n")
    if lines and lines[0].startswith("#"):
        lines = lines[1:]
    reader = csv.reader(io.StringIO("\n".join(lines)))
    head = next(reader, None)
    if tuple(head or ()) != HEADER:
        raise InvariantError(f"unexpected CSV header {head}")
    return [ReportRow(a, int(b), c, float(d), int(e)) for a, b, c, d, e in reader]
