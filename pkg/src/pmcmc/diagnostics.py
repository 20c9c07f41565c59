"""Chain diagnostics: IACT by overlapping batch means and run summaries."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

__all__ = ["IactEstimate", "ZeroVariance", "iact_obm", "summarize_chain", "SummaryReport",
           "format_table", "DEFAULT_BANDWIDTH"]

#: per-model bandwidths used for the reported tables
DEFAULT_BANDWIDTH = {"sv": 500, "spline": 200, "binreg": 578}


class ZeroVariance(ValueError):
    """The chain is constant, so its IACT is undefined."""


@dataclass
class IactEstimate:
    iact: float
    batch_length: int
    n_samples: int
    mc_se_of_mean: float
    clamped: bool = False


def iact_obm(chain, batch_length: int) -> IactEstimate:
    """Integrated autocorrelation time by overlapping batch means.

    With ``n`` samples and batch length ``b`` the variance of the sample mean
    is estimated as

        n b / ((n - b) (n - b + 1)) * sum_j (Ybar_j - Ybar)^2 / n

    over all ``n - b + 1`` windows, and the IACT is ``n`` times that divided
    by the sample variance.
    """
    x = np.asarray(chain, dtype=float).ravel()
    n, b = x.size, int(batch_length)
    if b < 1 or n < 2 * b:
        raise ValueError(f"need n >= 2 * batch_length (n={n}, b={b})")
    xbar = x.mean()
    var = x.var(ddof=1)
    if not var > 0 or var <= 1e-28 * max(xbar * xbar, 1e-300):
        raise ZeroVariance("zero-variance chain")
    c = np.concatenate([[0.0], np.cumsum(x - xbar)])
    means = (c[b:] - c[:-b]) / b
    sigma2 = n * b / ((n - b) * (n - b + 1)) * float(means @ means)
    var_of_mean = sigma2 / n
    iact = sigma2 / var
    clamped = False
    if iact < 0:
        iact, clamped = 0.0, True
    return IactEstimate(iact, b, n, math.sqrt(max(var_of_mean, 0.0)), clamped)


@dataclass
class ParamSummary:
    name: str
    mean: float
    sd: float
    iact: float | None
    mc_se: float | None
    iact_doubled: float | None = None
    flags: list = field(default_factory=list)


@dataclass
class SummaryReport:
    label: str
    bandwidth: int
    n_used: int
    params: dict
    groups: dict
    acceptance: dict
    time_per_1000: float
    N: int | None
    counters: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"] = {k: asdict(v) for k, v in self.params.items()}
        return d

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _summarize_column(name, x, bandwidth):
    s = ParamSummary(name, float(np.mean(x)), float(np.std(x, ddof=1)) if x.size > 1 else 0.0, None, None)
    try:
        est = iact_obm(x, bandwidth)
    except ZeroVariance:
        s.flags.append("undefined: zero-variance chain")
        return s
    except ValueError as exc:
        s.flags.append(f"undefined: {exc}")
        return s
    s.iact, s.mc_se = est.iact, est.mc_se_of_mean
    if est.clamped:
        s.flags.append("negative IACT estimate clamped to 0")
    if x.size >= 4 * bandwidth:
        twice = iact_obm(x, 2 * bandwidth).iact
        s.iact_doubled = twice
        if s.iact > 0 and twice > 1.2 * s.iact:
            s.flags.append("IACT grows >20% when bandwidth doubles: likely underestimated")
    return s


def summarize_chain(record, bandwidth: int = 500, groups=None, label: str = "", N=None) -> SummaryReport:
    """Posterior means, SDs, IACTs and acceptance rates after warmup.

    ``groups`` names vector parameters whose element IACTs are reduced to
    min and max (``beta`` -> ``min IACT(beta_i)``, ``max IACT(beta_i)``);
    by default every vector parameter present in the record is grouped.
    """
    n_used = len(record) - record.warmup
    if n_used < 1:
        raise ValueError("record has no post-warmup draws")
    cols = list(record.columns) + sorted(record.derived)
    params = {}
    for c in cols:
        x = np.asarray(record.column(c), dtype=float)[record.warmup:]
        params[c] = _summarize_column(c, x, bandwidth)
    if groups is None:
        groups = sorted({c.split("[")[0] for c in record.columns if "[" in c})
    gsum = {}
    for g in groups:
        members = [params[c] for c in record.group(g) if c in params]
        vals = [m.iact for m in members if m.iact is not None]
        gsum[g] = {
            "min_iact": min(vals) if vals else None,
            "max_iact": max(vals) if vals else None,
            "n": len(members),
            "undefined": [m.name for m in members if m.iact is None],
        }
    counters = dict(getattr(record, "counters", {}) or {})
    return SummaryReport(label, int(bandwidth), n_used, params, gsum, record.acceptance_rates(),
                         float(record.time_per_1000), N, counters)


def _fmt(v, digits=2):
    if v is None:
        return "undef"
    if isinstance(v, str):
        return v
    return f"{v:.{digits}f}"


def table_rows(report: SummaryReport, scalars=None) -> list[tuple[str, str]]:
    """Rows in the standard table layout: IACTs, group min/max, time, N, acceptance."""
    rows = []
    grouped = {c for g in report.groups for c in report.params if c.startswith(g + "[")}
    names = scalars if scalars is not None else [c for c in report.params if c not in grouped]
    for c in names:
        p = report.params.get(c)
        rows.append((f"IACT({c})", _fmt(p.iact if p else None)))
    for g, s in report.groups.items():
        rows.append((f"min_i IACT({g}_i)", _fmt(s["min_iact"])))
        rows.append((f"max_i IACT({g}_i)", _fmt(s["max_iact"])))
    rows.append(("time/1000 iterations", _fmt(report.time_per_1000)))
    rows.append(("# particles", "--" if report.N is None else str(report.N)))
    rates = [v for k, v in report.acceptance.items() if v is not None and not k.startswith("gibbs")]
    rows.append(("acc. rate", " / ".join(f"{100 * r:.1f}%" for r in rates) if rates else "--"))
    return rows


def format_table(reports, scalars=None) -> str:
    """Aligned text table with one column per report."""
    cols = [dict(table_rows(r, scalars)) for r in reports]
    keys = []
    for r in reports:
        for k, _ in table_rows(r, scalars):
            if k not in keys:
                keys.append(k)
    head = [""] + [r.label or f"arm{k + 1}" for k, r in enumerate(reports)]
    body = [[k] + [c.get(k, "") for c in cols] for k in keys]
    widths = [max(len(row[j]) for row in [head] + body) for j in range(len(head))]
    line = lambda row: "  ".join(s.ljust(w) if j == 0 else s.rjust(w) for j, (s, w) in enumerate(zip(row, widths)))
    rule = "-" * (sum(widths) + 2 * (len(widths) - 1))
    return "\n".join([line(head), rule] + [line(r) for r in body]) + "\n"
