"""Serialization of verdicts and oracle answers.

Reports are pure functions of their inputs with a documented field order,
so identical inputs produce identical bytes.  Wall-clock timings are part
of the verdict object; strip them before comparing reports across runs.
"""

from __future__ import annotations

import json

from .buchi import Verdict
from .oracle import OracleAnswer


class ReportError(Exception):
    pass


def verdict_to_dict(verdict: Verdict) -> dict:
    return {
        "verdict": verdict.answer,
        "per_config": [
            {"config": cfg.pretty(), "atom_index": witness}
            for cfg, witness in verdict.per_config
        ],
        "good_dclics": [t.pretty() for t in sorted(verdict.good)],
        "sizes": verdict.sizes,
        "timings": verdict.timings,
    }


def oracle_to_dict(answer: OracleAnswer) -> dict:
    out = {"verdict": answer.verdict}
    if answer.reason is not None:
        out["reason"] = answer.reason
    out["witnesses"] = answer.witnesses
    return out


def _render_text(data: dict) -> str:
    lines = [f"verdict: {data['verdict']}"]
    if "reason" in data:
        lines.append(f"reason: {data['reason']}")
    for entry in data.get("per_config", ()):
        witness = entry["atom_index"]
        shown = "none accepting" if witness is None else f"atom #{witness}"
        lines.append(f"  {entry['config']}  ->  {shown}")
    good = data.get("good_dclics")
    if good is not None:
        lines.append(f"good spawn targets ({len(good)}):")
        lines.extend(f"  {t}" for t in good)
    for label, lasso in data.get("witnesses", {}).items():
        lines.append(f"witness for {label}:")
        for part in ("prefix", "cycle"):
            for s in lasso.get(part, ()):
                lines.append(f"  [{part}] {s}")
    sizes = data.get("sizes")
    if sizes:
        lines.append("sizes:")
        for name, entry in sizes.items():
            shown = ", ".join(f"{k}={v}" for k, v in entry.items())
            lines.append(f"  {name}: {shown}")
    return "\n".join(lines) + "\n"


def emit_report(result, fmt: str = "json") -> bytes:
    """Render a Verdict or OracleAnswer; byte-identical for equal inputs."""
    if isinstance(result, Verdict):
        data = verdict_to_dict(result)
    elif isinstance(result, OracleAnswer):
        data = oracle_to_dict(result)
    elif isinstance(result, dict):
        data = result
    else:
        raise ReportError(f"cannot report a {type(result).__name__}")
    if fmt == "json":
        return (json.dumps(data, indent=2, sort_keys=False) + "\n").encode()
    if fmt == "text":
        return _render_text(data).encode()
    raise ReportError(f"unsupported format {fmt!r}")
