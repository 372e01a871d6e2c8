"""
ISALT – Report
Plain-text tables for the estimator, TVD, model-selection and study outputs.
"""

import math


class Report:
    """Collects run tables and renders them as one text document."""

    def __init__(self, system_name: str):
        self.system_name = system_name
        self._sections: list[tuple[str, list[str]]] = []

    # ── sections ────────────────────────────────────────

    def add_estimators(self, rows: list[dict]):
        cols = ["scheme", "coordinate", "delta", "c0", "c1", "c2", "sigma_eta"]
        self._sections.append(("Estimators", _table(cols, rows)))

    def add_tvd(self, rows: list[dict]):
        if not rows:
            return
        tvd_cols = [k for k in rows[0] if k.startswith("tvd_")]
        body = [dict(r, blew_up="yes" if r["blew_up"] == "1" else "") for r in rows]
        self._sections.append(("TVD against the reference", _table(["scheme", "delta", "blew_up"] + tvd_cols, body)))

    def add_selection(self, summary: dict):
        lines = []
        for coord, best in summary.get("best", {}).items():
            if best is None:
                lines.append(f"{coord}: every scheme blew up")
            else:
                lines.append(f"{coord}: {best['scheme']}  (δ={_num(best['delta'])}, TVD={_num(best['tvd'])})")
        if summary.get("blown_up"):
            lines.append("blown up: " + ", ".join(summary["blown_up"]))
        self._sections.append(("Model selection", lines))

    def add_study(self, name: str, summary: dict):
        lines = []
        for key in ("slope", "slopes", "plateau_ratio", "source", "delta"):
            if key in summary:
                lines.append(f"{key}: {_num(summary[key])}")
        if not lines:
            for label, entry in summary.items():
                if isinstance(entry, dict):
                    lines.append(f"{label}: first blow-up gap {entry.get('first_blowup_gap')}, "
                                 f"stable through {entry.get('stable_through')}")
        self._sections.append((f"Study {name}", lines))

    # ── rendering ───────────────────────────────────────

    def render(self) -> str:
        out = [f"ISALT report – {self.system_name}", "=" * 60]
        if not self._sections:
            out.append("(no artifacts yet)")
        for title, lines in self._sections:
            out += ["", f"── {title} " + "─" * max(0, 56 - len(title)), *lines]
        return "\n".join(out) + "\n"


def _num(v) -> str:
    if isinstance(v, list):
        return "[" + ", ".join(_num(x) for x in v) + "]"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.4g}"
    try:
        return f"{float(v):.4g}" if v not in ("", None) else ""
    except (TypeError, ValueError):
        return str(v)


def _table(cols: list[str], rows: list[dict]) -> list[str]:
    cells = [[_num(r.get(c, "")) if c not in ("scheme", "blew_up") else str(r.get(c, "")) for c in cols]
             for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(cols)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    return [fmt.format(*cols), fmt.format(*["-" * w for w in widths])] + [fmt.format(*row) for row in cells]
