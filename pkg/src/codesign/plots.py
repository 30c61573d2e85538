"""Deterministic SVG renderings of a result bundle.

Hand-rolled SVG (no plotting dependency) so regenerating from the same
bundle is byte-identical: fixed ordering, fixed float formatting, no
timestamps or random ids.
"""

from __future__ import annotations

import json
from pathlib import Path

from codesign.harness import CompareError, load_results

_FONT = 'font-family="monospace" font-size="12"'


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _svg(width, height, body) -> str:
    return ('<svg xmlns="http://www.w3.org/2000/svg" '
            f'width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n'
            f'<rect width="{width}" height="{height}" fill="white"/>\n'
            + body + "</svg>\n")


def bar_chart(labels, values, title, width=640, height=360) -> str:
    margin, base = 60, height - 60
    vmax = max(max(values), 1e-300)
    bw = (width - 2 * margin) / max(len(values), 1)
    body = [f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" {_FONT}>{title}</text>']
    for i, (label, v) in enumerate(zip(labels, values)):
        h = (base - margin) * (v / vmax)
        x = margin + i * bw
        body.append(f'<rect x="{x + bw * 0.1:.2f}" y="{base - h:.2f}" '
                    f'width="{bw * 0.8:.2f}" height="{h:.2f}" fill="#4878a8"/>')
        body.append(f'<text x="{x + bw / 2:.2f}" y="{base + 16}" '
                    f'text-anchor="middle" {_FONT}>{label}</text>')
        body.append(f'<text x="{x + bw / 2:.2f}" y="{base - h - 6:.2f}" '
                    f'text-anchor="middle" {_FONT}>{_fmt(v)}</text>')
    body.append(f'<line x1="{margin}" y1="{base}" x2="{width - margin}" y2="{base}" '
                'stroke="black"/>')
    return _svg(width, height, "\n".join(body) + "\n")


def line_chart(xs, ys, title, xlabel, width=640, height=360) -> str:
    margin, base = 60, height - 60
    vmax = max(max(ys), 1e-300)
    span = max(max(xs) - min(xs), 1)
    body = [f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" {_FONT}>{title}</text>']
    pts = []
    for x, y in zip(xs, ys):
        px = margin + (width - 2 * margin) * (x - min(xs)) / span
        py = base - (base - margin) * (y / vmax)
        pts.append(f"{px:.2f},{py:.2f}")
        body.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="4" fill="#a84848"/>')
        body.append(f'<text x="{px:.2f}" y="{py - 10:.2f}" text-anchor="middle" '
                    f'{_FONT}>{_fmt(y)}</text>')
        body.append(f'<text x="{px:.2f}" y="{base + 16}" text-anchor="middle" '
                    f'{_FONT}>{x}</text>')
    body.append(f'<polyline points="{" ".join(pts)}" fill="none" stroke="#a84848"/>')
    body.append(f'<line x1="{margin}" y1="{base}" x2="{width - margin}" y2="{base}" '
                'stroke="black"/>')
    body.append(f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" '
                f'{_FONT}>{xlabel}</text>')
    return _svg(width, height, "\n".join(body) + "\n")


def emit_plots(out_dir) -> dict:
    """Render the SVGs a bundle supports; returns the written/skipped manifest."""
    out = Path(out_dir)
    results = load_results(out)
    manifest = {"written": [], "skipped": []}

    def write(name, content):
        (out / name).write_text(content)
        manifest["written"].append(name)

    record = results.get("solution") or results.get("final") \
        or results.get("best_solution")
    if record is not None:
        b = record["breakdown"]
        labels = ["tracking", "deformation", "regularization", "modular"]
        write("costs.svg", bar_chart(labels, [b[k] for k in labels],
                                     f'cost breakdown: {results["case"]}'))
    else:
        manifest["skipped"].append(("costs.svg", "no solution section"))

    pc = results.get("per_prismatic_count")
    if pc:
        xs = sorted(int(k) for k in pc)
        ys = [pc[str(k)]["design_cost"] for k in xs]
        write("prismatic_count.svg",
              line_chart(xs, ys, "minimum deformation cost vs prismatic joints",
                         "number of prismatic joints"))
    elif results["case"] == "structures":
        manifest["skipped"].append(("prismatic_count.svg", "no per-count data"))

    if results.get("structures"):
        feasible = [r for r in results["structures"] if r["feasible"]]
        feasible.sort(key=lambda r: (r["design_cost"], r["structure"]))
        top = feasible[:16]
        if top:
            write("structures.svg",
                  bar_chart([r["structure"] for r in top],
                            [r["design_cost"] for r in top],
                            "deformation cost by structure (best 16)",
                            width=max(640, 40 * len(top) + 120)))
        else:
            manifest["skipped"].append(("structures.svg", "no feasible structures"))

    if "continuous" in results and "final" in results:
        write("modular.svg", bar_chart(
            ["continuous", "rounded+replaced"],
            [results["continuous"]["breakdown"]["deformation"],
             results["final"]["breakdown"]["deformation"]],
            "modular pipeline deformation cost"))

    (out / "plots_manifest.json").write_text(
        json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest
