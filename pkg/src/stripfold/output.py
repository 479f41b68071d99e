"""Output files of a run and their readers.

All tables are comma-separated text with a header line; floats carry 17
significant digits so files round-trip exactly. Events are JSON lines.
Files never contain timestamps, so identical runs produce identical bytes;
times live only in the run manifest.
"""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
from pathlib import Path

import numpy as np

SAMPLE_COLUMNS = ("lambda", "mu_min", "reaction_x", "reaction_z", "deflection", "regime", "time")
SNAPSHOT_COLUMNS = ("sample", "lambda", "regime", "time", "node", "x", "z", "ux", "uz")
SWEEP_COLUMNS = ("eta_b", "z", "lambda_c", "status")
SUMMARY_COLUMNS = ("name", "planned_touch", "achieved_touch", "error", "critical_events", "completed", "message")


def _f(v):
    v = float(v)
    if math.isnan(v):
        return "nan"
    return format(v, ".17g")


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    return v


# --------------------------------------------------------------------------
# equilibrium records


def write_samples(record, target):
    """``lambda,mu_min,reaction_x,reaction_z,deflection,regime,time`` rows."""
    with open(target, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SAMPLE_COLUMNS)
        for s in record.samples:
            rx, rz = (s.reaction[0], s.reaction[1]) if len(s.reaction) >= 2 else (math.nan, math.nan)
            w.writerow([_f(s.lam), _f(s.mu_min), _f(rx), _f(rz), _f(s.deflection), s.regime, _f(s.time)])


def read_samples(source):
    """Samples table as a dict of columns (floats, except ``regime``)."""
    with open(source, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and tuple(rows[0].keys()) != SAMPLE_COLUMNS:
        raise ValueError(f"unexpected samples header {tuple(rows[0].keys())}")
    out = {c: [] for c in SAMPLE_COLUMNS}
    for r in rows:
        for c in SAMPLE_COLUMNS:
            out[c].append(r[c] if c == "regime" else float(r[c]))
    return {c: (v if c == "regime" else np.array(v, dtype=float)) for c, v in out.items()}


def snapshot_indices(record, stride):
    """Samples kept as snapshots: every ``stride``-th plus the first, the last
    and every sample next to a regime change."""
    n = len(record.samples)
    keep = set(range(0, n, max(int(stride), 1)))
    keep.update({0, n - 1})
    for i in range(1, n):
        if record.samples[i].regime != record.samples[i - 1].regime:
            keep.update({i - 1, i})
    return sorted(k for k in keep if 0 <= k < n)


def write_snapshots(record, mesh, target, stride=10):
    """Full nodal states of selected samples, one node per line."""
    X = mesh.nodes
    with open(target, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SNAPSHOT_COLUMNS)
        for k in snapshot_indices(record, stride):
            s = record.samples[k]
            u = s.u.reshape(-1, 2)
            for n in range(len(X)):
                w.writerow([k, _f(s.lam), s.regime, _f(s.time), n, _f(X[n, 0]), _f(X[n, 1]), _f(u[n, 0]), _f(u[n, 1])])


def read_snapshots(source):
    """Snapshots as ``{sample: dict(lam, regime, time, X, u)}``."""
    out = {}
    with open(source, newline="") as fh:
        r = csv.DictReader(fh)
        if tuple(r.fieldnames or ()) != SNAPSHOT_COLUMNS:
            raise ValueError(f"unexpected snapshot header {r.fieldnames}")
        for row in r:
            k = int(row["sample"])
            d = out.setdefault(k, {"lam": float(row["lambda"]), "regime": row["regime"], "time": float(row["time"]), "X": [], "u": []})
            d["X"].append((float(row["x"]), float(row["z"])))
            d["u"].append((float(row["ux"]), float(row["uz"])))
    for d in out.values():
        d["X"] = np.array(d["X"])
        d["u"] = np.array(d["u"])
    return out


def write_events(record, target):
    """One JSON object per line: ``{"type", "lambda", "data"}``."""
    with open(target, "w") as fh:
        for e in record.events:
            fh.write(json.dumps({"type": e.kind, "lambda": _jsonable(e.lam), "data": _jsonable(e.data)}, sort_keys=True))
            fh.write("\n")


def read_events(source):
    with open(source) as fh:
        return [json.loads(line) for line in fh if line.strip()]


# --------------------------------------------------------------------------
# sweeps and assessments


def write_sweep(rows, target):
    with open(target, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([_f(r.eta_b), _f(r.z), _f(r.lambda_c), r.status])


def read_sweep(source):
    with open(source, newline="") as fh:
        r = csv.DictReader(fh)
        if tuple(r.fieldnames or ()) != SWEEP_COLUMNS:
            raise ValueError(f"unexpected sweep header {r.fieldnames}")
        return [
            {"eta_b": float(x["eta_b"]), "z": float(x["z"]), "lambda_c": float(x["lambda_c"]), "status": x["status"]}
            for x in r
        ]


def write_report(report, target):
    with open(target, "w") as fh:
        json.dump(_jsonable(report.as_dict()), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_report(source):
    with open(source) as fh:
        return json.load(fh)


def write_summary(reports, target):
    with open(target, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in reports:
            w.writerow([r.name, _f(r.planned), _f(r.achieved), _f(r.error), r.critical_events, int(r.completed), r.message])


def read_summary(source):
    with open(source, newline="") as fh:
        r = csv.DictReader(fh)
        if tuple(r.fieldnames or ()) != SUMMARY_COLUMNS:
            raise ValueError(f"unexpected summary header {r.fieldnames}")
        out = []
        for x in r:
            out.append(
                {
                    "name": x["name"],
                    "planned_touch": float(x["planned_touch"]),
                    "achieved_touch": float(x["achieved_touch"]),
                    "error": float(x["error"]),
                    "critical_events": int(x["critical_events"]),
                    "completed": bool(int(x["completed"])),
                    "message": x["message"],
                }
            )
        return out


# --------------------------------------------------------------------------
# SVG


GREY, RED, GREEN, BLACK, MAGENTA = "#9a9a9a", "#d62728", "#2ca02c", "#000000", "#d000d0"


def sample_colors(record):
    """Static samples before the first dynamic one are grey, dynamic samples
    red and static samples after a dynamic segment green."""
    colors, seen_dynamic = [], False
    for s in record.samples:
        if s.regime == "dynamic":
            seen_dynamic = True
            colors.append(RED)
        else:
            colors.append(GREEN if seen_dynamic else GREY)
    return colors


def _midline(mesh, u):
    nodes = [mesh.node_id(i, mesh.nz // 2) for i in range(mesh.nx + 1)]
    P = mesh.nodes[nodes] + u.reshape(-1, 2)[nodes]
    return P


class _Canvas:
    def __init__(self, length, width=800, height=420):
        self.l = length
        self.W, self.H = width, height
        self.scale = 0.8 * width / (1.6 * length)
        self.x0 = width / 2
        self.z0 = height - 40

    def xy(self, P):
        return [(self.x0 + self.scale * x, self.z0 - self.scale * z) for x, z in P]

    def polyline(self, P, color, width=1.0, opacity=1.0):
        pts = " ".join(f"{a:.3f},{b:.3f}" for a, b in self.xy(P))
        return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width:g}" stroke-opacity="{opacity:g}"/>'

    def dot(self, x, z, color, r=4.0):
        (a, b), = self.xy([(x, z)])
        return f'<circle cx="{a:.3f}" cy="{b:.3f}" r="{r:g}" fill="{color}"/>'

    def document(self, items, title):
        ground = f'<line x1="0" y1="{self.z0:.3f}" x2="{self.W}" y2="{self.z0:.3f}" stroke="#444" stroke-width="1"/>'
        head = (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.W}" height="{self.H}" '
            f'viewBox="0 0 {self.W} {self.H}">\n<title>{title}</title>\n'
            f'<rect width="100%" height="100%" fill="white"/>\n{ground}\n'
        )
        return head + "\n".join(items) + "\n</svg>\n"


def svg_trace(record, mesh, target, stride=10, title="trace"):
    """Mid-surface states of a traced path in the grey/red/green convention."""
    cv = _Canvas(mesh.length)
    colors = sample_colors(record)
    items = []
    for k in snapshot_indices(record, stride):
        s = record.samples[k]
        items.append(cv.polyline(_midline(mesh, s.u), colors[k], 1.0, 0.8))
    with open(target, "w") as fh:
        fh.write(cv.document(items, title))


def svg_assessment(record, mesh, target, touch_x=None, stride=10, title="assessment"):
    """State evolution along a folding path.

    The last static state before the first critical point is black; the
    touch point, given as model-frame x, is a magenta dot on the ground.
    """
    cv = _Canvas(mesh.length)
    colors = sample_colors(record)
    items = []
    for k in snapshot_indices(record, stride):
        items.append(cv.polyline(_midline(mesh, record.samples[k].u), colors[k], 0.8, 0.6))
    crit = record.critical_events()
    if crit:
        lam_c = crit[0].lam
        pre = [s for s in record.samples if s.regime == "static" and s.lam <= lam_c]
        if pre:
            items.append(cv.polyline(_midline(mesh, pre[-1].u), BLACK, 1.6))
    if touch_x is not None and math.isfinite(touch_x):
        items.append(cv.dot(touch_x, 0.0, MAGENTA))
    with open(target, "w") as fh:
        fh.write(cv.document(items, title))


# --------------------------------------------------------------------------
# manifest


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def write_manifest(out_dir, config, config_hash, version, files, started, finished, command, exit_status):
    """Write ``manifest.json`` listing every emitted file with its SHA-256."""
    out_dir = Path(out_dir)
    entries = {str(Path(f).relative_to(out_dir)): file_digest(f) for f in sorted(map(str, files))}
    doc = {
        "command": command,
        "config": _jsonable(config),
        "config_hash": config_hash,
        "version": version,
        "started": started,
        "finished": finished,
        "exit_status": exit_status,
        "files": entries,
    }
    path = out_dir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_manifest(source):
    with open(source) as fh:
        return json.load(fh)


def verify_manifest(source):
    """Names of listed files whose digest no longer matches."""
    source = Path(source)
    doc = read_manifest(source)
    return [name for name, d in doc["files"].items() if file_digest(source.parent / name) != d]
