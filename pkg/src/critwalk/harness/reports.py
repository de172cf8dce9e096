"""JSON reports and CSV tables."""
from __future__ import annotations

import csv
import json
import os
import platform

import numpy as np


def versions() -> dict:
    import numba
    import scipy

    from .. import __version__

    return {
        "critwalk": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "python": platform.python_version(),
    }


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


def make_report(name: str, config, results: dict, hard: dict, tolerances: dict | None = None,
                tables: dict | None = None) -> dict:
    """Assemble a report; ``hard`` maps invariant names to pass flags."""
    return _plain({
        "experiment": name,
        "config": config.to_dict(),
        "seed_rule": "replica seed = splitmix64(seed XOR label), chained over labels",
        "versions": versions(),
        "results": results,
        "hard_invariants": hard,
        "harness_tolerance": tolerances or {},
        "hard_ok": all(bool(v) for v in hard.values()),
        "tables": tables or {},
    })


def write_report(report: dict, out_dir) -> str:
    os.makedirs(out_dir, exist_ok=True)
    tables = report.get("tables", {})
    for tname, rows in tables.items():
        write_csv(os.path.join(out_dir, f"{report['experiment']}_{tname}.csv"), rows)
    path = os.path.join(out_dir, f"{report['experiment']}.json")
    body = {k: v for k, v in report.items() if k != "tables"}
    body["tables"] = sorted(tables)
    with open(path, "w") as fh:
        json.dump(body, fh, indent=2)
    return path


def write_csv(path, rows: list) -> None:
    """Rows are dicts sharing keys."""
    with open(path, "w", newline="") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        w.writeheader()
        for r in rows:
            w.writerow(r)
