"""Property verification on user-supplied NNet networks (e.g. ACAS Xu).

Reports, per network, the number of polytopes traversed and the wall time,
one row per run. No numeric expectations are attached: the networks are
not shipped with this package.

    python scripts/acas_verify.py --property prop.json nets/*.nnet
    python scripts/acas_verify.py --property prop.json --region region.json --json out.json net.nnet
"""
import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from polytraverse import (BoundedRegion, PropertySpec, TraversalConfig, read_network,
                          verify_output_property)


def _load_json(arg):
    p = Path(arg)
    return json.loads(p.read_text() if p.exists() else arg)


def main(argv=None):
    ap = argparse.ArgumentParser(description="Polytope-traversal property checks on NNet files.")
    ap.add_argument("nets", nargs="+", help=".nnet or .json network files")
    ap.add_argument("--property", required=True, help="property JSON (file or inline)")
    ap.add_argument("--region", help="region JSON; default: property region, then network input bounds")
    ap.add_argument("--max-polytopes", type=int)
    ap.add_argument("--time-budget", type=float, help="seconds per network")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--json", help="also write the rows here")
    args = ap.parse_args(argv)

    spec = PropertySpec.from_json(_load_json(args.property))
    override = BoundedRegion.from_json(_load_json(args.region)) if args.region else None
    rows = []
    print(f"{'network':<40}{'neurons':>8}{'polytopes':>11}{'time [s]':>10}  verdict")
    for path in args.nets:
        net = read_network(path)
        region = override or spec.region
        if region is None:
            if net.input_bounds is None or not np.all(np.isfinite(np.concatenate(net.input_bounds))):
                print(f"{path}: no bounded region given and the network has none", file=sys.stderr)
                return 2
            region = BoundedRegion.box(*net.input_bounds)
        cfg = TraversalConfig(region, args.max_polytopes, args.time_budget, True, args.workers)
        t0 = time.perf_counter()
        v = verify_output_property(net, region, spec, cfg)
        elapsed = time.perf_counter() - t0
        row = {"network": str(path), "neurons": int(sum(net.widths)),
               "polytopes": v.stats.polytopes_visited, "wall_time": elapsed, "verdict": v.status}
        rows.append(row)
        print(f"{Path(path).name:<40}{row['neurons']:>8}{row['polytopes']:>11}{elapsed:>10.2f}  {v.status}")
    if args.json:
        Path(args.json).write_text(json.dumps(rows, indent=1) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
