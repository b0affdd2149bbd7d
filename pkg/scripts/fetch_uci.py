"""Convert raw UCI regression files into the comma-separated layout the
package ingests (header row, period decimals, target in the last column).

Nothing is downloaded. Obtain the raw files yourself, then run e.g.::

    python scripts/fetch_uci.py boston  path/to/boston_house_prices.csv
    python scripts/fetch_uci.py yacht   path/to/yacht_hydrodynamics.data
    python scripts/fetch_uci.py energy  path/to/ENB2012_data.xlsx

Sources:
    boston  https://lib.stat.cmu.edu/datasets/boston  (also shipped as
            sklearn/datasets/data/boston_house_prices.csv in scikit-learn < 1.2)
    yacht   https://archive.ics.uci.edu/dataset/243/yacht+hydrodynamics
    energy  https://archive.ics.uci.edu/dataset/242/energy+efficiency
            (target: Y1, heating load; Y2 is dropped)

Output goes to data/uci/<name>.csv unless --out is given.
"""

import argparse
import csv
import sys
from pathlib import Path

YACHT_COLUMNS = [
    "longitudinal_position", "prismatic_coefficient", "length_displacement",
    "beam_draught", "length_beam", "froude_number", "resistance",
]
ENERGY_COLUMNS = [
    "relative_compactness", "surface_area", "wall_area", "roof_area",
    "overall_height", "orientation", "glazing_area",
    "glazing_area_distribution", "heating_load",
]


def _boston(path):
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    # first line is "506,13,..." metadata in the scikit-learn copy
    if lines and not lines[0].startswith('"') and lines[0].split(",")[0].isdigit():
        lines = lines[1:]
    reader = csv.reader(lines)
    header = next(reader)
    return header, [row for row in reader if row]


def _yacht(path):
    rows = []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if len(parts) == len(YACHT_COLUMNS):
            rows.append(parts)
    return YACHT_COLUMNS, rows


def _energy(path):
    import pandas as pd

    frame = pd.read_excel(path) if str(path).endswith(("xlsx", "xls")) else pd.read_csv(path)
    frame = frame.dropna(how="all").iloc[:, :9]
    return ENERGY_COLUMNS, frame.astype(float).values.tolist()


CONVERTERS = {"boston": _boston, "yacht": _yacht, "energy": _energy}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("name", choices=sorted(CONVERTERS))
    parser.add_argument("raw", type=Path)
    parser.add_argument("--out", type=Path)
    args = parser.parse_args(argv)

    header, rows = CONVERTERS[args.name](args.raw)
    out = args.out or Path(__file__).resolve().parents[1] / "data" / "uci" / f"{args.name}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows x {len(header)} columns to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
