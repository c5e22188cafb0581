#!/usr/bin/env python3
"""Convert a public AVIRIS Indian Pines distribution into the layout this
repository consumes: a little-endian int16 band-sequential cube with a text
dims descriptor, plus a CSV ground-truth grid.

Two input forms are supported:

  MATLAB bundles (needs scipy):
      prepare_indian_pines.py --mat Indian_pines.mat --mat-gt Indian_pines_gt.mat --out data/

  Original ERDAS files (92AV3C.lan + 92AV3GT.GIS, no dependencies):
      prepare_indian_pines.py --lan 92AV3C.lan --gis 92AV3GT.GIS --out data/

Outputs under --out:
  indian_pines.raw        int16 LE, band-sequential
  indian_pines.raw.dims   rows/cols/bands descriptor
  indian_pines_gt.csv     rows x cols comma-separated labels in [0, 16]

Note: the MATLAB ground truth in circulation labels 10249 pixels, while the
original ERDAS map labels 10366; both carry 16 classes and either works.
"""

import argparse
import struct
import sys
from pathlib import Path


def read_erdas_header(data, expect_bands):
    magic = data[:6]
    if magic not in (b"HEADER", b"HEAD74"):
        sys.exit(f"not an ERDAS LAN/GIS file (magic {magic!r})")
    (ipack,) = struct.unpack_from("<h", data, 6)
    (nbands,) = struct.unpack_from("<h", data, 8)
    if magic == b"HEAD74":
        (cols,) = struct.unpack_from("<i", data, 16)
        (rows,) = struct.unpack_from("<i", data, 20)
    else:
        cols = int(struct.unpack_from("<f", data, 16)[0])
        rows = int(struct.unpack_from("<f", data, 20)[0])
    if expect_bands is not None and nbands != expect_bands:
        sys.exit(f"expected {expect_bands} band(s), header says {nbands}")
    return ipack, nbands, rows, cols


def load_lan_cube(path):
    data = Path(path).read_bytes()
    ipack, bands, rows, cols = read_erdas_header(data, None)
    if ipack != 2:
        sys.exit(f"cube must be 16-bit (ipack=2), got ipack={ipack}")
    samples = rows * cols * bands
    body = data[128 : 128 + samples * 2]
    if len(body) != samples * 2:
        sys.exit("cube file truncated")
    values = struct.unpack(f"<{samples}h", body)
    # BIL: per row, one row of samples per band. Re-order to BSQ.
    cube = [[0] * (rows * cols) for _ in range(bands)]
    k = 0
    for r in range(rows):
        for b in range(bands):
            base = r * cols
            row = values[k : k + cols]
            cube[b][base : base + cols] = row
            k += cols
    return rows, cols, bands, cube


def load_gis_labels(path):
    data = Path(path).read_bytes()
    ipack, bands, rows, cols = read_erdas_header(data, 1)
    if ipack != 0:
        sys.exit(f"ground truth must be 8-bit (ipack=0), got ipack={ipack}")
    body = data[128 : 128 + rows * cols]
    if len(body) != rows * cols:
        sys.exit("ground truth file truncated")
    return rows, cols, list(body)


def load_mat(cube_path, gt_path):
    try:
        from scipy.io import loadmat
    except ImportError:
        sys.exit("reading .mat files needs scipy (pip install scipy)")
    import numpy as np

    def grab(path, want3d):
        blob = loadmat(path)
        arrays = [v for k, v in blob.items() if not k.startswith("__")]
        dims = 3 if want3d else 2
        arrays = [a for a in arrays if getattr(a, "ndim", 0) == dims]
        if len(arrays) != 1:
            sys.exit(f"{path}: expected exactly one {dims}-D array")
        return np.asarray(arrays[0])

    cube_arr = grab(cube_path, True)   # rows x cols x bands
    gt_arr = grab(gt_path, False)      # rows x cols
    rows, cols, bands = cube_arr.shape
    cube = [
        cube_arr[:, :, b].astype("<i2").reshape(-1).tolist() for b in range(bands)
    ]
    return rows, cols, bands, cube, gt_arr.astype(int).reshape(rows, cols).tolist()


def write_outputs(out_dir, rows, cols, bands, cube, labels):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    raw = out / "indian_pines.raw"
    with open(raw, "wb") as f:
        for plane in cube:
            f.write(struct.pack(f"<{len(plane)}h", *plane))
    (out / "indian_pines.raw.dims").write_text(
        f"rows={rows}\ncols={cols}\nbands={bands}\nbyteorder=little\n"
    )
    with open(out / "indian_pines_gt.csv", "w") as f:
        for r in range(rows):
            f.write(",".join(str(int(v)) for v in labels[r]) + "\n")
    labeled = sum(1 for row in labels for v in row if v)
    print(f"wrote {rows}x{cols}x{bands} cube, {labeled} labeled pixels -> {out}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mat", help="Indian_pines.mat (rows x cols x bands)")
    ap.add_argument("--mat-gt", help="Indian_pines_gt.mat")
    ap.add_argument("--lan", help="92AV3C.lan (ERDAS, 16-bit BIL)")
    ap.add_argument("--gis", help="92AV3GT.GIS (ERDAS, 8-bit)")
    ap.add_argument("--out", default="data", help="output directory (default: data)")
    args = ap.parse_args()

    if args.mat and args.mat_gt:
        rows, cols, bands, cube, labels = load_mat(args.mat, args.mat_gt)
    elif args.lan and args.gis:
        rows, cols, bands, cube = load_lan_cube(args.lan)
        grows, gcols, flat = load_gis_labels(args.gis)
        if (grows, gcols) != (rows, cols):
            sys.exit(f"ground truth is {grows}x{gcols}, cube is {rows}x{cols}")
        labels = [flat[r * cols : (r + 1) * cols] for r in range(rows)]
    else:
        ap.error("provide either --mat with --mat-gt, or --lan with --gis")

    bad = {v for row in labels for v in row if not 0 <= v <= 16}
    if bad:
        sys.exit(f"ground truth has labels outside [0,16]: {sorted(bad)}")
    write_outputs(args.out, rows, cols, bands, cube, labels)


if __name__ == "__main__":
    main()
