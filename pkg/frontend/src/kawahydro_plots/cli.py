"""plots <kind> --run DIR --out FILE.png|.svg"""

import argparse
import sys
from pathlib import Path

from .figures import FIGURE_KINDS, FigureRequest, MissingColumnError, render


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="plots",
                                 description="Render publication-style figures from "
                                             "kawahydro run directories (read-only)")
    ap.add_argument("kind", choices=FIGURE_KINDS)
    ap.add_argument("--run", required=True, help="run directory (manifest.json + CSVs)")
    ap.add_argument("--out", required=True, help="output image (.png or .svg)")
    ap.add_argument("--no-log", action="store_true", help="linear instead of log axes")
    ap.add_argument("--no-guide", action="store_true", help="omit the slope guide line")
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    request = FigureRequest(run_dir=Path(args.run), kind=args.kind,
                            out_path=Path(args.out),
                            log_axes=not args.no_log,
                            slope_guide=not args.no_guide)
    try:
        out = render(request)
    except (FileNotFoundError, MissingColumnError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
