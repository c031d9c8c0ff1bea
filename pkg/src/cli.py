"""Command-line entry: solve, ansatz, compare, xray, recover, sweep."""

import argparse
import sys
import traceback
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from .config import CANONICAL_CONFIG, DEFAULT_CONFIG_PATH
from .errors import LabError
from .experiment_config import apply_overrides, load_config, parse_config_text, validate_config
from .pipeline import (
    ansatz_to_dir,
    compare_to_dir,
    record_artifacts,
    recover_to_dir,
    solve_to_dir,
    sweep_to_dir,
    xray_to_dir,
)

COMMANDS: Dict[str, str] = {
    "solve": "evolve the alpha-NLS from -Th to Th",
    "ansatz": "assemble v and the a1 correction at the check times",
    "compare": "solver against v and u1 at the check times",
    "xray": "ground-truth X-ray transforms (and FBP in 2D)",
    "recover": "recover X alpha and alpha from measurements",
    "sweep": "h-convergence sweep with slope fits",
}


def _h_values(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid h list '{text}'") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="run_lab.py",
                                     description="Numerical lab for the cubic NLS with variable nonlinearity")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    for name, help_text in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=DEFAULT_CONFIG_PATH,
                       help="experiment config file (default: canonical 1D desk config)")
        p.add_argument("--out", default=None, help="output directory (default: output.dir)")
        p.add_argument("--h", type=_h_values, default=None,
                       help="semiclassical parameter; a comma list for sweep/recover")
        p.add_argument("--dim", type=int, default=None, help="override the spatial dimension")
        p.add_argument("--quiet", action="store_true", help="no progress output")
    return parser


def _load(args) -> tuple:
    raw = load_config(args.config) if args.config else parse_config_text(CANONICAL_CONFIG, "<canonical>")
    h_list = args.h or []
    single_h = h_list[0] if len(h_list) == 1 else None
    config = validate_config(apply_overrides(raw, h=single_h, dim=args.dim))
    return config, (h_list if len(h_list) > 1 else None)


def _run(args) -> List[Path]:
    config, h_list = _load(args)
    out_dir = Path(args.out or config.output_dir)
    verbose = not args.quiet
    handlers: Dict[str, Callable] = {
        "solve": lambda: solve_to_dir(config, out_dir, verbose=verbose),
        "ansatz": lambda: ansatz_to_dir(config, out_dir, verbose=verbose),
        "compare": lambda: compare_to_dir(config, out_dir, verbose=verbose),
        "xray": lambda: xray_to_dir(config, out_dir, verbose=verbose),
        "recover": lambda: recover_to_dir(config, out_dir, h_list=h_list, verbose=verbose),
        "sweep": lambda: sweep_to_dir(config, out_dir, h_list=h_list, verbose=verbose),
    }
    paths = handlers[args.command]()
    record_artifacts(out_dir, args.command, paths)
    return paths


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse argv and dispatch a subcommand.

    Returns:
        0 on success, 1 on lab or file errors (and unexpected failures), 2 on usage errors
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        paths = _run(args)
    except (LabError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        print(f"unexpected error: {e}", file=sys.stderr)
        traceback.print_exc()
        return 1

    if not args.quiet:
        print(f"\n{args.command}: wrote {len(paths)} file(s)")
        for path in paths:
            print(f"  - {path}")
    return 0


def main() -> int:
    return cli_main(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
