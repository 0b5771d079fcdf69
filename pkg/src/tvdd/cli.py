"""Command-line entry point ``tvdd``.

Settings come from flags and optionally from a ``key = value`` file given
with ``--config`` (keys are flag names without the leading dashes); flags
given on the command line win.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys

from .apps import APPLICATIONS, RunConfig, run_application

log = logging.getLogger("tvdd")


def _float_or_none(text):
    return None if str(text).lower() in ("", "none", "auto") else float(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tvdd", description="Domain-decomposed dual TV solvers.")
    ap.add_argument("--config", help="key = value file with defaults")
    ap.add_argument("--app", choices=APPLICATIONS)
    ap.add_argument("--input", help="ground-truth image (first frame for optflow)")
    ap.add_argument("--input2", help="second frame for optflow")
    ap.add_argument("--output", help="output image (flow colour image for optflow)")
    ap.add_argument("--lambda", dest="lam", type=float, help="regularisation weight")
    ap.add_argument("--beta", type=float, help="coercivity shift")
    ap.add_argument("--mode", choices=("seq", "par", "global"), default="seq")
    ap.add_argument("--mx", type=int, default=2, help="subdomains along axis 0")
    ap.add_argument("--my", type=int, default=2, help="subdomains along axis 1")
    ap.add_argument("--overlap", type=int, default=5)
    ap.add_argument("--sigma", type=_float_or_none, default=None)
    ap.add_argument("--outer-iters", type=int, default=50)
    ap.add_argument("--inner-iters", type=int, default=100)
    ap.add_argument("--nsur", type=int, default=0, help="surrogate steps (0 = direct local solve)")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--noise-var", type=float, default=0.01)
    ap.add_argument("--mask-prob", type=float, default=0.5)
    ap.add_argument("--energy-csv", help="write k,energy trace here")
    ap.add_argument("--compare-csv", help="also run global/seq/par and write the comparison table")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def read_config_file(path) -> dict[str, str]:
    parser = configparser.ConfigParser()
    with open(path) as fh:
        text = fh.read()
    if not text.lstrip().startswith("["):
        text = "[tvdd]\n" + text
    parser.read_string(text)
    out = {}
    for section in parser.sections():
        for key, value in parser[section].items():
            out[key.replace("-", "_")] = value
    return out


def parse_args(argv=None) -> argparse.Namespace:
    ap = build_parser()
    pre, _ = ap.parse_known_args(argv)
    if pre.config:
        values = read_config_file(pre.config)
        if "lambda" in values:
            values["lam"] = values.pop("lambda")
        actions = {a.dest: a for a in ap._actions}
        unknown = sorted(set(values) - set(actions))
        if unknown:
            ap.error(f"unknown config keys: {', '.join(unknown)}")
        defaults = {}
        for key, raw in values.items():
            conv = actions[key].type
            defaults[key] = conv(raw) if conv else raw
        ap.set_defaults(**defaults)
    args = ap.parse_args(argv)
    for name in ("app", "input", "output"):
        if getattr(args, name) is None:
            ap.error(f"--{name} is required")
    return args


def config_from_args(args) -> RunConfig:
    return RunConfig(
        app=args.app, input=args.input, input2=args.input2, output=args.output,
        lam=args.lam, beta=args.beta, mode=args.mode, mx=args.mx, my=args.my,
        overlap=args.overlap, sigma=args.sigma, outer_iters=args.outer_iters,
        inner_iters=args.inner_iters, nsur=args.nsur, workers=args.workers,
        seed=args.seed, noise_var=args.noise_var, mask_prob=args.mask_prob,
        energy_csv=args.energy_csv, compare_csv=args.compare_csv,
    )


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = run_application(config_from_args(args))
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"tvdd: error: {exc}", file=sys.stderr)
        return 1
    for path in result.artifacts:
        log.info("wrote %s", path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
