"""Command-line harness.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import PRESETS, build_config
from .data import GENERATORS, Dataset
from .errors import BvmError, ConfigError
from .experiments import (
    load_dataset,
    make_split,
    run_benchmark,
    run_calibration,
    run_ood_benchmark,
    run_toy,
    write_calibration_csv,
)
from .numerics import Rng

logger = logging.getLogger("bvm_ensembles")

DEFAULT_PRESETS = {
    "generate": "uci",
    "benchmark": "uci",
    "ood-benchmark": "ood",
    "calibrate": "calibrate",
    "split": "uci",
    "toy": "toy",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _key_value(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bvm-ensembles", description="Uncertainty-aware regression ensembles (MSE / NLL / BVM losses).")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", type=Path, help="flat 'key = value' config file")
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--seed", type=int)
        p.add_argument("--out", type=Path, help="output directory (or file for generate)")
        p.add_argument("--dataset", help="CSV path or generator name")
        p.add_argument("--loss", choices=("mse", "nll", "bvm"))
        p.add_argument("--epsilon", type=float)
        p.add_argument("--members", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--repetitions", type=int)
        p.add_argument("--set", dest="overrides", type=_key_value, action="append", default=[],
                       metavar="KEY=VALUE", help="override any config field; repeatable")
        return p

    gen = common(sub.add_parser("generate", help="write a synthetic dataset as CSV"))
    gen.add_argument("generator", choices=sorted(GENERATORS))
    common(sub.add_parser("benchmark", help="repeated random-split benchmark"))
    common(sub.add_parser("ood-benchmark", help="NLL vs BVM ensembles on outlier splits"))
    common(sub.add_parser("calibrate", help="reliability curves for MSE, NLL and BVM ensembles"))
    split = common(sub.add_parser("split", help="write the split manifest of one repetition"))
    split.add_argument("--repetition", type=int, default=0)
    split.add_argument("--mode", choices=("random", "outlier"))
    common(sub.add_parser("toy", help="train on the cubic toy set and write predictions on a grid"))
    return parser


def _config(args):
    overrides = dict(args.overrides)
    for name in ("seed", "dataset", "loss", "epsilon", "members", "epochs", "repetitions"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = str(value)
    if getattr(args, "mode", None):
        overrides["split"] = args.mode
    if args.out is not None and args.command != "generate":
        overrides["out"] = str(args.out)
    if args.command == "generate":
        overrides["dataset"] = args.generator
    return build_config(args.preset or DEFAULT_PRESETS[args.command], args.config, overrides)


def _print_summary(summary: dict) -> None:
    print(json.dumps(summary, indent=2, sort_keys=True))


def cmd_generate(args, config) -> int:
    data: Dataset = load_dataset(config, Rng(config.seed))
    out = args.out or Path(f"{config.dataset}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    data.to_csv(out)
    sidecar = out.with_suffix(out.suffix + ".json")
    sidecar.write_text(json.dumps({
        "generator": config.dataset,
        "n_samples": config.n_samples,
        "n_features": config.n_features,
        "noise_sd": config.noise_sd,
        "seed": config.seed,
        "provenance": data.provenance,
    }, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(data)} rows to {out}")
    return 0


def cmd_benchmark(args, config) -> int:
    result = run_benchmark(config)
    result.write(config.out)
    _print_summary(result.summary())
    return 0


def cmd_ood_benchmark(args, config) -> int:
    result = run_ood_benchmark(config)
    result.write(config.out)
    _print_summary(result.summary())
    return 0


def cmd_calibrate(args, config) -> int:
    result = run_calibration(config)
    result.write(config.out)
    for path in write_calibration_csv(result, config.out):
        print(f"wrote {path}")
    return 0


def cmd_split(args, config) -> int:
    data = load_dataset(config)
    rng = Rng(config.seed).child(args.repetition).child(0)
    split, shift = make_split(config, data, rng)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"split_rep_{args.repetition:03d}.txt"
    path.write_text(split.manifest())
    print(f"wrote {path} ({len(split.train)} train / {len(split.test)} test)")
    if shift is not None:
        print(json.dumps(shift.to_dict(), sort_keys=True))
    return 0


def cmd_toy(args, config) -> int:
    result = run_toy(config)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    result.data.to_csv(out / "toy_train.csv")
    lines = ["x,mu,sigma"] + [
        f"{x!r},{float(m)!r},{float(s)!r}"
        for x, m, s in zip(result.grid, result.prediction.mu, result.prediction.sigma)
    ]
    (out / "toy_predictions.csv").write_text("\n".join(lines) + "\n")
    print(f"wrote {out / 'toy_predictions.csv'}")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "benchmark": cmd_benchmark,
    "ood-benchmark": cmd_ood_benchmark,
    "calibrate": cmd_calibrate,
    "split": cmd_split,
    "toy": cmd_toy,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        config = _config(args)
        return COMMANDS[args.command](args, config)
    except BvmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
