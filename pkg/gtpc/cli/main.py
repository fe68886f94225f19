# gtpc/cli/main.py
import argparse
import sys
import traceback
from typing import List, Sequence

from pydantic import ValidationError

from gtpc.config import OUT_DIR, FPTarget, Variant, load_config
from gtpc.errors import GTPCError, UsageError
from gtpc.services.error_handler import generate_error_response


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--seed", type=int, help="override the experiment seed")
    common.add_argument(
        "--deterministic",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="single-threaded deterministic kernels",
    )
    common.add_argument("--out-dir", default=None, help=f"output root (default: {OUT_DIR})")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted config override, repeatable")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = _Parser(prog="gtpc", description="Semi-supervised change detection experiments.")
    verbs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    split = verbs.add_parser("split", parents=[common], help="write a labeled/unlabeled split manifest")
    split.add_argument("dataset_root")
    split.add_argument("--ratio", type=float, required=True)
    split.add_argument("--out", required=True)
    split.add_argument("--patch-size", type=int, default=256)
    split.add_argument("--val-fraction", type=float, default=0.0)
    split.add_argument("--test-fraction", type=float, default=0.0)

    synth = verbs.add_parser("synth", parents=[common], help="write a synthetic dataset to disk")
    synth.add_argument("--out", required=True)
    synth.add_argument("--n", type=int, default=500)
    synth.add_argument("--size", type=int, default=64)

    train = verbs.add_parser("train", parents=[common], help="train one configuration")
    train.add_argument("--variant", choices=[v.value for v in Variant])

    evaluate = verbs.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    evaluate.add_argument("checkpoint")
    evaluate.add_argument("--split", default="test", choices=["labeled", "unlabeled", "val", "test", "all"])
    evaluate.add_argument("--manifest", default=None)
    evaluate.add_argument("--render-dir", default=None, help="write TP/TN/FP/FN maps here")

    ablate = verbs.add_parser("ablate", parents=[common], help="train the ablation variants")
    ablate.add_argument("--variants", nargs="+", default=[v.value for v in Variant], choices=[v.value for v in Variant])
    ablate.add_argument("--fp-targets", nargs="*", default=[], choices=[t.value for t in FPTarget])
    ablate.add_argument("--seeds", nargs="+", type=int, default=None)

    sweep = verbs.add_parser("gate-sweep", parents=[common], help="train at several gate quantiles")
    sweep.add_argument("--quantiles", nargs="+", type=float, default=[0.25, 0.5, 0.75])
    sweep.add_argument("--seeds", nargs="+", type=int, default=None)

    render = verbs.add_parser("render", parents=[common], help="colour-code a prediction against a label")
    render.add_argument("prediction")
    render.add_argument("label")
    render.add_argument("--out", required=True)
    return parser


def _overrides(args: argparse.Namespace) -> List[str]:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.deterministic is not None:
        overrides.append(f"deterministic={str(args.deterministic).lower()}")
    if getattr(args, "variant", None):
        overrides.append(f"variant={args.variant}")
    return overrides


def run(args: argparse.Namespace) -> None:
    from gtpc.cli import commands

    if args.command == "split":
        commands.cmd_split(
            args.dataset_root, args.ratio, args.seed or 0, args.out, args.patch_size, args.val_fraction, args.test_fraction
        )
    elif args.command == "synth":
        commands.cmd_synth(args.out, args.n, args.size, args.seed or 0)
    elif args.command == "train":
        commands.cmd_train(args.config, _overrides(args), args.out_dir)
    elif args.command == "eval":
        commands.cmd_eval(args.checkpoint, args.split, args.render_dir, args.manifest)
    elif args.command == "ablate":
        config = load_config(args.config, _overrides(args))
        commands.cmd_ablate(config, args.variants, args.fp_targets, args.seeds, args.out_dir)
    elif args.command == "gate-sweep":
        config = load_config(args.config, _overrides(args))
        commands.cmd_gate_sweep(config, args.quantiles, args.seeds, args.out_dir)
    elif args.command == "render":
        commands.cmd_render(args.prediction, args.label, args.out)


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point; returns 0 on success, 1 on user errors and 2 on internal errors."""
    try:
        run(build_parser().parse_args(argv))
        return 0
    except (GTPCError, ValidationError, ValueError, FileNotFoundError) as exc:
        print(f"❌ {generate_error_response(exc)}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        traceback.print_exc()
        print(f"❌ {generate_error_response(exc)}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
