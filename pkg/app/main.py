"""
Empathy & Emotion Toolkit - command line

    synth     write a synthetic corpus (or the transfer benchmark) as TSV
    train     train a track1 pipeline or a track2 model into a run directory
    evaluate  score a model, or an existing prediction file, against gold
    predict   write submission-format predictions

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""

import argparse
import logging
import sys
from typing import List, Optional

from .api import commands
from .errors import DataError, EmpathyToolkitError, UsageError
from .models.config_models import RegressorKind

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class CliParser(argparse.ArgumentParser):
    """Argument parser that raises instead of exiting on bad usage"""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> CliParser:
    parser = CliParser(prog="empathy-toolkit", description="Empathy regression and emotion prediction toolkit")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    synth = sub.add_parser("synth", help="write a synthetic corpus")
    synth.add_argument("--task", choices=["track1", "track2"], default="track2")
    synth.add_argument("--n", type=int, default=700)
    synth.add_argument("--seed", type=int, default=13)
    synth.add_argument("--transfer", action="store_true",
                       help="write aux.tsv, main.tsv and heldout.tsv into the --out directory")
    synth.add_argument("--out", required=True)
    synth.set_defaults(handler=commands.synth)

    train = sub.add_parser("train", help="train a model into a run directory")
    train.add_argument("--config", help="flat key=value run configuration")
    train.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    train.add_argument("--task", choices=["track1", "track2"])
    train.add_argument("--regressor", choices=[kind.value for kind in RegressorKind])
    train.add_argument("--model-kind", dest="model_kind", choices=["generator", "classifier"])
    train.add_argument("--seed", type=int)
    train.add_argument("--train", help="training TSV")
    train.add_argument("--aux", help="auxiliary TSV for staged fine-tuning")
    train.add_argument("--schema", help="column mapping file")
    train.add_argument("--out", help="run directory")
    train.add_argument("--workers", type=int)
    train.set_defaults(handler=commands.train)

    evaluate = sub.add_parser("evaluate", help="print the metric report")
    evaluate.add_argument("--model", help="run directory or model bundle")
    evaluate.add_argument("--predictions", help="existing submission file to score instead of a model")
    evaluate.add_argument("--task", choices=["track1", "track2"])
    evaluate.add_argument("--data", required=True, help="labeled TSV")
    evaluate.add_argument("--schema")
    evaluate.add_argument("--out", help="structured (JSON) report path")
    evaluate.add_argument("--workers", type=int, default=1)
    evaluate.set_defaults(handler=commands.evaluate)

    predict = sub.add_parser("predict", help="write submission-format predictions")
    predict.add_argument("--model", required=True)
    predict.add_argument("--data", required=True)
    predict.add_argument("--schema")
    predict.add_argument("--out", required=True)
    predict.add_argument("--workers", type=int, default=1)
    predict.set_defaults(handler=commands.predict)
    return parser


def configure_logging(level: str = "INFO") -> None:
    logging.basicConfig(level=getattr(logging, level), format=LOG_FORMAT, stream=sys.stderr, force=True)


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        configure_logging(args.log_level)
        return args.handler(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 0
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EmpathyToolkitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(run(sys.argv[1:]))
