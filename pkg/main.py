# === main.py ===
# Ponto de entrada da linha de comando: python main.py <comando> --config PATH [...]
import argparse
import logging
import sys
from pathlib import Path

from app import gtr_service
from src.config import load_config
from src.errors import GtrError

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Erros de uso imprimem a linha de uso e terminam com status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"GTR-ERR:usage:{message}\n")
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="Flat key=value pipeline config")
    common.add_argument("--seed", type=int, help="Overrides the config seed")
    common.add_argument("--beta", type=float, help="Confidence exponent of the CS losses")
    common.add_argument("--a2t", choices=["template", "lm"], help="Attributes-to-text mode")
    common.add_argument("--backend", help="VQA backend name")
    common.add_argument("--out", type=Path, help="Output path of the command")
    common.add_argument("--verbose", "-v", action="store_true", help="Debug logging")

    parser = _Parser(prog="main.py", description="Generation-then-retrieval person search pipeline")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("ingest", parents=[common], help="Validate the dataset manifest")
    sub.add_parser("generate", parents=[common], help="Write pseudo captions for the train split")
    sub.add_parser("train", parents=[common], help="Train the reference retrieval model")
    evaluate = sub.add_parser("evaluate", parents=[common], help="Rank@K and mAP of the trained model")
    evaluate.add_argument("--split", choices=["train", "val", "test"], help="Overrides eval_split")
    sub.add_parser("run-all", parents=[common], help="ingest, generate, train and evaluate")
    sub.add_parser("make-synthetic", parents=[common], help="Write the synthetic manifest and style corpus")
    sub.add_parser("sweep-beta", parents=[common], help="Train and evaluate for every beta in beta_grid")
    return parser


def configure_logging(verbose: bool):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )


# === Comandos ===
def _ingest(config, args):
    corpus = gtr_service.ingest_corpus(config)
    identities = {img.identity_id for img in corpus.images}
    print(f"images={len(corpus.images)} identities={len(identities)} "
          f"attributes={'yes' if corpus.truth_table else 'no'}")


def _generate(config, args):
    corpus = gtr_service.ingest_corpus(config)
    print(gtr_service.run_generation(corpus, config, out=args.out))


def _train(config, args):
    print(gtr_service.train(config, out=args.out)["model"])


def _evaluate(config, args):
    report = gtr_service.evaluate(config, split=args.split, out=args.out)
    print(report.to_flat_text(), end="")


def _run_all(config, args):
    print(gtr_service.run_all(config, out=args.out).to_flat_text(), end="")


def _make_synthetic(config, args):
    print(gtr_service.make_synthetic_corpus(config, out=args.out))


def _sweep_beta(config, args):
    print(gtr_service.sweep_beta(config, out=args.out).to_string(index=False))


COMMANDS = {
    "ingest": _ingest,
    "generate": _generate,
    "train": _train,
    "evaluate": _evaluate,
    "run-all": _run_all,
    "make-synthetic": _make_synthetic,
    "sweep-beta": _sweep_beta,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return 1
    except SystemExit as exc:  # --help
        return exc.code or 0
    configure_logging(args.verbose)
    try:
        config = load_config(
            gtr_service.config_path(args.config),
            seed=args.seed, beta=args.beta, a2t_mode=args.a2t, vqa_backend=args.backend,
        )
        gtr_service.check_backends(config)
        COMMANDS[args.command](config, args)
    except GtrError as exc:
        sys.stderr.write(f"GTR-ERR:{exc.code}:{exc}\n")
        return exc.exit_code
    except ValueError as exc:
        sys.stderr.write(f"GTR-ERR:invalid:{exc}\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
