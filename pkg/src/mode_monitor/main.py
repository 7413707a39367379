#! env python3

from __future__ import annotations

import argparse
import logging
import sys
import typing

from . import actions
from . import anomaly
from . import artifact
from . import configurable
from . import errors
from . import nn

log = logging.getLogger(__name__)

LOG_FORMAT = '%(levelname)s %(name)s: %(message)s'

class Controller:
    """Command line: a verb, the flags every verb shares, and one --<name> flag per configuration variable"""
    def __init__(
        self,
        verbs: typing.List[ actions.Verb ]
    ):
        self.verbs: typing.Dict[str, actions.Verb] = {}
        for verb in verbs:
            for name in verb.get_names():
                self.verbs[name] = verb

    def parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(prog='mode-monitor', description='Modal graph convolution toolkit for vibration monitoring')
        parser.add_argument('verb', type=str, choices=list(self.verbs.keys()),
                            help='SIMULATE a scenario, TRAIN on a dataset, EVAL a checkpoint, BENCH the layers')
        parser.add_argument('-c', '--config', type=str, help='scenario spec (simulate) or run configuration (train, bench) JSON file')
        parser.add_argument('--seed', type=int, help='random seed')
        parser.add_argument('--out', type=str, default='.', help='output directory')
        parser.add_argument('--threshold', type=str, choices=list(anomaly.THRESHOLD_KINDS), help='anomaly threshold kind')
        parser.add_argument('--layer', type=str, choices=list(nn.LAYER_KINDS), help='convolution layer kind')
        parser.add_argument('--epochs', type=int, help='training epochs')
        parser.add_argument('--format', type=str, choices=['binary', 'csv'], help='dataset file format')
        parser.add_argument('--manifest', type=str, help='dataset manifest (train, eval)')
        parser.add_argument('--checkpoint', type=str, help='checkpoint file (eval; train writes it when given)')
        parser.add_argument('--resume', action='store_true', help='continue training from the checkpoint')
        parser.add_argument('--sizes', type=str, default='32,64,128', help='bench node counts, comma separated')
        parser.add_argument('--kinds', type=str, default=','.join(nn.LAYER_KINDS), help='bench layer kinds, comma separated')
        parser.add_argument('--modes', type=int, help='bench retained modes (default n/4)')
        parser.add_argument('--repetitions', type=int, default=5, help='bench repetitions per configuration')
        parser.add_argument('-v', '--verbose', action='count', default=0, help='more logging (-v debug)')
        return parser

    def __call__(self, argv: None|typing.Sequence[str] = None) -> typing.Any:
        parser = self.parser()
        args, unknown = parser.parse_known_args(argv)
        setup_logging(args.verbose)
        verb = self.verbs[args.verb]
        config = verb.load(args.config)

        all_vars: typing.Set[configurable.Var] = set()
        config.collect(all_vars)
        explicit = set(vars(args))
        for var in sorted(all_vars, key=lambda var: var.field()):
            name = var.field()
            if name not in explicit:
                explicit.add(name)
                parser.add_argument('--' + name.replace('_', '-'), dest=name, type=str)

        args = parser.parse_args(argv)

        for var in all_vars:
            value = getattr(args, var.field(), None)
            if value is None:
                pass
            elif isinstance(value, str):
                var.select_text(value)
            else:
                var.select(value)

        with artifact.Phase(f"mode-monitor {args.verb} {config}") as phase:
            return verb(config, args, phase)

def setup_logging(verbosity: int = 0):
    logging.basicConfig(level=logging.DEBUG if verbosity > 0 else logging.INFO, format=LOG_FORMAT)

def run(argv: None|typing.Sequence[str] = None) -> int:
    """Exit code: 0 on success, 2 on invalid input, 1 on any other failure"""
    try:
        Controller(actions.VERBS)(argv)
    except errors.ModeMonitorError as e:
        log.error(f"{e.__class__.__name__}: {e}")
        return e.exit_code
    except Exception as e:
        log.exception(f"unexpected failure: {e}")
        return 1
    return 0

def main():
    sys.exit(run())

if __name__ == "__main__":
    main()
