import argparse
import sys

from fluoro.commands import commands
from fluoro.errors import ConfigError


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors are configuration errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ConfigError.exit_code, f"{self.prog}: error: {message}\n")


def add_common_arguments(parser):
    parser.add_argument('--config', help="TOML config file (default: ./system.toml if present)")
    parser.add_argument('--seed', type=int, help="master seed for trajectory simulation")
    parser.add_argument('--out', help="output directory")
    parser.add_argument('--svg', action='store_true', help="also write SVG heatmaps")
    parser.add_argument('--workers', type=int, help="worker processes for columns and shot batches")
    parser.add_argument('--log-level', choices=("DEBUG", "INFO", "WARNING", "ERROR"))


def build_parser():
    parser = ArgumentParser(prog='fluoro', description="Conditional resonance fluorescence of a driven qubit")
    subparsers = parser.add_subparsers(dest='command', required=True)
    for name, command in commands.items():
        subparser = subparsers.add_parser(name, help=command.help, description=command.help)
        add_common_arguments(subparser)
        command.add_arguments(subparser)
        subparser.set_defaults(handler=command)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.handler.process(args)


if __name__ == "__main__":
    sys.exit(main())
