import argparse
import logging

import config
from service.SimulationService import SimulationService, figure_series, validate_deterministic_equivalents

_logger = logging.getLogger(__name__)


class CliController:
    """
    Command line surface of the simulator with the subcommands run, figures and validate.
    Every handler returns the process exit code.
    """

    def __init__(self):
        self.parser = argparse.ArgumentParser(prog="app.py",
                                              description="Energy-efficient multi-cell MISO beamforming simulator")
        self.parser.add_argument("--verbose", action="store_true",
                                 help="Log at debug level and write convergence traces")
        subparsers = self.parser.add_subparsers(dest="command", required=True)

        run_parser = subparsers.add_parser("run", help="Run the Monte Carlo experiment described by a config file")
        run_parser.add_argument("--config", default=config.DEFAULT_PATH, help="Path to the YAML config file")
        run_parser.add_argument("--output-dir", default=None, help="Overrides experiment.output_dir")
        run_parser.add_argument("--seed", type=int, default=None, help="Overrides experiment.seed")
        run_parser.add_argument("--threads", type=int, default=None, help="Overrides experiment.max_threads")
        run_parser.set_defaults(handler=self.run)

        figures_parser = subparsers.add_parser("figures", help="Build CSV figure series from results directories")
        figures_parser.add_argument("result_dirs", nargs="+", help="One or more results directories of the run command")
        figures_parser.add_argument("--output-dir", default="./figures", help="Directory the series are written to")
        figures_parser.set_defaults(handler=self.figures)

        validate_parser = subparsers.add_parser("validate",
                                                help="Check the deterministic gain matrix against Monte Carlo samples")
        validate_parser.add_argument("--tx-antennas", type=int, default=40)
        validate_parser.add_argument("--users", type=int, default=20)
        validate_parser.add_argument("--cells", type=int, default=1)
        validate_parser.add_argument("--draws", type=int, default=2000)
        validate_parser.add_argument("--seed", type=int, default=0)
        validate_parser.add_argument("--threshold", type=float, default=0.05,
                                     help="Maximum accepted median relative error")
        validate_parser.set_defaults(handler=self.validate)

    def dispatch(self, argv: list[str] | None = None) -> int:
        args = self.parser.parse_args(argv)
        if args.verbose:
            logging.getLogger().setLevel(logging.DEBUG)
        try:
            return args.handler(args)
        except (ValueError, OSError) as e:
            _logger.error(str(e))
            return 2

    @staticmethod
    def run(args: argparse.Namespace) -> int:
        if args.config is not None:
            config.load(args.config)
        experiment = config.build_experiment_config().with_overrides(seed=args.seed, max_threads=args.threads,
                                                                     output_dir=args.output_dir)
        if args.verbose:
            experiment = experiment.with_overrides(log_convergence=True)

        failed = SimulationService(experiment).run()
        if failed > 0:
            _logger.error(str(failed) + " records failed, see the error column of the records")
            return 1
        return 0

    @staticmethod
    def figures(args: argparse.Namespace) -> int:
        for path in figure_series(args.result_dirs, args.output_dir):
            print(path)
        return 0

    @staticmethod
    def validate(args: argparse.Namespace) -> int:
        report, passed = validate_deterministic_equivalents(N_t=args.tx_antennas, K=args.users, M=args.cells,
                                                            draws=args.draws, seed=args.seed,
                                                            threshold=args.threshold)
        print("median relative error: " + str(report.median_relative_error))
        print("median relative error (diagonal): " + str(report.diagonal_median_relative_error))
        print("max relative error: " + str(report.max_relative_error))
        print("PASSED" if passed else "FAILED")
        return 0 if passed else 1
