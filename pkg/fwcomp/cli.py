"""Command line entry point: validate, compile, analyze and simulate .fwb policies."""

import argparse
import logging
import sys
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence

import colorama
from pydantic import BaseModel, ConfigDict
from rich.console import Console
from rich.logging import RichHandler

from fwcomp.analysis import Universe, detect_shadowing, optimize_firewall
from fwcomp.backends import emit, interpret
from fwcomp.errors import (
    FwcompError,
    OpaqueSet,
    PacketSyntaxError,
    TableIoError,
    UnknownId,
    UnsupportedFeature,
)
from fwcomp.fwbxml import Diagnostic, has_errors, parse_file, serialize, validate_schema
from fwcomp.model import Firewall, ObjectDatabase, Platform
from fwcomp.semantics import Packet, evaluate
from fwcomp.transform import as_platform, render_ir, run_pipeline

colorama.init(autoreset=True)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_UNSUPPORTED = 2
EXIT_IO = 3


class Command(str, Enum):
    VALIDATE = "validate"
    COMPILE = "compile"
    ANALYZE = "analyze"
    SIMULATE = "simulate"


class CliConfig(BaseModel):
    """Validated command line of one invocation."""
    model_config = ConfigDict(frozen=True)

    command: Command
    input: Path
    firewall: Optional[str] = None
    target: Optional[Platform] = None
    output: Optional[Path] = None
    packet: Optional[str] = None
    universe: Optional[str] = None
    optimize: bool = False
    dump_ir: bool = False
    verbose: bool = False


class CliFailure(Exception):
    """Ends the command with an exit code after its message went to standard error."""

    def __init__(self, exit_code: int):
        super().__init__(exit_code)
        self.exit_code = exit_code


class FwcompArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with the invalid-input code instead of argparse's 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = FwcompArgumentParser(prog="fwcomp", description="Platform-independent firewall policy compiler")
    parser.add_argument("-v", "--verbose", action="store_true", help="log pipeline steps")
    commands = parser.add_subparsers(dest="command", required=True)

    def add(command: Command, help_text: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(command.value, help=help_text)
        sub.add_argument("input", type=Path, help=".fwb object database")
        sub.add_argument("--fw", dest="firewall", metavar="NAME", help="firewall name (default: all)")
        sub.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
        return sub

    add(Command.VALIDATE, "check references and schema")
    compile_cmd = add(Command.COMPILE, "write one script per firewall")
    compile_cmd.add_argument("--target", choices=[p.value for p in Platform])
    compile_cmd.add_argument("-o", dest="output", type=Path, metavar="PATH", help="output directory")
    compile_cmd.add_argument("--dump-ir", action="store_true", help="print the lowered rules")
    compile_cmd.add_argument("--universe", metavar="SPEC", help=argparse.SUPPRESS)
    analyze_cmd = add(Command.ANALYZE, "report shadowed rules")
    analyze_cmd.add_argument("--optimize", action="store_true", help="write an optimized copy of the database")
    analyze_cmd.add_argument("-o", dest="output", type=Path, metavar="PATH", help="optimized .fwb (default: stdout)")
    simulate_cmd = add(Command.SIMULATE, "print the verdict for one packet")
    simulate_cmd.add_argument("--packet", required=True, metavar="LITERAL")
    simulate_cmd.add_argument("--target", choices=[p.value for p in Platform],
                              help="interpret the compiled script instead of the abstract model")
    return parser


def report(diagnostic: Diagnostic):
    color = colorama.Fore.RED if diagnostic.is_error else colorama.Fore.YELLOW
    print(f"{color}{diagnostic}{colorama.Style.RESET_ALL}", file=sys.stderr)


def fail(message: str, exit_code: int):
    print(f"{colorama.Fore.RED}error: {message}{colorama.Style.RESET_ALL}", file=sys.stderr)
    raise CliFailure(exit_code)


def configure_logging(verbose: bool):
    handler = RichHandler(console=Console(stderr=True), show_path=False)
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING, format="%(message)s",
                        handlers=[handler], force=True)


class FwcompCli:
    """Runs one CliConfig; results go to standard output, diagnostics to standard error."""

    def __init__(self, options: CliConfig):
        self.options = options
        self.console = Console()

    def run(self) -> int:
        handler = getattr(self, f"_{self.options.command.value}")
        try:
            return handler()
        except CliFailure as e:
            return e.exit_code
        except (TableIoError, OSError) as e:
            print(f"{colorama.Fore.RED}error: {e}{colorama.Style.RESET_ALL}", file=sys.stderr)
            return EXIT_IO
        except (UnsupportedFeature, OpaqueSet) as e:
            print(f"{colorama.Fore.RED}error: {e.code}: {e}{colorama.Style.RESET_ALL}", file=sys.stderr)
            return EXIT_UNSUPPORTED
        except FwcompError as e:
            print(f"{colorama.Fore.RED}error: {e.code}: {e}{colorama.Style.RESET_ALL}", file=sys.stderr)
            return EXIT_INVALID

    def _load(self, strict: bool = True) -> ObjectDatabase:
        """Parse and validate the input; schema errors end the command only when strict."""
        db = parse_file(self.options.input)
        diagnostics = validate_schema(db)
        for diagnostic in diagnostics:
            report(diagnostic)
        if strict and has_errors(diagnostics):
            raise CliFailure(EXIT_INVALID)
        return db

    def _firewalls(self, db: ObjectDatabase) -> List[Firewall]:
        if self.options.firewall is not None:
            try:
                return [db.find_firewall(self.options.firewall)]
            except UnknownId:
                fail(f"no firewall named {self.options.firewall} in {self.options.input}", EXIT_INVALID)
        firewalls = db.firewalls()
        if not firewalls:
            fail(f"{self.options.input} holds no firewall", EXIT_INVALID)
        return firewalls

    def _validate(self) -> int:
        self._load()
        return EXIT_OK

    def _compile(self) -> int:
        db = self._load()
        scripts = []
        for firewall in self._firewalls(db):
            target = as_platform(self.options.target or firewall.platform)
            warnings: List[Diagnostic] = []
            filter_ir, nat_ir = run_pipeline(firewall, target, db, warnings)
            for diagnostic in warnings:
                report(diagnostic)
            if self.options.dump_ir:
                self.console.print(render_ir(nat_ir + filter_ir, title=f"{firewall.name} ({target.value})"))
            script = emit(target, filter_ir, nat_ir)
            if self.options.universe:
                self._cross_check(firewall, db, script)
            scripts.append((firewall, script))
        # nothing is written unless every firewall compiled
        directory = self.options.output or Path.cwd()
        directory.mkdir(parents=True, exist_ok=True)
        for path in self._write_all(directory, scripts):
            print(path)
        return EXIT_OK

    @staticmethod
    def _write_all(directory: Path, scripts) -> List[Path]:
        """Write every script under a temporary name, then rename them all; a failed write leaves nothing."""
        staged = []
        try:
            for firewall, script in scripts:
                final = directory / f"{firewall.name}.{script.target.value}.fw"
                temporary = final.with_name(f".{final.name}.tmp")
                staged.append((temporary, final))
                script.write(temporary)
        except OSError:
            for temporary, _ in staged:
                temporary.unlink(missing_ok=True)
            raise
        return [temporary.replace(final) for temporary, final in staged]

    def _cross_check(self, firewall: Firewall, db: ObjectDatabase, script):
        universe = Universe.parse(self.options.universe)
        universe.check_bound()
        mismatches = 0
        for packet in universe:
            expected = evaluate(firewall, packet, db)
            actual = interpret(script.target, script, packet)
            if (expected.action, expected.egress_packet) != (actual.action, actual.egress_packet):
                mismatches += 1
                if mismatches <= 10:
                    report(Diagnostic.error("script-mismatch", f"Firewall[{firewall.name}]",
                                            f"{packet}: model {expected}, script {actual}"))
        logger.info(f"{firewall.name}: cross-checked {universe.size} packets, {mismatches} mismatches")
        if mismatches:
            fail(f"{mismatches} of {universe.size} packets disagree with the compiled script", EXIT_INVALID)

    def _analyze(self) -> int:
        db = self._load(strict=False)
        firewalls = self._firewalls(db)
        for firewall in firewalls:
            skipped: List[Diagnostic] = []
            reports = detect_shadowing(firewall.rules, db, skipped)
            for diagnostic in skipped:
                report(diagnostic)
            for anomaly in reports:
                print(f"{firewall.name}: {anomaly}")
        if self.options.optimize:
            for firewall in firewalls:
                db = optimize_firewall(db.find_firewall(firewall.name), db)
            document = serialize(db)
            if self.options.output:
                self.options.output.write_bytes(document)
            else:
                sys.stdout.write(document.decode("utf-8"))
        return EXIT_OK

    def _simulate(self) -> int:
        db = self._load()
        firewalls = self._firewalls(db)
        if len(firewalls) > 1:
            fail("several firewalls in the file; choose one with --fw", EXIT_INVALID)
        firewall = firewalls[0]
        try:
            packet = Packet.parse(self.options.packet)
        except PacketSyntaxError as e:
            fail(str(e), EXIT_INVALID)
        if self.options.target is None:
            verdict = evaluate(firewall, packet, db)
        else:
            filter_ir, nat_ir = run_pipeline(firewall, self.options.target, db)
            verdict = interpret(self.options.target, emit(self.options.target, filter_ir, nat_ir), packet)
        print(verdict)
        return EXIT_OK


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments and run one command; returns the process exit code."""
    args = build_parser().parse_args(argv)
    options = CliConfig(**{key: value for key, value in vars(args).items() if value is not None})
    configure_logging(options.verbose)
    logger.debug(f"Running {options.command.value} on {options.input}")
    return FwcompCli(options).run()


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
