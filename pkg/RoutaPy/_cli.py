"""Command-line interface: `routapy <command> [options]`.

Exit codes: 0 success, 1 domain error (bad instance, failed check, missing file), 2 usage error.
"""
from __future__ import annotations
import argparse
import logging
import os
import pathlib
import sys

from .core._constants import Constants as const
from .core._diagnostics import (feature_weight_groups, modulation_curves, probe_summary, progress_profile,
                                translation_probe)
from .core._exceptions import ConfigError, RoutaPyError
from .core._generator import GeneratorLatents, generate_dataset
from .core._inference import DecodeSettings, decode, evaluate_benchmark
from .core._instances import validate_instance
from .core._mdp import Solution, verify_solution
from .core._oracle import (canonical_scorer_check, centering_check, exact_gap_check, gradient_check,
                           soft_top1_limit_check)
from .core._parsers import load_instance, save_instance
from .core._plots import export_figure, plot_grouped_bar_chart, plot_line_chart, plot_routes
from .core._policy import load_checkpoint, read_checkpoint
from .core._training import TrainConfig, Trainer
from ._api import build_policy
from ._utils import ensure_parent_folder, read_json_file, write_json_file

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(levelname)s - [%(name)s] %(message)s'
ORACLE_CHECKS = ['a1', 'a2', 'softtop1', 'grad', 'exact-gap']
PROBES = ['translation', 'modulation', 'weights']


def _merge_config(path:str|None, overrides:dict, base:dict|None=None) -> dict:
    """`base`, then file values, then explicit (non-None) flags"""
    data = dict(base or {})
    data.update(read_json_file(path) if path else {})
    data.update({key: value for key, value in overrides.items() if value is not None})
    return data


def _instances_from(args) -> list:
    if args.instances:
        folder = pathlib.Path(args.instances)
        if not folder.is_dir():
            raise FileNotFoundError(f'instance directory not found: {folder}')
        return [load_instance(p) for p in sorted(folder.iterdir()) if p.is_file() and not p.name.startswith('.')]
    return generate_dataset(args.count, args.n, args.seed, args.task)


# Commands
def cmd_generate(args) -> int:
    latents = GeneratorLatents.from_dict(read_json_file(args.config)) if args.config else None
    instances = generate_dataset(args.count, args.n, args.seed, args.task, latents)
    folder = pathlib.Path(args.out)
    folder.mkdir(parents=True, exist_ok=True)
    for inst in instances:
        save_instance(inst, folder / f'{inst.name}.json')
    print(f'wrote {len(instances)} {args.task} instance(s) to {folder}')
    return 0


def cmd_validate(args) -> int:
    paths = list(args.paths) + list(args.in_paths or [])
    if not paths:
        raise ConfigError('validate needs at least one instance file')
    failed = 0
    for path in paths:
        report = validate_instance(load_instance(path))
        print(repr(report))
        failed += not report.ok
    return 1 if failed else 0


def cmd_train(args) -> int:
    overrides = {'task': args.task, 'epochs': args.epochs, 'customers': args.customers, 'seed': args.seed,
                 'jobs': args.jobs, 'advantage_mode': args.advantage}
    if args.resume:
        stored = (read_checkpoint(args.resume).get('extra') or {}).get('train_config', {})
        config = TrainConfig.from_dict(_merge_config(args.config, overrides, stored))
        trainer = Trainer.resume(args.resume, config)
    else:
        config = TrainConfig.from_dict(_merge_config(args.config, overrides)).validate()
        trainer = Trainer(build_policy(config.task, args.variant, config.seed), config)
    trainer.fit(checkpoint_path=ensure_parent_folder(args.out_checkpoint))
    if args.metrics:
        trainer.export_metrics_to_csv(ensure_parent_folder(args.metrics))
    print(repr(trainer))
    return 0


def _decode_settings(args) -> DecodeSettings:
    return DecodeSettings(mode=args.mode, samples=args.samples, beam_width=args.beam_width, seed=args.seed).validate()


def cmd_solve(args) -> int:
    policy = load_checkpoint(args.checkpoint)
    inst = load_instance(args.instance)
    solution = decode(inst, policy, _decode_settings(args))
    report = verify_solution(solution, inst)
    data = {'instance': inst.name, 'routes': solution.routes, 'distance': solution.total_distance, 'feasible': report.ok}
    if args.out:
        write_json_file(data, args.out)
    if args.plot:
        export_figure(plot_routes(inst, solution), ensure_parent_folder(args.plot))
    print(f"{inst.name}: distance {solution.total_distance:.4f}, {len(solution.routes)} route(s), "
          f"{'feasible' if report.ok else 'INFEASIBLE'}")
    return 0 if report.ok else 1


def cmd_eval(args) -> int:
    policy = load_checkpoint(args.checkpoint)
    report = evaluate_benchmark(args.instances, policy, args.references, _decode_settings(args), args.jobs)
    if args.out:
        path = ensure_parent_folder(args.out)
        if path.suffix.lower() == '.xlsx':
            report.export_to_excel(path)
        else:
            report.export_to_csv(path)
    print(repr(report))
    return 0


def cmd_verify(args) -> int:
    inst = load_instance(args.instance)
    solution = Solution.from_dict(read_json_file(args.solution))
    report = verify_solution(solution, inst)
    print(repr(report))
    return 0 if report.ok else 1


def cmd_oracle(args) -> int:
    policy = load_checkpoint(args.checkpoint) if args.checkpoint else None
    if args.check == 'a1':
        report = centering_check(args.trials, args.seed, policy)
    elif args.check == 'a2':
        report = canonical_scorer_check(trials=args.trials, seed=args.seed)
    elif args.check == 'softtop1':
        report = soft_top1_limit_check(args.trials, args.seed)
    elif args.check == 'grad':
        report = gradient_check(min(args.trials, 50), args.seed)
    else:
        report = exact_gap_check(policy, seed=args.seed)
    if args.out:
        write_json_file(report.to_dict(), args.out)
    print(repr(report))
    return 0 if report.passed else 1


def cmd_diagnose(args) -> int:
    policy = load_checkpoint(args.checkpoint) if args.checkpoint else build_policy(args.task, seed=args.seed)
    args.task = policy.task.value
    instances = _instances_from(args)
    if args.probe == 'translation':
        table = translation_probe(policy, instances, jobs=args.jobs)
        print(probe_summary(table).to_string(index=False))
        figure = None
    elif args.probe == 'modulation':
        table = modulation_curves(policy, instances, jobs=args.jobs)
        profile = progress_profile(table)
        print(profile.to_string(index=False))
        figure = lambda: plot_line_chart(profile, 'progress', ['alpha', 'local_share'], {'title': 'Modulation by progress'})
    else:
        table = feature_weight_groups(policy, instances, jobs=args.jobs)
        print(table.to_string(index=False))
        features = [c for c in table.columns if c not in ('bucket', 'steps')]
        figure = lambda: plot_grouped_bar_chart(table, 'bucket', features, {'title': 'Comparator weights by feasible-set size'})
    out = ensure_parent_folder(args.out)
    table.to_csv(out, index=False)
    if figure is not None and args.plot:
        export_figure(figure(), ensure_parent_folder(args.plot))
    return 0


# Parser
def _add_decode_options(parser:argparse.ArgumentParser) -> None:
    parser.add_argument('--mode', choices=const.VALID_DECODE_MODES, default=const.MODE_GREEDY)
    parser.add_argument('--samples', type=int, default=const.SAMPLES)
    parser.add_argument('--beam-width', type=int, default=const.BEAM_WIDTH)


def _common_options() -> argparse.ArgumentParser:
    # a fresh parent per subcommand: argparse shares parent Action objects, so a
    # subcommand's set_defaults would otherwise leak into every other subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=0, help='single source of randomness')
    common.add_argument('--jobs', type=int, default=os.cpu_count() or 1, help='worker threads')
    common.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    return common


def build_parser() -> argparse.ArgumentParser:

    parser = argparse.ArgumentParser(prog='routapy', description='Consequence-aware constructive routing toolkit')
    parser.add_argument('--version', action='version', version=f'RoutaPy {const.VERSION} (checkpoint format {const.CHECKPOINT_VERSION})')
    commands = parser.add_subparsers(dest='command', metavar='command')

    p = commands.add_parser('generate', parents=[_common_options()], help='generate instances as JSON files')
    p.add_argument('--task', choices=const.VALID_TASKS, default=const.CVRPTW)
    p.add_argument('--n', type=int, default=const.TRAIN_CUSTOMERS)
    p.add_argument('--count', type=int, default=1)
    p.add_argument('--config', help='GeneratorLatents JSON')
    p.add_argument('--out', required=True, help='output folder')
    p.set_defaults(handler=cmd_generate)

    p = commands.add_parser('validate', parents=[_common_options()], help='check instance files')
    p.add_argument('paths', nargs='*')
    p.add_argument('--in', dest='in_paths', action='append', metavar='PATH', help='instance file (repeatable)')
    p.set_defaults(handler=cmd_validate)

    p = commands.add_parser('train', parents=[_common_options()], help='REINFORCE training')
    p.add_argument('--task', choices=const.VALID_TASKS)
    p.add_argument('--config', help='TrainConfig JSON')
    p.add_argument('--variant', default='linc', help='ablation preset of a fresh policy')
    p.add_argument('--epochs', type=int)
    p.add_argument('--customers', type=int)
    p.add_argument('--advantage', choices=const.VALID_ADVANTAGE_MODES)
    p.add_argument('--out-checkpoint', required=True)
    p.add_argument('--resume', help='trainer checkpoint to continue from')
    p.add_argument('--metrics', help='metrics CSV path')
    p.set_defaults(handler=cmd_train, seed=None, jobs=None)

    p = commands.add_parser('solve', parents=[_common_options()], help='decode one instance')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--instance', required=True)
    _add_decode_options(p)
    p.add_argument('--out', help='solution JSON path')
    p.add_argument('--plot', help='route plot path (.svg or .html)')
    p.set_defaults(handler=cmd_solve)

    p = commands.add_parser('eval', parents=[_common_options()], help='evaluate a benchmark folder')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--instances', '--dir', dest='instances', required=True)
    p.add_argument('--references', '--refs', dest='references', help='solomon56, tsplib29 or a CSV with name,ref_cost')
    _add_decode_options(p)
    p.add_argument('--out', help='report path (.csv or .xlsx)')
    p.set_defaults(handler=cmd_eval)

    p = commands.add_parser('verify', parents=[_common_options()], help='verify a solution file')
    p.add_argument('--instance', required=True)
    p.add_argument('--solution', required=True, help='JSON with routes')
    p.set_defaults(handler=cmd_verify)

    p = commands.add_parser('oracle', parents=[_common_options()], help='run a numeric oracle check')
    p.add_argument('--check', choices=ORACLE_CHECKS, required=True)
    p.add_argument('--trials', type=int, default=const.ORACLE_TRIALS)
    p.add_argument('--checkpoint')
    p.add_argument('--out', help='report JSON path')
    p.set_defaults(handler=cmd_oracle)

    p = commands.add_parser('diagnose', parents=[_common_options()], help='mechanism diagnostics')
    p.add_argument('--probe', choices=PROBES, required=True)
    p.add_argument('--checkpoint')
    p.add_argument('--instances', help='instance folder; generated instances otherwise')
    p.add_argument('--task', choices=const.VALID_TASKS, default=const.CVRPTW)
    p.add_argument('--n', type=int, default=const.TRAIN_CUSTOMERS)
    p.add_argument('--count', type=int, default=8)
    p.add_argument('--out', required=True, help='CSV path')
    p.add_argument('--plot', help='chart path (.svg or .html)')
    p.set_defaults(handler=cmd_diagnose)
    return parser


def dispatch(argv:list[str]|None=None) -> int:
    """Parse `argv`, run the command and return its exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return int(exit_.code or 0)
    if getattr(args, 'handler', None) is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT)
    try:
        return args.handler(args)
    except (RoutaPyError, OSError, ValueError) as err:
        logger.error('%s', err)
        print(f'error: {err}', file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())
