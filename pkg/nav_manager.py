#!/usr/bin/env python3
"""
Navigation Manager - Command Line Interface
Environment generation, benchmark runs, ablations, corruption studies and reports
"""

import argparse
import hashlib
import json
import logging
import os
import sys
from typing import List, Optional

from benchmark import (
    DEFAULT_GRIDS,
    PRESETS,
    SWEEPS,
    ablate,
    apply_preset,
    corruption_suite,
    run_saturation,
    run_suite,
)
from config import RunConfig, config, config_manager, load_run_config
from env_store import env_bytes, load_env, save_env
from report_generator import SUMMARY_COLUMNS, report_generator
from simenv import CORRUPTIONS, EnvParams, generate_from_params
from subgoal import evaluate_sgm
from utils.error_handler import ConfigError, UsageError, handle_errors, setup_logging

logger = logging.getLogger(__name__)

COMMANDS = ['gen-env', 'run', 'ablate', 'corrupt-suite', 'saturation', 'evaluate-sgm', 'report', 'plot']


def _output_path(explicit: Optional[str], configured: str, default_name: str) -> str:
    return explicit or configured or os.path.join(config.output_dir, default_name)


def _resolve(args) -> RunConfig:
    rc = load_run_config(args.config, args.set)
    if args.preset:
        rc = apply_preset(rc, args.preset)
    return rc


def _env_path(args, rc: RunConfig) -> str:
    path = args.env or rc.env.path
    if not path:
        raise ConfigError("No environment file: pass --env or set env.path", "env.path")
    return path


def _env_info(path: str, env) -> dict:
    return {'path': os.path.basename(path), 'sha256': hashlib.sha256(env_bytes(env)).hexdigest(),
            'params': dict(env.params.__dict__)}


@handle_errors
def cmd_gen_env(args) -> int:
    params = EnvParams(nodes=args.nodes, branching=args.branching, sigma_spatial=args.sigma_spatial,
                       rho_temporal=args.rho_temporal, seed=args.seed)
    env = generate_from_params(params)
    path = save_env(env, _output_path(args.output, "", f"env_seed{args.seed}.json"))
    print(f"{path}  sha256={hashlib.sha256(env_bytes(env)).hexdigest()}")
    return 0


@handle_errors
def cmd_run(args) -> int:
    rc = _resolve(args)
    path = _env_path(args, rc)
    env = load_env(path)
    result = run_suite(env, rc, args.jobs, progress=args.progress)
    report = report_generator.build_run_report(result, _env_info(path, env), label=args.preset or "")
    out = _output_path(args.output, rc.output.report_path, "report.json")
    report_generator.write_run_report(report, out)
    print(report_generator.format_table([report_generator.summary_row(report)], SUMMARY_COLUMNS), end="")
    return 0


@handle_errors
def cmd_ablate(args) -> int:
    rc = _resolve(args)
    env = load_env(_env_path(args, rc))
    grid = None
    if args.grid is not None:
        try:
            grid = json.loads(args.grid)
        except json.JSONDecodeError as e:
            raise UsageError(f"--grid must be a JSON list: {e}")
        if not isinstance(grid, list):
            raise UsageError("--grid must be a JSON list")
    rows = ablate(env, rc, args.sweep, grid, args.jobs, progress=args.progress)
    out = _output_path(args.output, rc.output.table_path, f"ablate_{args.sweep}.csv")
    report_generator.write_csv_table(rows, out)
    print(report_generator.format_table(rows), end="")
    return 0


@handle_errors
def cmd_corrupt_suite(args) -> int:
    rc = _resolve(args)
    env = load_env(_env_path(args, rc))
    kinds = args.kinds or list(CORRUPTIONS)
    rows = corruption_suite(env, rc, args.severity, kinds, args.presets, args.denoise_kernel,
                            args.jobs, progress=args.progress)
    out = _output_path(args.output, rc.output.table_path, "corruptions.csv")
    report_generator.write_csv_table(rows, out)
    print(report_generator.format_table(rows), end="")
    return 0


@handle_errors
def cmd_saturation(args) -> int:
    rc = _resolve(args)
    env = load_env(_env_path(args, rc))
    curve = run_saturation(env, rc, args.count)
    rows = [{'layer_pair': f"{i}-{i + 1}", 'mean_cosine': value} for i, value in enumerate(curve, 1)]
    out = _output_path(args.output, "", "saturation.json")
    directory = os.path.dirname(out)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(out, 'w', encoding='utf-8') as f:
        json.dump({'profile': rc.encoder.profile, 'count': args.count, 'curve': curve}, f,
                  sort_keys=True, indent=2)
    print(report_generator.format_table(rows), end="")
    return 0


@handle_errors
def cmd_evaluate_sgm(args) -> int:
    rc = _resolve(args)
    env = load_env(_env_path(args, rc))
    sg = rc.subgoal
    evaluation = evaluate_sgm(env, None, sg.epsilon, sg.max_iters, sg.clearance_deg, sg.min_depth,
                              sg.max_sector_deg, shuffle_seed=rc.suite.seed)
    print(json.dumps(evaluation.to_dict(), sort_keys=True, indent=2))
    return 0


@handle_errors
def cmd_report(args) -> int:
    if not args.inputs:
        raise UsageError("report needs at least one --inputs run report")
    reports = [report_generator.load_run_report(p) for p in args.inputs]
    if args.format == 'table':
        rows = [report_generator.summary_row(r) for r in reports]
        print(report_generator.format_table(rows, SUMMARY_COLUMNS), end="")
        return 0
    out = _output_path(args.output, "", f"summary.{args.format}")
    if args.format == 'html':
        report_generator.write_html(reports, out)
    else:
        report_generator.write_pdf(reports, out)
    print(out)
    return 0


@handle_errors
def cmd_plot(args) -> int:
    if bool(args.table) == bool(args.saturation):
        raise UsageError("plot needs exactly one of --table or --saturation")
    if args.saturation:
        if not os.path.exists(args.saturation):
            raise ConfigError(f"Saturation file not found: {args.saturation}", "saturation")
        with open(args.saturation, 'r', encoding='utf-8') as f:
            curve = json.load(f)['curve']
        out = report_generator.plot_saturation(curve, _output_path(args.output, "", "saturation.svg"))
    else:
        rows = report_generator.load_csv_table(args.table)
        out = report_generator.plot_ablation(rows, _output_path(args.output, "", "ablation.svg"))
    print(out)
    return 0


HANDLERS = {
    'gen-env': cmd_gen_env,
    'run': cmd_run,
    'ablate': cmd_ablate,
    'corrupt-suite': cmd_corrupt_suite,
    'saturation': cmd_saturation,
    'evaluate-sgm': cmd_evaluate_sgm,
    'report': cmd_report,
    'plot': cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Input-adaptive panoramic navigation benchmark')
    parser.add_argument('command', choices=COMMANDS, help='Command to execute')

    parser.add_argument('--config', '-c', help='JSON run configuration')
    parser.add_argument('--set', action='append', default=[], metavar='SECTION.FIELD=VALUE',
                        help='Override one configuration field (repeatable)')
    parser.add_argument('--preset', choices=list(PRESETS), help='Named configuration preset')
    parser.add_argument('--env', '-e', help='Environment file (overrides env.path)')
    parser.add_argument('--output', '-o', help='Output file')
    parser.add_argument('--jobs', '-j', type=int, default=config.jobs, help='Parallel episode workers')
    parser.add_argument('--progress', action='store_true', help='Show progress bars on stderr')
    parser.add_argument('--log-level', default=config.logging.level, help='Logging level')

    # gen-env
    parser.add_argument('--nodes', type=int, default=40)
    parser.add_argument('--branching', type=int, default=4)
    parser.add_argument('--sigma-spatial', type=float, default=0.5)
    parser.add_argument('--rho-temporal', type=float, default=0.8)
    parser.add_argument('--seed', type=int, default=0)

    # ablate / corrupt-suite / saturation
    parser.add_argument('--sweep', choices=list(SWEEPS), default='k', help='Ablation parameter')
    parser.add_argument('--grid', help='JSON list of sweep values (default grid per sweep)')
    parser.add_argument('--severity', type=int, default=3)
    parser.add_argument('--kinds', nargs='+', choices=list(CORRUPTIONS))
    parser.add_argument('--presets', nargs='+', choices=list(PRESETS), default=['baseline', 'adaptive'])
    parser.add_argument('--denoise-kernel', type=int, default=0)
    parser.add_argument('--count', type=int, default=64, help='Views sampled for the saturation curve')

    # report / plot
    parser.add_argument('--inputs', nargs='+', help='Run reports to summarise')
    parser.add_argument('--format', choices=['html', 'pdf', 'table'], default='html')
    parser.add_argument('--table', help='Ablation CSV to plot')
    parser.add_argument('--saturation', help='Saturation JSON to plot')
    return parser


def show_examples():
    """Show usage examples"""
    print(f"""
Navigation Manager - Usage Examples
===================================

1. Generate an environment:
   python nav_manager.py gen-env --seed 0 --output runs/env.json

2. Baseline and adaptive runs on the same episodes:
   python nav_manager.py run --env runs/env.json --preset baseline -o runs/baseline.json
   python nav_manager.py run --env runs/env.json --preset adaptive -o runs/adaptive.json

3. Sweep k (default grid {DEFAULT_GRIDS['k']}):
   python nav_manager.py ablate --env runs/env.json --sweep k

4. Corruption study with median denoising:
   python nav_manager.py corrupt-suite --env runs/env.json --severity 3 --denoise-kernel 5

5. Saturation curve and its plot:
   python nav_manager.py saturation --env runs/env.json -o runs/saturation.json
   python nav_manager.py plot --saturation runs/saturation.json -o runs/saturation.svg

6. Summaries:
   python nav_manager.py report --inputs runs/baseline.json runs/adaptive.json --format pdf

Overrides:
   --set spatial.k=2 --set cache.enabled=false --set suite.episodes=20
""")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level, config.logging.file or None, config.logging.format,
                  config.logging.max_size, config.logging.backup_count)
    for issue in config_manager.validate():
        logger.warning(f"Configuration issue: {issue}")
    return HANDLERS[args.command](args)


if __name__ == "__main__":
    if len(sys.argv) == 1 or sys.argv[1] in ['-h', '--help', 'help']:
        show_examples()
    else:
        sys.exit(main())
