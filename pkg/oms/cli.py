"""
oms command line: ingest view directories, fit and query object models, and run the first-try search benchmark.

Every command reads its randomness from --seed; artifacts go to stdout or the named files, logs to stderr.
"""
import argparse
import logging
import sys
from typing import List, Optional

import numpy as np
import pydantic
import sentry_sdk
import uvicorn

from . import config, errors, gmm, ingest, memory, search, sim
from .models import BicDefinition, EmConfig, ObservationRecord, SearchStrategy

SECONDS_PER_DAY = 86_400.0
STRATEGIES = {'mode': SearchStrategy.MODE_RANKED, 'sample': SearchStrategy.GMM_SAMPLE}

log = logging.getLogger("oms")


# ==== commands ====
def cmd_ingest(args) -> int:
    store = memory.open_store(args.store)
    report = ingest.ingest_all(args.views, args.label, store, args.relevancy_floor, args.top_quantile)
    print(f"appended {len(report.appended)} record(s) of {args.label!r} from {report.observations} observation(s)")
    for name, message in report.failures:
        print(f"failed: {name}: {message}", file=sys.stderr)
    return 1 if report.failures else 0


def cmd_fit(args) -> int:
    store = memory.open_store(args.store)
    records = memory.query_observations(store, args.label)
    if not records:
        raise errors.InputError(f"no observations of {args.label!r} in {store.path}")
    points = np.array([r.location for r in records])
    n = len(points)
    if args.kmin > n:
        raise errors.InputError(f"--kmin {args.kmin} exceeds the {n} observation(s) of {args.label!r}")
    k_max = args.kmax
    if k_max > n:
        log.warning(f"--kmax {k_max} exceeds the {n} observation(s) of {args.label!r}, using {n}")
        k_max = n

    em_config = EmConfig(
        max_iterations=args.max_iterations,
        tolerance=args.tolerance,
        restarts=args.restarts,
        covariance_floor=args.covariance_floor,
        seed=args.seed,
        bic_definition=args.bic
    )
    table = gmm.bic_table(points, args.kmin, k_max, em_config, threads=args.threads, label=args.label)
    for candidate in table:
        print(f"K={candidate.k} log_likelihood={candidate.log_likelihood!r} bic={candidate.bic!r} "
              f"iterations={candidate.iterations} converged={candidate.converged}")
    model = gmm.select_from_table(table)

    path = memory.save_model(store, args.label, model)
    log.info(f"saved model to {path}")
    if args.out is not None:
        memory.write_model_file(args.out, args.label, model)
        log.info(f"saved model to {args.out}")
    print(f"{args.label}: K={model.k} log_likelihood={model.log_likelihood!r} bic={model.bic!r} n={model.n_train}")
    return 0


def cmd_plan(args) -> int:
    if args.model is not None:
        model = memory.read_model_file(args.model)
    elif args.label is not None:
        model = memory.load_model(memory.open_store(args.store), args.label)
    else:
        raise errors.InputError("pass --model FILE or --label STR")
    plan = search.plan_search(model, STRATEGIES[args.strategy], seed=args.seed, n_candidates=args.n)
    for x, y, z in plan.candidates.tolist():
        print(f"{x!r} {y!r} {z!r}")
    return 0


def cmd_simulate(args) -> int:
    experiment = sim.load_experiment_config(args.config)
    if args.n < 1:
        raise errors.InputError(f"--n must be >= 1, got {args.n}")
    store = memory.open_store(args.store)
    previous = memory.query_observations(store, args.label)
    start = previous[-1].timestamp + SECONDS_PER_DAY if previous else 0.0

    locations, _ = sim.spawn_many(experiment.distribution, args.n, np.random.default_rng(args.seed))
    for i, location in enumerate(locations.tolist()):
        memory.append_observation(store, ObservationRecord(
            label=args.label,
            location=tuple(location),
            timestamp=start + i * SECONDS_PER_DAY
        ))
    print(f"appended {args.n} simulated record(s) of {args.label!r} to {store.path}")
    return 0


def cmd_bench(args) -> int:
    experiment = sim.load_experiment_config(args.config)
    if args.seed is not None:
        experiment = experiment.copy(update={'seed': args.seed})
    curve = sim.run_experiment(experiment, threads=args.threads)
    with open(args.out, 'w', encoding='utf-8', newline='') as f:
        sim.write_csv(curve, f)
    for line in sim.summary_table(curve, experiment):
        print(line)
    return 1 if curve.skipped_sizes else 0


def cmd_render_synthetic(args) -> int:
    written = ingest.render_scene(args.scene, args.out)
    print(f"rendered {len(written)} observation(s) into {args.out}")
    return 0


def cmd_serve(args) -> int:
    config.STORE_PATH = args.store
    uvicorn.run("oms.main:app", host=args.host, port=args.port)
    return 0


# ==== parser ====
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oms", description="Object memory search.")
    parser.add_argument('--debug', action='store_true', help="log at DEBUG level")
    commands = parser.add_subparsers(dest='command', required=True, metavar='COMMAND')

    p = commands.add_parser('ingest', help="localize observations in a view directory and store them")
    p.add_argument('--views', required=True, help="directory of observation directories")
    p.add_argument('--label', required=True)
    p.add_argument('--relevancy-floor', type=float, default=None,
                   help="minimum relevancy of an unprojected pixel (default: half of each view's max)")
    p.add_argument('--top-quantile', type=float, default=0.05)
    p.add_argument('--store', default=config.STORE_PATH)
    p.set_defaults(func=cmd_ingest)

    p = commands.add_parser('fit', help="fit a mixture to the stored observations of a label")
    p.add_argument('--store', default=config.STORE_PATH)
    p.add_argument('--label', required=True)
    p.add_argument('--kmin', type=int, default=1)
    p.add_argument('--kmax', type=int, default=6)
    p.add_argument('--restarts', type=int, default=10)
    p.add_argument('--max-iterations', type=int, default=200)
    p.add_argument('--tolerance', type=float, default=1e-6)
    p.add_argument('--covariance-floor', type=float, default=1e-6)
    p.add_argument('--bic', choices=[d.value for d in BicDefinition] + ['paper_literal'],
                   default=BicDefinition.COMPONENT_COUNT.value, help="what k counts in BIC = k ln n - 2 ln L")
    p.add_argument('--seed', type=int, default=config.DEFAULT_SEED)
    p.add_argument('--threads', type=int, default=1)
    p.add_argument('--out', default=None, help="also write the model here")
    p.set_defaults(func=cmd_fit)

    p = commands.add_parser('plan', help="print where to look first")
    p.add_argument('--model', default=None, help="model file written by fit")
    p.add_argument('--store', default=config.STORE_PATH)
    p.add_argument('--label', default=None, help="use the label's model in --store instead of --model")
    p.add_argument('--strategy', choices=list(STRATEGIES), default='mode')
    p.add_argument('--n', type=int, default=5)
    p.add_argument('--seed', type=int, default=config.DEFAULT_SEED)
    p.set_defaults(func=cmd_plan)

    p = commands.add_parser('simulate', help="append simulated placements of a label to a store")
    p.add_argument('--config', required=True, help="experiment config whose distribution is sampled")
    p.add_argument('--label', required=True)
    p.add_argument('--n', type=int, default=50)
    p.add_argument('--store', default=config.STORE_PATH)
    p.add_argument('--seed', type=int, default=config.DEFAULT_SEED)
    p.set_defaults(func=cmd_simulate)

    p = commands.add_parser('bench', help="first-try accuracy of the model against the random baseline")
    p.add_argument('--config', required=True)
    p.add_argument('--out', required=True, help="CSV to write")
    p.add_argument('--threads', type=int, default=1)
    p.add_argument('--seed', type=int, default=None, help="overrides the config's seed")
    p.set_defaults(func=cmd_bench)

    p = commands.add_parser('render-synthetic', help="render a synthetic scene file into a view directory")
    p.add_argument('--scene', required=True)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_render_synthetic)

    p = commands.add_parser('serve', help="serve the store over HTTP")
    p.add_argument('--store', default=config.STORE_PATH)
    p.add_argument('--host', default="127.0.0.1")
    p.add_argument('--port', type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    # noinspection PyArgumentList
    logging.basicConfig(stream=sys.stderr, encoding='utf-8', level=logging.DEBUG if args.debug else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    if config.SENTRY_DSN is not None:
        sentry_sdk.init(dsn=config.SENTRY_DSN, environment=config.SENTRY_ENV)

    if getattr(args, 'threads', 1) < 1:
        print("oms: error: --threads must be >= 1", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (errors.OMSError, pydantic.ValidationError) as e:
        log.debug("command failed", exc_info=True)
        print(f"oms {args.command}: error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"oms {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
