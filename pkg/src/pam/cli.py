"""Command-line interface.

Subcommands mirror the pipeline stages:

    pam collect        stage-1 expert dataset
    pam train-sl       supervised policy training
    pam rollout        stage-2 on-policy preference data
    pam train-dpo      preference finetuning
    pam train-explicit explicit reward head
    pam eval           seeded method evaluation
    pam plot           CSV/SVG artifacts from curves, logs, heatmaps
    pam serve          annotation HTTP service
    pam bench          kernel backend benchmark

Relative paths resolve under $PAM_DATA_ROOT (default ./pam_data).
Exit codes: 0 ok, 2 usage/configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from pam import config

log = logging.getLogger("pam")


class UsageError(Exception):
    pass


def data_root() -> str:
    return os.environ.get("PAM_DATA_ROOT", os.path.join(os.getcwd(), "pam_data"))


def _resolve(path: str, must_exist: bool = False) -> str:
    out = path if os.path.isabs(path) else os.path.join(data_root(), path)
    if must_exist and not os.path.exists(out):
        raise UsageError(f"no such file: {out}")
    parent = os.path.dirname(out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    return out


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--task", choices=("granular", "rope"), default="granular")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pam", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect", help="stage-1 scripted-expert dataset")
    _add_common(p)
    p.add_argument("--num-states", type=int, required=True)
    p.add_argument("--k", type=int, default=config.AUX_ACTIONS_K)
    p.add_argument("--out", required=True)
    p.add_argument("--source", choices=("oracle", "serve"), default="oracle")
    p.add_argument("--service", default="http://127.0.0.1:8765")

    p = sub.add_parser("train-sl", help="supervised policy training")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dataset", action="append", required=True,
                   help="SL dataset path (repeatable)")
    p.add_argument("--dataset-pl", action="append", default=[],
                   help="PL dataset whose annotated optimal actions join training")
    p.add_argument("--epochs", type=int, default=config.SL_EPOCHS)
    p.add_argument("--lr", type=float, default=config.SL_LR)
    p.add_argument("--out", required=True)

    p = sub.add_parser("rollout", help="stage-2 on-policy preference data")
    _add_common(p)
    p.add_argument("--reference", required=True)
    p.add_argument("--num-states", type=int, required=True)
    p.add_argument("--n", type=int, default=config.CANDIDATES_N)
    p.add_argument("--out", required=True)
    p.add_argument("--source", choices=("oracle", "serve"), default="oracle")
    p.add_argument("--service", default="http://127.0.0.1:8765")

    p = sub.add_parser("train-dpo", help="preference finetuning")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dataset", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--beta", type=float, default=config.DPO_BETA)
    p.add_argument("--epochs", type=int, default=config.DPO_EPOCHS)
    p.add_argument("--lr", type=float, default=config.DPO_LR)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-explicit", help="explicit reward head")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dataset", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--epochs", type=int, default=config.EXPLICIT_EPOCHS)
    p.add_argument("--lr", type=float, default=config.EXPLICIT_LR)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="seeded evaluation for one method")
    _add_common(p)
    p.add_argument("--method", choices=config.METHOD_TAGS, required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--finetuned")
    p.add_argument("--reward")
    p.add_argument("--trials", type=int, default=config.EVAL_TRIALS)
    p.add_argument("--n", type=int, default=config.CANDIDATES_N)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--beta", type=float, default=config.DPO_BETA)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("plot", help="render CSV/SVG artifacts")
    p.add_argument("--out-dir", required=True)
    p.add_argument("inputs", nargs="*")

    p = sub.add_parser("serve", help="annotation HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--data-dir", default="annotations")
    p.add_argument("--lease-seconds", type=float, default=600.0)
    p.add_argument("--replay-log", default=None)

    p = sub.add_parser("bench", help="compare compiled and pure kernels")
    p.add_argument("--repeats", type=int, default=5)

    return parser


def _cmd_collect(args) -> int:
    from pam import pipeline

    out = _resolve(args.out)
    service = _service_client(args) if args.source == "serve" else None
    pipeline.collect_stage1(args.task, args.num_states, args.k, args.seed, out,
                            source=args.source, service=service)
    print(f"wrote {out}")
    return 0


def _cmd_train_sl(args) -> int:
    from pam import pipeline

    datasets = [_resolve(p, must_exist=True) for p in args.dataset]
    pl = [_resolve(p, must_exist=True) for p in args.dataset_pl]
    out = _resolve(args.out)
    pipeline.train_sl(datasets, args.epochs, args.seed, out, pl_paths=pl, lr=args.lr)
    print(f"wrote {out}")
    return 0


def _cmd_rollout(args) -> int:
    from pam import pipeline

    ref = _resolve(args.reference, must_exist=True)
    out = _resolve(args.out)
    service = _service_client(args) if args.source == "serve" else None
    pipeline.rollout_stage2(args.task, ref, args.num_states, args.n, args.seed, out,
                            source=args.source, service=service)
    print(f"wrote {out}")
    return 0


def _cmd_train_dpo(args) -> int:
    from pam import pipeline

    pipeline.train_dpo_cmd(_resolve(args.dataset, must_exist=True),
                           _resolve(args.reference, must_exist=True),
                           args.beta, args.epochs, args.seed, _resolve(args.out), lr=args.lr)
    print(f"wrote {_resolve(args.out)}")
    return 0


def _cmd_train_explicit(args) -> int:
    from pam import pipeline

    pipeline.train_explicit_cmd(_resolve(args.dataset, must_exist=True),
                                _resolve(args.reference, must_exist=True),
                                args.epochs, args.seed, _resolve(args.out), lr=args.lr)
    print(f"wrote {_resolve(args.out)}")
    return 0


def _cmd_eval(args) -> int:
    from pam import pipeline

    result = pipeline.evaluate(
        args.task, args.method, args.trials, args.n, args.seed, _resolve(args.out_dir),
        reference_path=_resolve(args.reference, must_exist=True),
        finetuned_path=_resolve(args.finetuned, must_exist=True) if args.finetuned else None,
        reward_path=_resolve(args.reward, must_exist=True) if args.reward else None,
        max_steps=args.max_steps, beta=args.beta)
    curve = result["curve"]
    print(f"{args.method} on {args.task}: final EMD {curve.emd_mean[-1]:.4f} "
          f"({curve.trials} trials, {result['failed_trials']} failed)")
    return 0


def _cmd_plot(args) -> int:
    from pam import plots

    if not args.inputs:
        raise UsageError("plot requires at least one input file")
    inputs = [_resolve(p, must_exist=True) for p in args.inputs]
    artifacts = plots.render(inputs, _resolve(args.out_dir))
    for a in artifacts:
        print(a)
    return 0


def _cmd_serve(args) -> int:
    from pam import service

    srv = service.AnnotationServer(
        host=args.host, port=args.port, data_dir=_resolve(args.data_dir),
        lease_seconds=args.lease_seconds,
        replay_log=_resolve(args.replay_log, must_exist=True) if args.replay_log else None)
    print(f"annotation service on http://{args.host}:{srv.port}")
    try:
        srv.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        srv.shutdown()
    return 0


def _cmd_bench(args) -> int:
    import importlib.util
    import pathlib

    bench_path = pathlib.Path(__file__).resolve().parents[2] / "benchmarks" / "bench_kernels.py"
    if not bench_path.exists():
        raise UsageError("benchmarks/bench_kernels.py not found (run from a source checkout)")
    spec = importlib.util.spec_from_file_location("bench_kernels", bench_path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    mod.main(repeats=args.repeats)
    return 0


def _service_client(args):
    from pam.service import ServiceClient

    return ServiceClient(args.service)


_HANDLERS = {
    "collect": _cmd_collect,
    "train-sl": _cmd_train_sl,
    "rollout": _cmd_rollout,
    "train-dpo": _cmd_train_dpo,
    "train-explicit": _cmd_train_explicit,
    "eval": _cmd_eval,
    "plot": _cmd_plot,
    "serve": _cmd_serve,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("PAM_LOG", "WARNING"))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        log.exception("command failed")
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
