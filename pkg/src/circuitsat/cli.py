"""Command-line entry point.

One binary, many subcommands: dataset generation, format conversion,
oracle solving, training, evaluation, and gradient checking. Machine
output goes to standard output; logs go to standard error. Exit codes:
0 success, 2 usage error, 1 failure; `oracle-solve` uses the SAT
competition convention (10 satisfiable, 20 unsatisfiable)."""

from __future__ import annotations

import argparse
import json
import logging
import multiprocessing
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .autodiff import load_checkpoint, save_checkpoint
from .circuit import CircuitError, CircuitParseError, read_circuit, write_circuit
from .cnf import (
    DimacsParseError,
    cnf_to_circuit,
    read_dimacs,
    tseitin,
    write_dimacs,
)
from .datagen import (
    DatagenError,
    aig_instance,
    gen_sr_pair,
    sr_instance,
    symmetric_suite,
    write_manifest,
)
from .model import ModelConfig, ModelError, init_params
from .oracle import dpll_solve
from .training import (
    TrainConfig,
    TrainingError,
    config_fingerprint,
    evaluate_solution_rate,
    train,
)

log = logging.getLogger("circuitsat")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_SAT = 10
EXIT_UNSAT = 20


class UsageError(Exception):
    pass


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc


def _write_run_metadata(out_dir: Path, command: str, effective: dict) -> None:
    """Every artifact directory records the exact configuration that
    produced it."""
    payload = {"command": command, "version": __version__, "config": effective}
    (out_dir / "run.json").write_text(json.dumps(payload, indent=2) + "\n")


def _pool_map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(item) for item in items]
    with multiprocessing.get_context("fork").Pool(jobs) as pool:
        return pool.map(fn, items)


# -- generation subcommands ---------------------------------------------------


def _sr_job(args):
    n, seed = args
    return sr_instance(n, seed), gen_sr_pair(n, seed)


def cmd_gen_sr(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(args.n, args.seed + i) for i in range(args.count)]
    results = _pool_map(_sr_job, jobs, args.jobs)
    instances = [inst for inst, _ in results]
    for i, (_, pair) in enumerate(results):
        stem = f"sr{args.n}_{i:06d}"
        (out / f"{stem}.sat.cnf").write_text(write_dimacs(pair.sat))
        (out / f"{stem}.unsat.cnf").write_text(write_dimacs(pair.unsat))
    write_manifest(instances, str(out / "manifest.jsonl"))
    _write_run_metadata(out, "gen-sr", {k: v for k, v in vars(args).items() if k != "func"})
    log.info("wrote %d pairs to %s", args.count, out)
    return EXIT_OK


def _aig_job(args):
    n_inputs, gates, seed = args
    return aig_instance(n_inputs, gates, seed)


def cmd_gen_aig(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(args.inputs, args.gates, args.seed + i) for i in range(args.count)]
    instances = _pool_map(_aig_job, jobs, args.jobs)
    write_manifest(instances, str(out / "manifest.jsonl"))
    _write_run_metadata(out, "gen-aig", {k: v for k, v in vars(args).items() if k != "func"})
    log.info("wrote %d circuits to %s", args.count, out)
    return EXIT_OK


def cmd_gen_symmetric(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(symmetric_suite(), str(out / "manifest.jsonl"))
    _write_run_metadata(out, "gen-symmetric", {k: v for k, v in vars(args).items() if k != "func"})
    log.info("wrote the 10-instance suite to %s", out)
    return EXIT_OK


# -- conversion and solving ---------------------------------------------------


def cmd_convert(args) -> int:
    if args.to_circuit:
        formula = read_dimacs(_read_text(args.to_circuit))
        sys.stdout.write(write_circuit(cnf_to_circuit(formula)))
    else:
        circuit = read_circuit(_read_text(args.to_cnf))
        formula, _ = tseitin(circuit)
        sys.stdout.write(write_dimacs(formula))
    return EXIT_OK


def cmd_oracle_solve(args) -> int:
    formula = read_dimacs(_read_text(args.dimacs))
    result = dpll_solve(formula)
    if not result.sat:
        print("s UNSATISFIABLE")
        return EXIT_UNSAT
    print("s SATISFIABLE")
    literals = [
        v if result.model[v] else -v for v in range(1, formula.num_vars + 1)
    ]
    print("v " + " ".join(str(l) for l in literals) + " 0")
    return EXIT_SAT


# -- training and evaluation --------------------------------------------------


def _load_run_config(path: str) -> dict:
    text = _read_text(path)
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(config, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    unknown = set(config) - {"dataset", "model", "train", "checkpoint", "curve"}
    if unknown:
        raise UsageError(f"{path}: unknown config keys {sorted(unknown)}")
    if "dataset" not in config:
        raise UsageError(f"{path}: config must name a 'dataset' manifest")
    return config


def _configs_from_run(config: dict, args) -> tuple[ModelConfig, TrainConfig]:
    try:
        model_config = ModelConfig.from_dict(config.get("model", {}))
        train_kwargs = dict(config.get("train", {}))
        for field in ("lr", "epochs", "seed"):
            override = getattr(args, field, None)
            if override is not None:
                train_kwargs[field] = override
        train_config = TrainConfig.from_dict(train_kwargs)
    except (TypeError, ModelError) as exc:
        raise UsageError(f"bad config: {exc}") from exc
    return model_config, train_config


def cmd_train(args) -> int:
    from .datagen import read_manifest

    config = _load_run_config(args.config)
    model_config, train_config = _configs_from_run(config, args)
    instances = read_manifest(config["dataset"])
    log.info(
        "training on %d instances (hidden_dim=%d, iterations=%d, epochs=%d)",
        len(instances),
        model_config.hidden_dim,
        model_config.iterations,
        train_config.epochs,
    )
    result = train(instances, model_config, train_config, log=log.info)
    fingerprint = config_fingerprint(model_config, train_config)
    checkpoint_path = config.get("checkpoint", "model.ckpt")
    curve_path = config.get("curve", "curve.json")
    save_checkpoint(result.best_values, checkpoint_path)
    meta = {
        "model": model_config.to_dict(),
        "train": train_config.to_dict(),
        "dataset": config["dataset"],
        "fingerprint": fingerprint,
        "best_loss": result.best_loss,
        "epochs_run": result.epochs_run,
        "version": __version__,
    }
    Path(checkpoint_path + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    Path(curve_path).write_text(
        json.dumps(meta | {"epoch_losses": result.epoch_losses}, indent=2) + "\n"
    )
    log.info(
        "finished: best loss %.6f after %d epochs (%.1fs); checkpoint %s",
        result.best_loss,
        result.epochs_run,
        result.runtime_seconds,
        checkpoint_path,
    )
    return EXIT_OK


def _load_checkpointed_model(checkpoint_path: str):
    meta_path = checkpoint_path + ".meta.json"
    try:
        meta = json.loads(Path(meta_path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read {meta_path}: {exc.strerror}") from exc
    model_config = ModelConfig.from_dict(meta["model"])
    params = init_params(model_config, seed=0)
    params.store.load_values(load_checkpoint(checkpoint_path))
    return params, model_config, meta


def _eval_job(packed):
    instance, params, config = packed
    from .circuit import evaluate
    from .model import predict_assignment

    assignment, _ = predict_assignment(instance.circuit, params, config)
    return len(instance.circuit.inputs), evaluate(instance.circuit, assignment) == 1


def cmd_eval(args) -> int:
    from .datagen import read_manifest
    from .training import EvalReport
    import time

    params, model_config, meta = _load_checkpointed_model(args.checkpoint)
    instances = read_manifest(args.dataset)
    started = time.perf_counter()
    results = _pool_map(
        _eval_job, [(inst, params, model_config) for inst in instances], args.jobs
    )
    per_inputs: dict[int, list[int]] = {}
    solved = 0
    for n, ok in results:
        bucket = per_inputs.setdefault(n, [0, 0])
        bucket[0] += ok
        bucket[1] += 1
        solved += ok
    report = EvalReport(
        solved=solved,
        total=len(instances),
        per_inputs={n: (s, t) for n, (s, t) in per_inputs.items()},
        runtime_seconds=time.perf_counter() - started,
        fingerprint=meta.get("fingerprint", ""),
    )
    print(json.dumps(report.to_dict(), indent=2))
    log.info("solution rate %.4f on %d instances", report.solution_rate, report.total)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .autodiff import Tape, Tensor, grad_check
    from .circuit import xor_circuit
    from .model import forward_probs
    from .training import instance_loss
    from .datagen import symmetric_suite

    failures = []

    def check(name, build_loss, tensors, bound=1e-4):
        err = grad_check(build_loss, tensors, h=1e-5)
        status = "ok" if err < bound else "FAIL"
        log.info("%-28s max rel err %.3e  %s", name, err, status)
        if err >= bound:
            failures.append(name)

    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(4, 3)))
    w = Tensor(rng.normal(size=(4, 3)), requires_grad=True)

    def elementwise():
        tape = Tape()
        return tape, tape.sum(tape.tanh(tape.mul(x, w)))

    check("primitives (mul/tanh/sum)", elementwise, [w])

    config = ModelConfig(hidden_dim=3, iterations=2, decoder_dim=2)
    params = init_params(config, seed=1)
    instance = symmetric_suite()[0]

    def end_to_end():
        tape = Tape()
        return tape, instance_loss(instance, params, config, tape)

    check("end-to-end loss", end_to_end, list(params.store.params.values()))
    if failures:
        log.error("gradient check failed: %s", ", ".join(failures))
        return EXIT_FAILURE
    print("gradcheck passed")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="circuitsat",
        description="Circuit satisfiability toolkit: data generation, "
        "oracle solving, and learned assignment prediction.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="verbose logs on stderr"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-sr", help="generate satisfiable/unsatisfiable CNF pairs")
    p.add_argument("--n", type=int, required=True, help="variable count")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_gen_sr)

    p = sub.add_parser("gen-aig", help="generate random labeled circuits")
    p.add_argument("--inputs", type=int, required=True)
    p.add_argument("--gates", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_gen_aig)

    p = sub.add_parser("gen-symmetric", help="write the fixed 10-instance suite")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_symmetric)

    p = sub.add_parser("convert", help="convert between DIMACS and circuit formats")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--to-circuit", metavar="DIMACS")
    group.add_argument("--to-cnf", metavar="CIRCUIT")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("oracle-solve", help="solve a DIMACS file exactly")
    p.add_argument("dimacs")
    p.set_defaults(func=cmd_oracle_solve)

    p = sub.add_parser("train", help="train a model from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--epochs", type=int, default=None, help="override config epochs")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--lr", type=float, default=None, help="override config lr")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="run the finite-difference suite")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"circuitsat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (
        CircuitError,
        CircuitParseError,
        DimacsParseError,
        DatagenError,
        ModelError,
        TrainingError,
    ) as exc:
        log.error("%s", exc)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
