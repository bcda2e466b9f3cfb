"""Command line interface: ``copmdp <verb> ...``.

Exit codes: 0 success, 1 unexpected error, 2 usage or configuration error,
3 unreadable or malformed input, 4 verification failure, 5 instance too large
for an exact oracle.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Sequence

import yaml

from ..core import Instance, PartialSolution
from ..imitation import ConfigError, TrainConfig, build_examples, make_config
from ..oracles import SizeLimitExceeded, held_karp_matrix, solve_exact
from ..policy import load_model, save_model
from ..search import beam_search, greedy_rollout
from . import tsplib
from .files import FileFormatError, Record, generate, read_records, write_records
from .report import Result, format_table, natural_value, report, to_json
from .svg import render_svg

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_INPUT, EXIT_VERIFY, EXIT_SIZE = 0, 1, 2, 3, 4, 5


class UsageError(Exception):
    pass


# -- worker helpers ------------------------------------------------------------------


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    """Ordered map, in worker processes when ``workers > 1``."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def _solve(inst: Instance) -> Record:
    sol, obj = solve_exact(inst)
    return Record(inst, sol, obj)


_MODEL = None


def _eval_one(job: tuple[str, Instance, int, int | None, str]) -> tuple[Any, float, float]:
    global _MODEL
    path, inst, beam, knn, select = job
    if _MODEL is None or _MODEL[0] != path:
        _MODEL = (path, load_model(path))
    t0 = time.perf_counter()
    if beam > 1:
        res = beam_search(_MODEL[1], inst, beam, knn, select)
    else:
        res = greedy_rollout(_MODEL[1], inst, knn)
    return res.solution, res.objective, time.perf_counter() - t0


# -- verbs ---------------------------------------------------------------------------------


def cmd_generate(a: argparse.Namespace) -> int:
    generate(a.problem, a.n, a.count, a.seed, a.out, **_gen_params(a))
    print(f"wrote {a.count} {a.problem} instances to {a.out}")
    return EXIT_OK


def cmd_solve_exact(a: argparse.Namespace) -> int:
    header, records = read_records(a.data)
    solved = _map(_solve, [r.instance for r in records], a.workers)
    meta = {k: v for k, v in header.items() if k not in ("format", "version", "kind")}
    write_records(a.out, "dataset", solved, **meta)
    print(f"solved {len(solved)} instances into {a.out}")
    return EXIT_OK


def cmd_make_dataset(a: argparse.Namespace) -> int:
    insts = generate(a.problem, a.n, a.count, a.seed, **_gen_params(a))
    solved = _map(_solve, insts, a.workers)
    meta = {"problem": a.problem, "n": a.n, "count": a.count, "seed": a.seed, **_gen_params(a)}
    write_records(a.out, "dataset", solved, **meta)
    print(f"wrote {len(solved)} solved {a.problem} instances to {a.out}")
    return EXIT_OK


TRAIN_KEYS = [f for f in TrainConfig.__dataclass_fields__]


def cmd_train(a: argparse.Namespace) -> int:
    header, records = read_records(a.data, "dataset")
    values = {k: getattr(a, k) for k in TRAIN_KEYS if getattr(a, k, None) is not None}
    values.setdefault("problem", header.get("problem", "tsp"))
    cfg = make_config(values)
    pairs = [(r.instance, r.solution) for r in records]
    if any(s is None for _, s in pairs):
        raise FileFormatError("every training record needs a solution")
    held: list[tuple[Instance, float]] = []
    if a.held_out:
        _, hrec = read_records(a.held_out, "dataset")
        held = [(r.instance, float(r.objective)) for r in hrec]
    from ..imitation import train

    model, history = train(
        build_examples(pairs), cfg, held, a.log,
        on_epoch=lambda r: print(json.dumps(r), flush=True) if a.verbose else None,
    )
    save_model(model, a.out)
    print(f"trained {cfg.epochs} epochs, final loss {history[-1]['loss']:.4f}; model saved to {a.out}")
    return EXIT_OK


def cmd_eval(a: argparse.Namespace) -> int:
    header, records = read_records(a.data)
    load_model(a.model)  # fail early on a bad checkpoint
    jobs = [(a.model, r.instance, a.beam, a.knn, a.select) for r in records]
    out = _map(_eval_one, jobs, a.workers)
    rows, results = [], []
    problem = records[0].instance.problem if records else header.get("problem", "")
    for i, (rec, (sol, obj, secs)) in enumerate(zip(records, out)):
        extra: dict[str, Any] = {"index": i}
        if rec.objective is not None:
            extra["reference"] = rec.objective
            results.append(Result(natural_value(problem, obj), natural_value(problem, rec.objective), secs))
        rows.append(Record(rec.instance, sol, obj, extra))
    write_records(a.out, "results", rows, problem=problem, count=len(rows))
    label = f"beam{a.beam}" if a.beam > 1 else "greedy"
    if results and len(results) == len(records) and all(r.reference for r in results):
        rep = report(problem, results, label)
        print(format_table([rep]))
        if a.report:
            Path(a.report).write_text(to_json([rep]) + "\n")
    else:
        print(f"wrote {len(rows)} results to {a.out} (no references, no gap report)")
    return EXIT_OK


def cmd_verify(a: argparse.Namespace) -> int:
    from ..verify import bisimulation_suite, soundness_suite

    ok = True
    for problem in a.problems:
        if a.suite in ("bisimulation", "all"):
            rep = bisimulation_suite(problem, a.count or 1000, a.seed)
            print(rep.line())
            for f in rep.failures[:5]:
                print("   ", f)
            ok &= rep.ok
        if a.suite in ("soundness", "all"):
            rep = soundness_suite(problem, a.count or 100, a.seed)
            print(rep.line())
            for f in rep.failures[:5]:
                print("   ", f)
            ok &= rep.ok
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_bench(a: argparse.Namespace) -> int:
    if a.opt and len(a.opt) != len(a.files):
        raise UsageError("--opt needs one value per file")
    model = load_model(a.model) if a.model else None
    if model is None and not a.exact:
        raise UsageError("bench needs --model or --exact")
    rows = []
    for k, f in enumerate(a.files):
        prob = tsplib.parse(f)
        inst = prob.instance()
        t0 = time.perf_counter()
        if a.exact and prob.type == "TSP":
            # optimise the integer distances the file is scored with
            m = prob.dimension
            order_hk, _ = held_karp_matrix(prob.nint_matrix(), 0, 0, list(range(1, m)))
            sol = PartialSolution.of(order_hk)
        elif a.exact:
            sol, _ = solve_exact(inst)
        elif a.beam > 1:
            sol = beam_search(model, inst, a.beam, a.knn).solution
        else:
            sol = greedy_rollout(model, inst, a.knn).solution
        secs = time.perf_counter() - t0
        order = prob.node_order()
        route = [order[i] for i in inst.route(sol)]  # type: ignore[attr-defined]
        length = tsplib.route_length(prob.coords, route)
        ref = a.opt[k] if a.opt else None
        line = {"name": prob.name, "length": length, "seconds": round(secs, 3)}
        if ref is not None:
            line["reference"] = ref
            line["gap"] = (length - ref) / ref
            rows.append(Result(float(length), float(ref), secs))
        print(json.dumps(line, sort_keys=True))
    if rows:
        print(format_table([report(prob.type.lower(), rows, "bench")]))
    return EXIT_OK


def cmd_render(a: argparse.Namespace) -> int:
    _, records = read_records(a.data)
    if not 0 <= a.index < len(records):
        raise UsageError(f"index {a.index} out of range (0..{len(records) - 1})")
    rec = records[a.index]
    sol = rec.solution
    if a.model:
        sol = greedy_rollout(load_model(a.model), rec.instance).solution
    if sol is None:
        sol = rec.instance.empty_solution()
    render_svg(rec.instance, sol, a.out, title=f"{rec.instance.problem} #{a.index}")
    print(f"wrote {a.out}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------------


def _gen_params(a: argparse.Namespace) -> dict[str, Any]:
    out = {}
    for key in ("capacity", "budget", "asym_noise", "id_dim"):
        v = getattr(a, key, None)
        if v is not None:
            out[key] = v
    return out


def _add_gen_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--problem", choices=["tsp", "atsp", "cvrp", "op", "kp"])
    p.add_argument("--n", type=int, help="cities / customers / nodes / items")
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--capacity", type=float, help="CVRP or KP capacity override")
    p.add_argument("--budget", type=float, help="OP distance budget override")
    p.add_argument("--asym-noise", dest="asym_noise", type=float, help="ATSP multiplicative noise width")
    p.add_argument("--id-dim", dest="id_dim", type=int, help="extra random identifier channels")


def build_parser() -> argparse.ArgumentParser:
    root = argparse.ArgumentParser(prog="copmdp", description=__doc__.splitlines()[0])
    sub = root.add_subparsers(dest="verb", required=True)

    def verb(name: str, fn: Callable, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help)
        p.set_defaults(fn=fn)
        p.add_argument("--config", help="flat YAML file whose keys provide flag defaults")
        return p

    p = verb("generate", cmd_generate, "write random instances")
    _add_gen_flags(p)
    p.add_argument("--out")

    p = verb("solve-exact", cmd_solve_exact, "solve an instance file with the exact oracles")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--workers", type=int)

    p = verb("make-dataset", cmd_make_dataset, "generate and solve instances in one go")
    _add_gen_flags(p)
    p.add_argument("--out")
    p.add_argument("--workers", type=int)

    p = verb("train", cmd_train, "imitation-train a policy on a dataset")
    p.add_argument("--data")
    p.add_argument("--held-out", dest="held_out")
    p.add_argument("--out")
    p.add_argument("--log", help="metrics JSON-lines file")
    p.add_argument("--verbose", action="store_true", default=None)
    for f in TrainConfig.__dataclass_fields__.values():
        kind = {"int": int, "float": float, "str": str}[f.type if isinstance(f.type, str) else f.type.__name__]
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=kind)

    p = verb("eval", cmd_eval, "decode instances with a trained policy")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--beam", type=int, help="beam width (1 = greedy)")
    p.add_argument("--knn", type=int, help="restrict the model input to the k nearest nodes")
    p.add_argument("--select", choices=["objective", "score"], help="beam final selection rule")
    p.add_argument("--report", help="write the gap report as JSON")
    p.add_argument("--workers", type=int)

    p = verb("verify", cmd_verify, "run the bisimulation and soundness suites")
    p.add_argument("--problems", nargs="+", choices=["tsp", "atsp", "cvrp", "op", "kp"])
    p.add_argument("--suite", choices=["bisimulation", "soundness", "all"])
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)

    p = verb("bench", cmd_bench, "score TSPLib/CVRPLib files with integer EUC_2D distances")
    p.add_argument("files", nargs="+")
    p.add_argument("--model")
    p.add_argument("--exact", action="store_true", default=None)
    p.add_argument("--opt", type=float, nargs="+", help="published optimum per file")
    p.add_argument("--beam", type=int)
    p.add_argument("--knn", type=int)

    p = verb("render", cmd_render, "draw a solution as SVG")
    p.add_argument("--data")
    p.add_argument("--index", type=int)
    p.add_argument("--model", help="solve with this policy instead of the stored solution")
    p.add_argument("--out")
    return root


DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "count": None,
    "workers": os.cpu_count() or 1,
    "beam": 1,
    "knn": None,
    "select": "objective",
    "suite": "all",
    "problems": ["tsp", "atsp", "cvrp", "op", "kp"],
    "index": 0,
    "verbose": False,
    "exact": False,
}
REQUIRED = {
    "generate": ("problem", "n", "count", "out"),
    "solve-exact": ("data", "out"),
    "make-dataset": ("problem", "n", "count", "out"),
    "train": ("data", "out"),
    "eval": ("model", "data", "out"),
    "render": ("data", "out"),
}


def _resolve(a: argparse.Namespace) -> argparse.Namespace:
    """Flags win over config-file keys, which win over built-in defaults."""
    if a.config:
        raw = yaml.safe_load(Path(a.config).read_text()) or {}
        if not isinstance(raw, dict):
            raise UsageError("config file must be a flat mapping")
        for key, value in raw.items():
            dest = key.replace("-", "_")
            if not hasattr(a, dest):
                raise UsageError(f"unknown config key {key!r} for {a.verb}")
            if getattr(a, dest) is None:
                setattr(a, dest, value)
    for key, value in DEFAULTS.items():
        if hasattr(a, key) and getattr(a, key) is None:
            setattr(a, key, value)
    missing = [k for k in REQUIRED.get(a.verb, ()) if getattr(a, k) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return a


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    try:
        return a.fn(_resolve(a))
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileFormatError, tsplib.TsplibError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SizeLimitExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIZE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
