"""Command-line experiment runner.

Every subcommand takes its parameters from flags and, optionally, a JSON
file given with ``--config``; flags override the file and unknown keys are
rejected.  Randomness comes from ``--seed`` only: each subcommand works with
``SeededRng(seed).derive(<subcommand>)`` and derives one child per instance
index.  With ``--out`` the result is written to that path and a run manifest
to ``<out>.manifest.json``; the manifest's ``hashed`` section omits wall time
so identical configurations give identical hashes.

Exit codes: 2 for configuration errors, 1 for failed checks or guards, 0 otherwise.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np
import scipy

from . import __version__
from . import acceptance as acc
from . import disentangle as dis
from . import hamiltonian as ham
from . import verifiers as ver
from .games import GameInstance, copy_game_estimates, minimax_equality_check, solve_alternating, solve_grid_pure
from .protocols import product_accept_prob, swap_accept_prob, swap_effect, symmetric_projector
from .qstate import (
    EffectOperator,
    PureState,
    SeededRng,
    array_from_json_obj,
    as_density,
    from_json_obj,
    random_density,
    random_effect,
    random_pure_state,
    tensor,
)


class ConfigError(Exception):
    pass


class CheckFailed(Exception):
    """Raised after the result is written when the run's own check did not pass."""


@dataclass(frozen=True)
class Option:
    name: str
    type: Callable
    default: Any
    help: str


@dataclass(frozen=True)
class Subcommand:
    name: str
    run: Callable
    options: tuple
    stochastic: bool | Callable[[dict], bool]
    default_format: str = "json"
    help: str = ""


def _read_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def _int_list(text) -> list[int]:
    if isinstance(text, list):
        return [int(x) for x in text]
    return [int(x) for x in str(text).split(",") if x.strip()]


def parallel_map(fn, items, threads: int) -> list:
    """Ordered map; results do not depend on the thread count."""
    items = list(items)
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# -- subcommands --------------------------------------------------------------------


def _load_state(path: str):
    """Amplitude vectors load as pure states, square matrices as densities."""
    obj = _read_json(path)
    try:
        arr, _ = array_from_json_obj(obj)
        return from_json_obj(obj, "pure" if arr.ndim == 1 else "density")
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{path} does not hold a state object") from exc


def run_swap_prob(p: dict, rng: SeededRng | None, threads: int) -> dict:
    if p["rho"] or p["sigma"]:
        if not (p["rho"] and p["sigma"]):
            raise ConfigError("give both --rho and --sigma")
        rho, sigma = _load_state(p["rho"]), _load_state(p["sigma"])
        eff = swap_effect(rho.dim)
        joint = np.kron(as_density(rho).matrix, as_density(sigma).matrix)
        return {"accept_prob": swap_accept_prob(rho, sigma),
                "projector_trace": float(np.real(np.trace(eff.matrix @ joint)))}
    rows = []
    for k in range(p["pairs"]):
        r = rng.derive(k)
        rho = random_density([p["dim"]], r.derive("rho"))
        sigma = random_density([p["dim"]], r.derive("sigma"))
        rows.append({"index": k, "accept_prob": swap_accept_prob(rho, sigma),
                     "overlap": float(np.real(np.trace(rho.matrix @ sigma.matrix)))})
    return {"dim": p["dim"], "pairs": rows}


def run_product_prob(p: dict, rng: SeededRng | None, threads: int) -> dict:
    if p["rho"] or p["sigma"]:
        if not (p["rho"] and p["sigma"]):
            raise ConfigError("give both --rho and --sigma")
        rho, sigma = _load_state(p["rho"]), _load_state(p["sigma"])
    elif p["state"] == "epr":
        rho = sigma = PureState(np.array([1, 0, 0, 1]) / math.sqrt(2), [2, 2])
    elif p["state"] == "random":
        if rng is None:
            raise ConfigError("random states need --seed")
        dims = _int_list(p["dims"])
        rho = random_pure_state(dims, rng.derive("rho"))
        sigma = random_pure_state(dims, rng.derive("sigma"))
    else:
        raise ConfigError(f"unknown state {p['state']!r}")
    n = rho.layout.n_factors
    joint = np.kron(as_density(rho).matrix, as_density(sigma).matrix)
    p_swap = float(np.real(np.trace(symmetric_projector(list(rho.layout.factor_dims) * 2, list(range(n)),
                                                        list(range(n, 2 * n))) @ joint)))
    return {"p_prod": product_accept_prob(rho, sigma), "p_swap": p_swap}


def run_game_solve(p: dict, rng: SeededRng | None, threads: int) -> dict:
    if not p["file"]:
        raise ConfigError("game-solve needs --file")
    game = GameInstance.from_json(_read_json(p["file"]))
    if p["method"] == "grid":
        est = solve_grid_pure(game, p["resolution"])
    elif p["method"] == "alternating":
        if rng is None:
            raise ConfigError("the alternating solver needs --seed")
        est = solve_alternating(game, rng, restarts=p["restarts"])
    else:
        raise ConfigError(f"unknown method {p['method']!r}")
    return {
        "value": est.value,
        "method": est.method,
        "strategy": [[[z.real, z.imag] for z in np.ravel(getattr(s, "amplitudes", getattr(s, "matrix", s)))]
                     for s in est.strategy],
        "certificate": _jsonable(est.certificate),
    }


def run_copy_game(p: dict, rng: SeededRng | None, threads: int) -> dict:
    n = p["n"]
    if not 1 <= n <= 3:
        raise ConfigError("--n must be 1, 2 or 3")
    pure, mixed = copy_game_estimates(n, SeededRng(0).derive("copy-game"))
    closed = 0.5 + 2.0 ** (-(n + 1))
    if abs(pure.value - 1) > 1e-6 or abs(mixed.value - closed) > 1e-6:
        raise CheckFailed(f"solver values {pure.value}, {mixed.value} disagree with closed forms")
    return {"n": n, "pure": 1.0, "mixed": closed}


def run_qma2_curve(p: dict, rng: SeededRng | None, threads: int) -> list[dict]:
    eps, step = p["eps"], p["step"]
    if not 0 < step <= 0.5:
        raise ConfigError("--step must lie in (0, 0.5]")
    d_star, _ = ver.qma2_curve_minimum(eps)
    deltas = sorted(set(np.round(np.arange(0.0, 1.0 + step / 2, step), 12).tolist()) | {d_star})
    values = [ver.qma2_acceptance_curve(min(d, 1.0), eps) for d in deltas]
    i_min = int(np.argmin(values))
    return [{"delta": d, "value": v, "is_min": int(k == i_min)} for k, (d, v) in enumerate(zip(deltas, values))]


def run_compile_qsigma3(p: dict, rng: SeededRng | None, threads: int) -> dict:
    if p["file"]:
        h = from_json_obj(_read_json(p["file"]), "effect")
        c, s = p["c"], p["s"]
    elif p["fixture"] == "yes":
        h, c, s = ver.toy_psigma2_yes()
    elif p["fixture"] in ("no-zero", "no-second"):
        h, c, s = ver.toy_psigma2_no(p["fixture"][3:])
    else:
        raise ConfigError("give --file or --fixture yes|no-zero|no-second")
    compiled = ver.compile_psigma2_to_qsigma3(h, c, s)
    out = {"compiled": json.loads(compiled.to_json())}
    if p["verify"]:
        yes = p["fixture"] == "yes" if not p["file"] else bool(p["yes"])
        report = ver.verify_compiled_game(compiled, yes_instance=yes, tol=p["tol"],
                                          rng=rng or SeededRng(0).derive("compile-qsigma3"))
        out["verification"] = report.to_dict()
        if not report.passed:
            out["_failed"] = True
    return out


def run_peaked(p: dict, rng: SeededRng, threads: int) -> dict:
    if p["file"]:
        inst = dis.PeakedInstance.from_json(_read_json(p["file"]))
    elif p["n"]:
        inst = dis.PeakedInstance.random(p["n"], rng.derive("instance"), gamma=p["gamma"])
    else:
        raise ConfigError("give --file or --n")
    seeds = p["seeds"]
    z = np.array(parallel_map(lambda j: dis.miss_mass(inst, dis.hitting_set(inst, rng.derive("X", j))[0]),
                              range(seeds), threads))
    mean = float(z.mean())
    se = float(z.std(ddof=1) / math.sqrt(seeds)) if seeds > 1 else float("inf")
    bound = inst.gamma * inst.eps
    out = {"N": inst.N, "eps": inst.eps, "gamma": inst.gamma, "m": inst.bound(), "mean_Z": mean, "stderr": se,
           "gamma_eps_bound": bound, "expected_Z": dis.expected_miss_mass(inst, inst.bound()),
           "pass": bool(mean <= bound + 3 * se)}
    if inst.N <= 16:
        _, size = dis.hitting_set_exact(inst)
        out["exact_min_size"] = size
        out["pass"] = bool(out["pass"] and size <= inst.bound())
    if not out["pass"]:
        out["_failed"] = True
    return out


def _ensemble_from_json(obj, ell: int) -> dis.StateEnsemble:
    return dis.StateEnsemble([(float(c["weight"]), from_json_obj(c["state"], "pure")) for c in obj], ell)


def run_gamma_channel(p: dict, rng: SeededRng | None, threads: int) -> dict:
    params = dis.DisentanglerParams.toy(p["k"], p["kprime"], p["delta"])
    if p["file"]:
        obj = _read_json(p["file"])
        inputs = [_ensemble_from_json(e, params.ell) for e in obj["ensembles"]]
    else:
        if p["state"] == "product":
            if rng is None:
                raise ConfigError("random product states need --seed")
            psi = tensor(random_pure_state([2], rng.derive("a")), random_pure_state([2], rng.derive("b")))
        elif p["state"] == "epr":
            psi = PureState(np.array([1, 0, 0, 1]) / math.sqrt(2), [2, 2])
        elif p["state"] == "random":
            if rng is None:
                raise ConfigError("random states need --seed")
            psi = random_pure_state([2, 2], rng.derive("psi"))
        else:
            raise ConfigError(f"unknown state {p['state']!r}")
        inputs = [dis.StateEnsemble([(1.0, psi)], params.ell)] * 4
    report = dis.gamma_channel(inputs, params, rng=rng)
    return _jsonable(report.to_dict())


def run_amplify_toy(p: dict, rng: SeededRng, threads: int) -> dict:
    eff = EffectOperator(np.kron(np.diag([p["c"], p["s"]]), np.eye(2)), [2, 2])
    from .games import Purity, Quantifier, QuantifierPrefix, Slot

    prefix = QuantifierPrefix((Slot(Quantifier.EXISTS, 2, Purity.PURE), Slot(Quantifier.FORALL, 2, Purity.PURE)))
    game = GameInstance(eff, prefix, p["c"], p["s"])
    first = PureState([1, 0], [2])
    second = PureState(np.array([1, 1]) / math.sqrt(2), [2])
    sent = first if p["distance"] == 0 else dis.far_transcript(first, p["distance"], rng.derive("far"))
    fixture = dis.StrategyFixture([[(1.0, dis.RoundTable([(None, first)]))],
                                   [(1.0, dis.RoundTable([(sent, second)]))]])
    W = p["W"] or dis.swap_repetitions(p["swap_eps"], 1 / 64)
    params = dis.AmplifierParams(W=W, T=p["T"], c=p["c"], s=p["s"])
    out = dis.transcript_amplifier_toy(game, fixture, params, rng.derive("episodes"), episodes=p["episodes"])
    out["transcript_distance"] = p["distance"]
    return out


def _load_circuit(p: dict) -> ham.GateCircuit:
    if p.get("file"):
        return ham.GateCircuit.from_json(_read_json(p["file"]))
    if p.get("corpus_index") is not None:
        corpus = ham.circuit_corpus()
        if not 0 <= p["corpus_index"] < len(corpus):
            raise ConfigError(f"--corpus-index must lie in [0, {len(corpus)})")
        return corpus[p["corpus_index"]]
    raise ConfigError("give --file or --corpus-index")


def run_kitaev(p: dict, rng: SeededRng | None, threads: int) -> dict:
    circ = _load_circuit(p)
    kh = ham.kitaev_compile(circ)
    summ = ham.spectrum_summary(kh.matrix)
    out = {"n_qubits": kh.n_qubits, "m": circ.m, "registers": kh.registers, "spectrum": summ,
           "expected_kernel_dim": 2 ** circ.n_input, "gap_times_m2": summ["gap"] * circ.m ** 2,
           "terms": [{"label": lab, "support": list(sup)} for lab, (_, sup) in zip(kh.labels, kh.terms)]}
    if p["emit_matrix"]:
        out["hamiltonian"] = json.loads(ham.SparseHamiltonian.from_matrix(kh.matrix).to_json())
    if summ["kernel_dim"] != 2 ** circ.n_input:
        out["_failed"] = True
    return out


def run_psh_reduce(p: dict, rng: SeededRng | None, threads: int) -> dict:
    if p["fixture"]:
        circ, c, s = ham.psh_fixture(p["fixture"])
    else:
        circ = _load_circuit(p)
        c, s = p["c"], p["s"]
    red = ham.psh_hardness_reduce(circ, p["i"], c, s, p["J1"], p["J2"])
    out = {"a": red.a, "b": red.b, "c": c, "s": s, "J1": red.J1, "J2": red.J2, "m": red.m,
           "registers": red.registers, "slot_qubits": list(red.instance.slot_qubits),
           "pattern": [q.value for q in red.instance.pattern], "sparsity_bound": red.sparsity_bound}
    if p["emit_instance"]:
        out["instance"] = json.loads(red.instance.to_json())
    if p["evaluate"]:
        est = ham.quantified_energy_grid(red.instance, p["resolution"], red.matrix)
        out["grid_energy"] = est.value
        out["classification"] = ham.classify(est.value, red.a, red.b)
        if p["i"] == 2 and red.message_qubits == 1:
            out["honest_energy"] = ham.honest_energy_grid(red, p["resolution"])
    return out


def run_minimax_check(p: dict, rng: SeededRng | None, threads: int) -> dict:
    if p["file"]:
        effects = [from_json_obj(_read_json(p["file"]), "effect")]
    else:
        if rng is None:
            raise ConfigError("random effects need --seed")
        dims = _int_list(p["dims"])
        effects = [random_effect(dims, rng.derive(k)) for k in range(p["effects"])]
    results = parallel_map(lambda m: minimax_equality_check(m, tol=p["tol"]), effects, threads)
    worst = max(r["difference"] for r in results)
    out = {"results": results, "max_difference": worst, "passed": all(r["passed"] for r in results)}
    if not out["passed"]:
        out["_failed"] = True
    return out


def run_complement(p: dict, rng: SeededRng | None, threads: int) -> dict:
    if p["file"]:
        inst = ham.QuantifiedHamiltonianInstance.from_json(_read_json(p["file"]))
    elif p["fixture"]:
        circ, c, s = ham.psh_fixture(p["fixture"])
        inst = ham.psh_hardness_reduce(circ, 2, c, s).instance
    else:
        raise ConfigError("give --file or --fixture")
    comp = ham.complement_reduce(inst)
    out = {"a": comp.a, "b": comp.b, "pattern": [q.value for q in comp.pattern],
           "slot_qubits": list(comp.slot_qubits)}
    if p["emit_instance"]:
        out["instance"] = json.loads(comp.to_json())
    if p["evaluate"]:
        e0 = ham.quantified_energy_grid(inst, p["resolution"]).value
        e1 = ham.quantified_energy_grid(comp, p["resolution"]).value
        out.update(energy=e0, complement_energy=e1, original=ham.classify(e0, inst.a, inst.b),
                   complemented=ham.classify(e1, comp.a, comp.b))
        if abs(e0 + e1) > 1e-9:
            out["_failed"] = True
    return out


def run_acceptance(p: dict, rng: SeededRng | None, threads: int) -> dict:
    only = _int_list(p["only"]) if p["only"] else sorted(acc.CRITERIA)
    bad = [n for n in only if n not in acc.CRITERIA]
    if bad:
        raise ConfigError(f"unknown criteria {bad}")
    seed = p["seed_value"]
    results = []
    for n in only:
        r = acc.CRITERIA[n](seed)
        print(r.line(), file=sys.stderr)
        results.append(r)
    out = {"criteria": [_jsonable({k: v for k, v in r.to_dict().items() if k != "runtime"}) for r in results],
           "passed": all(r.passed for r in results)}
    if not out["passed"]:
        out["_failed"] = True
    return out


# -- registry -----------------------------------------------------------------------

_STATE_FILES = (Option("rho", str, None, "JSON state file"), Option("sigma", str, None, "JSON state file"))

SUBCOMMANDS = {s.name: s for s in [
    Subcommand("swap-prob", run_swap_prob,
               _STATE_FILES + (Option("dim", int, 2, "dimension of random states"),
                               Option("pairs", int, 10, "number of random pairs")),
               lambda p: not (p["rho"] or p["sigma"]), help="SWAP-test acceptance probabilities"),
    Subcommand("product-prob", run_product_prob,
               _STATE_FILES + (Option("state", str, "epr", "epr or random"),
                               Option("dims", str, "2,2", "factor dims for random states")),
               lambda p: p["state"] == "random" and not p["rho"], help="product-test acceptance"),
    Subcommand("game-solve", run_game_solve,
               (Option("file", str, None, "game JSON"), Option("method", str, "alternating", "alternating or grid"),
                Option("resolution", float, 0.01, "grid step"), Option("restarts", int, 8, "solver restarts")),
               lambda p: p["method"] == "alternating", help="value of a quantified game"),
    Subcommand("copy-game", run_copy_game, (Option("n", int, 1, "qubits per message"),), False,
               help="pure and mixed copy-game values"),
    Subcommand("qma2-curve", run_qma2_curve,
               (Option("eps", float, 0.0, "completeness error"), Option("step", float, 0.001, "delta step")),
               False, "csv", help="acceptance lower bound as a function of distance"),
    Subcommand("compile-qsigma3", run_compile_qsigma3,
               (Option("file", str, None, "bipartite effect JSON"), Option("fixture", str, "no-second",
                                                                            "yes, no-zero or no-second"),
                Option("c", float, 1.0, "completeness"), Option("s", float, 0.0, "soundness"),
                Option("verify", int, 1, "run the grid check"), Option("yes", int, 0, "file is a YES instance"),
                Option("tol", float, 0.02, "verification tolerance")),
               False, help="three-register compilation"),
    Subcommand("peaked", run_peaked,
               (Option("file", str, None, "instance JSON"), Option("n", int, 0, "random instance size"),
                Option("gamma", float, 0.25, "gamma for random instances"), Option("seeds", int, 200, "samples")),
               True, help="hitting-set miss mass"),
    Subcommand("gamma-channel", run_gamma_channel,
               (Option("file", str, None, "four ensembles JSON"), Option("k", int, 2, "output copies"),
                Option("kprime", int, 3, "product tests"), Option("delta", float, 0.5, "target distance"),
                Option("state", str, "product", "product, epr or random")),
               lambda p: not p["file"] and p["state"] != "epr", help="disentangler on ensembles"),
    Subcommand("amplify-toy", run_amplify_toy,
               (Option("episodes", int, 1000, "episodes"), Option("W", int, 0, "SWAP repetitions (0: derive)"),
                Option("swap_eps", float, 0.5, "distance the SWAP rounds must catch"),
                Option("T", int, 50, "final repetitions"), Option("c", float, 0.9, "completeness"),
                Option("s", float, 0.1, "soundness"), Option("distance", float, 0.0, "transcript distance")),
               True, help="toy transcript amplifier"),
    Subcommand("kitaev", run_kitaev,
               (Option("file", str, None, "circuit JSON"), Option("corpus_index", int, None, "built-in circuit"),
                Option("emit_matrix", int, 0, "include the sparse Hamiltonian")),
               False, help="clock Hamiltonian spectrum"),
    Subcommand("psh-reduce", run_psh_reduce,
               (Option("file", str, None, "circuit JSON"), Option("corpus_index", int, None, "built-in circuit"),
                Option("fixture", str, None, "yes, no, yes-graded or no-graded"), Option("i", int, 2, "alternations"),
                Option("c", float, 1.0, "completeness"), Option("s", float, 0.0, "soundness"),
                Option("J1", float, None, "symmetry penalty"), Option("J2", float, None, "clock penalty"),
                Option("emit_instance", int, 0, "include the instance"), Option("evaluate", int, 1, "grid energy"),
                Option("resolution", float, 0.05, "grid step")),
               False, help="quantified Hamiltonian from a verifier"),
    Subcommand("minimax-check", run_minimax_check,
               (Option("file", str, None, "effect JSON"), Option("effects", int, 10, "random effects"),
                Option("dims", str, "2,2", "slot dims"), Option("tol", float, 1e-6, "tolerance")),
               lambda p: not p["file"], help="sup-inf versus inf-sup for mixed slots"),
    Subcommand("complement", run_complement,
               (Option("file", str, None, "instance JSON"), Option("fixture", str, None, "reduction fixture"),
                Option("emit_instance", int, 0, "include the instance"), Option("evaluate", int, 1, "grid energies"),
                Option("resolution", float, 0.05, "grid step")),
               False, help="complement of a quantified Hamiltonian instance"),
    Subcommand("acceptance", run_acceptance, (Option("only", str, "", "comma-separated criteria"),), False,
               help="run the exit criteria"),
]}

COMMON_KEYS = {"seed", "out", "format", "threads"}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, set, frozenset)):
        items = sorted(x) if isinstance(x, (set, frozenset)) else x
        return [_jsonable(v) for v in items]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def _render(result, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(_jsonable(result), sort_keys=True, ensure_ascii=False, indent=1) + "\n"
    rows = result if isinstance(result, list) else [result]
    rows = [_jsonable(r) for r in rows]
    header = sorted({k for r in rows for k in r}) if not isinstance(result, list) else list(rows[0])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([json.dumps(r[k]) if isinstance(r.get(k), (dict, list)) else r.get(k, "") for k in header])
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qphlab", description="Desk-scale experiments on quantified quantum games.")
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="subcommand", required=True)
    for sc in SUBCOMMANDS.values():
        sp = subs.add_parser(sc.name, help=sc.help)
        sp.add_argument("--config", default=None, help="JSON file with parameters; flags override it")
        sp.add_argument("--seed", type=int, default=argparse.SUPPRESS)
        sp.add_argument("--out", default=argparse.SUPPRESS, help="output path")
        sp.add_argument("--format", choices=["json", "csv"], default=argparse.SUPPRESS)
        sp.add_argument("--threads", type=int, default=argparse.SUPPRESS)
        for opt in sc.options:
            flag = "--" + opt.name.replace("_", "-")
            sp.add_argument(flag, dest=opt.name, type=opt.type, default=argparse.SUPPRESS, help=opt.help)
    return parser


def resolve_config(args: argparse.Namespace) -> tuple[Subcommand, dict, dict]:
    sc = SUBCOMMANDS[args.subcommand]
    params = {o.name: o.default for o in sc.options}
    common = {"seed": None, "out": None, "format": sc.default_format,
              "threads": int(os.environ.get("QPHLAB_THREADS", "1") or 1)}
    allowed = set(params) | COMMON_KEYS
    if args.config:
        obj = _read_json(args.config)
        if not isinstance(obj, dict):
            raise ConfigError("config file must hold a JSON object")
        if "subcommand" in obj:
            if obj["subcommand"] != sc.name:
                raise ConfigError(f"config is for {obj['subcommand']!r}, not {sc.name!r}")
            obj = {k: v for k, v in obj.items() if k != "subcommand"}
        if "params" in obj:
            nested = obj.pop("params")
            if not isinstance(nested, dict):
                raise ConfigError("params must be an object")
            obj = {**nested, **obj}
        unknown = sorted(set(obj) - allowed)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        types = {o.name: o.type for o in sc.options}
        for k, v in obj.items():
            if k in params:
                try:
                    params[k] = v if v is None else types[k](v)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"bad value for {k!r}: {v!r}") from exc
            else:
                common[k] = v
    for k, v in vars(args).items():
        if k in params:
            params[k] = v
        elif k in COMMON_KEYS:
            common[k] = v
    if common["format"] not in ("json", "csv"):
        raise ConfigError("format must be json or csv")
    if common["threads"] is None or int(common["threads"]) < 1:
        raise ConfigError("threads must be a positive integer")
    common["threads"] = int(common["threads"])
    stochastic = sc.stochastic(params) if callable(sc.stochastic) else sc.stochastic
    if stochastic and common["seed"] is None:
        raise ConfigError(f"{sc.name} is stochastic; --seed is required")
    if common["seed"] is not None:
        try:
            common["seed"] = int(common["seed"])
        except (TypeError, ValueError) as exc:
            raise ConfigError("seed must be an integer") from exc
        if common["seed"] < 0:
            raise ConfigError("seed must be nonnegative")
    return sc, params, common


def manifest(sc: Subcommand, params: dict, common: dict, payload: str, wall: float) -> dict:
    hashed = {
        "subcommand": sc.name,
        "parameters": _jsonable(params),
        "seed": common["seed"],
        "format": common["format"],
        "seed_derivation": f"SeededRng(seed).derive({sc.name!r}, <instance index>)",
        "versions": {"qphlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "output_sha256": hashlib.sha256(payload.encode("utf-8")).hexdigest(),
    }
    digest = hashlib.sha256(json.dumps(hashed, sort_keys=True).encode("utf-8")).hexdigest()
    return {"hashed": hashed, "hash": digest, "unhashed": {"wall_time_seconds": wall}}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    t0 = time.perf_counter()
    try:
        sc, params, common = resolve_config(args)
        rng = SeededRng(common["seed"]).derive(sc.name) if common["seed"] is not None else None
        if sc.name == "acceptance":
            params = {**params, "seed_value": common["seed"] or 0}
        result = sc.run(params, rng, common["threads"])
        params.pop("seed_value", None)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CheckFailed as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return 1
    except (ValueError, IndexError, AssertionError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    failed = isinstance(result, dict) and result.pop("_failed", False)
    payload = _render(result, common["format"])
    if common["out"]:
        with open(common["out"], "w", encoding="utf-8", newline="") as fh:
            fh.write(payload)
        man = manifest(sc, params, common, payload, time.perf_counter() - t0)
        with open(common["out"] + ".manifest.json", "w", encoding="utf-8") as fh:
            fh.write(json.dumps(man, sort_keys=True, indent=1) + "\n")
    else:
        sys.stdout.write(payload)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
