"""Command line harness: solver grammar, experiment configs, CSV output.

Solver grammar::

    SPEC := "picard"
          | "AA(" INT ["," SPEC] ")"
          | "AAoptD(" INT ["," SPEC] ")"
          | "ADD(" SPEC "," SPEC ["," FLOAT "," FLOAT] ")"

A postfix suffix list may follow any SPEC: ";beta=F" turns AA(m) into a
constant-damped accelerator, ";eta=F" and ";guard=floor|reflect" configure
the optimized-damping safeguard, ";iterN=I" sets the inner step count of a
composed form. "AA(m,SPEC)" composes multiplicatively (outer window m,
fresh inner SPEC each step); "ADD" blends two specs with weights that must
sum to one (default 0.5/0.5).

Experiment configs are JSON with the shape::

    {
      "problem": {"kind": "bratu", "N": 64, "lam": 6.0},
      "solvers": ["picard", "AA(20)", "AAoptD(20,AA(1))"],
      "run": {"tol": 1e-8, "max_iters": 2000, "max_fevals": 1000000,
              "divergence_factor": 1e6},
      "output": "results",
      "seed": 0,
      "paper_style_iters": false
    }

Problem kinds and their keys: bratu (N, lam), convdiff (N, eps, react,
scheme), tridiag (n). Command line flags win over file values.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .accelerator import DampingPolicy, HistoryWindow, WindowMeter, optimized_beta
from .composer import (
    AA,
    AcceleratorSpec,
    Additive,
    Multiplicative,
    Picard,
    RunConfig,
    run,
)
from .diagnostics import memory_footprint, write_trace_csv
from .kernel import least_squares, norm2
from .problems import bratu_problem, convdiff_problem, gmres_reference, tridiag_problem

SUMMARY_COLUMNS = ("label", "termination", "iters", "fevals", "final_res", "wall_ns", "memory_vectors")


class SpecParseError(ValueError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"column {pos + 1}: {message}")
        self.pos = pos


_INT_RE = re.compile(r"\d+")
_FLOAT_RE = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")
_WORD_RE = re.compile(r"[A-Za-z_]+")


class _SpecParser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def fail(self, message: str):
        raise SpecParseError(message, self.pos)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def eat(self, literal: str) -> bool:
        self.skip_ws()
        if self.text.startswith(literal, self.pos):
            self.pos += len(literal)
            return True
        return False

    def expect(self, literal: str):
        if not self.eat(literal):
            found = self.peek() or "end of input"
            self.fail(f"expected {literal!r}, found {found!r}")

    def match(self, regex: re.Pattern, what: str) -> str:
        self.skip_ws()
        m = regex.match(self.text, self.pos)
        if m is None:
            found = self.peek() or "end of input"
            self.fail(f"expected {what}, found {found!r}")
        self.pos = m.end()
        return m.group(0)

    def parse(self) -> AcceleratorSpec:
        spec = self.spec()
        self.skip_ws()
        if self.pos != len(self.text):
            self.fail(f"expected end of input, found {self.peek()!r}")
        return spec

    def spec(self) -> AcceleratorSpec:
        self.skip_ws()
        start = self.pos
        if self.eat("picard"):
            node: AcceleratorSpec = Picard()
        elif self.eat("AAoptD("):
            node = self._windowed(DampingPolicy.optimized(), start)
        elif self.eat("AA("):
            node = self._windowed(DampingPolicy.none(), start)
        elif self.eat("ADD("):
            node = self._additive(start)
        else:
            self.fail("expected 'picard', 'AA(', 'AAoptD(' or 'ADD('")
        return self._suffixes(node)

    def _windowed(self, policy: DampingPolicy, start: int) -> AcceleratorSpec:
        m = int(self.match(_INT_RE, "window size"))
        inner = None
        if self.eat(","):
            inner = self.spec()
        self.expect(")")
        outer = AA(m, policy)
        if inner is None:
            return outer
        return Multiplicative(outer, inner, iter_n=1)

    def _additive(self, start: int) -> AcceleratorSpec:
        left = self.spec()
        self.expect(",")
        right = self.spec()
        w_left, w_right = 0.5, 0.5
        if self.eat(","):
            w_left = float(self.match(_FLOAT_RE, "weight"))
            self.expect(",")
            w_right = float(self.match(_FLOAT_RE, "weight"))
        self.expect(")")
        try:
            return Additive(left, right, w_left, w_right)
        except ValueError as exc:
            raise SpecParseError(str(exc), start) from exc

    def _suffixes(self, node: AcceleratorSpec) -> AcceleratorSpec:
        while True:
            self.skip_ws()
            if self.peek() != ";":
                return node
            self.pos += 1
            key_pos = self.pos
            key = self.match(_WORD_RE, "suffix name")
            self.expect("=")
            node = self._apply_suffix(node, key, key_pos)

    def _apply_suffix(self, node, key: str, key_pos: int):
        if key == "beta":
            value = float(self.match(_FLOAT_RE, "beta value"))
            if not isinstance(node, AA) or node.damping.kind != "none":
                self.fail_at(key_pos, "beta suffix applies to plain AA(m) only")
            try:
                return dataclasses.replace(node, damping=DampingPolicy.constant(value))
            except ValueError as exc:
                self.fail_at(key_pos, str(exc))
        if key == "eta":
            value = float(self.match(_FLOAT_RE, "eta value"))
            return self._update_optimized(node, key_pos, eta=value)
        if key == "guard":
            value = self.match(_WORD_RE, "guard name")
            if value not in ("floor", "reflect"):
                self.fail_at(key_pos, f"guard must be 'floor' or 'reflect', got {value!r}")
            return self._update_optimized(node, key_pos, safeguard=value)
        if key == "iterN":
            value = int(self.match(_INT_RE, "iterN value"))
            if not isinstance(node, Multiplicative):
                self.fail_at(key_pos, "iterN suffix applies to composed AA(m,SPEC) forms only")
            return dataclasses.replace(node, iter_n=value)
        self.fail_at(key_pos, f"unknown suffix {key!r}")

    def _update_optimized(self, node, key_pos: int, **changes):
        target = node.outer if isinstance(node, Multiplicative) else node
        if not isinstance(target, AA) or target.damping.kind != "optimized":
            self.fail_at(key_pos, "eta/guard suffixes apply to AAoptD forms only")
        try:
            policy = dataclasses.replace(target.damping, **changes)
        except ValueError as exc:
            self.fail_at(key_pos, str(exc))
        new_target = dataclasses.replace(target, damping=policy)
        if isinstance(node, Multiplicative):
            return dataclasses.replace(node, outer=new_target)
        return new_target

    def fail_at(self, pos: int, message: str):
        raise SpecParseError(message, pos)


def parse_spec(text: str) -> AcceleratorSpec:
    """Parse a solver grammar string into an accelerator spec."""
    return _SpecParser(text).parse()


def _fmt_num(x: float) -> str:
    return repr(float(x))


def _render_windowed(node: AA, inner: str | None = None) -> str:
    policy = node.damping
    if policy.kind == "optimized":
        head = f"AAoptD({node.m}"
    else:
        head = f"AA({node.m}"
    body = head + (f",{inner})" if inner is not None else ")")
    if policy.kind == "constant":
        body += f";beta={_fmt_num(policy.beta)}"
    elif policy.kind == "optimized" and policy.safeguard != "off":
        body += f";eta={_fmt_num(policy.eta)};guard={policy.safeguard}"
    return body


def render_spec(spec: AcceleratorSpec) -> str:
    """Canonical grammar string for a spec; parse(render(s)) == s."""
    if isinstance(spec, Picard):
        return "picard"
    if isinstance(spec, AA):
        return _render_windowed(spec)
    if isinstance(spec, Multiplicative):
        if spec.outer.damping.kind == "constant":
            raise ValueError("constant-damped outer accelerators have no grammar form")
        text = _render_windowed(spec.outer, render_spec(spec.inner))
        if spec.iter_n != 1:
            text += f";iterN={spec.iter_n}"
        return text
    if isinstance(spec, Additive):
        body = f"ADD({render_spec(spec.left)},{render_spec(spec.right)}"
        if (spec.w_left, spec.w_right) != (0.5, 0.5):
            body += f",{_fmt_num(spec.w_left)},{_fmt_num(spec.w_right)}"
        return body + ")"
    raise TypeError(f"not an accelerator spec: {spec!r}")


def presentation_scale(spec: AcceleratorSpec) -> int:
    """Iteration multiplier for cost-honest cross-method iteration plots.

    Composed methods take several accelerated sub-steps per outer
    iteration, so their iteration axis is stretched accordingly.
    """
    if isinstance(spec, Additive):
        return 2
    if isinstance(spec, Multiplicative):
        return 1 + spec.iter_n
    return 1


_PROBLEM_KEYS = {
    "bratu": ("N", "lam"),
    "convdiff": ("N", "eps", "react", "scheme"),
    "tridiag": ("n",),
}


def build_problem(kind: str, params: dict):
    if kind == "bratu":
        return bratu_problem(int(params.get("N", 64)), float(params.get("lam", 6.0)))
    if kind == "convdiff":
        return convdiff_problem(
            int(params.get("N", 32)),
            float(params.get("eps", 1.0)),
            float(params.get("react", 3.0)),
            str(params.get("scheme", "centered")),
        )
    if kind == "tridiag":
        return tridiag_problem(int(params.get("n", 100)))
    raise ValueError(f"unknown problem kind {kind!r} (expected bratu, convdiff or tridiag)")


@dataclass
class ExperimentConfig:
    problem_kind: str
    problem_params: dict = field(default_factory=dict)
    solvers: list[str] = field(default_factory=lambda: ["picard"])
    run_config: RunConfig = field(default_factory=RunConfig)
    output: Path = Path("results")
    seed: int = 0
    paper_style_iters: bool = False

    def __post_init__(self):
        self.output = Path(self.output)
        for key in self.problem_params:
            if key not in _PROBLEM_KEYS.get(self.problem_kind, ()):
                raise ValueError(
                    f"unknown {self.problem_kind} parameter {key!r} "
                    f"(expected one of {_PROBLEM_KEYS.get(self.problem_kind)})"
                )
        if not self.solvers:
            raise ValueError("at least one solver spec is required")


def load_experiment_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError("config root must be a JSON object")
    known = {"problem", "solvers", "run", "output", "seed", "paper_style_iters"}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    problem = dict(raw.get("problem", {}))
    kind = problem.pop("kind", None)
    if kind is None:
        raise ValueError("config must set problem.kind")
    run_kwargs = dict(raw.get("run", {}))
    unknown_run = set(run_kwargs) - {"tol", "max_iters", "max_fevals", "divergence_factor"}
    if unknown_run:
        raise ValueError(f"unknown run keys: {sorted(unknown_run)}")
    return ExperimentConfig(
        problem_kind=str(kind),
        problem_params=problem,
        solvers=list(raw.get("solvers", ["picard"])),
        run_config=RunConfig(**run_kwargs),
        output=Path(raw.get("output", "results")),
        seed=int(raw.get("seed", 0)),
        paper_style_iters=bool(raw.get("paper_style_iters", False)),
    )


def run_experiment(config: ExperimentConfig):
    """Run every solver on the configured problem and write the CSVs.

    Per solver: <label>.csv with the trace columns. Plus summary.csv with
    one line per solver. Returns the (label, trace) pairs in order.
    """
    specs = [(text, parse_spec(text)) for text in config.solvers]
    problem = build_problem(config.problem_kind, config.problem_params)
    out = config.output
    out.mkdir(parents=True, exist_ok=True)

    results = []
    summary_lines = [",".join(SUMMARY_COLUMNS)]
    for _, spec in specs:
        label = render_spec(spec)
        trace = run(spec, problem, problem.default_start, config.run_config)
        scale = presentation_scale(spec) if config.paper_style_iters else 1
        write_trace_csv(trace, out / f"{label}.csv", iter_scale=scale)
        summary_lines.append(
            ",".join(
                [
                    label,
                    trace.termination.value,
                    str(trace.iters),
                    str(trace.fevals),
                    f"{trace.final_res:.17g}",
                    str(trace.rows[-1].wall_ns if trace.rows else 0),
                    str(memory_footprint(spec)),
                ]
            )
        )
        results.append((label, trace))
    (out / "summary.csv").write_text("\n".join(summary_lines) + "\n", encoding="utf-8")
    return results


# ---- self checks (anderkit check) ----


def _check_least_squares():
    matrix = np.array([[1.0, 1.0], [0.0, 0.0]])
    w = least_squares(matrix, np.array([1.0, 0.0]))
    assert sorted(w.tolist()) == [0.0, 1.0], w
    resid = norm2(np.array([1.0, 0.0]) - matrix @ w)
    grid = np.linspace(-2.0, 2.0, 161)
    best = min(
        norm2(np.array([1.0, 0.0]) - matrix @ np.array([a, c]))
        for a in grid
        for c in grid
    )
    assert resid <= best + 1e-12, (resid, best)


def _check_mixing():
    from .accelerator import solve_mixing_coefficients

    window = HistoryWindow(2)
    window.push(np.array([0.0, 0.0]), np.array([1.0, 0.0]))
    window.push(np.array([1.0, 0.0]), np.array([1.0, 1.0]))
    mix = solve_mixing_coefficients(window)
    assert np.allclose(mix.alpha, [0.5, 0.5], atol=1e-12), mix.alpha
    assert abs(mix.mixed_norm - np.sqrt(2.0) / 2.0) < 1e-12, mix.mixed_norm


def _check_optimized_beta():
    beta = optimized_beta(np.array([1.0, 0.0]), np.array([-1.0, 0.0]))
    assert abs(beta - 0.5) < 1e-15, beta
    assert optimized_beta(np.array([2.0, 0.0]), np.array([1.0, 0.0])) == 1.0


def _check_feval_budget():
    rng = np.random.default_rng(7)
    mat = rng.standard_normal((8, 8))
    mat *= 0.8 / np.linalg.norm(mat, 2)
    problem = _affine_problem(mat, np.ones(8))
    cfg = RunConfig(tol=1e-300, max_iters=10)
    points = {
        "picard": (Picard(), 11),
        "AAoptD": (AA(2, DampingPolicy.optimized()), 31),
        "AA(m,AA(1))": (Multiplicative(AA(2), AA(1)), 21),
    }
    for name, (spec, want) in points.items():
        trace = run(spec, problem, problem.default_start, cfg)
        assert trace.fevals == want, (name, trace.fevals, want)


def _check_memory():
    problem = tridiag_problem(40)
    cfg = RunConfig(tol=1e-300, max_iters=12)
    for spec, want in (
        (AA(5), 6),
        (Additive(AA(5), AA(1)), 6),
        (Multiplicative(AA(5), AA(1)), 8),
    ):
        meter = WindowMeter()
        run(spec, problem, problem.default_start, cfg, meter=meter)
        assert meter.peak == want == memory_footprint(spec), (spec, meter.peak, want)


def _check_gmres():
    xs, rnorms = gmres_reference(lambda v: v.copy(), np.array([3.0, -1.0]), np.zeros(2), 2)
    assert rnorms[-1] <= 1e-12 and np.allclose(xs[-1], [3.0, -1.0])


def _check_tridiag_solution():
    problem = tridiag_problem(100)
    gap = norm2(problem.g(problem.known_solution) - problem.known_solution)
    assert gap <= 1e-10, gap


def _check_grammar_roundtrip():
    for text in ("picard", "AA(20)", "AAoptD(20,AA(1))", "ADD(AA(20),AAoptD(1))"):
        assert render_spec(parse_spec(text)) == text, text


def _affine_problem(mat: np.ndarray, offset: np.ndarray):
    from .problems import FixedPointProblem

    return FixedPointProblem(
        n=offset.shape[0],
        g=lambda x: mat @ x + offset,
        label="affine",
        default_start=np.zeros(offset.shape[0]),
    )


_CHECKS = (
    ("least-squares kernel vs grid search", _check_least_squares),
    ("mixing coefficients on hand cases", _check_mixing),
    ("optimized damping projection", _check_optimized_beta),
    ("evaluation budgets per step", _check_feval_budget),
    ("window memory accounting", _check_memory),
    ("gmres reference sanity", _check_gmres),
    ("tridiagonal closed-form solution", _check_tridiag_solution),
    ("solver grammar round-trip", _check_grammar_roundtrip),
)


def run_checks(stream=None) -> int:
    stream = stream if stream is not None else sys.stdout
    failures = 0
    for name, fn in _CHECKS:
        t0 = time.perf_counter()
        try:
            fn()
        except Exception as exc:  # noqa: BLE001 - report any failure and keep going
            failures += 1
            print(f"FAIL {name}: {exc}", file=stream)
        else:
            print(f"ok   {name} ({time.perf_counter() - t0:.3f}s)", file=stream)
    return 0 if failures == 0 else 1


# ---- argument handling ----


class _ArgumentParser(argparse.ArgumentParser):
    # Usage problems exit 1; the default argparse code 2 is reserved for I/O.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _ArgumentParser:
    parser = _ArgumentParser(prog="anderkit", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"anderkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="run solvers on a benchmark problem")
    runp.add_argument("--config", type=Path, help="JSON experiment config")
    runp.add_argument("--problem", help="problem kind: bratu, convdiff or tridiag")
    runp.add_argument(
        "--param",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="problem parameter override (repeatable)",
    )
    runp.add_argument(
        "--solver",
        action="append",
        default=[],
        metavar="SPEC",
        help="solver spec (repeatable; replaces the config list)",
    )
    runp.add_argument("--tol", type=float)
    runp.add_argument("--max-iters", type=int)
    runp.add_argument("--max-fevals", type=int)
    runp.add_argument("--out", type=Path, help="output directory")
    runp.add_argument(
        "--paper-style-iters",
        action="store_true",
        help="scale the iter column by the per-step sub-iteration count",
    )

    listp = sub.add_parser("list-solvers", help="print the solver grammar")
    del listp

    checkp = sub.add_parser("check", help="run built-in verification checks")
    del checkp
    return parser


def _coerce_param(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            continue
    return value


def _config_from_args(args) -> ExperimentConfig:
    if args.config is not None:
        config = load_experiment_config(args.config)
    elif args.problem is not None:
        config = ExperimentConfig(problem_kind=args.problem)
    else:
        raise ValueError("either --config or --problem is required")
    if args.problem is not None and args.problem != config.problem_kind:
        # Switching the problem kind drops file params that no longer apply.
        config.problem_kind = args.problem
        config.problem_params = {}
    for item in args.param:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--param expects KEY=VALUE, got {item!r}")
        config.problem_params[key] = _coerce_param(value)
    if args.solver:
        config.solvers = list(args.solver)
    run_changes = {}
    if args.tol is not None:
        run_changes["tol"] = args.tol
    if args.max_iters is not None:
        run_changes["max_iters"] = args.max_iters
    if args.max_fevals is not None:
        run_changes["max_fevals"] = args.max_fevals
    if run_changes:
        config.run_config = dataclasses.replace(config.run_config, **run_changes)
    if args.out is not None:
        config.output = args.out
    if args.paper_style_iters:
        config.paper_style_iters = True
    # Re-validate after the overrides.
    config.__post_init__()
    return config


_GRAMMAR_HELP = """\
solver grammar:
  SPEC := picard
        | AA(m)                  windowed Anderson step, m+1 stored iterates
        | AAoptD(m)              AA(m) with per-step optimized damping
        | AA(m,SPEC)             outer AA(m) chained with a fresh inner SPEC
        | AAoptD(m,SPEC)         same, optimized damping on the outer step
        | ADD(SPEC,SPEC[,w,w])   weighted blend over one shared history

suffixes (append after a SPEC):
  ;beta=F                 constant damping for plain AA(m), F in (0,1]
  ;eta=F;guard=floor      keep optimized beta >= eta (eta in (0,0.5))
  ;eta=F;guard=reflect    map beta < eta to 1-beta
  ;iterN=I                inner steps per outer step (default 1)

examples (memory = simultaneously stored history vectors):
"""


def _list_solvers(stream) -> None:
    print(_GRAMMAR_HELP, end="", file=stream)
    for text in ("picard", "AA(20)", "AAoptD(20)", "AA(20,AA(1))", "AAoptD(20,AA(1))",
                 "ADD(AA(20),AA(1))", "AA(20);beta=0.5", "AAoptD(20);eta=0.1;guard=floor"):
        spec = parse_spec(text)
        print(f"  {text:32s} memory {memory_footprint(spec)}", file=stream)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    if args.command == "list-solvers":
        _list_solvers(sys.stdout)
        return 0
    if args.command == "check":
        return run_checks(sys.stdout)

    try:
        config = _config_from_args(args)
        for text in config.solvers:
            parse_spec(text)
    except (ValueError, json.JSONDecodeError) as exc:
        print(f"anderkit: config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"anderkit: cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        results = run_experiment(config)
    except OSError as exc:
        print(f"anderkit: cannot write results: {exc}", file=sys.stderr)
        return 2
    for label, trace in results:
        print(
            f"{label}: {trace.termination.value} after {trace.iters} iters, "
            f"{trace.fevals} fevals, final residual {trace.final_res:.3e}"
        )
    print(f"wrote {config.output}/summary.csv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
