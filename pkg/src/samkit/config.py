"""Experiment configuration: a line-oriented sections format and its parser.

Format (diff-friendly, no external parser):

    # comment
    [problem]
    name = logistic_regression
    n = 500
    dim = 20

    [schedule]
    kind = cosine
    eta0 = 0.5

    [run]
    T = 2000
    batch_size = 32
    seeds = 0, 1, 2
    mode = serial

    [timing]
    t_grad = 1.0
    t_comm = 0.075

    [method sam]
    rho = 0.05

    [method sampa]
    lambda = 0.2

Unknown keys, type mismatches, duplicates, and missing sections are rejected
with the offending line number(s). Defaults: lambda 0.2, seed 42, rho 0.05
for perturbed methods (doubled for sampa).
"""

import hashlib
import re
from dataclasses import dataclass

from samkit.errors import ConfigError
from samkit.optimizers import BaseSpec, OptimizerSpec
from samkit.pipeline import TimingModel
from samkit.vecmath import Schedule

DEFAULT_RHO = 0.05
DEFAULT_LAMBDA = 0.2
DEFAULT_SEED = 42

PROBLEM_KEYS = {
    "toy_quadratic": ({"dim"}, set()),
    "random_psd": ({"dim", "L"}, {"seed"}),
    "logistic_regression": ({"n", "dim"}, {"seed", "flip_fraction", "noise_seed"}),
    "tiny_mlp": ({"n", "dim_in", "hidden"}, {"seed"}),
}

_INT_KEYS = {"dim", "n", "dim_in", "hidden", "seed", "noise_seed", "T",
             "batch_size", "record_every"}
_FLOAT_KEYS = {"L", "flip_fraction", "eta0", "power", "delta0", "rho", "C",
               "lambda", "momentum", "weight_decay", "beta1", "beta2", "eps",
               "t_grad", "t_comm", "t_update"}


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str
    problem_params: dict
    methods: tuple          # ((label, OptimizerSpec), ...)
    schedule: Schedule
    T: int
    seeds: tuple
    batch_size: int = None  # None: full batch
    record_every: int = 1
    mode: str = "serial"
    audit: bool = False
    x0: str = "unit_sphere"
    timing: TimingModel = TimingModel()
    out: str = None

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("at least one method is required")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.mode not in ("serial", "parallel"):
            raise ConfigError(f"mode must be serial or parallel, got {self.mode!r}")
        if self.mode == "parallel":
            bad = [lbl for lbl, s in self.methods if s.method != "sampa"]
            if bad:
                raise ConfigError(
                    f"mode=parallel applies only to the sampa method; got {bad}")


def _split_sections(text):
    """Returns {section: [(lineno, key, value), ...]} preserving order."""
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.fullmatch(r"\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            sections.setdefault(current, [])
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, value = (s.strip() for s in line.split("=", 1))
        sections[current].append((lineno, key, value))
    return sections


def _kv(entries, section):
    """Entries -> {key: (lineno, value)}, rejecting duplicates with both lines."""
    out = {}
    for lineno, key, value in entries:
        if key in out:
            raise ConfigError(
                f"duplicate key {key!r} in [{section}]: lines {out[key][0]} and {lineno}")
        out[key] = (lineno, value)
    return out


def _coerce(key, value, lineno):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
    except ValueError:
        kind = "an integer" if key in _INT_KEYS else "a number"
        raise ConfigError(f"line {lineno}: {key} must be {kind}, got {value!r}") from None
    return value


def _take(kv, section, allowed):
    out = {}
    for key, (lineno, value) in kv.items():
        if key not in allowed:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{section}]")
        out[key] = _coerce(key, value, lineno)
    return out


def _parse_bool(value, lineno, key):
    v = value.strip().lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"line {lineno}: {key} must be a boolean, got {value!r}")


def _parse_seeds(value, lineno):
    parts = [p for p in re.split(r"[,\s]+", value.strip()) if p]
    try:
        seeds = tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"line {lineno}: seeds must be integers, got {value!r}") from None
    if not seeds:
        raise ConfigError(f"line {lineno}: seeds list is empty")
    return seeds


def _method_spec(name, kv, section):
    allowed = {"rho", "lambda", "base", "momentum", "weight_decay",
               "beta1", "beta2", "eps", "label"}
    vals = _take(kv, section, allowed)
    base_kwargs = {}
    if "base" in vals:
        base_kwargs["kind"] = vals["base"]
    for src, dst in (("momentum", "momentum"), ("weight_decay", "weight_decay"),
                     ("beta1", "beta1"), ("beta2", "beta2"), ("eps", "eps")):
        if src in vals:
            base_kwargs[dst] = vals[src]
    base = BaseSpec(**base_kwargs) if base_kwargs else BaseSpec()
    rho = vals.get("rho")
    if rho is None:
        rho = 0.0 if name in ("sgd", "optgd") else (
            2 * DEFAULT_RHO if name == "sampa" else DEFAULT_RHO)
    lam = vals.get("lambda", DEFAULT_LAMBDA if name == "sampa" else 0.0)
    label = vals.get("label", name)
    return label, OptimizerSpec(method=name, rho=rho, lam=lam, base=base)


def _schedule_from(kv):
    allowed = {"kind", "eta0", "power", "delta0", "rho", "C", "L"}
    vals = _take(kv, "schedule", allowed)
    kind = vals.get("kind", "constant")
    if kind == "horizon_tuned":
        params = {k: vals[k] for k in ("delta0", "rho", "C", "L") if k in vals}
        return Schedule(kind=kind, params=params)
    kwargs = {}
    if "eta0" in vals:
        kwargs["eta0"] = vals["eta0"]
    if "power" in vals:
        kwargs["power"] = vals["power"]
    return Schedule(kind=kind, **kwargs)


def parse_config(text) -> ExperimentConfig:
    """Parse and fully validate the documented key=value-with-sections format."""
    sections = _split_sections(text)

    method_sections = [s for s in sections if s == "method" or s.startswith("method ")]
    known = {"problem", "schedule", "run", "timing"} | set(method_sections)
    unknown = set(sections) - known
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")
    if "problem" not in sections:
        raise ConfigError("missing required section [problem]")
    if not method_sections:
        raise ConfigError("at least one [method NAME] section is required")

    pkv = _kv(sections["problem"], "problem")
    if "name" not in pkv:
        raise ConfigError("[problem] must set name")
    pname = pkv["name"][1]
    if pname not in PROBLEM_KEYS:
        raise ConfigError(
            f"line {pkv['name'][0]}: unknown problem {pname!r}; "
            f"expected one of {sorted(PROBLEM_KEYS)}")
    required, optional = PROBLEM_KEYS[pname]
    pvals = _take({k: v for k, v in pkv.items() if k != "name"}, "problem",
                  required | optional)
    missing = required - set(pvals)
    if missing:
        raise ConfigError(f"[problem] {pname} missing required key(s) {sorted(missing)}")
    if "flip_fraction" in pvals and not 0.0 <= pvals["flip_fraction"] < 1.0:
        raise ConfigError("flip_fraction must be in [0, 1)")

    schedule = (_schedule_from(_kv(sections["schedule"], "schedule"))
                if "schedule" in sections else Schedule())

    run_allowed = {"T", "batch_size", "seeds", "mode", "record_every",
                   "audit", "x0"}
    rkv = _kv(sections.get("run", []), "run")
    for key, (lineno, _) in rkv.items():
        if key not in run_allowed:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [run]")
    if "T" not in rkv:
        raise ConfigError("[run] must set T")
    T = _coerce("T", rkv["T"][1], rkv["T"][0])
    seeds = (_parse_seeds(rkv["seeds"][1], rkv["seeds"][0])
             if "seeds" in rkv else (DEFAULT_SEED,))
    batch_size = None
    if "batch_size" in rkv:
        lineno, value = rkv["batch_size"]
        batch_size = None if value.strip() == "full" else _coerce("batch_size", value, lineno)
    audit = (_parse_bool(rkv["audit"][1], rkv["audit"][0], "audit")
             if "audit" in rkv else False)
    mode = rkv["mode"][1].strip() if "mode" in rkv else "serial"
    record_every = (_coerce("record_every", rkv["record_every"][1], rkv["record_every"][0])
                    if "record_every" in rkv else 1)
    x0 = rkv["x0"][1].strip() if "x0" in rkv else "unit_sphere"
    if x0 not in ("zeros", "unit_sphere", "gauss"):
        raise ConfigError(f"x0 must be zeros, unit_sphere, or gauss, got {x0!r}")

    timing = TimingModel()
    if "timing" in sections:
        tvals = _take(_kv(sections["timing"], "timing"), "timing",
                      {"t_grad", "t_comm", "t_update"})
        timing = TimingModel(**tvals)

    methods = []
    for sec in method_sections:
        tokens = sec[len("method"):].strip().split()
        if not tokens:
            raise ConfigError("[method] section must name a method, e.g. [method sam]")
        name = {"sampa_lambda": "sampa"}.get(tokens[0], tokens[0])
        header_label = tokens[1] if len(tokens) > 1 else None
        label, spec = _method_spec(name, _kv(sections[sec], sec), sec)
        if header_label is not None and label == name:
            label = header_label
        methods.append((label, spec))
    labels = [lbl for lbl, _ in methods]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"duplicate method labels: {labels}; set label = ... to disambiguate")

    return ExperimentConfig(
        problem=pname, problem_params=pvals, methods=tuple(methods),
        schedule=schedule, T=T, seeds=seeds, batch_size=batch_size,
        record_every=record_every, mode=mode, audit=audit, x0=x0, timing=timing,
    )


def dump_config(cfg: ExperimentConfig) -> str:
    """Canonical text form of a config; parse_config(dump_config(c)) == c."""
    lines = ["[problem]", f"name = {cfg.problem}"]
    for k in sorted(cfg.problem_params):
        lines.append(f"{k} = {cfg.problem_params[k]!r}")
    s = cfg.schedule
    lines += ["", "[schedule]", f"kind = {s.kind}"]
    if s.kind == "horizon_tuned":
        for k in ("delta0", "rho", "C", "L"):
            lines.append(f"{k} = {s.params[k]!r}")
    else:
        lines.append(f"eta0 = {s.eta0!r}")
        if s.kind == "inverse_power":
            lines.append(f"power = {s.power!r}")
    lines += ["", "[run]", f"T = {cfg.T}",
              f"seeds = {', '.join(str(x) for x in cfg.seeds)}",
              f"mode = {cfg.mode}",
              f"record_every = {cfg.record_every}",
              f"audit = {'true' if cfg.audit else 'false'}",
              f"x0 = {cfg.x0}"]
    if cfg.batch_size is not None:
        lines.append(f"batch_size = {cfg.batch_size}")
    t = cfg.timing
    lines += ["", "[timing]", f"t_grad = {t.t_grad!r}", f"t_comm = {t.t_comm!r}",
              f"t_update = {t.t_update!r}"]
    for label, spec in cfg.methods:
        header = spec.method if label == spec.method else f"{spec.method} {label}"
        lines += ["", f"[method {header}]"]
        lines.append(f"rho = {spec.rho!r}")
        if spec.method == "sampa":
            lines.append(f"lambda = {spec.lam!r}")
        b = spec.base
        lines += [f"base = {b.kind}", f"momentum = {b.momentum!r}",
                  f"weight_decay = {b.weight_decay!r}"]
        if b.kind == "adamw_like":
            lines += [f"beta1 = {b.beta1!r}", f"beta2 = {b.beta2!r}",
                      f"eps = {b.eps!r}"]
    return "\n".join(lines) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()[:16]
