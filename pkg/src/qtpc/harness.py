"""Experiment configuration, execution and deterministic reports."""

import csv
import hashlib
import io
import json
import os
import tempfile
import time
from dataclasses import dataclass, field
from itertools import product
from typing import Optional

import numpy as np

from . import __version__
from .attack import (
    attack_all_inputs,
    nine_out_of_ten,
    partition_attack,
    per_input_overlaps,
    random_unitary_overlaps,
    step_two_fidelity,
    synthesize_cheat_unitary,
    two_sided_xor_attack,
)
from .protocol import FunctionTable, alice_epr_reduced_state
from .linalg import fidelity
from .zoo import (
    DEFAULT_DIM_CAP,
    FAMILIES,
    ZooFamily,
    add_noise,
    ideal_dim,
    make_ideal_one_sided,
    make_oblivious_id,
    make_one_out_of_two_ot,
    make_two_sided_xor,
    noisy_dim,
    protocol_dim,
)

SCHEMA = 1
MAX_INPUTS = 64

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_USAGE = 2
EXIT_DIM_CAP = 3

# long names accepted as aliases of the short family names
FAMILY_ALIASES = {
    "ideal_one_sided": "ideal",
    "one_out_of_two_ot": "ot",
    "oblivious_id": "oblivious-id",
    "two_sided_xor": "two-sided-xor",
}

DEFAULT_TOLERANCES = {"deterministic": 1e-9, "fidelity": 1e-9, "info_bits": 1e-6, "success_rate": 1e-9}


class ConfigError(ValueError):
    pass


class DimensionCapError(ValueError):
    pass


def _check_keys(section: dict, allowed, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be an object")
    extra = sorted(set(section) - set(allowed))
    if extra:
        raise ConfigError(f"unknown field(s) in {where}: {', '.join(extra)}")


def _family(name) -> str:
    name = FAMILY_ALIASES.get(name, name)
    if name not in FAMILIES:
        raise ConfigError(f"unknown family {name!r}; expected one of {', '.join(FAMILIES)}")
    return name


@dataclass
class ProtocolSpec:
    family: str
    name: str = ""
    n: Optional[int] = None
    m: Optional[int] = None
    p: Optional[int] = None
    k: Optional[int] = None
    table: Optional[list] = None
    theta_leak: float = 0.0
    theta_meas: float = 0.0
    base_family: Optional[str] = None

    FIELDS = ("family", "zoo_family", "name", "n", "m", "p", "k", "table", "theta_leak", "theta_meas", "base_family")

    @classmethod
    def parse(cls, raw: dict) -> "ProtocolSpec":
        _check_keys(raw, cls.FIELDS, "protocol")
        raw = dict(raw)
        fam = raw.pop("family", None) or raw.pop("zoo_family", None)
        raw.pop("zoo_family", None)
        if fam is None:
            raise ConfigError("protocol.family is required")
        spec = cls(family=_family(fam), **raw)
        if spec.base_family is not None:
            spec.base_family = _family(spec.base_family)
            if spec.base_family in ("noisy", "two-sided-xor") and spec.family == "noisy":
                raise ConfigError("noisy protocols need a one-sided base family")
        try:
            params = {key: getattr(spec, key) for key in ("n", "k", "theta_leak", "theta_meas") if getattr(spec, key) is not None}
            ZooFamily(spec.family, params)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return spec

    def to_dict(self) -> dict:
        out = {"family": self.family}
        for key in ("name", "n", "m", "p", "k", "table", "theta_leak", "theta_meas", "base_family"):
            val = getattr(self, key)
            if val is not None and val != "":
                out[key] = val
        return out


@dataclass
class AttackSpec:
    kind: str = "sequential"
    j_order: object = "all"
    weights: object = "uniform"
    outcome_conditioned: bool = True
    j1: int = 0
    j2: int = 1
    typical_fraction: float = 0.1
    random_unitaries: int = 0

    FIELDS = ("kind", "j_order", "weights", "outcome_conditioned", "j1", "j2", "typical_fraction", "random_unitaries")
    KINDS = ("sequential", "partition", "two-sided")

    @classmethod
    def parse(cls, raw: Optional[dict]) -> "AttackSpec":
        raw = {} if raw is None else raw
        _check_keys(raw, cls.FIELDS, "attack")
        spec = cls(**raw)
        if spec.kind not in cls.KINDS:
            raise ConfigError(f"attack.kind must be one of {cls.KINDS}")
        if spec.j_order != "all" and not (isinstance(spec.j_order, list) and spec.j_order):
            raise ConfigError('attack.j_order must be "all" or a nonempty list')
        if spec.weights not in ("uniform", "partition") and not isinstance(spec.weights, list):
            raise ConfigError('attack.weights must be "uniform", "partition" or a list')
        if spec.weights == "partition" and spec.kind != "partition":
            raise ConfigError('weights "partition" needs attack.kind "partition"')
        if not 0 < spec.typical_fraction < 1:
            raise ConfigError("attack.typical_fraction must lie in (0, 1)")
        if int(spec.random_unitaries) < 0:
            raise ConfigError("attack.random_unitaries must be >= 0")
        return spec


@dataclass
class ExperimentConfig:
    protocol: ProtocolSpec
    attack: AttackSpec = field(default_factory=AttackSpec)
    sweep: Optional[dict] = None
    seed: int = 0
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    output: Optional[dict] = None
    expect: dict = field(default_factory=dict)
    dim_cap: int = DEFAULT_DIM_CAP
    timing: bool = False

    FIELDS = ("protocol", "attack", "sweep", "seed", "tolerances", "output", "expect", "dim_cap", "timing")
    EXPECT = ("success_rate", "info_bits", "deterministic", "min_step_fidelity",
              "delta_increasing", "epsilon_increasing", "fit_positive", "nine_out_of_ten")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        _check_keys(raw, cls.FIELDS, "config")
        if "protocol" not in raw:
            raise ConfigError("config needs a protocol section")
        seed = raw.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        tol = dict(DEFAULT_TOLERANCES)
        over = raw.get("tolerances", {})
        _check_keys(over, DEFAULT_TOLERANCES, "tolerances")
        tol.update({k: float(v) for k, v in over.items()})
        sweep = raw.get("sweep")
        if sweep is not None:
            _check_keys(sweep, ("theta_leak", "theta_meas"), "sweep")
            for key, grid in sweep.items():
                if not isinstance(grid, list) or not grid:
                    raise ConfigError(f"sweep.{key} must be a nonempty list")
                if any(not 0 <= float(x) <= np.pi / 2 for x in grid):
                    raise ConfigError(f"sweep.{key} values must lie in [0, pi/2]")
        output = raw.get("output")
        if output is not None:
            _check_keys(output, ("path", "format"), "output")
            if output.get("format", "json") not in ("json", "csv"):
                raise ConfigError("output.format must be json or csv")
        expect = raw.get("expect", {})
        _check_keys(expect, cls.EXPECT, "expect")
        dim_cap = raw.get("dim_cap", DEFAULT_DIM_CAP)
        if not isinstance(dim_cap, int) or dim_cap < 1:
            raise ConfigError("dim_cap must be a positive integer")
        cfg = cls(
            protocol=ProtocolSpec.parse(raw["protocol"]),
            attack=AttackSpec.parse(raw.get("attack")),
            sweep=sweep, seed=seed, tolerances=tol, output=output, expect=expect,
            dim_cap=dim_cap, timing=bool(raw.get("timing", False)),
        )
        if sweep is not None and cfg.protocol.family != "noisy":
            raise ConfigError("sweeps need protocol.family = noisy")
        if cfg.attack.kind == "two-sided" and cfg.protocol.family != "two-sided-xor":
            raise ConfigError('attack.kind "two-sided" needs protocol.family two-sided-xor')
        return cfg

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol.to_dict(),
            "attack": {k: getattr(self.attack, k) for k in AttackSpec.FIELDS},
            "sweep": self.sweep,
            "seed": self.seed,
            "tolerances": self.tolerances,
            "output": self.output,
            "expect": self.expect,
            "dim_cap": self.dim_cap,
        }


def task_seed(seed: int, label: str) -> int:
    """Stable 64-bit per-task seed."""
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _table(spec: ProtocolSpec, family: str) -> FunctionTable:
    if spec.table is not None:
        vals = np.asarray(spec.table, dtype=np.int64)
        if vals.ndim == 1:
            if spec.n is None or spec.m is None or vals.size != spec.n * spec.m:
                raise ConfigError("a flat table needs n and m with n*m entries")
            vals = vals.reshape(spec.n, spec.m)
        try:
            return FunctionTable(vals, spec.p if spec.p is not None else int(vals.max()) + 1)
        except ValueError as exc:
            raise ConfigError(f"bad table: {exc}") from None
    if family == "ot":
        if spec.k is None:
            raise ConfigError("ot needs k")
        return make_one_out_of_two_ot(spec.k, dim_cap=2 ** 62)
    if family == "oblivious-id":
        if spec.n is None:
            raise ConfigError("oblivious-id needs n")
        return make_oblivious_id(spec.n)
    raise ConfigError(f"family {family!r} needs an explicit table")


def _planned_dim(spec: ProtocolSpec) -> int:
    fam = spec.family
    if fam == "noisy":
        base = ProtocolSpec(spec.base_family or "oblivious-id", n=spec.n, m=spec.m, p=spec.p, k=spec.k, table=spec.table)
        if base.family == "noisy":
            raise ConfigError("noisy base must be one-sided")
        inner = _planned_dim(base)
        m = 2 if base.family == "ot" else _table(base, base.family).m
        return noisy_dim(inner, m)
    if fam == "ot" and spec.table is None:
        return protocol_dim("ot", k=spec.k or 1)
    if fam == "two-sided-xor":
        t = _table(spec, spec.base_family or "ideal")
        return protocol_dim("two-sided-xor", n=t.n, m=t.m, p=t.p, rows=int(t.row_classes().max()) + 1)
    return ideal_dim(_table(spec, fam))


def build_base(spec: ProtocolSpec, dim_cap: int = DEFAULT_DIM_CAP):
    """Noise-free protocol for ``spec`` (the base protocol for noisy families)."""
    dim = _planned_dim(spec)
    if dim > dim_cap:
        raise DimensionCapError(f"protocol dimension {dim} exceeds cap {dim_cap}")
    fam = spec.family
    if fam == "two-sided-xor":
        try:
            return make_two_sided_xor(_table(spec, spec.base_family or "ideal"), name=spec.name)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    base_fam = (spec.base_family or "oblivious-id") if fam == "noisy" else fam
    return make_ideal_one_sided(_table(spec, base_fam), name=spec.name or base_fam)


def _points(cfg: ExperimentConfig) -> list:
    if cfg.sweep is None:
        return [(float(cfg.protocol.theta_leak), float(cfg.protocol.theta_meas))]
    leak = cfg.sweep.get("theta_leak", [cfg.protocol.theta_leak])
    meas = cfg.sweep.get("theta_meas", [cfg.protocol.theta_meas])
    return [(float(a), float(b)) for a, b in product(leak, meas)]


def _inputs(p, seed: int, label: str):
    if p.n <= MAX_INPUTS:
        return list(range(p.n))
    rng = np.random.default_rng(task_seed(seed, f"inputs:{label}"))
    return sorted(int(i) for i in rng.choice(p.n, MAX_INPUTS, replace=False))


def _run_point(cfg: ExperimentConfig, proto, label: str) -> dict:
    att = cfg.attack
    row = {"n": proto.n, "m": proto.m, "p": proto.table.p, "dim": proto.layout.total_dim}
    if att.kind == "two-sided":
        rep = two_sided_xor_attack(proto, conditioned=att.outcome_conditioned)
        runs = rep.extra.pop("runs")
        row.update(
            success_rate=float(np.mean([r.success for r in runs])),
            success_probability=float(np.mean([r.success_probability for r in runs])),
            info_bits=rep.info_bits,
            **{k: rep.extra[k] for k in ("alice_fidelity_fixed_input", "alice_fidelity_epr", "honest_bob_alice_info_bits")},
        )
        return {"row": row, "reports": [r.to_dict() for r in runs]}

    if att.kind == "partition":
        rep = partition_attack(proto, att.j1, att.j2)
        gainful = [b for b in rep.extra["branches"] if not b["no_gain"]]
        row.update(
            delta=rep.delta, epsilon=rep.epsilon, success_rate=float(rep.success),
            discrimination_probability=min((b["discrimination_probability"] for b in gainful), default=None),
        )
        return {"row": row, "reports": [rep.to_dict()]}

    j_order = None if att.j_order == "all" else att.j_order
    weights = None if att.weights == "uniform" else att.weights
    try:
        reports = attack_all_inputs(proto, j_order, weights, conditioned=att.outcome_conditioned,
                                    inputs=_inputs(proto, cfg.seed, label))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    order = reports[0].j_order
    row.update(
        success_rate=float(np.mean([r.success for r in reports])),
        success_probability=float(np.mean([r.success_probability for r in reports])),
        info_bits=reports[0].info_bits,
        delta=reports[0].delta,
        epsilon=reports[0].epsilon,
        deterministic=all(r.deterministic(cfg.tolerances["deterministic"]) for r in reports),
        min_step_fidelity=min(r.min_step_fidelity() for r in reports),
        expected_step_fidelity=min(r.expected_step_fidelity() for r in reports),
    )
    if len(order) >= 2:
        j1, j2 = order[0], order[1]
        u = synthesize_cheat_unitary(proto, j1, j2)
        overlaps = per_input_overlaps(u, proto)
        f2 = step_two_fidelity(proto, j1, j2, u)
        alice = fidelity(alice_epr_reduced_state(proto, j1), alice_epr_reduced_state(proto, j2))
        row.update(
            achieved_overlap=u.achieved_overlap,
            alice_fidelity=alice,
            step2_fidelity=float(f2.min()),
            step2_fidelity_mean=float(f2.mean()),
            per_input_overlaps=overlaps.tolist(),
            nine_out_of_ten=nine_out_of_ten(overlaps, row["delta"], att.typical_fraction),
        )
        if att.random_unitaries:
            rng = np.random.default_rng(task_seed(cfg.seed, f"unitaries:{label}"))
            rnd = random_unitary_overlaps(proto, j1, j2, int(att.random_unitaries), rng)
            row["random_unitary_max_overlap"] = float(rnd.max())
    return {"row": row, "reports": [r.to_dict() for r in reports]}


def fit_bound(rows) -> tuple:
    """Least-squares fit of 1 - F ~ c1 * n * delta + c2 * epsilon (no intercept).

    ``rows`` are dicts with ``n``, ``delta``, ``epsilon`` and ``step2_fidelity``.
    Returns (c1, c2, max absolute residual).
    """
    rows = list(rows)
    design = np.array([[r["n"] * r["delta"], r["epsilon"]] for r in rows], dtype=float)
    target = np.array([1.0 - r["step2_fidelity"] for r in rows], dtype=float)
    distinct = {(round(a, 12), round(b, 12)) for a, b in design}
    if len(rows) < 4 or len(distinct) < 4:
        raise ValueError("fit needs at least 4 rows with distinct (delta, epsilon)")
    if np.linalg.matrix_rank(design, tol=1e-12) < 2:
        raise ValueError("degenerate design matrix: n*delta and epsilon are not independent")
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    resid = float(np.max(np.abs(design @ coef - target)))
    return float(coef[0]), float(coef[1]), resid


def _assertions(cfg: ExperimentConfig, rows: list, fit) -> list:
    tol = cfg.tolerances
    out = []

    def add(name, passed, detail):
        out.append({"name": name, "passed": bool(passed), "detail": detail})

    for key, want in sorted(cfg.expect.items()):
        if key == "success_rate":
            got = [r.get("success_rate") for r in rows]
            add(key, all(g is not None and abs(g - want) <= tol["success_rate"] for g in got), {"expected": want, "got": got})
        elif key == "info_bits":
            got = [r.get("info_bits") for r in rows]
            add(key, all(g is not None and abs(g - want) <= tol["info_bits"] for g in got), {"expected": want, "got": got})
        elif key == "deterministic":
            got = [r.get("deterministic") for r in rows]
            add(key, all(g == want for g in got), {"expected": want, "got": got})
        elif key == "min_step_fidelity":
            got = [r.get("min_step_fidelity") for r in rows]
            add(key, all(g is not None and g >= want - tol["fidelity"] for g in got), {"expected": want, "got": got})
        elif key in ("delta_increasing", "epsilon_increasing"):
            # delta along theta_leak at fixed theta_meas, epsilon the other way round
            field_, axis, other = (("delta", "theta_leak", "theta_meas") if key == "delta_increasing"
                                   else ("epsilon", "theta_meas", "theta_leak"))
            lines = {}
            for r in sorted(rows, key=lambda r: (r.get(other), r.get(axis))):
                lines.setdefault(r.get(other), []).append(r.get(field_))
            inc = all(None not in col and all(b > a for a, b in zip(col, col[1:])) for col in lines.values())
            add(key, inc == want, {"expected": want, "columns": [lines[k] for k in sorted(lines)]})
        elif key == "fit_positive":
            ok = fit is not None and "error" not in fit and fit["c1"] > 0 and fit["c2"] > 0
            add(key, ok == want, {"expected": want, "fit": fit})
        elif key == "nine_out_of_ten":
            got = [r.get("nine_out_of_ten", {}).get("passed", True) for r in rows]
            add(key, all(got) == want, {"expected": want, "got": got})
    return out


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run every sweep point and assemble the report (a plain dict)."""
    start = time.perf_counter()
    base = build_base(cfg.protocol, cfg.dim_cap)
    points = _points(cfg)
    noisy = cfg.protocol.family == "noisy"
    if noisy and noisy_dim(base.layout.total_dim, base.m) > cfg.dim_cap:
        raise DimensionCapError(f"noisy protocol dimension exceeds cap {cfg.dim_cap}")
    runs, rows = [], []
    for leak, meas in points:
        proto = add_noise(base, leak, meas, dim_cap=cfg.dim_cap) if noisy else base
        label = f"{cfg.protocol.family}:{leak!r}:{meas!r}"
        res = _run_point(cfg, proto, label)
        res["row"].update(theta_leak=leak, theta_meas=meas)
        rows.append(res["row"])
        runs.append({"theta_leak": leak, "theta_meas": meas, "reports": res["reports"]})
    fit = None
    if len(rows) >= 4 and all("step2_fidelity" in r for r in rows):
        try:
            c1, c2, resid = fit_bound(rows)
            fit = {"c1": c1, "c2": c2, "residual": resid}
        except ValueError as exc:
            fit = {"error": str(exc)}
    report = {
        "schema": SCHEMA,
        "tool": "qtpc",
        "version": __version__,
        "config": cfg.to_dict(),
        "protocol": {"name": base.name, "family": cfg.protocol.family, "n": base.n, "m": base.m, "p": base.table.p},
        "aggregates": rows,
        "fit": fit,
        "runs": runs,
    }
    report["assertions"] = _assertions(cfg, rows, fit)
    report["passed"] = all(a["passed"] for a in report["assertions"])
    if cfg.timing:
        report["wall_clock_s"] = time.perf_counter() - start
    return report


def _canonical(obj):
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = round(float(obj), 12)
        return 0.0 if x == 0 else x
    return obj


def report_json(report: dict) -> str:
    return json.dumps(_canonical(report), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


CSV_COLUMNS = ("theta_leak", "theta_meas", "n", "m", "p", "dim", "success_rate", "success_probability",
               "info_bits", "delta", "epsilon", "step2_fidelity", "achieved_overlap", "alice_fidelity",
               "discrimination_probability", "expected_step_fidelity", "min_step_fidelity")


def report_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in report["aggregates"]:
        row = _canonical(row)
        w.writerow(["" if row.get(c) is None else row.get(c) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_atomic(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def render(report: dict, fmt: str = "json") -> str:
    return report_csv(report) if fmt == "csv" else report_json(report)


def verify_family(family: str, n: int = 2, m: int = 2, *, p: int = 2, k: int = 1, seed: int = 0,
                  theta_leak: float = 0.1, theta_meas: float = 0.1, dim_cap: int = DEFAULT_DIM_CAP) -> list:
    """Invariant suite for one zoo family; returns (check name, passed, detail) triples."""
    from itertools import permutations

    from .attack import alice_fidelity_across_j, honest_bob_alice_information, verify_rotation
    from .linalg import unitarity_error
    from .protocol import bob_reduced_state, build_f_measurement, delta_of, epsilon_of, honest_run, measure

    family = _family(family)
    rng = np.random.default_rng(task_seed(seed, f"verify:{family}:{n}:{m}:{p}"))
    random_table = lambda: FunctionTable(rng.integers(0, p, size=(n, m)), p)  # noqa: E731
    if family == "ot":
        spec = ProtocolSpec("ot", k=k)
    elif family == "oblivious-id":
        spec = ProtocolSpec("oblivious-id", n=n)
    elif family == "noisy":
        spec = ProtocolSpec("noisy", n=n, base_family="oblivious-id")
    else:
        spec = ProtocolSpec(family, table=random_table().values.tolist(), p=p)
    proto = build_base(spec, dim_cap)
    tol = DEFAULT_TOLERANCES["fidelity"]
    checks = []

    def add(name, ok, detail=""):
        checks.append((name, bool(ok), detail))

    err = unitarity_error(proto.unitary.data)
    add("unitary", err <= 1e-9, f"error {err:.2e}")
    norms = [np.linalg.norm(honest_run(proto, i, j).data) for i in range(proto.n) for j in range(proto.m)]
    add("honest runs normalized", max(abs(x - 1) for x in norms) <= 1e-10)

    if family == "two-sided-xor":
        agree = True
        for i, j, r in product(range(proto.n), range(proto.m), range(proto.random_values)):
            idx = int(np.argmax(np.abs(honest_run(proto, i, j, r).data)))
            vals = proto.layout.basis_values(idx)
            agree &= vals["a_out"] == vals["b_out"] == proto.table(i, j) ^ r
        add("both outputs equal F = f XOR r", agree)
        info = honest_bob_alice_information(proto)
        add("honest Bob: Alice learns nothing about f", info <= 1e-9, f"{info:.2e} bits")
        fids = alice_fidelity_across_j(proto)
        add("Alice's state independent of j", fids["fixed_input"] >= 1 - tol, f"{fids['fixed_input']:.12f}")
        rep = two_sided_xor_attack(proto)
        add("attack recovers f(i, .)", rep.success and rep.success_probability >= 1 - tol)
        return checks

    if family == "noisy":
        zero = add_noise(proto, 0.0, 0.0, dim_cap=dim_cap)
        d0, e0 = delta_of(zero), max(epsilon_of(zero, j) for j in range(zero.m))
        add("zero noise gives delta = epsilon = 0", d0 <= 1e-9 and e0 <= 1e-9, f"delta {d0:.2e} eps {e0:.2e}")
        noisy = add_noise(proto, theta_leak, theta_meas, dim_cap=dim_cap)
        u = synthesize_cheat_unitary(noisy, 0, 1)
        f_a = fidelity(alice_epr_reduced_state(noisy, 0), alice_epr_reduced_state(noisy, 1))
        add("achieved overlap equals Alice-side fidelity", abs(u.achieved_overlap - f_a) <= 1e-8,
            f"{u.achieved_overlap:.12f} vs {f_a:.12f}")
        rnd = random_unitary_overlaps(noisy, 0, 1, 200, rng)
        add("no random Bob unitary does better", rnd.max() <= u.achieved_overlap + 1e-9, f"best random {rnd.max():.6f}")
        d = delta_of(noisy)
        nine = nine_out_of_ten(per_input_overlaps(u, noisy), d)
        add("nine out of ten", nine["passed"], f"fraction {nine['fraction']:.3f}")
        return checks

    ok_a = True
    for j in range(proto.m):
        meas = build_f_measurement(proto, j)
        for i in range(proto.n):
            prob = dict((lab, pr) for lab, pr, _ in measure(bob_reduced_state(proto, i, j), meas))
            ok_a &= prob.get(proto.table(i, j), 0.0) >= 1 - 1e-9
    add("Bob reads f unambiguously", ok_a)
    if proto.m >= 2:
        d = delta_of(proto)
        add("Alice blind to j (delta = 0)", d <= 1e-9, f"delta {d:.2e}")
        worst = min(verify_rotation(synthesize_cheat_unitary(proto, a, b), proto).min()
                    for a, b in permutations(range(proto.m), 2))
        add("cheat unitary maps rho^{i,j1} to rho^{i,j2}", worst >= 1 - tol, f"min fidelity {worst:.12f}")
    e = max(epsilon_of(proto, j) for j in range(proto.m))
    add("measurement does not disturb (epsilon = 0)", e <= 1e-9, f"epsilon {e:.2e}")
    reps = attack_all_inputs(proto, leakage=False)
    add("sequential attack succeeds deterministically",
        all(r.success and r.deterministic(DEFAULT_TOLERANCES["deterministic"]) for r in reps))
    add("attack steps leave Bob's state intact", min(r.min_step_fidelity() for r in reps) >= 1 - tol)
    return checks

