"""Run configurations, JSON reports and CSV sweep tables."""
from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from .circuit import LOST, outcome_distribution
from .errors import ValidationError
from .fisher import fisher_common_theta, fisher_per_site_sum
from .oracle import MAX_SITES, oracle_run
from .protocols import ProtocolSpec, build
from .trace import second_order_fit, trace_combined

CRITERIA = ("trace", "fisher")
COUPLINGS = ("incoherent", "coherent")
FISHER_MODES = ("per_site_sum", "common_theta")
SWEEP_PARAMS = ("M", "N", "K", "epsilon")
DEFAULT_THRESHOLD = 0.1
#: second-order (AV) trace fits are skipped above this many sites
SECOND_ORDER_SITE_CAP = 64
WORKERS_ENV = "CFSIM_WORKERS"


@dataclass(frozen=True)
class RunConfig:
    protocol: ProtocolSpec
    epsilon: float = 1e-3
    criteria: tuple = CRITERIA
    coupling: str = "incoherent"
    fisher_mode: str = "per_site_sum"
    postselected: bool = True
    sweep: dict | None = None
    output: str | None = None
    verdict_threshold: float = DEFAULT_THRESHOLD
    workers: int = 1

    def validate(self) -> "RunConfig":
        self.protocol.validate()
        if not (0.0 < self.epsilon <= 0.05):
            raise ValidationError("epsilon: must lie in (0, 0.05]")
        if not self.criteria or any(c not in CRITERIA for c in self.criteria):
            raise ValidationError(f"criteria: expected a non-empty subset of {set(CRITERIA)}")
        if self.coupling not in COUPLINGS:
            raise ValidationError(f"coupling: expected one of {COUPLINGS}")
        if self.fisher_mode not in FISHER_MODES:
            raise ValidationError(f"fisher_mode: expected one of {FISHER_MODES}")
        if not self.verdict_threshold > 0:
            raise ValidationError("verdict_threshold: must be positive")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ValidationError("workers: must be a positive integer")
        if self.sweep is not None:
            _check_sweep(self.sweep)
        return self

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol.to_dict(),
            "epsilon": self.epsilon,
            "criteria": list(self.criteria),
            "coupling": self.coupling,
            "fisher_mode": self.fisher_mode,
            "postselected": self.postselected,
            "sweep": None if self.sweep is None else dict(self.sweep),
            "output": self.output,
            "verdict_threshold": self.verdict_threshold,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"config: unknown fields {sorted(unknown)}")
        if "protocol" not in doc:
            raise ValidationError("protocol: required")
        vals = dict(doc)
        proto = vals["protocol"]
        vals["protocol"] = ProtocolSpec.from_dict({"name": proto} if isinstance(proto, str) else proto)
        if "criteria" in vals:
            crit = vals["criteria"]
            vals["criteria"] = tuple(crit.split(",") if isinstance(crit, str) else crit)
        try:
            for key, typ in (("epsilon", float), ("verdict_threshold", float), ("workers", int)):
                if key in vals:
                    vals[key] = typ(vals[key])
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"{key}: invalid value {vals[key]!r}") from exc
        return cls(**vals).validate()


def _check_sweep(sweep: dict) -> None:
    param = sweep.get("param")
    if param not in SWEEP_PARAMS:
        raise ValidationError(f"sweep.param: must be one of {SWEEP_PARAMS}, got {param!r}")
    values = sweep.get("values")
    if not values:
        raise ValidationError("sweep.values: empty sweep list")
    unknown = set(sweep) - {"param", "values", "n_over_m"}
    if unknown:
        raise ValidationError(f"sweep: unknown fields {sorted(unknown)}")


def verdict(ratio: float, threshold: float = DEFAULT_THRESHOLD) -> str:
    return "counterfactual" if ratio < threshold else "not counterfactual"


def run(config: RunConfig) -> dict:
    """Analyse one protocol; returns a JSON-ready report document."""
    config.validate()
    spec = config.protocol
    circuit = build(spec)
    n_sites = len(circuit.bob_sites)
    dist = outcome_distribution(circuit)
    report = {
        "config": config.to_dict(),
        "protocol": {
            "name": circuit.name,
            "spec": spec.to_dict(),
            "n_sites": n_sites,
            "n_slices": len(circuit.slices),
            "reference_path_count": circuit.reference_path_count,
            "legitimate_outcomes": sorted(circuit.legitimate_outcomes),
            "alice_detectors": sorted(circuit.alice_detectors),
            "metadata": _plain(circuit.metadata),
        },
        "outcome_probabilities": _outcome_probs(dist),
        "verdicts": {},
    }
    if "trace" in config.criteria:
        tr = trace_combined(circuit, config.epsilon, config.coupling, config.postselected)
        report["trace"] = tr.to_dict()
        report["verdicts"]["trace"] = verdict(tr.ratio, config.verdict_threshold)
        if n_sites <= MAX_SITES:
            orc = oracle_run(circuit, config.epsilon, coherent=config.coupling == "coherent")
            exact = orc.legit_combined(circuit, config.postselected)
            report["oracle"] = {
                "model": orc.model,
                "combined": exact,
                "delta": tr.combined - exact,
                "state_dimension": orc.state_dimension,
            }
        if spec.name.startswith("av_") and n_sites <= SECOND_ORDER_SITE_CAP:
            report["second_order"] = second_order_fit(circuit)
    if "fisher" in config.criteria:
        fn = fisher_per_site_sum if config.fisher_mode == "per_site_sum" else fisher_common_theta
        fr = fn(circuit, config.postselected)
        report["fisher"] = fr.to_dict()
        report["verdicts"]["fisher"] = verdict(fr.ratio, config.verdict_threshold)
    cf = all(v == "counterfactual" for v in report["verdicts"].values())
    report["verdict"] = "counterfactual" if cf else "not counterfactual"
    return report


def _plain(meta: dict) -> dict:
    return json.loads(json.dumps(meta, default=str))


def _outcome_probs(dist: dict) -> dict:
    out = {}
    for key, p in dist.items():
        name = LOST if key == LOST else f"{key[0]}:{key[1]}"
        out[name] = p
    return dict(sorted(out.items()))


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def loads(text: str) -> dict:
    return json.loads(text)


# --------------------------------------------------------------------------
# sweeps

def sweep_configs(config: RunConfig) -> list:
    if config.sweep is None:
        raise ValidationError("sweep: no sweep given")
    _check_sweep(config.sweep)
    param, ratio = config.sweep["param"], config.sweep.get("n_over_m")
    out = []
    for value in config.sweep["values"]:
        if param == "epsilon":
            cfg = replace(config, epsilon=float(value), sweep=None)
        else:
            if int(value) != value:
                raise ValidationError(f"sweep.values: {param} must be integer, got {value!r}")
            changes = {param: int(value)}
            if param == "M" and ratio is not None:
                changes["N"] = int(ratio) * int(value)
            cfg = replace(config, protocol=replace(config.protocol, **changes), sweep=None)
        out.append(cfg.validate())
    return out


def _row(args) -> dict:
    param, value, cfg = args
    rep = run(cfg)
    row = {"param": param, "value": value}
    probs = rep["outcome_probabilities"]
    for det in rep["protocol"]["legitimate_outcomes"]:
        row[f"p[{det}]"] = probs.get(f"{det}:H", 0.0) + probs.get(f"{det}:V", 0.0)
    tr, fr = rep.get("trace"), rep.get("fisher")
    row["trace"] = tr["combined"] if tr else ""
    row["trace_ratio"] = tr["ratio"] if tr else ""
    row["fisher"] = fr["total"] if fr else ""
    row["fisher_ratio"] = fr["ratio"] if fr else ""
    row["fisher_residual"] = fr["extrapolation_residual"] if fr else ""
    row["oracle_delta"] = rep["oracle"]["delta"] if "oracle" in rep else ""
    return row


def resolve_workers(config: RunConfig) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ValidationError(f"{WORKERS_ENV}: must be a positive integer") from exc
        if n < 1:
            raise ValidationError(f"{WORKERS_ENV}: must be a positive integer")
        return n
    return config.workers


def sweep(config: RunConfig) -> list:
    """One row per sweep value, in input order."""
    cfgs = sweep_configs(config)
    param = config.sweep["param"]
    jobs = [(param, v, c) for v, c in zip(config.sweep["values"], cfgs)]
    workers = min(resolve_workers(config), len(jobs))
    if workers <= 1:
        return [_row(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_row, jobs))


def rows_to_csv(rows: list) -> str:
    columns = []
    for row in rows:
        for k in row:
            if k not in columns:
                columns.append(k)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, restval="", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
