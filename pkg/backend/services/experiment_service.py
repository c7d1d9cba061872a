"""
Experiment runner: one ExperimentConfig in, artifacts and a result document out.

Every experiment writes its result JSON (and CSV where tabular) plus a
run-manifest.json. Sweep points run concurrently inside the services;
writing happens here, after all points are collected.
"""

import filecmp
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Tuple

import numpy as np
from pydantic import ValidationError

from backend.config import config
from backend.config.settings import settings
from backend.models.schemas import ExperimentConfig, MatrixPayload
from backend.services import acceptance
from backend.services.errors import AcceptanceFailure, ConfigError
from backend.services.file_handler import (
    config_hash,
    dump_witnesses,
    load_density,
    load_pairs,
    save_csv,
    save_json,
)
from backend.services.gaussian import gaussian_exponent_curve
from backend.services.hypothesis_testing import exponent_curve, stein_exponent
from backend.services.inequalities import (
    negative_power_stress,
    pinching_dominance_stress,
    pinching_log_stress,
    plog2_max,
    plog2_max_search,
)
from backend.services.info_spectrum import classical_errors, classical_np, spectral_record, threshold_test
from backend.services.measurement_design import (
    chernoff_markov_bound,
    design_measurement,
    rho_entropy_gap,
    sigma_spectrum_under_rho,
    variance_identity_gap,
)
from backend.services.operator_algebra import relative_entropy_variance, tensor_power
from backend.services.schur_weyl import irreducible_decomposition, verify_block_commutativity

logger = logging.getLogger(__name__)

EXPONENT_COLUMNS = ["n", "alpha", "beta", "minus_log_beta_over_n", "strategy", "seed"]
ISPEC_COLUMNS = ["n", "lambda", "alpha", "beta", "e_minus_n_lambda"]
GAUSSIAN_COLUMNS = ["n", "alpha", "beta", "minus_log_beta_over_n", "closed_form_D", "beta_threshold"]

DEFAULT_TRIALS = {"pinching-log": 200, "pinching-dominance": 500, "negative-power": 100}
SCHUR_TRIALS = 20


@dataclass
class RunResult:
    experiment: str
    seed: int
    passed: bool
    result: Dict[str, Any]
    rows: List[Dict[str, Any]] = field(default_factory=list)
    artifacts: List[str] = field(default_factory=list)
    columns: List[str] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else AcceptanceFailure.exit_code


# Handler output: (result document, CSV rows, CSV columns, passed)
Outcome = Tuple[Dict[str, Any], List[Dict[str, Any]], List[str], bool]


def parse_config(raw: Dict[str, Any]) -> ExperimentConfig:
    """Validate a raw config; pydantic errors become a ConfigError naming the field paths."""
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        fields = [".".join(str(part) for part in error["loc"]) or "<root>" for error in exc.errors()]
        messages = "; ".join(f"{f}: {error['msg']}" for f, error in zip(fields, exc.errors()))
        raise ConfigError("run", f"invalid config ({messages})", fields) from exc


class ExperimentService:
    """Runs experiments and writes their artifacts."""

    def __init__(self):
        self._handlers: Dict[str, Callable[[ExperimentConfig, Path], Outcome]] = {
            "exponent": self._exponent,
            "design": self._design,
            "schur": self._schur,
            "ispec": self._ispec,
            "ineq": self._ineq,
            "gaussian": self._gaussian,
            "selftest": self._selftest,
        }

    def run(self, cfg: ExperimentConfig) -> RunResult:
        """
        Run one experiment.

        LOGIC:
        1. Scope the dimension-cap override to this run's context
        2. Dispatch to the experiment handler; it returns the result document and CSV rows
        3. Write CSV, result JSON and run-manifest.json

        Args:
            cfg: validated experiment config

        Returns:
            RunResult with the result document and the artifact paths
        """
        start = time.perf_counter()
        out_dir = Path(cfg.out_dir or settings.output_dir)
        with settings.dim_cap_scope(cfg.dim_cap):
            logger.info("running %s (seed %d)", cfg.experiment, cfg.seed)
            result, rows, columns, passed = self._handlers[cfg.experiment](cfg, out_dir)

        artifacts: List[Path] = []
        if columns:
            artifacts.append(save_csv(rows, cfg.csv or out_dir / f"{cfg.experiment}.csv", columns))
        document = {"experiment": cfg.experiment, "seed": cfg.seed, "passed": passed, "result": result}
        json_path = Path(cfg.out) if cfg.out else out_dir / f"{cfg.experiment}.json"
        artifacts.append(save_json(document, json_path))
        artifacts.extend(Path(p) for p in result.get("witness_files", []))

        manifest = {
            "version": config.VERSION,
            "experiment": cfg.experiment,
            "seed": cfg.seed,
            "config_hash": config_hash(cfg.hashed_fields()),
            "wall_time_seconds": round(time.perf_counter() - start, 3),
            "artifacts": [str(p) for p in artifacts],
        }
        save_json(manifest, json_path.parent / "run-manifest.json")
        logger.info("%s finished in %.1fs", cfg.experiment, manifest["wall_time_seconds"])
        return RunResult(cfg.experiment, cfg.seed, passed, result, rows, [str(p) for p in artifacts], columns)

    # ========================================================================
    # HANDLERS
    # ========================================================================

    def _states(self, cfg: ExperimentConfig):
        return load_density(cfg.rho), load_density(cfg.sigma)

    def _exponent(self, cfg: ExperimentConfig, out_dir: Path) -> Outcome:
        rho, sigma = self._states(cfg)
        curve = exponent_curve(rho, sigma, cfg.epsilon, cfg.resolved_n_range(), cfg.strategy, cfg.seed)
        result = {
            "strategy": curve.strategy,
            "epsilon": cfg.epsilon,
            "relative_entropy": stein_exponent(rho, sigma),
            "relative_entropy_variance": relative_entropy_variance(rho, sigma, restrict_support=True),
            "slope_estimate": curve.slope_estimate,
            "refined_slope": curve.refined_slope,
            "fit_window": list(curve.fit_window),
            "residuals": list(curve.residuals),
            "limsup_admissible": curve.limsup_admissible,
            "liminf_admissible": curve.liminf_admissible,
        }
        return result, curve.rows(cfg.seed), EXPONENT_COLUMNS, True

    def _design(self, cfg: ExperimentConfig, out_dir: Path) -> Outcome:
        rho, sigma = self._states(cfg)
        n = cfg.n
        decomp = irreducible_decomposition(n, rho.dim, cfg.seed)
        dm = design_measurement(rho, sigma, decomp)
        rho_n, sigma_n = tensor_power(rho, n), tensor_power(sigma, n)
        sample = sigma_spectrum_under_rho(dm, rho_n, sigma_n, n)
        chernoff = [
            {"a": a, "exponent": exponent, "tail_bound": math.exp(-n * exponent), "tail": sample.tail(a)}
            for a, exponent in ((a, chernoff_markov_bound(dm, rho_n, n, a)) for a in cfg.chernoff_a)
        ]
        result = {
            "decomposition": decomp.summary(),
            "measurement": dm.summary(),
            "outcomes": [
                {"value": v, "p_mass": p, "q_mass": q}
                for v, p, q in zip(sample.values, sample.p_mass, sample.q_mass)
            ],
            "variance_identity_gap": variance_identity_gap(dm, rho, sigma, n),
            "spectrum_mean": sample.mean(),
            "spectrum_variance": sample.variance(),
            "rho_entropy_gap": rho_entropy_gap(dm, rho),
            "chernoff": chernoff,
        }
        return result, [], [], True

    def _schur(self, cfg: ExperimentConfig, out_dir: Path) -> Outcome:
        decomp = irreducible_decomposition(cfg.n, cfg.k, cfg.seed)
        norm = verify_block_commutativity(decomp, cfg.trials or SCHUR_TRIALS, cfg.seed)
        result = {**decomp.summary(), "max_commutator_norm": norm, "attempts": decomp.attempts}
        return result, [], [], decomp.w <= decomp.bound

    def _ispec(self, cfg: ExperimentConfig, out_dir: Path) -> Outcome:
        pairs = load_pairs(cfg.pairs if isinstance(cfg.pairs, str) else [p.model_dump() for p in cfg.pairs])
        rows, records = [], []
        for index, dp in enumerate(pairs):
            record = spectral_record(dp)
            for lam in record.grid:
                alpha, beta = classical_errors(dp, threshold_test(dp, lam))
                rows.append({
                    "n": dp.n,
                    "lambda": float(lam),
                    "alpha": alpha,
                    "beta": beta,
                    "e_minus_n_lambda": float(np.exp(-dp.n * lam)),
                })
            optimum = classical_np(dp, cfg.epsilon)
            records.append({
                "index": index,
                "n": dp.n,
                "beta_star": optimum.beta_star,
                "threshold": optimum.threshold,
                "randomization": optimum.randomization,
                "alpha": optimum.alpha,
                "quantiles": {str(level): q for level, q in record.quantiles.items()},
                "infinite_mass": record.infinite_mass,
            })
        return {"epsilon": cfg.epsilon, "pairs": records}, rows, ISPEC_COLUMNS, True

    def _ineq(self, cfg: ExperimentConfig, out_dir: Path) -> Outcome:
        if cfg.check == "plog2":
            entries = []
            for k in (2, 3, 4):
                search = plog2_max_search(k)
                closed = plog2_max(k)
                entries.append({
                    "k": k,
                    "closed_form": closed,
                    "oracle": search.value,
                    "support": search.support,
                    "levels": list(search.levels),
                    "interior": search.interior,
                    "ok": abs(closed - search.value) <= config.PLOG2_ORACLE_TOL,
                })
            return {"check": "plog2", "entries": entries}, [], [], all(e["ok"] for e in entries)

        stress = {
            "pinching-log": pinching_log_stress,
            "pinching-dominance": pinching_dominance_stress,
            "negative-power": negative_power_stress,
        }[cfg.check]
        report = stress(cfg.trials or DEFAULT_TRIALS[cfg.check], cfg.seed)
        result = report.summary()
        if report.witnesses:
            directory = settings.witness_dir or out_dir
            result["witness_files"] = [str(dump_witnesses(report.name, report.witnesses, directory))]
        return result, [], [], report.passed

    def _gaussian(self, cfg: ExperimentConfig, out_dir: Path) -> Outcome:
        theta0, theta1 = complex(*cfg.theta0), complex(*cfg.theta1)
        curve = gaussian_exponent_curve(theta0, theta1, cfg.nbar, cfg.resolved_n_range(), cfg.eps_region, cfg.cutoff)
        result = {
            **curve.summary(),
            "nbar": cfg.nbar,
            "eps_region": cfg.eps_region,
            "cutoffs": [p.cutoff for p in curve.points],
        }
        return result, curve.rows(), GAUSSIAN_COLUMNS, True

    def _selftest(self, cfg: ExperimentConfig, out_dir: Path) -> Outcome:
        witness_files: List[str] = []

        def sink(name: str, witnesses: List[dict]) -> None:
            witness_files.append(str(dump_witnesses(name, witnesses, settings.witness_dir or out_dir)))

        suite = acceptance.run_suite(cfg.seed, cfg.quick, run_twice=self._determinism_probe(cfg.seed),
                                     witness_sink=sink)
        result = suite.summary()
        if witness_files:
            result["witness_files"] = witness_files
        if not suite.passed:
            logger.warning("selftest failed: %s", ", ".join(suite.failed))
        return result, [], [], suite.passed

    def _determinism_probe(self, seed: int) -> Callable[[Path, Path], bool]:
        """Run a small exponent sweep and a decomposition twice and compare the artifact bytes."""
        rho, sigma = acceptance.stein_pair()
        base = {
            "seed": seed,
            "rho": MatrixPayload.from_array(rho.matrix).model_dump(),
            "sigma": MatrixPayload.from_array(sigma.matrix).model_dump(),
        }
        probes = [
            {**base, "experiment": "exponent", "n_max": 5, "strategy": "designed_measurement"},
            {"experiment": "schur", "seed": seed, "n": 4, "k": 2, "trials": 5},
        ]

        def run_twice(first: Path, second: Path) -> bool:
            for directory in (first, second):
                for probe in probes:
                    sub = directory / probe["experiment"]
                    self.run(parse_config({**probe, "out_dir": str(sub)}))
            for probe in probes:
                a, b = first / probe["experiment"], second / probe["experiment"]
                names = sorted(p.name for p in a.iterdir() if p.name != "run-manifest.json")
                _, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
                if mismatch or errors:
                    logger.warning("determinism mismatch in %s: %s", probe["experiment"], mismatch or errors)
                    return False
            return True

        return run_twice


experiment_service = ExperimentService()
