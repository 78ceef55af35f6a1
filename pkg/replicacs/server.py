#!/usr/bin/env python3
"""
MCP Server for replica predictions
Exposes R-transforms, RS/1RSB predictions and Monte Carlo runs as tools

Key features:
- Configs are the same JSON objects the CLI reads
- Results cached per config for repeated queries
- Physics-level failures come back in the status field, config errors as {"error": ...}
"""

import hashlib
import json
import logging
import math
from typing import Any, Dict, List, Literal

from fastmcp import FastMCP

from .ensemble import r_transform as _r_transform
from .errors import ReplicaError
from .models import EnsembleSpec
from .simulate import run_sim
from .sweep import SolverSettings, build_sim_config, build_system, predict as _predict
from .utils import parse_config, rows_as_dicts, sim_summary

# Configure logging
logging.basicConfig(
    level=logging.INFO, format="%(asctime)s - %(levelname)s - %(message)s"
)
logger = logging.getLogger(__name__)

# Initialize MCP server
mcp = FastMCP("Replica Compressive Sensing")

# Results keyed by (tool, config hash)
_result_cache: Dict[str, Dict[str, Any]] = {}


def _config_key(tool: str, config: Dict[str, Any]) -> str:
    """Stable cache key: the canonical JSON of the config"""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return f"{tool}:{hashlib.sha256(canonical.encode('utf-8')).hexdigest()}"


def _run_predict(config: Dict[str, Any]) -> Dict[str, Any]:
    """
    Prediction rows for a config, with caching.

    Args:
        config: Config object as read from a CLI JSON file

    Returns:
        {"rows": [...]} or {"error": ...}; errors are not cached
    """
    key = _config_key("predict", config)
    if key in _result_cache:
        logger.info("predict: cache hit")
        return _result_cache[key]

    try:
        cfg = parse_config(config)
        system = build_system(cfg)
        rows = _predict(system, cfg.solver, SolverSettings.from_config(cfg))
    except (ReplicaError, ValueError) as e:
        return {"error": str(e)}

    result: Dict[str, Any] = {"rows": rows_as_dicts(rows)}
    _result_cache[key] = result
    return result


def _run_simulate(config: Dict[str, Any]) -> Dict[str, Any]:
    """Simulation summary for a config with a sim block, with caching"""
    key = _config_key("simulate", config)
    if key in _result_cache:
        logger.info("simulate: cache hit")
        return _result_cache[key]

    try:
        cfg = parse_config(config)
        sim_cfg = build_sim_config(build_system(cfg), cfg.sim)
        report = run_sim(sim_cfg)
    except (ReplicaError, ValueError) as e:
        return {"error": str(e)}

    summary = sim_summary(report, {"penalty": sim_cfg.penalty.kind, "rate": sim_cfg.r})
    summary["distortions"] = [d if math.isfinite(d) else None for d in report.distortions]
    _result_cache[key] = summary
    return summary


@mcp.tool()
def list_penalties() -> Dict[str, List[Dict[str, str]]]:
    """
    List the built-in penalties, ensembles and distortions.

    Returns:
        Dictionary with the accepted config values and a short description each
    """
    return {
        "penalties": [
            {"name": "l2", "description": "u(v) = v²/2, ridge / Tikhonov"},
            {"name": "l1", "description": "u(v) = |v|, LASSO"},
            {"name": "l0", "description": "u(v) = 1{v ≠ 0}, best subset"},
        ],
        "ensembles": [
            {"name": "iid", "description": "i.i.d. Gaussian entries, variance 1/k"},
            {"name": "projector", "description": "√r times k orthonormal rows (r >= 1)"},
            {"name": "tabulated", "description": "Gramian spectrum read from CSV"},
        ],
        "distortions": [
            {"name": "squared", "description": "(x̂ - x)²"},
            {"name": "absolute", "description": "|x̂ - x|"},
        ],
    }


@mcp.tool()
def r_transform(
    ensemble: Literal["iid", "projector"], r: float, omega: float
) -> Dict[str, Any]:
    """
    R-transform of the Gramian spectrum.

    Args:
        ensemble: "iid" or "projector"
        r: Compression rate n/k
        omega: Argument ω (negative on the solver's path)

    Returns:
        Dictionary with the inputs and R, or {"error": ...}

    Examples:
        >>> r_transform("iid", 2.0, -0.5)
        {'ensemble': 'iid', 'r': 2.0, 'omega': -0.5, 'R': 0.5}
    """
    try:
        value = _r_transform(EnsembleSpec(kind=ensemble, r=r), omega)
    except (ReplicaError, ValueError) as e:
        return {"error": str(e)}
    return {"ensemble": ensemble, "r": r, "omega": omega, "R": value}


@mcp.tool()
def predict(config: Dict[str, Any]) -> Dict[str, Any]:
    """
    RS and/or 1RSB prediction for one config, as the CLI's predict command.

    Args:
        config: Config object (keys as in the CLI's JSON files; tabulated
            spectrum paths are resolved against the working directory)

    Returns:
        Dictionary with one entry per solver row (alternative fixed points
        included), or {"error": ...} for an invalid config

    Examples:
        >>> predict({"ensemble": "iid", "r": 2, "penalty": "l2", "s": 0.1,
        ...          "lambda": 0.01, "lambda0": 0.01})
        {'rows': [{'solver': 'rs', 'D': 0.0548..., 'status': 'Converged', ...}]}
    """
    return _run_predict(config)


@mcp.tool()
def simulate(config: Dict[str, Any]) -> Dict[str, Any]:
    """
    Monte Carlo reconstruction for one config (needs a "sim" block).

    Args:
        config: Config object with sim {n, trials, seed}

    Returns:
        Summary with mean, stderr, per-trial iterations and the seed used,
        or {"error": ...}
    """
    return _run_simulate(config)


if __name__ == "__main__":
    # Run the MCP server
    mcp.run()
