"""Transition fronts, entire solutions and wave stability for KPP media.

The heavy lifting lives in the compiled ``_core`` module; this layer only
moves dictionaries across as JSON.
"""
import json as _json

from . import _core
from ._core import (
    ConfigError,
    ConstructionError,
    ConvergenceError,
    Grid,
    InvariantError,
    KpplabError,
    Media,
    Operator,
    UnsupportedError,
    Wave,
    build_entire,
    decay_rate,
    part_metric,
    principal_lambda,
    solve_ivp,
    speed_curve,
)

__version__ = _core.__version__


def media(spec=None, **fields):
    """Media from a spec dict (or keyword fields); an empty spec is the logistic model."""
    spec = dict(spec or {})
    spec.update(fields)
    return Media.from_json(_json.dumps(spec))


def build_wave(op, med, recipe=None):
    return _core.build_wave(op, med, _json.dumps(recipe or {}))


def wave_diagnostics(wave, eps1=0.1, eps2=0.9, tau=1.0):
    return _json.loads(wave.diagnostics_json(eps1, eps2, tau))


def stability(op, med, wave, perturbation=None, horizon=50.0, eps_target=1e-2, t0=0.0):
    spec = _json.dumps(perturbation or {"kind": "scale", "amplitude": 0.1})
    return _json.loads(_core.stability_json(op, med, wave, spec, horizon, eps_target, t0))


def comparison_suite(op, med, pairs=100, seed=0, horizon=2.0):
    return _json.loads(_core.comparison_suite_json(op, med, pairs, seed, horizon))


def partmetric_suite(op, med, pairs=100, seed=0, sigma=0.2, tau=1.0):
    return _json.loads(_core.partmetric_suite_json(op, med, pairs, seed, sigma, tau))


def resolve_config(config):
    """Validated config with every default filled in."""
    return _json.loads(_core.resolve_config_json(_json.dumps(config)))


def run(config):
    """Runs one experiment and returns its manifest."""
    return _json.loads(_core.run_json(_json.dumps(config)))


def report(dirs):
    return _json.loads(_core.report_json([str(d) for d in dirs]))
