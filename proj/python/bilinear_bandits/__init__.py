"""Python front end for the bilinear bandit simulator."""

import json

from ._core import (
    BilinearError,
    GoblinConfig,
    Instance,
    InvalidArgument,
    MultiRunRecord,
    MultiTaskInstance,
    RotationMap,
    RunRecord,
    SpanDeficient,
    build_rotation,
    csv_header,
    d_optimal,
    e_optimal,
    make_instance,
    multitask_instance,
    prox_ls_estimate,
    run_doubexpdes_like,
    run_multi,
    run_rage_ambient,
    run_single,
    run_sweep_json,
    svt,
    unit_ball_instance,
)


def run_sweep(config):
    """Run a sweep described by a dict in the CLI's JSON schema."""
    return run_sweep_json(json.dumps(config))

__all__ = [name for name in dir() if not name.startswith("_")]
