"""Hard-constraint output layers via operator-splitting projection.

The package projects network outputs onto lifted convex sets with a
Douglas-Rachford fixed point, differentiates the projection implicitly,
and ships the surrounding kit: Ruiz equilibration, step-size autotuning,
benchmark problem families, a training harness, and a CLI.

Submodules import lazily; ``import splitproj`` stays cheap.
"""

_EXPORTS = {
    # constraint descriptions
    "FreeSpace": "sets", "BoxSet": "sets", "SecondOrderConeSet": "sets",
    "SimplexSet": "sets", "L1BallSet": "sets", "FactorSet": "sets",
    "Hyperplane": "sets", "RawConstraint": "sets", "LiftedConstraint": "sets",
    "lift_polytope": "sets", "lift_box_program": "sets",
    "lift_soc_program": "sets", "lift_intersection": "sets",
    # forward projection
    "DRSettings": "projection", "BatchProjectionResult": "projection",
    "dr_project": "projection", "dr_project_batch": "projection",
    "EquilibratedConstraint": "projection",
    "dr_project_equilibrated": "projection",
    "dr_project_equilibrated_batch": "projection",
    "convergence_profile_batch": "projection",
    "iterations_to_threshold": "projection",
    # implicit backward pass
    "KrylovSettings": "backward", "FixedPointResidualOp": "backward",
    "projection_vjp": "backward", "projection_vjp_batch": "backward",
    # conditioning
    "Scaling": "equilibration", "ruiz_equilibrate": "equilibration",
    "rescale_constraint": "equilibration",
    "TuneThresholds": "autotune", "TuneReport": "autotune",
    "tune": "autotune",
    # problems and oracles
    "ObjectiveSpec": "problems", "Dataset": "problems",
    "objective_values": "problems", "gen_dc3_family": "problems",
    "gen_toy_mpc": "problems", "gen_soc_family": "problems",
    "gen_trajectory_family": "problems", "compute_oracles": "problems",
    "qp_solve": "oracle",
    # model and training
    "Backbone": "layer", "ProjectionLayer": "layer",
    "ConstrainedModel": "layer", "save_model": "layer", "load_model": "layer",
    "TrainConfig": "training", "Metrics": "training", "RunLog": "training",
    "make_model": "training", "train": "training", "evaluate": "training",
    # errors
    "ConfigError": "exceptions", "InfeasibleConstraintError": "exceptions",
    "NumericalFailureError": "exceptions", "MissingArtifactError": "exceptions",
}

__all__ = sorted(_EXPORTS)
__version__ = "0.1.0"


def __getattr__(name):
    module = _EXPORTS.get(name)
    if module is None:
        raise AttributeError(f"module 'splitproj' has no attribute {name!r}")
    import importlib

    value = getattr(importlib.import_module(f".{module}", __name__), name)
    globals()[name] = value
    return value


def __dir__():
    return sorted(set(globals()) | set(__all__))
