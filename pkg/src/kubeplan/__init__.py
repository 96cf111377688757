"""Cost-optimal component placement for Kubernetes, with manifest generation and scheduler simulation."""

from .model import (
    ApplicationDescription,
    Bound,
    Colocation,
    Component,
    Conflict,
    DeploymentPlan,
    ExclusiveDeployment,
    FullDeployment,
    ModelError,
    Offer,
    OfferCatalog,
    RequireProvide,
    parse_application,
    parse_offers,
    parse_plan,
    write_plan,
)
from .optimizer import SolveReport, Status, brute_force_solve, check_plan, solve
from .predeployer import ManifestFlavor, emit_manifests, provisioning_script, translate

__all__ = [
    "ApplicationDescription",
    "Bound",
    "Colocation",
    "Component",
    "Conflict",
    "DeploymentPlan",
    "ExclusiveDeployment",
    "FullDeployment",
    "ManifestFlavor",
    "ModelError",
    "Offer",
    "OfferCatalog",
    "RequireProvide",
    "SolveReport",
    "Status",
    "brute_force_solve",
    "check_plan",
    "emit_manifests",
    "parse_application",
    "parse_offers",
    "parse_plan",
    "provisioning_script",
    "solve",
    "translate",
    "write_plan",
]
