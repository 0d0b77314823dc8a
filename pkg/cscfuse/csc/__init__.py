"""Convolutional sparse coding: the ISTA reference solver and dictionary convolutional units."""

from cscfuse.csc.dcu import Dcu, DcuStack, dcu_forward, dcu_stack_forward
from cscfuse.csc.ista import IstaProblem, IstaResult, csc_objective, estimate_lipschitz, ista_solve, ista_step
from cscfuse.csc.modules import BatchNorm, Identity, Module, PRelu, Relu, Sst, make_activation

__all__ = [
    "BatchNorm", "Dcu", "DcuStack", "Identity", "IstaProblem", "IstaResult", "Module", "PRelu",
    "Relu", "Sst", "csc_objective", "dcu_forward", "dcu_stack_forward", "estimate_lipschitz",
    "ista_solve", "ista_step", "make_activation",
]
