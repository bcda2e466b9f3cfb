"""Combinatorial optimisation problems as Markov decision processes.

Two formulations of the same construction process are provided: the direct
MDP, whose states are partial solutions of one fixed instance, and the
quotiented MDP, whose states are the tail subproblems themselves. Five
problems are implemented (path-TSP, path-ATSP, path-CVRP, path-OP and the
knapsack problem), together with exact oracles for small instances, an
attention policy trained by imitation, and greedy / beam decoding.
"""

from .core import IllegalStep, Instance, PartialSolution, Step, compose, step_decompositions
from .direct import NEUTRAL, DirectState, Transition
from .problems import Knapsack, PathAtsp, PathCvrp, PathOp, PathTsp, random_instance

__version__ = "0.1.0"

__all__ = [
    "IllegalStep",
    "Instance",
    "PartialSolution",
    "Step",
    "compose",
    "step_decompositions",
    "NEUTRAL",
    "DirectState",
    "Transition",
    "Knapsack",
    "PathAtsp",
    "PathCvrp",
    "PathOp",
    "PathTsp",
    "random_instance",
]
