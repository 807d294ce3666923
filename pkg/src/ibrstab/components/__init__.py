"""Linearized state-space blocks for network components."""

from .block import Port, PortKind, StateSpaceBlock
from .passive import capacitor_block, line_blocks, load_block, rl_block, transformer_block
from .machine import linearize_sg, sg_equilibrium
from .inverter import ibr_equilibrium, linearize_ibr, modulus_optimum_gains

__all__ = [
    "Port", "PortKind", "StateSpaceBlock", "capacitor_block", "line_blocks", "load_block",
    "rl_block", "transformer_block", "linearize_sg", "sg_equilibrium", "ibr_equilibrium",
    "linearize_ibr", "modulus_optimum_gains",
]
