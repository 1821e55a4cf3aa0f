"""PCRAM algorithms, each with a plain word-RAM oracle.

Every algorithm needs a :class:`Kit` (its circuit table, sized for the
machine's budgets) installed on a fresh :class:`~pcram.machine.Machine`::

    kit = sort_kit(config)
    machine = kit.machine(config)
    out = sort(machine, kit, data)
    machine.report()
"""

from .common import Kit, fit_kit, pack_mask
from .aggregation import (AggregationInstance, aggregate, aggregate_bulk, aggregate_oracle,
                          aggregation_kit, partition_kit, partition_oracle, pivot_partition,
                          pivot_partition_bulk)
from .sorting import sort, sort_kit
from .xsum import xsum, xsum_kit, xsum_oracle
from .dynprog import (AuxField, DpSpec, dp_kit, dp_reference, dp_solve, edit_oracle, edit_spec,
                      lcs_oracle, lcs_spec)
from .recursive import (RecursiveSpec, karatsuba, karatsuba_spec, recursive_accelerate,
                        recursive_kit, recursive_reference)

__all__ = [
    "Kit", "fit_kit", "pack_mask",
    "AggregationInstance", "aggregate", "aggregate_bulk", "aggregate_oracle", "aggregation_kit",
    "partition_kit", "partition_oracle", "pivot_partition", "pivot_partition_bulk",
    "sort", "sort_kit", "xsum", "xsum_kit", "xsum_oracle",
    "AuxField", "DpSpec", "dp_kit", "dp_reference", "dp_solve", "edit_oracle", "edit_spec",
    "lcs_oracle", "lcs_spec",
    "RecursiveSpec", "karatsuba", "karatsuba_spec", "recursive_accelerate", "recursive_kit",
    "recursive_reference",
]
