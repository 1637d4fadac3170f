"""Exact fold calculus on metric graphs.

Subtractive (Brun) expansions and their matrix products, marked metric
graphs with Stallings-style folds, loop decompositions of trivalent graphs,
rose-to-rose fold lines, and dense geodesic rays assembled from both.
"""

from .matrices import (
    IntMatrix,
    PFData,
    PosVector,
    apply,
    cone_diameter,
    fold_matrix,
    identity,
    normalize,
    pf_eigen,
    unfold_matrix,
)
from .brun import (
    BrunExpansion,
    brun_automorphism,
    brun_expand,
    brun_step_homogeneous,
    brun_step_ordered,
    brun_step_unordered,
    ordered_expand,
    ordering_map,
    pf_sample,
    positivity_onset,
    relate_expansions,
)
from .automorphisms import AutomorphismWord, fold_letter, fold_word, perm_letter, subst_letter
from .graphs import (
    Graph,
    GraphMap,
    MarkedMetricGraph,
    Turn,
    act,
    gates,
    is_allowable,
    is_isomorphic,
    is_legal_loop,
    metric_isomorphic,
    reduce_path,
    reverse_path,
    rose_graph,
    rose_point,
    theta_graph,
    transition_matrix,
    transition_matrix_of_map,
    turn_is_legal,
)
from .folds import FoldMachine, combinatorial_fold, fold_turn
from .decompose import (
    LoopDecomposition,
    good_spanning_tree,
    loop_decomposition,
    verify_decomposition,
)
from .foldlines import (
    FoldStep,
    GraphToRoseFolds,
    RoseToGraphLine,
    RoseToRoseLine,
    SimplexChart,
    graph_to_rose,
    lengths_from_params,
    rationalize,
    recover_rose,
    region_contains,
    retarget,
    rose_to_graph,
    rose_to_rose,
    rose_turns,
    simplex_chart,
    verify_recovery,
)
from .ray import (
    DensityResult,
    FoldGate,
    GeodesicCertificate,
    LineEntry,
    PFEntry,
    Ray,
    RaySchedule,
    RaySegment,
    TangentDatum,
    base_from_matrices,
    base_point,
    certify_geodesic,
    density_search,
    fold_entries,
    fold_interior_graph,
    fold_interior_point,
    generate_ray,
    line_registry,
    lipschitz_along,
    pf_registry,
    plotdata_rows,
    ray_from_folds,
    simplicial_distance,
    snake_schedule,
    standard_trivalent,
    theta_ray,
    volume_ratio,
)

__all__ = [name for name in dir() if not name.startswith("_")]
