"""Space-filling-curve mesh partitioning with runtime-feedback load
balancing, a CPU/GPU co-execution efficiency model, and a packed
finite-element assembly workload."""

__version__ = "0.1.0"

from .assembly import (
    PackSet,
    assemble_packs,
    assemble_reference,
    build_packs,
    scatter_global,
    sweep_pack_size,
)
from .balance import (
    BalanceMetrics,
    BalanceReport,
    CorrectionState,
    Phase,
    RegressionMode,
    TimingSample,
    compute_metrics,
    fit,
    observe,
    run_balancing_loop,
    update_coefficients,
)
from .coexec import (
    DeviceClass,
    DeviceProfile,
    EfficiencyParams,
    ExecutionPlan,
    build_plan,
    eff_coex1,
    eff_coex2,
    eff_core,
    eff_gpu,
    load_plan,
    make_sim_timer,
    predicted_time_reduction,
    simulate_solver_times,
    simulate_times,
)
from .mesh import (
    BoundingBox,
    ElementKind,
    FullMesh,
    Mesh,
    MeshFormatError,
    PartitionElement,
    compute_bounding_box,
    generate_synthetic_full_mesh,
    generate_synthetic_mesh,
    load_full_mesh,
    load_mesh,
    make_mesh,
    partition_mesh_from_full,
    store_full_mesh,
    store_mesh,
)
from .sfc import (
    BinSequence,
    Partition,
    SfcConfig,
    hilbert_decode,
    hilbert_key,
    hilbert_keys_batch,
    partition_chunked,
    project_to_bins,
    split_1d,
    store_partition,
)
