"""Round-based protocol orchestration, metrics, and complexity accounting.

One round has four phases: every node trains locally, compromised nodes
substitute their transmissions, every node screens its neighbors (on
sketches or full models depending on the aggregator), then fetches,
verifies, and aggregates the survivors. Phases are bulk-synchronous:
each reads only the frozen snapshot from the previous phase, every
random draw comes from a stream keyed on (seed, round, node), and
reductions run in node-id order, so results are byte-identical whatever
the thread budget.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import __version__
from .aggregation import (
    SKETCH_KINDS,
    AggregatorSpec,
    aggregate_mixed,
    balance_filter,
    dfedavg_aggregate,
    krum_select_index,
    sketch_filter,
    gamma_eff,
)
from .attacks import AttackContext, AttackSpec, apply_attack, attacker_message
from .errors import ConfigurationError
from .learning import (
    TaskSpec,
    generate_federated_data,
    local_update,
    make_task,
    test_error_rate,
)
from .sketch import (
    DISTORTION_COEFF,
    SketchParams,
    combine64,
    compute_sketch,
    default_sketch_width,
    epsilon_hat,
    verify_model_against_sketch,
)
from .topology import (
    TopologySpec,
    build_topology,
    honest_subgraph_connected,
    sample_byzantine_nodes,
)


@dataclass(frozen=True)
class Seeds:
    data: int = 1
    topology: int = 2
    byzantine: int = 3
    training: int = 4
    attack: int = 5
    sketch: int = 42


@dataclass(frozen=True)
class SimConfig:
    task: TaskSpec = field(default_factory=TaskSpec)
    topology: TopologySpec = field(default_factory=TopologySpec)
    aggregator: AggregatorSpec = field(default_factory=AggregatorSpec)
    attack: AttackSpec = field(default_factory=AttackSpec)
    n_nodes: int = 20
    byz_fraction: float = 0.0
    rounds: int = 10
    local_epochs: int = 3
    lr: float = 0.05
    batch_size: int = 64
    threads: int = 1
    verification: bool = True
    per_client_eval: bool = False  # score nodes on their own shards instead of the shared set
    seeds: Seeds = field(default_factory=Seeds)

    def __post_init__(self) -> None:
        if self.n_nodes < 2:
            raise ConfigurationError(f"n_nodes must be >= 2, got {self.n_nodes}")
        if not 0 <= self.byz_fraction <= 0.8:
            raise ConfigurationError(
                f"byz_fraction must be in [0, 0.8], got {self.byz_fraction}"
            )
        if self.rounds < 1:
            raise ConfigurationError(f"rounds must be >= 1, got {self.rounds}")
        if self.local_epochs < 1:
            raise ConfigurationError(f"local_epochs must be >= 1, got {self.local_epochs}")
        if self.lr < 0:
            raise ConfigurationError(f"lr must be >= 0, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.threads < 1:
            raise ConfigurationError(f"threads must be >= 1, got {self.threads}")


@dataclass
class RoundMetrics:
    """Honest-side aggregates for one round.

    accept_frac averages each honest node's screening-phase acceptance
    ratio (fallback included), so it reflects the filter itself;
    byz_accept_frac is the micro-averaged fraction of Byzantine neighbor
    slots whose models survived into aggregation, i.e. post-verification.
    agg_ops_mean is carried for bench reports and is not a CSV column.
    """

    round: int
    mean_ter: float
    params_tx_mean: float
    screen_ops_mean: float
    accept_frac: float
    byz_accept_frac: float
    verify_fail: int
    fallback_count: int
    agg_ops_mean: float = 0.0


@dataclass
class RunResult:
    metrics: list[RoundMetrics]
    manifest: dict
    final_models: np.ndarray  # (n_nodes, dim), post-aggregation round T-1


def node_stream(seed: int, round_index: int, node: int, tag: int = 0) -> np.random.Generator:
    """Independent PCG64 stream for one (node, round) cell; keying on ids
    rather than draw order is what makes thread counts irrelevant."""
    return np.random.Generator(
        np.random.PCG64(combine64(seed, round_index, node, tag))
    )


def screening_ops(kind: str, d: int, k: int, n_neighbors: int) -> int:
    """Distance-evaluation cost of the screening phase, in exact
    multiply-accumulate counts."""
    if kind == "dfedavg":
        return 0
    if kind == "balance":
        return d * n_neighbors
    if kind in SKETCH_KINDS:
        return k * n_neighbors
    # krum: pairwise distances over self + neighbors
    m = n_neighbors + 1
    return d * (m * (m - 1) // 2)


def aggregation_ops(kind: str, d: int, k: int, n_candidates: int, n_accepted: int) -> int:
    """Post-screening cost: verification sketches plus the mixing sum.
    n_candidates is the pre-verification accepted count (models fetched),
    n_accepted the post-verification survivor count."""
    if kind == "dfedavg":
        return d * (n_candidates + 1)
    if kind == "krum":
        return d
    if kind == "balance":
        return d * (n_accepted + 1)
    # sketch aggregators: own sketch + one recompute per fetched model + mixing
    return d * (1 + n_candidates) + d * (n_accepted + 1)


def account_communication(kind: str, n_neighbors: int, n_accepted: int, d: int, k: int) -> int:
    """Outbound parameter count for one node and round: sketches go to all
    neighbors and the full model only to the n_accepted neighbors that
    requested it; full-precision aggregators broadcast the model."""
    if n_accepted > n_neighbors:
        raise ConfigurationError(
            f"accepted count {n_accepted} exceeds neighbor count {n_neighbors}"
        )
    if min(n_neighbors, n_accepted, d, k) < 0:
        raise ConfigurationError("communication accounting needs nonnegative counts")
    if kind in SKETCH_KINDS:
        return k * n_neighbors + d * n_accepted
    return d * n_neighbors


@dataclass
class _NodeOutcome:
    model: np.ndarray
    screen_accepted: list[int]      # post-filter, pre-verification
    aggregated: list[int]           # survivors that entered the mix
    verify_failed: list[int]
    fallback: bool
    screen_ops: int
    agg_ops: int


def _pmap(fn: Callable[[int], object], n: int, threads: int) -> list:
    if threads <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


def _resolve_sketch_params(config: SimConfig, dim: int) -> SketchParams:
    width = config.aggregator.sketch_size or default_sketch_width(dim)
    if width > dim:
        raise ConfigurationError(
            f"sketch_size {width} exceeds model dimension {dim}"
        )
    seed = config.aggregator.sketch_seed
    return SketchParams(dim=dim, width=width, seed=config.seeds.sketch if seed is None else seed)


def _krum_f(config: SimConfig, n_models: int) -> int:
    if config.aggregator.krum_f is not None:
        f = config.aggregator.krum_f
    else:
        f = int(np.floor(config.byz_fraction * n_models + 0.5))
    return max(0, min(f, n_models - 3))


def run_simulation(
    config: SimConfig,
    run_id: str | None = None,
    calibration_table: str | None = "calibration/k_epsilon.csv",
) -> RunResult:
    """Execute the full protocol for config.rounds rounds.

    Returns per-round honest metrics, a manifest sufficient to reproduce
    the run, and the final models. Deterministic in everything including
    the thread budget.
    """
    kind = config.aggregator.kind
    agg = config.aggregator
    data = generate_federated_data(config.task, config.n_nodes, config.seeds.data)
    task = make_task(config.task, data)
    graph = build_topology(config.topology, config.n_nodes, config.seeds.topology)
    byz = sample_byzantine_nodes(config.n_nodes, config.byz_fraction, config.seeds.byzantine)
    byz_set = set(byz)
    honest = [i for i in range(config.n_nodes) if i not in byz_set]
    honest_connected = honest_subgraph_connected(graph, byz_set)
    if not honest_connected:
        warnings.warn(
            "honest subgraph is disconnected; continuing (flagged in manifest)",
            RuntimeWarning,
        )

    sketching = kind in SKETCH_KINDS
    params = _resolve_sketch_params(config, task.dim) if sketching else None

    init = task.init_model(node_stream(config.seeds.training, 0, 0, tag=0xC0))
    models = [init.copy() for _ in range(config.n_nodes)]
    attacking = bool(byz) and config.attack.kind != "none"

    metrics: list[RoundMetrics] = []
    for t in range(config.rounds):
        trained = _pmap(
            lambda i: local_update(
                task,
                models[i],
                data.clients[i],
                config.lr,
                config.local_epochs,
                config.batch_size,
                node_stream(config.seeds.training, t, i, tag=1),
            ),
            config.n_nodes,
            config.threads,
        )

        # Phase 2: what each node puts on the wire
        transmit = list(trained)
        tx_sketch = None
        if attacking:
            honest_stack = np.stack([trained[i] for i in honest])
            prev_stack = np.stack([models[i] for i in honest])
            mean_now = honest_stack.mean(axis=0)
            ctx = AttackContext(
                round=t,
                honest_mean=mean_now,
                honest_direction=mean_now - prev_stack.mean(axis=0),
            )
            for j in byz:
                transmit[j] = apply_attack(
                    config.attack, trained[j], ctx,
                    node_stream(config.seeds.attack, t, j, tag=2),
                )
        if sketching:
            own_sketch = _pmap(
                lambda i: compute_sketch(params, trained[i]),
                config.n_nodes,
                config.threads,
            )
            tx_sketch = list(own_sketch)
            if attacking:
                for j in byz:
                    tx_sketch[j], transmit[j] = attacker_message(
                        config.attack, params, transmit[j], trained[j]
                    )

        def settle(i: int) -> _NodeOutcome:
            nbrs = graph.neighbors[i]
            d = task.dim
            width = params.width if params else 0
            s_ops = screening_ops(kind, d, width, len(nbrs))
            if kind == "dfedavg":
                new = dfedavg_aggregate(trained[i], {j: transmit[j] for j in nbrs})
                accepted = list(nbrs)
                return _NodeOutcome(new, accepted, accepted, [], False,
                                    s_ops, aggregation_ops(kind, d, width, len(nbrs), len(nbrs)))
            if kind == "krum":
                pool = [trained[i]] + [transmit[j] for j in nbrs]
                if len(pool) < 3:
                    # krum undefined below 3 models; keep own model
                    return _NodeOutcome(trained[i].copy(), [], [], [], False, s_ops, d)
                chosen = krum_select_index(pool, _krum_f(config, len(pool)))
                picked = i if chosen == 0 else nbrs[chosen - 1]
                accepted = [picked]
                return _NodeOutcome(pool[chosen].copy(), accepted, accepted, [], False,
                                    s_ops, aggregation_ops(kind, d, width, 1, 1))
            if kind == "balance":
                out = balance_filter(
                    trained[i], {j: transmit[j] for j in nbrs},
                    agg.gamma, agg.kappa, t, config.rounds,
                )
                chosen = {j: transmit[j] for j in out.accepted}
                new = aggregate_mixed(trained[i], chosen, agg.alpha) if chosen else trained[i].copy()
                return _NodeOutcome(new, out.accepted, out.accepted, [], out.fallback_used,
                                    s_ops, aggregation_ops(kind, d, width, len(chosen), len(chosen)))
            out = sketch_filter(
                own_sketch[i], {j: tx_sketch[j] for j in nbrs},
                agg.gamma, agg.kappa, t, config.rounds,
            )
            survivors, failed = [], []
            for j in out.accepted:
                if not config.verification or verify_model_against_sketch(
                    params, transmit[j], tx_sketch[j], agg.rel_tol
                ):
                    survivors.append(j)
                else:
                    failed.append(j)
            chosen = {j: transmit[j] for j in survivors}
            new = aggregate_mixed(trained[i], chosen, agg.alpha) if chosen else trained[i].copy()
            return _NodeOutcome(new, out.accepted, survivors, failed, out.fallback_used,
                                s_ops,
                                aggregation_ops(kind, d, width, len(out.accepted), len(survivors)))

        outcomes = _pmap(settle, config.n_nodes, config.threads)
        models = [o.model for o in outcomes]

        # outbound accounting: uploads happen for every fetched (pre-verify) model
        uploads = [0] * config.n_nodes
        if sketching:
            for o in outcomes:
                for j in o.screen_accepted:
                    uploads[j] += 1
        tx = [
            account_communication(
                kind,
                graph.degree(i),
                uploads[i] if sketching else graph.degree(i),
                task.dim,
                params.width if params else 0,
            )
            for i in range(config.n_nodes)
        ]

        if config.per_client_eval:
            ter = float(np.mean([
                test_error_rate(task, models[i], data.clients[i].features, data.clients[i].labels)
                for i in honest
            ]))
        else:
            ter = float(np.mean([
                test_error_rate(task, models[i], data.test_features, data.test_labels)
                for i in honest
            ]))
        fracs = [
            len(outcomes[i].screen_accepted) / graph.degree(i)
            for i in honest
            if graph.degree(i) > 0
        ]
        byz_slots = sum(len(byz_set & set(graph.neighbors[i])) for i in honest)
        byz_taken = sum(len(byz_set & set(outcomes[i].aggregated)) for i in honest)
        metrics.append(RoundMetrics(
            round=t,
            mean_ter=ter,
            params_tx_mean=float(np.mean([tx[i] for i in honest])),
            screen_ops_mean=float(np.mean([outcomes[i].screen_ops for i in honest])),
            accept_frac=float(np.mean(fracs)) if fracs else 0.0,
            byz_accept_frac=byz_taken / byz_slots if byz_slots else 0.0,
            verify_fail=sum(len(outcomes[i].verify_failed) for i in honest),
            fallback_count=sum(outcomes[i].fallback for i in honest),
            agg_ops_mean=float(np.mean([outcomes[i].agg_ops for i in honest])),
        ))

    if run_id is None:
        run_id = f"{kind}-{config.attack.kind}-b{config.byz_fraction:g}"
    manifest = build_manifest(config, run_id, graph, byz, honest_connected, task, params,
                              calibration_table)
    return RunResult(metrics=metrics, manifest=manifest, final_models=np.stack(models))


def build_manifest(config, run_id, graph, byz, honest_connected, task, params,
                   calibration_table) -> dict:
    from dataclasses import asdict

    table_digest = None
    if calibration_table is not None:
        from pathlib import Path

        path = Path(calibration_table)
        if path.exists():
            from .calibration import table_digest as digest_fn

            table_digest = digest_fn(path)
    sketch_info = None
    if params is not None:
        eps = epsilon_hat(params.width)
        sketch_info = {
            "width": params.width,
            "seed": params.seed,
            "epsilon_hat": eps,
            "gamma_eff": gamma_eff(config.aggregator.gamma, eps),
            "distortion_coeff": DISTORTION_COEFF,
        }
    return {
        "run_id": run_id,
        "code_version": __version__,
        "config": asdict(config),
        "byzantine_nodes": list(byz),
        "honest_subgraph_connected": honest_connected,
        "topology_digest": graph.digest(),
        "topology_edges": len(graph.edges()),
        "model_dim": task.dim,
        "metric_name": task.metric_name,
        "sketch": sketch_info,
        "calibration_table_digest": table_digest,
    }


def derive_seeds(master: int, sketch_seed: int = 42) -> Seeds:
    """Replicate-specific seeds for a sweep: every stream is re-keyed from
    the master except the sketch seed, which stays shared so hash families
    line up across replicates."""
    return Seeds(
        data=combine64(master, 0xD0),
        topology=combine64(master, 0x70),
        byzantine=combine64(master, 0xB0),
        training=combine64(master, 0x40),
        attack=combine64(master, 0xA0),
        sketch=sketch_seed,
    )


def sweep(
    config: SimConfig,
    fractions: list[float],
    masters: list[int],
) -> tuple[list[tuple], list[dict]]:
    """One run per (fraction, master seed); returns CSV-ready rows and the
    per-run manifests. Rows carry the master seed, not the derived ones."""
    for frac in fractions:
        if not 0 <= frac <= 0.8:
            raise ConfigurationError(f"sweep fraction {frac} outside [0, 0.8]")
    if not masters:
        raise ConfigurationError("sweep needs at least one master seed")
    rows: list[tuple] = []
    manifests: list[dict] = []
    for frac in fractions:
        for master in masters:
            cfg = replace(
                config,
                byz_fraction=frac,
                seeds=derive_seeds(master, config.seeds.sketch),
            )
            run_id = f"{cfg.aggregator.kind}-{cfg.attack.kind}-b{frac:g}-m{master}"
            result = run_simulation(cfg, run_id=run_id)
            manifests.append(result.manifest)
            rows.extend(metrics_rows(run_id, master, frac, result.metrics))
    return rows, manifests


def metrics_rows(run_id: str, seed: int, byz_fraction: float, metrics: list[RoundMetrics]) -> list[tuple]:
    return [
        (
            run_id,
            seed,
            byz_fraction,
            m.round,
            m.mean_ter,
            m.params_tx_mean,
            m.screen_ops_mean,
            m.accept_frac,
            m.byz_accept_frac,
            m.verify_fail,
            m.fallback_count,
        )
        for m in metrics
    ]


DIM_LADDER = (22_000, 85_000, 660_000)
DEGREE_LADDER = ((16, 20), (32, 35), (96, 100))
BENCH_BUDGET_BYTES = 4_000_000_000


@dataclass(frozen=True)
class BenchRow:
    mode: str
    x_value: int
    aggregator: str
    screen_ops: float
    agg_ops: float
    params_tx: float
    truncated: bool = False


def bench(
    mode: str,
    config: SimConfig | None = None,
    aggregators: tuple[str, ...] = ("sketchfilter", "balance"),
    dim_ladder: tuple[int, ...] = DIM_LADDER,
    degree_ladder: tuple[tuple[int, int], ...] = DEGREE_LADDER,
    budget_bytes: int = BENCH_BUDGET_BYTES,
) -> list[BenchRow]:
    """Op-count scaling report. dims mode grows the padded model dimension
    on a fixed k-regular graph; degree mode grows the k-regular degree at
    fixed dimension. One round each; per-node per-round means reported.
    A rung whose working set would blow the memory budget aborts the
    ladder with a truncation marker row instead of running."""
    if mode not in ("dims", "degree"):
        raise ConfigurationError(f"bench mode must be 'dims' or 'degree', got {mode!r}")
    base = config if config is not None else SimConfig(
        task=TaskSpec(kind="quadratic", features=32, samples_per_client=64),
        topology=TopologySpec(kind="k-regular", degree=8),
        n_nodes=16,
        rounds=1,
        local_epochs=1,
        lr=0.01,
    )
    rows: list[BenchRow] = []
    if mode == "dims":
        points = [(d, base.n_nodes, base.topology) for d in dim_ladder]
    else:
        points = [
            (max(base.task.dim, 2000), n, TopologySpec(kind="k-regular", degree=deg))
            for deg, n in degree_ladder
        ]
    for x_index, (dim, n, topo) in enumerate(points):
        x_value = dim if mode == "dims" else topo.degree
        # working set: a handful of dim-length float64 vectors per node
        need = 6 * n * dim * 8
        if need > budget_bytes:
            for agg_kind in aggregators:
                rows.append(BenchRow(mode, x_value, agg_kind, 0.0, 0.0, 0.0, truncated=True))
            break
        for agg_kind in aggregators:
            cfg = replace(
                base,
                task=replace(base.task, dim=dim),
                topology=topo,
                n_nodes=n,
                aggregator=replace(base.aggregator, kind=agg_kind),
                rounds=1,
            )
            m = run_simulation(cfg, run_id=f"bench-{mode}-{x_value}-{agg_kind}",
                               calibration_table=None).metrics[0]
            rows.append(BenchRow(mode, x_value, agg_kind,
                                 m.screen_ops_mean, m.agg_ops_mean, m.params_tx_mean))
    return rows
