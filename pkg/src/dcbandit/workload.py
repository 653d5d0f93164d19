"""VM job definitions, power and QoS cost models, and trace handling.

A workload is a list of :class:`VmJob` records. Jobs either come from a
delimited trace file (``ingest_trace``) or from the calibrated synthetic
generator (``generate_workload``). Power is a piecewise-linear function of
utilization scaled by the job's core share; QoS cost applies only to
interactive (delay-sensitive) jobs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

# Trace filter thresholds: jobs below one core-hour or 10% utilization are dropped.
MIN_CORE_HOURS = 1.0
MIN_UTILIZATION = 0.10


class ConfigurationError(ValueError):
    """Raised for invalid model parameters (e.g. u_max <= u_min)."""


class EmptyWorkloadError(ValueError):
    """Raised when a generator is asked for zero jobs."""


class TraceSchemaError(ValueError):
    """Raised when a trace file is missing a declared column."""


@dataclass(frozen=True)
class PowerModelParams:
    """Device power model: static floor plus utilization-dependent dynamic part."""

    p_static: float = 100.0  # watts
    p_max: float = 400.0  # watts
    u_min: float = 0.1
    u_max: float = 0.9
    cores_per_device: float = 15_000.0

    def __post_init__(self) -> None:
        if not (self.p_max > self.p_static > 0):
            raise ConfigurationError(
                f"need p_max > p_static > 0, got p_static={self.p_static}, p_max={self.p_max}"
            )
        if not (0 <= self.u_min < self.u_max <= 1):
            raise ConfigurationError(
                f"need 0 <= u_min < u_max <= 1, got u_min={self.u_min}, u_max={self.u_max}"
            )
        if self.cores_per_device <= 0:
            raise ConfigurationError("cores_per_device must be positive")


@dataclass(frozen=True)
class QosParams:
    """Per-core-hour QoS cost by job class. Batch jobs always cost zero."""

    q_interactive: float = 0.05  # dollars per core-hour
    q_batch: float = 0.0

    def __post_init__(self) -> None:
        if self.q_interactive < 0:
            raise ConfigurationError("q_interactive must be nonnegative")
        if self.q_batch != 0.0:
            raise ConfigurationError("q_batch is fixed at zero")


@dataclass(frozen=True)
class VmJob:
    """One VM trace record with derived power (watts) and QoS cost (dollars)."""

    id: str
    core_hours: float
    utilization: float
    interactive: bool
    power: float
    qos_cost: float


def device_power(utilization: float, params: PowerModelParams) -> float:
    """Device-level power draw in watts at the given utilization fraction.

    Utilization is clamped to [u_min, u_max] so the static floor and p_max
    are exact endpoints.
    """
    u_dyn = min(max(utilization, params.u_min), params.u_max) - params.u_min
    slope = (params.p_max - params.p_static) / (params.u_max - params.u_min)
    return params.p_static + slope * u_dyn


def job_power(job: VmJob, params: PowerModelParams = PowerModelParams()) -> float:
    """Job-level power in watts: device power scaled by the job's core share.

    One batch is treated as one hour of wall time, so core_hours /
    cores_per_device is the fraction of a device the job occupies.
    """
    if job.core_hours < 0:
        raise ValueError("core_hours must be nonnegative")
    return device_power(job.utilization, params) * job.core_hours / params.cores_per_device


def job_qos_cost(job: VmJob, params: QosParams = QosParams()) -> float:
    """Dollar cost of delaying the job: per-core-hour rate times usage."""
    rate = params.q_interactive if job.interactive else params.q_batch
    return rate * job.core_hours


def make_job(
    job_id: str,
    core_hours: float,
    utilization: float,
    interactive: bool,
    power_params: PowerModelParams = PowerModelParams(),
    qos_params: QosParams = QosParams(),
) -> VmJob:
    """Build a VmJob with derived power and QoS cost filled in."""
    stub = VmJob(job_id, float(core_hours), float(utilization), bool(interactive), 0.0, 0.0)
    return VmJob(
        id=stub.id,
        core_hours=stub.core_hours,
        utilization=stub.utilization,
        interactive=stub.interactive,
        power=job_power(stub, power_params),
        qos_cost=job_qos_cost(stub, qos_params),
    )


@dataclass(frozen=True)
class WorkloadGenParams:
    """Synthetic generator knobs.

    Core-hours are log-normal (heavy tail, log-scale power spread), clipped to
    the trace-filter floor and a cap that keeps job power under ~100 W.
    Utilization is Beta-distributed, rescaled into [MIN_UTILIZATION, 1].
    """

    core_hours_log_mean: float = 2.0
    core_hours_log_sigma: float = 1.4
    core_hours_cap: float = 3000.0
    util_alpha: float = 2.0
    util_beta: float = 2.0
    interactive_rate: float = 0.3

    def __post_init__(self) -> None:
        if self.core_hours_log_sigma <= 0:
            raise ConfigurationError("core_hours_log_sigma must be positive")
        if self.core_hours_cap < MIN_CORE_HOURS:
            raise ConfigurationError("core_hours_cap below the trace-filter floor")
        if not (0 <= self.interactive_rate <= 1):
            raise ConfigurationError("interactive_rate must be a probability")


def generate_workload(
    n_jobs: int,
    seed: int,
    gen_params: WorkloadGenParams = WorkloadGenParams(),
    power_params: PowerModelParams = PowerModelParams(),
    qos_params: QosParams = QosParams(),
) -> list[VmJob]:
    """Generate a deterministic synthetic workload of n_jobs jobs.

    Pure function of (n_jobs, seed, gen_params): the same arguments always
    produce the same job list. All produced jobs satisfy the trace-filter
    invariants (core_hours >= 1, utilization >= 0.10).
    """
    if n_jobs < 1:
        raise EmptyWorkloadError("n_jobs must be at least 1")
    rng = np.random.default_rng(seed)
    core_hours = np.clip(
        rng.lognormal(gen_params.core_hours_log_mean, gen_params.core_hours_log_sigma, n_jobs),
        MIN_CORE_HOURS,
        gen_params.core_hours_cap,
    )
    utilization = MIN_UTILIZATION + (1.0 - MIN_UTILIZATION) * rng.beta(
        gen_params.util_alpha, gen_params.util_beta, n_jobs
    )
    interactive = rng.random(n_jobs) < gen_params.interactive_rate
    return [
        make_job(f"vm-{i:05d}", core_hours[i], utilization[i], bool(interactive[i]),
                 power_params, qos_params)
        for i in range(n_jobs)
    ]


# Default trace schema: logical field -> column header.
DEFAULT_TRACE_COLUMNS = {
    "id": "vm_id",
    "core_hours": "core_hours",
    "utilization": "avg_util",
    "interactive": "interactive",
}

_TRUTHY = {"1", "true", "yes", "t"}
_FALSY = {"0", "false", "no", "f"}


def _parse_interactive(raw: str) -> bool:
    val = raw.strip().lower()
    if val in _TRUTHY:
        return True
    if val in _FALSY:
        return False
    raise ValueError(f"cannot parse interactive flag {raw!r}")


@dataclass
class TraceIngestResult:
    """Jobs that passed the filter, plus counts of what did not."""

    jobs: list[VmJob] = field(default_factory=list)
    dropped: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)


def ingest_trace(
    path: str,
    columns: Optional[dict[str, str]] = None,
    power_params: PowerModelParams = PowerModelParams(),
    qos_params: QosParams = QosParams(),
) -> TraceIngestResult:
    """Read a delimited trace file and return filtered jobs.

    Rows with less than one core-hour of usage or utilization below 10% are
    dropped (counted in ``dropped``). Rows that fail to parse are collected
    in ``errors`` with their line number; they are not fatal. A missing
    declared column raises :class:`TraceSchemaError`.
    """
    columns = dict(DEFAULT_TRACE_COLUMNS if columns is None else columns)
    result = TraceIngestResult()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return result  # empty file: no rows, nothing dropped
        missing = [col for col in columns.values() if col not in reader.fieldnames]
        if missing:
            raise TraceSchemaError(f"trace {path} missing columns: {missing}")
        for line_no, row in enumerate(reader, start=2):
            try:
                core_hours = float(row[columns["core_hours"]])
                utilization = float(row[columns["utilization"]])
                interactive = _parse_interactive(row[columns["interactive"]])
                job_id = row[columns["id"]]
            except (TypeError, ValueError, KeyError) as exc:
                result.errors.append((line_no, str(exc)))
                continue
            if core_hours < MIN_CORE_HOURS or utilization < MIN_UTILIZATION:
                result.dropped += 1
                continue
            result.jobs.append(
                make_job(job_id, core_hours, utilization, interactive, power_params, qos_params)
            )
    return result


def write_trace(path: str, jobs: Sequence[VmJob], columns: Optional[dict[str, str]] = None) -> None:
    """Write jobs back out in the ingestible trace format."""
    columns = dict(DEFAULT_TRACE_COLUMNS if columns is None else columns)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([columns["id"], columns["core_hours"],
                         columns["utilization"], columns["interactive"]])
        for job in jobs:
            writer.writerow([job.id, repr(job.core_hours), repr(job.utilization),
                             int(job.interactive)])
