"""
Prometheus metric instruments for pipeline observability.

This module defines a custom ``CollectorRegistry`` with the following
instruments:

- ``counter_of_observer_syntheses``: A ``Counter`` tracking observer
  syntheses, labelled by outcome (passed, failed_verification, infeasible,
  stalled, unstable).
- ``histogram_of_duration_of_observer_synthesis_in_seconds``: A ``Histogram``
  tracking the wall-clock duration of one agent's synthesis.
- ``counter_of_simulation_runs``: A ``Counter`` tracking network simulations,
  labelled by purpose (evaluation or calibration).
- ``counter_of_isolation_verdicts``: A ``Counter`` tracking verdicts emitted
  by the isolation procedure, labelled by status.
- ``gauge_of_closed_loop_spectral_abscissa``: A ``Gauge`` reporting the largest
  real part of the observer error dynamics, labelled by agent.

The pipeline is a batch process, so the registry is not served over HTTP: it is
written to a node-exporter textfile with ``write_metrics_to_textfile``.  The
custom registry keeps default Python process metrics out of that file.
"""

import pathlib

import prometheus_client

registry_for_prometheus_metrics = prometheus_client.CollectorRegistry()

counter_of_observer_syntheses = prometheus_client.Counter(
    "observer_syntheses_total",
    "Total number of distributed observer syntheses",
    ["outcome"],
    registry=registry_for_prometheus_metrics,
)

histogram_of_duration_of_observer_synthesis_in_seconds = prometheus_client.Histogram(
    "observer_synthesis_duration_in_seconds",
    "Duration of one agent's observer synthesis in seconds",
    buckets=(0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 1.0, 2.5, 5.0, 10.0, 30.0),
    registry=registry_for_prometheus_metrics,
)

counter_of_simulation_runs = prometheus_client.Counter(
    "network_simulation_runs_total",
    "Total number of closed-loop network simulations",
    ["purpose"],
    registry=registry_for_prometheus_metrics,
)

counter_of_isolation_verdicts = prometheus_client.Counter(
    "isolation_verdicts_total",
    "Total number of isolation verdicts",
    ["status"],
    registry=registry_for_prometheus_metrics,
)

gauge_of_closed_loop_spectral_abscissa = prometheus_client.Gauge(
    "observer_closed_loop_spectral_abscissa",
    "Largest real part of the eigenvalues of the observer error dynamics",
    ["agent"],
    registry=registry_for_prometheus_metrics,
)


def write_metrics_to_textfile(path: pathlib.Path) -> None:
    """Write the current state of the registry to ``path`` in the Prometheus text format."""
    prometheus_client.write_to_textfile(str(path), registry_for_prometheus_metrics)
