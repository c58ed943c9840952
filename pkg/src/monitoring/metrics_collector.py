from prometheus_client import CollectorRegistry, start_http_server, Counter, Gauge, Histogram
from typing import Dict, Any, Optional
import time

# forward passes of the small variants take milliseconds to seconds on CPU
LATENCY_BUCKETS = (0.005, 0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 1.0, 2.5, 5.0, 10.0, 30.0)


class InferenceMetrics:
    """Prometheus series for depth inference, on a private registry"""

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        self.config = config or {}
        self.registry = CollectorRegistry()
        self.metrics = {}
        self.init_metrics()
        port = self.config.get('metrics_port')
        if port:
            start_http_server(int(port), registry=self.registry)

    def init_metrics(self):
        """Initialize Prometheus metrics"""
        self.metrics['forward_total'] = Counter(
            'meter_forward_total',
            'Completed forward passes',
            ['variant'],
            registry=self.registry,
        )

        self.metrics['forward_errors'] = Counter(
            'meter_forward_errors_total',
            'Forward passes that raised',
            ['variant'],
            registry=self.registry,
        )

        self.metrics['latency'] = Histogram(
            'meter_forward_latency_seconds',
            'Single-image forward latency in seconds',
            ['variant'],
            buckets=LATENCY_BUCKETS,
            registry=self.registry,
        )

        self.metrics['params'] = Gauge(
            'meter_model_params',
            'Trainable parameters of the loaded model',
            ['variant'],
            registry=self.registry,
        )

        self.metrics['macs'] = Gauge(
            'meter_model_macs',
            'Multiply-accumulates per image at the configured input size',
            ['variant'],
            registry=self.registry,
        )

    def track_forward(self) -> float:
        return time.perf_counter()

    def record_forward(self, variant: str, start_time: float, failed: bool = False) -> float:
        """Record one forward pass; returns its latency in seconds"""
        elapsed = time.perf_counter() - start_time
        if failed:
            self.metrics['forward_errors'].labels(variant=variant).inc()
            return elapsed
        self.observe(variant, elapsed)
        return elapsed

    def observe(self, variant: str, seconds: float):
        self.metrics['forward_total'].labels(variant=variant).inc()
        self.metrics['latency'].labels(variant=variant).observe(seconds)

    def set_model_size(self, variant: str, params: int, macs: int):
        self.metrics['params'].labels(variant=variant).set(params)
        self.metrics['macs'].labels(variant=variant).set(macs)

    def snapshot(self) -> Dict[str, float]:
        """Current sample values keyed by ``name{label=value}``"""
        values = {}
        for metric in self.registry.collect():
            for sample in metric.samples:
                if 'le' in sample.labels:
                    continue
                labels = ",".join(f"{k}={v}" for k, v in sorted(sample.labels.items()))
                values[f"{sample.name}{{{labels}}}"] = sample.value
        return values
