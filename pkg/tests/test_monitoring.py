import io
import json
import logging

import pytest

from src.monitoring.logging_handler import LoggingHandler, configure_loguru
from src.monitoring.metrics_collector import InferenceMetrics


@pytest.fixture
def stream():
    return io.StringIO()


class TestLogging:
    def test_structured_records(self, stream):
        handler = LoggingHandler({"logger_name": "src", "structured": True}, stream=stream)
        handler.info("forward done", {"variant": "XXS", "latency_ms": 12.5})
        record = json.loads(stream.getvalue().splitlines()[-1])
        assert record["message"] == "forward done"
        assert record["level"] == "INFO"
        assert record["variant"] == "XXS"
        assert record["latency_ms"] == 12.5

    def test_plain_records_append_context(self, stream):
        LoggingHandler({"logger_name": "src"}, stream=stream)
        logging.getLogger("src.model").warning("padded input", extra={"extra": {"width": 640}})
        line = stream.getvalue().strip()
        assert "WARNING src.model: padded input" in line
        assert line.endswith("width=640")

    def test_level_filters(self, stream):
        LoggingHandler({"logger_name": "src", "log_level": "warning"}, stream=stream)
        logging.getLogger("src.kernels").info("hidden")
        assert stream.getvalue() == ""

    def test_reconfiguring_replaces_handlers(self, stream):
        LoggingHandler({"logger_name": "src"}, stream=io.StringIO())
        LoggingHandler({"logger_name": "src"}, stream=stream)
        assert len(logging.getLogger("src").handlers) == 1

    def test_file_handler(self, stream, tmp_path):
        path = tmp_path / "meter.log"
        handler = LoggingHandler({"logger_name": "src", "log_file": str(path)}, stream=stream)
        handler.warning("disk", {"path": "x"})
        for h in LoggingHandler._installed:
            h.flush()
        assert json.loads(path.read_text().splitlines()[-1])["path"] == "x"

    def test_loguru_sink(self, stream):
        from loguru import logger

        sink = configure_loguru("warning", sink=stream)
        try:
            logger.info("quiet")
            logger.warning("loud")
        finally:
            logger.remove(sink)
        assert "loud" in stream.getvalue()
        assert "quiet" not in stream.getvalue()


class TestMetrics:
    def test_forward_recorded(self):
        metrics = InferenceMetrics()
        start = metrics.track_forward()
        elapsed = metrics.record_forward("S", start)
        snapshot = metrics.snapshot()
        assert elapsed >= 0.0
        assert snapshot["meter_forward_total{variant=S}"] == 1.0
        assert snapshot["meter_forward_latency_seconds_count{variant=S}"] == 1.0

    def test_failures_counted_apart(self):
        metrics = InferenceMetrics()
        metrics.record_forward("XS", metrics.track_forward(), failed=True)
        snapshot = metrics.snapshot()
        assert snapshot["meter_forward_errors_total{variant=XS}"] == 1.0
        assert "meter_forward_total{variant=XS}" not in snapshot

    def test_model_size(self):
        metrics = InferenceMetrics()
        metrics.set_model_size("XXS", 726953, 182366208)
        snapshot = metrics.snapshot()
        assert snapshot["meter_model_params{variant=XXS}"] == 726953
        assert snapshot["meter_model_macs{variant=XXS}"] == 182366208

    def test_registries_are_private(self):
        InferenceMetrics().observe("S", 0.1)
        assert "meter_forward_total{variant=S}" not in InferenceMetrics().snapshot()
