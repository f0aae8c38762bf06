"""Test suite for metrics.py"""

import csv
import sys
from pathlib import Path

import numpy as np
import pytest
from openpyxl import load_workbook

sys.path.insert(0, str(Path(__file__).parent.parent))
from metrics import (
    COMPARISON_HEADER,
    EPOCH_HEADER,
    SUMMARY_HEADER,
    EmptyRun,
    MismatchedConfigs,
    compare_policies,
    convergence_time,
    log_summary,
    summarize,
    write_comparison_csv,
    write_comparison_workbook,
    write_epochs_csv,
    write_summary_csv,
)
from simulator import EpochReport, SimConfig


def make_report(index, rates, sent=(100, 100), late=(0, 0), dropped=(0, 0), delivered=None,
                delay_sum=(1.0, 2.0), psnr=((35.0,), (30.0,))):
    rates = np.atleast_2d(np.asarray(rates, dtype=float))
    sent = np.asarray(sent)
    dropped = np.asarray(dropped)
    delivered = sent - dropped if delivered is None else np.asarray(delivered)
    return EpochReport(
        index=index, start=2.0 * index, end=2.0 * (index + 1),
        stream_ids=("a", "b"), network_ids=("eth", "wlan"),
        rates=rates, capacity=np.array([10e6, 5e6]), abr=np.array([8e6, 4e6]),
        video_bits=rates.sum(axis=0) * 2.0, background_bits=np.array([4e6, 2e6]),
        active=rates.sum(axis=1) > 0,
        sent=sent, late=np.asarray(late), dropped=dropped, delivered=delivered,
        delay_sum=np.asarray(delay_sum, dtype=float),
        gop_psnr=[list(p) for p in psnr],
    )


@pytest.fixture
def reports():
    """Two epochs of two streams on two networks"""
    return [
        make_report(0, [[2e6, 1e6], [2e6, 1e6]], late=(2, 0)),
        make_report(1, [[4e6, 2e6], [2e6, 1e6]], late=(0, 1), psnr=((37.0,), (31.0,))),
    ]


class TestConvergenceTime:
    """Test the settling-time metric"""

    def test_constant_rate(self):
        """Test a constant rate is settled from the start"""
        times = np.arange(0.0, 100.0, 2.0)
        assert convergence_time(times, np.full(len(times), 2e6)) == 0.0

    def test_ramp_then_flat(self):
        """Test the rate settles when it enters the band for good"""
        times = np.arange(0.0, 100.0, 2.0)
        rates = np.where(times < 20.0, 1e6 + times * 1e5, 3e6)
        assert convergence_time(times, rates) == 20.0

    def test_relative_to_first_sample(self):
        """Test the time counts from the stream's first sample"""
        times = np.arange(50.0, 150.0, 2.0)
        rates = np.where(times < 60.0, 1e6, 3e6)
        assert convergence_time(times, rates) == 10.0

    def test_never_settles(self):
        """Test an oscillating rate has no convergence time"""
        times = np.arange(0.0, 100.0, 2.0)
        rates = np.where(np.arange(len(times)) % 2 == 0, 1e6, 2e6)
        assert convergence_time(times, rates) is None

    def test_empty(self):
        """Test no samples gives no convergence time"""
        assert convergence_time([], []) is None


class TestSummarize:
    """Test folding epoch reports into a run summary"""

    def test_empty_run(self):
        """Test no reports is an error"""
        with pytest.raises(EmptyRun):
            summarize([], SimConfig())

    def test_rates_and_utilization(self, reports):
        """Test per-stream rates and per-network utilization"""
        summary = summarize(reports, SimConfig(), policy="media_aware")
        assert summary.policy == "media_aware"
        np.testing.assert_allclose(summary.stream_rate, [4.5e6, 3e6])
        np.testing.assert_allclose(summary.fluctuation, [1.5e6, 0.0])
        np.testing.assert_allclose(summary.utilization, [(0.5 + 0.75) / 2, (0.5 + 0.75) / 2])

    def test_loss_and_delay(self, reports):
        """Test loss ratios and mean delay per stream"""
        summary = summarize(reports, SimConfig())
        np.testing.assert_allclose(summary.loss_ratio, [2 / 200, 1 / 200])
        assert summary.run_loss_ratio == pytest.approx(3 / 400)
        assert summary.mean_delay == pytest.approx([2.0 / 200, 4.0 / 200])

    def test_psnr(self, reports):
        """Test per-stream PSNR, mean and spread"""
        summary = summarize(reports, SimConfig())
        assert summary.psnr == pytest.approx([36.0, 30.5])
        assert summary.mean_psnr == pytest.approx(33.25)
        assert summary.psnr_spread == pytest.approx(5.5)

    def test_packet_counts(self):
        """Test delivered, dropped and in-flight packets add up"""
        reports = [make_report(0, [[1e6, 0.0], [1e6, 0.0]], sent=(50, 50), dropped=(5, 0), delivered=(44, 48))]
        summary = summarize(reports, SimConfig())
        assert summary.packets_sent == 100
        assert summary.packets_dropped == 5
        assert summary.packets_delivered == 92
        assert summary.packets_in_flight == 3

    def test_inactive_stream(self):
        """Test a stream that never sends has no rate, delay or PSNR"""
        reports = [make_report(k, [[1e6, 1e6], [0.0, 0.0]], sent=(100, 0), delay_sum=(1.0, 0.0),
                               psnr=((35.0,), ())) for k in range(3)]
        summary = summarize(reports, SimConfig())
        assert summary.stream_rate[1] == 0.0
        assert summary.mean_delay[1] is None
        assert summary.psnr[1] is None
        assert summary.convergence_time[1] is None

    def test_rows(self, reports):
        """Test the flat row view covers every scope"""
        rows = summarize(reports, SimConfig(), policy="p").rows()
        scopes = {row[0] for row in rows}
        assert scopes == {'network', 'stream', 'run'}
        metrics = {(row[0], row[1], row[2]): row[3] for row in rows}
        assert metrics[('stream', 'a', 'rate_kbps')] == pytest.approx(4500.0)
        assert metrics[('run', 'all', 'mean_psnr_db')] == pytest.approx(33.25)


class TestComparePolicies:
    """Test the cross-policy table"""

    def test_deltas_against_first_policy(self, reports):
        """Test deltas are taken against the reference policy"""
        reference = summarize(reports, SimConfig(), policy="media_aware")
        worse = [make_report(k, [[1e6, 0.5e6], [1e6, 0.5e6]], psnr=((30.0,), (28.0,))) for k in range(2)]
        other = summarize(worse, SimConfig(), policy="aimd_greedy")
        rows = compare_policies([reference, other])
        by_key = {(r.policy, r.scope, r.id, r.metric): r for r in rows}
        assert by_key[('media_aware', 'run', 'all', 'mean_psnr_db')].delta == 0.0
        assert by_key[('aimd_greedy', 'run', 'all', 'mean_psnr_db')].delta == pytest.approx(29.0 - 33.25)
        assert by_key[('aimd_greedy', 'stream', 'a', 'rate_kbps')].delta == pytest.approx(1500.0 - 4500.0)

    def test_mismatched_scenarios(self, reports):
        """Test summaries of different scenarios cannot be compared"""
        a = summarize(reports, SimConfig(seed=1), policy="x")
        b = summarize(reports, SimConfig(seed=2), policy="y")
        with pytest.raises(MismatchedConfigs):
            compare_policies([a, b])

    def test_empty(self):
        """Test no summaries gives no rows"""
        assert compare_policies([]) == []


class TestWriters:
    """Test CSV and workbook output"""

    def test_epochs_csv(self, reports, tmp_path):
        """Test one row per epoch, stream and network"""
        path = write_epochs_csv(reports, tmp_path / "run" / "epochs.csv")
        with open(path, newline='') as f:
            rows = list(csv.reader(f))
        assert rows[0] == EPOCH_HEADER
        assert len(rows) == 1 + 2 * 2 * 2
        assert rows[1][:4] == ['0', 'a', 'eth', '2000.000000']

    def test_missing_delay_is_blank(self, tmp_path):
        """Test undefined values are written as empty fields"""
        report = make_report(0, [[1e6, 1e6], [0.0, 0.0]], sent=(100, 0), delay_sum=(1.0, 0.0),
                             psnr=((35.0,), ()))
        path = write_epochs_csv([report], tmp_path / "epochs.csv")
        with open(path, newline='') as f:
            rows = list(csv.reader(f))
        row = next(r for r in rows[1:] if r[1] == 'b')
        assert row[5] == ''
        assert row[7] == ''

    def test_summary_csv(self, reports, tmp_path):
        """Test summary rows carry the policy name"""
        summary = summarize(reports, SimConfig(), policy="hinf")
        path = write_summary_csv(summary, tmp_path / "summary.csv")
        with open(path, newline='') as f:
            rows = list(csv.reader(f))
        assert rows[0] == SUMMARY_HEADER
        assert all(row[0] == "hinf" for row in rows[1:])
        assert ['hinf', 'run', 'all', 'mean_psnr_db', '33.250000'] in rows

    def test_comparison_csv(self, reports, tmp_path):
        """Test the comparison header and row count"""
        summary = summarize(reports, SimConfig(), policy="media_aware")
        rows = compare_policies([summary, summary])
        path = write_comparison_csv(rows, tmp_path / "comparison.csv")
        with open(path, newline='') as f:
            written = list(csv.reader(f))
        assert written[0] == COMPARISON_HEADER
        assert len(written) == 1 + len(rows)

    def test_atomic_write_leaves_no_temporaries(self, reports, tmp_path):
        """Test only the final file remains"""
        write_epochs_csv(reports, tmp_path / "epochs.csv")
        assert [p.name for p in tmp_path.iterdir()] == ["epochs.csv"]

    def test_workbook(self, reports, tmp_path):
        """Test one sheet per metric with policies as columns"""
        a = summarize(reports, SimConfig(), policy="media_aware")
        b = summarize(reports, SimConfig(), policy="hinf")
        path = write_comparison_workbook(compare_policies([a, b]), tmp_path / "comparison.xlsx")
        workbook = load_workbook(path)
        assert "psnr_db" in workbook.sheetnames
        sheet = workbook["mean_psnr_db"]
        values = list(sheet.values)
        assert values[0] == ("Scope", "Id", "media_aware", "hinf")
        assert values[1][2] == pytest.approx(33.25)

    def test_log_summary(self, reports, caplog):
        """Test the console banner names the policy"""
        with caplog.at_level("INFO"):
            log_summary(summarize(reports, SimConfig(), policy="aimd_greedy"))
        assert "POLICY: aimd_greedy" in caplog.text
        assert "Mean PSNR: 33.25 dB" in caplog.text
