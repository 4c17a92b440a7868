import math

import numpy as np
import pytest

from latefuse.calibration import (
    collect_traces,
    fit_temperature,
    mean_confidence,
    reliability_bins,
    teacher_forced_trace,
    token_error_rate,
)
from latefuse.core import Vocabulary
from latefuse.errors import InvalidInputError, InvalidParameterError
from latefuse.providers import UtteranceContext, make_acoustic_channel


@pytest.fixture
def identity_channel(abc_vocab):
    return make_acoustic_channel(abc_vocab, np.eye(abc_vocab.size))


def dataset_from_texts(vocab, texts):
    """Teacher-forcing pairs where the observation equals the reference."""
    out = []
    for i, text in enumerate(texts):
        ref = vocab.encode(text, append_eos=True)
        obs = (Vocabulary.BOS,) + ref
        out.append((UtteranceContext(utt_id=f"u{i}", observation=obs), ref))
    return out


class TestTeacherForcedTrace:
    def test_identity_channel_is_dirac_on_reference(self, abc_vocab, identity_channel):
        (ctx, ref), = dataset_from_texts(abc_vocab, ["a b c"])
        trace = teacher_forced_trace(identity_channel, ref, ctx)
        assert trace.shape == (len(ref), abc_vocab.size)
        np.testing.assert_array_equal(trace.argmax(axis=1), ref)

    def test_trace_length_equals_reference_length(self, abc_vocab, identity_channel):
        rng = np.random.default_rng(3)
        for _ in range(20):
            words = " ".join(rng.choice(["a", "b", "c"], size=int(rng.integers(1, 7))))
            (ctx, ref), = dataset_from_texts(abc_vocab, [words])
            trace = teacher_forced_trace(identity_channel, ref, ctx)
            assert len(trace) == len(ref)

    def test_reference_must_end_with_eos(self, abc_vocab, identity_channel):
        ctx = UtteranceContext(utt_id="u0", observation=(0, 3, 1))
        with pytest.raises(InvalidInputError):
            teacher_forced_trace(identity_channel, (3, 4), ctx)


class TestMeanConfidence:
    def test_dirac_logits_give_one(self):
        traces = np.array([[50.0, 0.0, 0.0], [0.0, 50.0, 0.0]])
        assert mean_confidence(traces, 1.0) == pytest.approx(1.0, abs=1e-12)

    def test_zero_logits_give_uniform(self):
        traces = np.zeros((10, 4))
        for tau in (0.3, 1.0, 7.0):
            assert mean_confidence(traces, tau) == pytest.approx(0.25, abs=1e-12)

    def test_monotone_nonincreasing_in_tau(self):
        rng = np.random.default_rng(11)
        traces = rng.normal(scale=3.0, size=(50, 8))
        taus = [0.05, 0.2, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0]
        confs = [mean_confidence(traces, t) for t in taus]
        assert all(a >= b - 1e-12 for a, b in zip(confs, confs[1:]))

    def test_empty_traces_rejected(self):
        with pytest.raises(InvalidInputError):
            mean_confidence(np.zeros((0, 4)), 1.0)


class TestTokenErrorRate:
    def test_identity_channel_ter_is_zero(self, abc_vocab, identity_channel):
        dataset = dataset_from_texts(abc_vocab, ["a b", "c c a", "b"])
        assert token_error_rate(identity_channel, dataset) == 0.0

    def test_uniform_provider_picks_id_zero(self, abc_vocab, constant_provider_cls):
        provider = constant_provider_cls(abc_vocab, np.zeros(abc_vocab.size))
        # argmax of constant zeros is id 0 = BOS, never a reference token here
        dataset = dataset_from_texts(abc_vocab, ["a", "b c"])
        assert token_error_rate(provider, dataset) == 1.0

    def test_constant_peaked_provider_by_hand(self, abc_vocab, constant_provider_cls):
        logits = np.zeros(abc_vocab.size)
        logits[3] = 5.0  # always predicts "a"
        provider = constant_provider_cls(abc_vocab, logits)
        # refs "a a b </s>"-style: steps = a a b EOS -> wrong at b and EOS
        dataset = dataset_from_texts(abc_vocab, ["a a b"])
        assert token_error_rate(provider, dataset) == pytest.approx(2.0 / 4.0)

    def test_ter_is_temperature_invariant(self, abc_vocab, constant_provider_cls):
        rng = np.random.default_rng(5)
        provider = constant_provider_cls(abc_vocab, rng.normal(size=abc_vocab.size))
        dataset = dataset_from_texts(abc_vocab, ["a b c", "c b"])
        traces, targets = collect_traces(provider, dataset)
        base = (traces.argmax(axis=1) != targets).mean()
        for tau in (0.5, 5.0):
            scaled = traces / tau
            assert (scaled.argmax(axis=1) != targets).mean() == base


class _TraceProvider:
    """Plays back a fixed logit row per step, cycling over rows."""

    def __init__(self, vocab, rows):
        self.vocab = vocab
        self.rows = np.asarray(rows, dtype=np.float64)

    def next_logits(self, history, ctx):
        return self.rows[(len(history) - 1) % len(self.rows)].copy()


class TestFitTemperature:
    def test_already_calibrated_provider_fits_tau_near_one(self, abc_vocab):
        # peak ln 15 on UNK: conf(tau=1) = 15/20 = 0.75; refs make TER exactly 0.25
        rows = [[0.0, 0.0, math.log(15.0), 0.0, 0.0, 0.0]]
        provider = _TraceProvider(abc_vocab, rows)
        ref = (2, 2, 2, 1)  # unk unk unk EOS: 3 hits, 1 miss
        dataset = [(UtteranceContext(utt_id="u0"), ref)]
        report = fit_temperature(provider, dataset, tol=1e-3)
        assert not report.clamped
        assert abs(report.mean_confidence - (1.0 - report.ter)) <= 1e-3
        assert report.tau == pytest.approx(1.0, abs=0.01)

    def test_grid_sweep_oracle_agrees(self, abc_vocab):
        rng = np.random.default_rng(19)
        rows = rng.normal(scale=2.0, size=(12, abc_vocab.size))
        provider = _TraceProvider(abc_vocab, rows)
        ref = tuple(int(t) for t in rng.integers(2, 6, size=11)) + (1,)
        dataset = [(UtteranceContext(utt_id="u0"), ref)]
        report = fit_temperature(provider, dataset, tol=1e-4)
        traces, targets = collect_traces(provider, dataset)
        target = 1.0 - (traces.argmax(axis=1) != targets).mean()
        grid = np.geomspace(1e-2, 1e2, 20001)
        grid_gaps = [abs(mean_confidence(traces, t) - target) for t in grid]
        assert abs(report.mean_confidence - target) <= min(grid_gaps) + 1e-4

    def test_overconfident_provider_fits_tau_above_one(self, abc_vocab):
        rows = [[0.0, 0.0, 12.0, 0.0, 0.0, 0.0]]  # conf ~ 0.99999
        provider = _TraceProvider(abc_vocab, rows)
        # 200 steps, wrong only at the 5 EOS steps: TER 0.025, conf >> 0.975
        dataset = []
        for i in range(5):
            dataset.append((UtteranceContext(utt_id=f"u{i}"), (2,) * 39 + (1,)))
        report = fit_temperature(provider, dataset)
        assert report.ter == pytest.approx(5.0 / 200.0)
        assert report.tau > 1.0
        assert not report.clamped
        assert abs(report.mean_confidence - (1.0 - report.ter)) <= 1e-3

    def test_zero_ter_clamps_to_tau_min_with_flag(self, abc_vocab, identity_channel):
        dataset = dataset_from_texts(abc_vocab, ["a b", "c"])
        report = fit_temperature(identity_channel, dataset)
        assert report.ter == 0.0
        assert report.tau == pytest.approx(1e-2)
        assert report.clamped

    def test_bad_bounds_rejected(self, abc_vocab, identity_channel):
        dataset = dataset_from_texts(abc_vocab, ["a"])
        with pytest.raises(InvalidParameterError):
            fit_temperature(identity_channel, dataset, bounds=(1.0, 0.5))

    def test_report_bin_counts_sum_to_n_dec(self, abc_vocab, identity_channel):
        dataset = dataset_from_texts(abc_vocab, ["a b c", "b", "c a"])
        report = fit_temperature(identity_channel, dataset)
        assert sum(b[2] for b in report.bins) == report.n_dec
        assert report.n_dec == 4 + 2 + 3

    def test_report_dict_roundtrip(self, abc_vocab, identity_channel):
        from latefuse.calibration import CalibrationReport

        dataset = dataset_from_texts(abc_vocab, ["a b"])
        report = fit_temperature(identity_channel, dataset)
        assert CalibrationReport.from_dict(report.to_dict()) == report


class TestReliabilityBins:
    def test_perfect_provider_has_zero_ece(self, abc_vocab, identity_channel):
        dataset = dataset_from_texts(abc_vocab, ["a b c"])
        traces, targets = collect_traces(identity_channel, dataset)
        bins, ece = reliability_bins(traces, targets, tau=1.0, n_bins=10)
        occupied = [b for b in bins if b[2] > 0]
        assert len(occupied) == 1
        assert ece == pytest.approx(0.0, abs=1e-9)

    def test_counts_partition_steps(self, abc_vocab):
        rng = np.random.default_rng(23)
        traces = rng.normal(size=(137, abc_vocab.size))
        targets = rng.integers(0, abc_vocab.size, size=137)
        bins, _ = reliability_bins(traces, targets, tau=1.0, n_bins=7)
        assert len(bins) == 7
        assert sum(b[2] for b in bins) == 137

    def test_calibration_reduces_ece_for_overconfident_provider(self, abc_vocab):
        rows = [[0.0, 0.0, 9.0, 0.0, 0.0, 0.0]]
        provider = _TraceProvider(abc_vocab, rows)
        dataset = [(UtteranceContext(utt_id="u0"), (2,) * 15 + (1,) * 1),
                   (UtteranceContext(utt_id="u1"), (2,) * 12 + (1,))]
        report = fit_temperature(provider, dataset)
        traces, targets = collect_traces(provider, dataset)
        _, ece_before = reliability_bins(traces, targets, tau=1.0)
        _, ece_after = reliability_bins(traces, targets, tau=report.tau)
        assert ece_after < ece_before

    def test_min_bins(self, abc_vocab):
        with pytest.raises(InvalidParameterError):
            reliability_bins(np.zeros((3, 6)), np.zeros(3, dtype=int), 1.0, n_bins=1)
