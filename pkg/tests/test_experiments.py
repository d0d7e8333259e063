import numpy as np
import pytest

from asm2tv.synthetic import SyntheticSpec, generate_synthetic
from experiments import block_count, gate_clustering, gca_benefit, unlabeled_ratio


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    generate_synthetic(SyntheticSpec(seed=0), out)
    return out


def test_block_budget_reduction():
    assert block_count.reduction_check()


@pytest.mark.slow
def test_gca_lifts_macro_f1(synth_dir):
    off, on = gca_benefit.measure(synth_dir, verbose=False)
    assert len(off) == len(on) == 5
    assert on.mean() - off.mean() >= gca_benefit.MIN_GAIN


@pytest.mark.slow
def test_more_unlabeled_data_does_not_hurt(synth_dir):
    summary  = unlabeled_ratio.sweep(synth_dir, verbose=False)
    by_ratio = dict(zip(summary["value"], summary["macro_f1_mean"]))
    assert list(by_ratio) == list(unlabeled_ratio.RATIOS)
    assert by_ratio[4.0] >= by_ratio[0.5]


@pytest.mark.slow
def test_routing_recovers_planted_groups(synth_dir):
    aris = gate_clustering.scores(synth_dir, verbose=False)
    assert len(aris) == 5
    assert float(np.median(aris)) >= gate_clustering.MIN_MEDIAN_ARI
