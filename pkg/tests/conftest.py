"""Emit one [criterion ...] PASS/FAIL line per acceptance test.

The acceptance tests print their verdict with the captured stdout, which
pytest only shows on failure; this plugin repeats each verdict in the
terminal summary so the lines always appear in the run log.
"""
import pytest

_LABELS = {
    "test_01_gradient_correctness": "criterion 1: gradient correctness",
    "test_02_sinkhorn_marginal_contract": "criterion 2: sinkhorn marginal contract",
    "test_03_hungarian_agreement": "criterion 3: assignment agreement",
    "test_04_box_normalization_spot_values": "criterion 4: box normalization",
    "test_05_dynamic_threshold": "criterion 5: dynamic threshold",
    "test_06_ablation_ordering": "criterion 6: ablation ordering",
    "test_07_detection_channel_training_direction": "criterion 7: detection-channel training",
    "test_08_tracker_memory_and_determinism": "criterion 8: tracker memory and determinism",
    "test_09_stog_permutation_equivariance": "criterion 9: permutation equivariance",
    "test_10_motion_analysis_reproduction": "criterion 10: motion analysis",
}

_verdicts: dict[str, bool] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and item.originalname in _LABELS:
        _verdicts[item.originalname] = report.passed


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for name, label in _LABELS.items():
        if name in _verdicts:
            terminalreporter.write_line(
                f"[{label}] {'PASS' if _verdicts[name] else 'FAIL'}")
