import numpy as np

from unetsr.gradcheck import finite_diff_check
from unetsr.losses import LossConfig, mixge
from unetsr.tensor import Tensor, _accumulate, _record, mean_all
from unetsr import verification


def test_linear_function_is_exact(rng):
    report = finite_diff_check(mean_all, Tensor(rng.normal(size=(2, 3))),
                               tolerance=1e-10, name="mean_all")
    assert report.passed
    assert report.max_rel_err <= 1e-10


def test_full_mixge_loss_passes(rng):
    target = Tensor(rng.uniform(0, 1, (1, 3, 8, 8)))
    cfg = LossConfig(kind="mixge", lambda_g=0.1)
    report = finite_diff_check(lambda t: mixge(t, target, cfg),
                               Tensor(rng.uniform(0, 1, (1, 3, 8, 8))),
                               step=1e-5, tolerance=1e-4, name="mixge")
    assert report.passed


def test_wrong_backward_is_caught(rng):
    def buggy_double(x):
        out = Tensor(x.data * 2.0)

        def fn(g):
            _accumulate(x, g * 3.0)  # deliberately wrong slope

        return _record(out, (x,), fn)

    report = finite_diff_check(lambda t: mean_all(buggy_double(t)),
                               Tensor(rng.normal(size=(4,))),
                               tolerance=1e-4, name="negative control")
    assert not report.passed
    assert report.max_rel_err > 0.1


def test_report_names_worst_index():
    def lossy(x):
        return mean_all(x)

    report = finite_diff_check(lossy, Tensor(np.zeros((2, 2))))
    assert isinstance(report.worst_index, tuple)
    assert len(report.worst_index) == 2


def test_ops_suite_all_pass():
    for report in verification.ops_suite():
        assert report.passed, str(report)


def test_loss_suite_all_pass():
    for report in verification.loss_suite():
        assert report.passed, str(report)
